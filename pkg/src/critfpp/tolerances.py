"""Versioned acceptance tolerances.

The limit theorems fix targets but not finite-size tolerances, so the
tolerances are artifact policy: they live here under a version number,
are keyed by criterion identifier, and every report embeds the values
actually used. Exact criteria carry 0 (max allowed violations).
"""

TOLERANCE_TABLE_VERSION = 1

# criterion id -> (default value, semantic)
_TABLE = {
    "C1": (0.0, "max allowed duality equality violations"),
    "C2": (0.0, "max allowed solver-vs-enumeration mismatches"),
    "C3": (0.0, "max allowed coupling domination violations"),
    "C4": (0.20, "relative tolerance on the mean-time slope"),
    "C5": (0.30, "relative tolerance on the variance slope"),
    "C6": (2.0, "z bound on the coupled slope difference"),
    "C7": (0.0, "max allowed hierarchy check failures"),
    "C8": (3.0, "z bound on the variance identity and cross-moments"),
    "C9": (3.0, "z bound on the nested vs single-field comparison"),
    "C10": (0.25, "relative tolerance on the two-arm decay slope"),
    "C11": (3.0, "max ratio of deep-level fourth moments"),
    "C12": (0.0, "max allowed byte differences across worker counts"),
    "C13": (0.0, "max allowed threshold table violations"),
}

CRITERIA = tuple(sorted(_TABLE, key=lambda c: int(c[1:])))


def default_tolerances() -> dict:
    return {cid: val for cid, (val, _) in _TABLE.items()}


def tolerance_semantics() -> dict:
    return {cid: sem for cid, (_, sem) in _TABLE.items()}


def parse_overrides(pairs) -> dict:
    """Parse 'C4=0.25'-style override strings into {criterion: value}."""
    out = {}
    for text in pairs or ():
        cid, sep, val = text.partition("=")
        cid = cid.strip().upper()
        if not sep or cid not in _TABLE:
            raise ValueError(f"bad tolerance override {text!r}; "
                             f"expected <criterion>=<value> with criterion "
                             f"in {', '.join(CRITERIA)}")
        out[cid] = float(val)
    return out


def resolve_tolerances(overrides=None) -> dict:
    tols = default_tolerances()
    for cid, val in (overrides or {}).items():
        if cid not in tols:
            raise ValueError(f"unknown criterion {cid!r}")
        tols[cid] = float(val)
    return tols
