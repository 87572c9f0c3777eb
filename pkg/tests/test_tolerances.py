import pytest

from critfpp.tolerances import (
    CRITERIA,
    default_tolerances,
    parse_overrides,
    resolve_tolerances,
    tolerance_semantics,
)


def test_default_table_covers_all_criteria():
    tols = default_tolerances()
    assert sorted(tols) == sorted(CRITERIA)
    assert tols["C4"] == 0.20
    assert tols["C5"] == 0.30
    assert tols["C6"] == 2.0
    assert tols["C8"] == 3.0
    assert tols["C10"] == 0.25
    assert tols["C11"] == 3.0
    # exactness criteria tolerate nothing
    for cid in ("C1", "C2", "C3", "C7", "C12", "C13"):
        assert tols[cid] == 0.0


def test_semantics_labels_every_criterion():
    sem = tolerance_semantics()
    assert sorted(sem) == sorted(CRITERIA)
    assert all(isinstance(v, str) and v for v in sem.values())


def test_parse_overrides():
    assert parse_overrides([]) == {}
    assert parse_overrides(["C4=0.25"]) == {"C4": 0.25}
    assert parse_overrides(["C4=0.25", "C6=3"]) == {"C4": 0.25, "C6": 3.0}


@pytest.mark.parametrize("bad", ["C4", "C4:0.3", "C99=1.0", "=0.3", "C4=x"])
def test_parse_overrides_rejects_malformed(bad):
    with pytest.raises(ValueError):
        parse_overrides([bad])


def test_resolve_applies_overrides_on_top_of_defaults():
    tols = resolve_tolerances({"C4": 0.5})
    assert tols["C4"] == 0.5
    assert tols["C5"] == default_tolerances()["C5"]
    with pytest.raises(ValueError):
        resolve_tolerances({"C99": 0.5})
