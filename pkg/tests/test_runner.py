"""Batch runner: config identity, determinism, persistence, reporting.

Monte Carlo sizes here are deliberately tiny; statistical power belongs
to the acceptance suite.  These tests pin the contracts: hashes depend
only on canonical config, records are byte-identical across worker
counts, and reports recompute run aggregates exactly.
"""

import json

import pytest

from critfpp.runner import (
    MERGE_INDEX_STRIDE,
    RunConfig,
    _unflatten,
    aggregate_run,
    build_tasks,
    config_from_canonical,
    gate_exit_code,
    make_header,
    read_record_file,
    record_lines,
    report_from_files,
    run,
    run_tasks,
)
from critfpp.weights import PRNG_ID

TINY_LADDER = (8, 16, 32)


def tiny_config(tmp_path, **overrides):
    kw = {"study": "tc", "n_ladder": TINY_LADDER, "samples": 12, "seed": 3,
          "workers": 1, "out": str(tmp_path / "out")}
    kw.update(overrides)
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# Config identity.

def test_config_hash_depends_only_on_canonical_fields(tmp_path):
    a = tiny_config(tmp_path)
    b = tiny_config(tmp_path, workers=4, out=str(tmp_path / "elsewhere"))
    assert a.config_hash() == b.config_hash()
    c = tiny_config(tmp_path, seed=4)
    assert c.config_hash() != a.config_hash()
    d = tiny_config(tmp_path, n_ladder=(8, 16, 64))
    assert d.config_hash() != a.config_hash()


def test_config_hash_ignores_tolerance_order(tmp_path):
    a = tiny_config(tmp_path, tol=(("C4", 0.25), ("C6", 3.0)))
    b = tiny_config(tmp_path, tol=(("C6", 3.0), ("C4", 0.25)))
    assert a.config_hash() == b.config_hash()
    assert a.tolerances()["C4"] == 0.25
    assert a.tolerances()["C5"] == 0.30


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(study="nope", n_ladder=(8,))
    with pytest.raises(ValueError):
        RunConfig(study="tc")  # ladder required
    with pytest.raises(ValueError):
        RunConfig(study="martingale")  # k_max required
    with pytest.raises(ValueError):
        RunConfig(study="arms")  # ratios required
    with pytest.raises(ValueError):
        RunConfig(study="tc", n_ladder=(8,), dist="whatever:1")


def test_config_roundtrip_through_canonical(tmp_path):
    for cfg in (
        tiny_config(tmp_path, study="gap", tol=(("C6", 2.5),)),
        RunConfig(study="martingale", k_max=2, samples=5, inner_samples=3,
                  seed=7, start_radius=16, radius_cap=64),
        RunConfig(study="arms", ratios=(4, 8, 16), samples=9, seed=1,
                  arm_j=2, arm_n=0),
    ):
        back = config_from_canonical(cfg.canonical())
        assert back.canonical() == cfg.canonical()
        assert back.config_hash() == cfg.config_hash()


def test_header_embeds_run_identity(tmp_path):
    cfg = tiny_config(tmp_path)
    header = make_header(cfg)
    assert header["kind"] == "header"
    assert header["prng"] == PRNG_ID
    assert header["config_hash"] == cfg.config_hash()
    assert header["tolerances"]["C4"] == 0.20
    assert header["version"]
    assert header["config"] == cfg.canonical()


# ---------------------------------------------------------------------------
# Execution determinism.

def test_outputs_byte_identical_across_worker_counts(tmp_path):
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    cfg1 = tiny_config(tmp_path, workers=1, out=str(out1))
    cfg2 = tiny_config(tmp_path, workers=3, out=str(out2))
    assert run(cfg1) in (0, 2)
    assert run(cfg2) in (0, 2)
    for name in ("records.jsonl", "summary.json", "table.csv"):
        b1 = (out1 / name).read_bytes()
        b2 = (out2 / name).read_bytes()
        assert b1 == b2, f"{name} differs between worker counts"


def test_run_tasks_order_matches_task_list(tmp_path):
    cfg = tiny_config(tmp_path, samples=6)
    tasks = build_tasks(cfg)
    serial = run_tasks(tasks, 1)
    parallel = run_tasks(tasks, 2)
    assert serial == parallel
    assert [r["index"] for r in serial] == list(range(6))


# ---------------------------------------------------------------------------
# Record persistence.

def test_ladder_record_lines_flatten_per_scale(tmp_path):
    cfg = tiny_config(tmp_path, samples=4)
    records = run_tasks(build_tasks(cfg), 1)
    lines = record_lines(cfg, records)
    assert len(lines) == 4 * len(TINY_LADDER)
    assert [ln["n"] for ln in lines[:3]] == list(TINY_LADDER)
    assert all(ln["kind"] == "record" for ln in lines)
    # flattening round-trips through the report reader
    for ln in lines:
        ln["_file"] = 0
    rebuilt = _unflatten(cfg, lines)
    assert rebuilt == sorted(records, key=lambda r: r["index"])


def test_unflatten_rejects_incomplete_ladder(tmp_path):
    cfg = tiny_config(tmp_path, samples=2)
    lines = record_lines(cfg, run_tasks(build_tasks(cfg), 1))
    for ln in lines:
        ln["_file"] = 0
    with pytest.raises(ValueError, match="incomplete ladder"):
        _unflatten(cfg, lines[:-1])


def test_unflatten_keeps_merged_files_distinct(tmp_path):
    cfg = tiny_config(tmp_path, samples=2)
    lines = record_lines(cfg, run_tasks(build_tasks(cfg), 1))
    tagged = []
    for fi in (0, 1):
        for ln in lines:
            row = dict(ln)
            row["_file"] = fi
            tagged.append(row)
    rebuilt = _unflatten(cfg, tagged)
    assert len(rebuilt) == 4
    assert [r["index"] for r in rebuilt] == [
        0, 1, MERGE_INDEX_STRIDE, MERGE_INDEX_STRIDE + 1]


def test_records_file_roundtrip(tmp_path):
    cfg = tiny_config(tmp_path, samples=3)
    assert run(cfg) in (0, 2)
    header, lines = read_record_file(str(tmp_path / "out" / "records.jsonl"))
    assert header["config_hash"] == cfg.config_hash()
    assert len(lines) == 3 * len(TINY_LADDER)
    assert {ln["study"] for ln in lines} == {"tc"}


def test_csv_table_has_identity_comments_and_scale_rows(tmp_path):
    cfg = tiny_config(tmp_path, samples=3)
    run(cfg)
    text = (tmp_path / "out" / "table.csv").read_text()
    head = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert any(cfg.config_hash() in ln for ln in head)
    assert any(PRNG_ID in ln for ln in head)
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("scale,count,")
    assert len(rows) == 1 + len(TINY_LADDER)


# ---------------------------------------------------------------------------
# Gates and exit codes.

def test_underpowered_slope_gate_exits_2(tmp_path):
    cfg = tiny_config(tmp_path, samples=10)
    code = run(cfg)
    assert code == 2
    doc = json.loads((tmp_path / "out" / "summary.json").read_text())
    gate = {g["criterion"]: g for g in doc["gates"]}
    assert gate["C4"]["underpowered"] is True
    assert not gate["C4"]["passed"]
    assert gate["C3"]["passed"]
    assert doc["exit_code"] == 2


def test_duality_study_passes_exactly(tmp_path):
    cfg = RunConfig(study="duality", n_ladder=(8, 16), samples=6, seed=5,
                    out=str(tmp_path / "dual"))
    assert run(cfg) == 0
    doc = json.loads((tmp_path / "dual" / "summary.json").read_text())
    gate = {g["criterion"]: g for g in doc["gates"]}
    assert gate["C1"]["passed"] and gate["C3"]["passed"]
    assert doc["summary"]["values"]["violations"] == 0.0


def test_circuits_study_checks_hierarchy(tmp_path):
    cfg = RunConfig(study="circuits", n_ladder=(10,), samples=5, seed=5,
                    out=str(tmp_path / "circ"))
    assert run(cfg) == 0
    doc = json.loads((tmp_path / "circ" / "summary.json").read_text())
    assert doc["gates"][0]["criterion"] == "C7"
    assert doc["gates"][0]["passed"]
    assert doc["summary"]["values"]["failures"] == 0.0


def test_chars_study_writes_exact_sums(tmp_path):
    cfg = RunConfig(study="chars",
                    dist="zero_atom_plus_shifted_exponential:0.0,1.0",
                    n_ladder=(16, 64), samples=1, seed=0,
                    out=str(tmp_path / "chars"))
    assert run(cfg) == 0
    header, lines = read_record_file(str(tmp_path / "chars" /
                                         "records.jsonl"))
    assert [ln["n"] for ln in lines] == [16, 64]
    assert all("S1" in ln and "S2" in ln for ln in lines)


def test_gate_exit_code():
    assert gate_exit_code([]) == 0
    assert gate_exit_code([{"passed": True}]) == 0
    assert gate_exit_code([{"passed": True}, {"passed": False}]) == 2


def test_run_returns_1_on_bad_output_dir(tmp_path):
    marker = tmp_path / "blocker"
    marker.write_text("a file, not a directory\n")
    cfg = tiny_config(tmp_path, samples=2, out=str(marker / "sub"))
    assert run(cfg) == 1


# ---------------------------------------------------------------------------
# Report: re-aggregation from stored records.

def test_report_reproduces_run_summary(tmp_path):
    cfg = tiny_config(tmp_path, samples=8, study="gap")
    run(cfg)
    code = report_from_files([str(tmp_path / "out" / "records.jsonl")],
                             str(tmp_path / "rep"))
    run_doc = json.loads((tmp_path / "out" / "summary.json").read_text())
    rep_doc = json.loads((tmp_path / "rep" / "summary.json").read_text())
    assert code == run_doc["exit_code"]
    assert rep_doc["gates"] == run_doc["gates"]
    assert rep_doc["summary"]["values"] == run_doc["summary"]["values"]
    assert rep_doc["merged_seeds"] is None


def test_report_merges_independent_seeds_with_flag(tmp_path):
    for seed, name in ((3, "a"), (4, "b")):
        run(tiny_config(tmp_path, samples=5, seed=seed,
                        out=str(tmp_path / name)))
    code = report_from_files([str(tmp_path / "a" / "records.jsonl"),
                              str(tmp_path / "b" / "records.jsonl")],
                             str(tmp_path / "rep"))
    assert code in (0, 2)
    doc = json.loads((tmp_path / "rep" / "summary.json").read_text())
    assert doc["merged_seeds"] == [3, 4]
    assert doc["summary"]["merged_seeds"] == [3, 4]
    assert doc["summary"]["values"]["samples"] == 10.0


def test_report_rejects_mixed_studies(tmp_path, capsys):
    run(tiny_config(tmp_path, samples=3, out=str(tmp_path / "tc")))
    run(RunConfig(study="duality", n_ladder=(8,), samples=3, seed=5,
                  out=str(tmp_path / "dual")))
    code = report_from_files([str(tmp_path / "tc" / "records.jsonl"),
                              str(tmp_path / "dual" / "records.jsonl")],
                             str(tmp_path / "rep"))
    assert code == 1
    assert "mixed" in capsys.readouterr().err


def test_report_rejects_parameter_mismatch(tmp_path, capsys):
    run(tiny_config(tmp_path, samples=3, out=str(tmp_path / "a")))
    run(tiny_config(tmp_path, samples=4, out=str(tmp_path / "b")))
    code = report_from_files([str(tmp_path / "a" / "records.jsonl"),
                              str(tmp_path / "b" / "records.jsonl")],
                             str(tmp_path / "rep"))
    assert code == 1
    assert "disagree" in capsys.readouterr().err


def test_report_errors_without_records(tmp_path, capsys):
    assert report_from_files([], str(tmp_path / "rep")) == 1
    assert "no records" in capsys.readouterr().err
    empty = tmp_path / "empty.jsonl"
    header = make_header(tiny_config(tmp_path))
    empty.write_text(json.dumps(header) + "\n")
    assert report_from_files([str(empty)], str(tmp_path / "rep")) == 1
    assert "no records" in capsys.readouterr().err


def test_report_rejects_headerless_file(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind":"record","study":"tc"}\n')
    assert report_from_files([str(bad)], str(tmp_path / "rep")) == 1
    assert "missing header" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Study-specific record shapes.

def test_arms_records_tag_events_and_ratios(tmp_path):
    cfg = RunConfig(study="arms", ratios=(2, 4), samples=3, seed=2,
                    out=str(tmp_path / "arms"))
    records = run_tasks(build_tasks(cfg), 1)
    lines = record_lines(cfg, records)
    events = {ln["event"] for ln in lines}
    assert events == {"ladder", "order_half5", "order_full6"}
    ladder = [ln for ln in lines if ln["event"] == "ladder"]
    assert {ln["ratio"] for ln in ladder} == {2, 4}
    assert all(ln["hit"] in (0, 1) for ln in lines)
    summary, gates = aggregate_run(cfg, records)
    assert gates[0]["criterion"] == "C10"


def test_martingale_unresolved_records_survive_roundtrip(tmp_path):
    cfg = RunConfig(study="martingale", k_max=1, samples=2, inner_samples=1,
                    seed=11, start_radius=8, radius_cap=16,
                    out=str(tmp_path / "mart"))
    code = run(cfg)
    assert code == 2  # chains do not resolve at these scales
    header, lines = read_record_file(str(tmp_path / "mart" /
                                         "records.jsonl"))
    assert all(not ln["resolved"] for ln in lines)
    assert all("k_failed" in ln for ln in lines)
    rep_code = report_from_files([str(tmp_path / "mart" / "records.jsonl")],
                                 str(tmp_path / "rep"))
    assert rep_code == 2
    doc = json.loads((tmp_path / "rep" / "summary.json").read_text())
    gate = {g["criterion"]: g for g in doc["gates"]}
    assert "no chain resolved" in gate["C8"]["message"]
    assert "no chain resolved" in gate["C11"]["message"]
