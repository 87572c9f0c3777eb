"""Acceptance-suite harness at reduced sample counts.

Full desk-scale statistics belong to the acceptance suite itself; here
the suites run small to pin the mechanics: matrix assembly, row
merging, underpowered detection, and exit codes.
"""

import pytest

from critfpp.verify import (
    VERIFY_FAMILIES,
    _merge_rows,
    check_domination_unit,
    check_thresholds,
    run_suite,
    suite_gates,
)


def test_unit_suite_passes(capsys):
    assert run_suite("unit", seed=0) == 0
    out = capsys.readouterr().out
    assert "acceptance matrix (unit suite)" in out
    assert "C3" in out and "C13" in out


def test_unit_checks_cover_all_families():
    gates = check_domination_unit(0) + check_thresholds()
    assert [g["criterion"] for g in gates] == ["C3", "C13"]
    assert all(g["passed"] for g in gates)
    assert str(len(VERIFY_FAMILIES)) in gates[0]["message"]


def test_unknown_suite_raises():
    with pytest.raises(ValueError, match="unknown suite"):
        suite_gates("smoke")
    assert run_suite("smoke") == 1


def test_merge_rows_combines_criteria():
    rows = _merge_rows([
        {"criterion": "C3", "passed": True, "underpowered": False,
         "observed": 0, "tolerance": 0.0, "message": "first"},
        {"criterion": "C4", "passed": True, "underpowered": True,
         "observed": 1, "tolerance": 0.2, "message": "slope"},
        {"criterion": "C3", "passed": False, "underpowered": False,
         "observed": 2, "tolerance": 0.0, "message": "second"},
    ])
    assert [r["criterion"] for r in rows] == ["C3", "C4"]
    c3 = rows[0]
    assert not c3["passed"]
    assert "first" in c3["message"] and "second" in c3["message"]
    assert rows[1]["underpowered"]


def test_oracle_suite_reduced_passes(tmp_path):
    rows = suite_gates("oracle", seed=0, samples=6,
                       out_dir=str(tmp_path))
    assert [r["criterion"] for r in rows] == ["C1", "C2", "C3", "C7", "C12"]
    assert all(r["passed"] for r in rows)
    # determinism check leaves its paired run directories behind
    assert (tmp_path / "determinism-tc-w1" / "records.jsonl").exists()
    assert (tmp_path / "determinism-arms-w2" / "records.jsonl").exists()


def test_statistical_suite_reduced_is_underpowered(tmp_path, capsys):
    code = run_suite("statistical", seed=0, samples=4, inner_samples=2,
                     out_dir=str(tmp_path))
    assert code == 2
    captured = capsys.readouterr()
    assert "underpowered" in captured.err
    rows = {r.split()[0] for r in captured.out.splitlines()
            if r.strip().startswith("C")}
    assert {"C3", "C4", "C5", "C6", "C8", "C9", "C10", "C11"} <= rows
    # per-study audit outputs land under the out directory
    assert (tmp_path / "tc" / "records.jsonl").exists()
    assert (tmp_path / "gap" / "summary.json").exists()
    assert (tmp_path / "martingale" / "records.jsonl").exists()
    assert (tmp_path / "ytilde" / "records.jsonl").exists()
    assert (tmp_path / "arms" / "table.csv").exists()
