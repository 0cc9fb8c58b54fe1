import json
import os

import numpy as np
import pytest

from coronaLab.DMLattice import build_lattice
from coronaLab.ReportList import ReportList, plain


def test_plain_unwraps_numpy():
    value = plain({1: np.float64(0.5), "flags": np.array([True, False]), "n": np.int64(3), "t": (1, 2)})
    assert value == {"1": 0.5, "flags": [True, False], "n": 3, "t": [1, 2]}
    assert type(value["1"]) is float and type(value["n"]) is int


def test_export_writes_summary_and_tables(tmp_path):
    report = ReportList("ainfty", 4)
    report.set("worst", np.float64(0.25))
    report.stochastic("omega", 0.5, 0.01, 1000)
    report.add_rows("scan", [{"eps": 0.1, "fails": False}, {"eps": 0.2, "fails": True, "note": "x"}])
    report.add_rows("empty", [])
    written = report.export(str(tmp_path))

    assert [os.path.basename(p) for p in written] == ["ainfty_summary.json", "ainfty_scan.csv"]
    with open(written[0], encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["seed"] == 4
    assert summary["omega"] == {"value": 0.5, "std_error": 0.01, "N": 1000, "seed": 4}
    with open(written[1], "rb") as f:
        lines = f.read().split(b"\r\n")
    assert lines[0] == b"eps,fails,note"
    assert lines[1] == b"0.1,false,"
    assert lines[2] == b"0.2,true,x"


def test_attached_lattice_is_exported(tmp_path, unit_atom):
    report = ReportList("lattice-audit", 0)
    report.attach_lattice(build_lattice(unit_atom, k_range=(0, 1)))
    written = report.export(str(tmp_path))
    path = tmp_path / "lattice-audit_lattice.json"
    assert str(path) in written
    document = json.loads(path.read_text(encoding="utf-8"))
    assert len(document["cells"]) == 2
    audit = tmp_path / "lattice-audit_lattice_audit.csv"
    assert str(audit) in written
    checks = {row["check"] for row in report.tables["lattice_audit"]}
    assert {"partition", "5B-disjointness"} <= checks
    assert all(row["passed"] for row in report.tables["lattice_audit"])


def test_attached_lattice_keeps_an_existing_audit_table(unit_atom):
    report = ReportList("lattice-audit", 0)
    report.add_rows("lattice_audit", [{"check": "partition", "passed": True}])
    report.attach_lattice(build_lattice(unit_atom, k_range=(0, 1)))
    assert report.tables["lattice_audit"] == [{"check": "partition", "passed": True}]


def test_failed_export_leaves_no_files(tmp_path):
    report = ReportList("corona", 0)
    report.add_rows("nodes", [{"cell": 0}])
    report.summary["bad"] = object()
    with pytest.raises(TypeError):
        report.export(str(tmp_path))
    assert os.listdir(tmp_path) == []
