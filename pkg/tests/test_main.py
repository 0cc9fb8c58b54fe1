import json
import os

from coronaLab.coronaLab import EXPERIMENTS, list_experiments
from coronaLab.main import EXIT_CONFIG, EXIT_OK, EXIT_PRECONDITION, main

RIESZ = """
[experiment]
name = riesz-norm
seed = 0

[riesz]
sizes = 20, 40
eps_factor = 1.01
"""

LATTICE = """
[experiment]
name = lattice-audit

[measure]
generator = segment
atoms = 100

[lattice]
a0 = 16
k_max = 6

[experiment.params]
whitney_center = 0.5, 0.0
whitney_radius = 0.3
"""

FAR_BALL = """
[experiment]
name = bad-cubes

[measure]
generator = segment
atoms = 200

[walks]
walks = 100

[lattice]
a0 = 16

[experiment.params]
ball_center = 1.5, 0.0
ball_radius = 0.5
"""


def test_list_prints_every_experiment(capsys):
    assert main(["-d", "0", "list"]) == EXIT_OK
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == list(EXPERIMENTS)
    assert len(names) == 13


def test_invalid_eta_exits_with_config_error(write_config):
    path = write_config("[experiment]\nname = bad-cubes\n[stopping]\neta = 0.5\n")
    assert main(["-d", "0", "run", "--config", path]) == EXIT_CONFIG


def test_unknown_experiment_exits_with_config_error(write_config):
    path = write_config("[experiment]\nname = teleport\n")
    assert main(["-d", "0", "run", "--config", path]) == EXIT_CONFIG


def test_riesz_norm_reports_are_reproducible(write_config, tmp_path):
    path = write_config(RIESZ)
    outputs = []
    for run in ("first", "second"):
        out = str(tmp_path / run)
        assert main(["-d", "0", "run", "--config", path, "--out", out]) == EXIT_OK
        outputs.append(out)
    for name in ("riesz-norm_summary.json", "riesz-norm_riesz_norms.csv"):
        with open(os.path.join(outputs[0], name), "rb") as a, open(os.path.join(outputs[1], name), "rb") as b:
            assert a.read() == b.read()
    with open(os.path.join(outputs[0], "riesz-norm_summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["all_converged"]
    assert summary["norm_min"] > 0


def test_seed_override_is_recorded(write_config, tmp_path):
    out = str(tmp_path / "out")
    assert main(["-d", "0", "run", "--config", write_config(RIESZ), "--seed", "9", "--out", out]) == EXIT_OK
    with open(os.path.join(out, "riesz-norm_summary.json"), encoding="utf-8") as f:
        assert json.load(f)["seed"] == 9


def test_lattice_audit_flag_exports_the_lattice(write_config, tmp_path):
    out = str(tmp_path / "out")
    assert main(["-d", "0", "run", "--config", write_config(LATTICE), "--out", out, "--lattice-audit"]) == EXIT_OK
    with open(os.path.join(out, "lattice-audit_lattice.json"), encoding="utf-8") as f:
        lattice = json.load(f)
    assert lattice["A0"] == 16.0
    with open(os.path.join(out, "lattice-audit_summary.json"), encoding="utf-8") as f:
        assert json.load(f)["all_invariants_pass"]
    assert os.path.exists(os.path.join(out, "lattice-audit_lattice_audit.csv"))


def test_ball_away_from_the_measure_fails_a_precondition(write_config, tmp_path):
    path = write_config(FAR_BALL)
    assert main(["-d", "0", "run", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_PRECONDITION


def test_list_experiments_names_every_registered_experiment():
    listed = list_experiments()
    assert [name for name, _ in listed] == list(EXPERIMENTS)
    assert "full-pipeline" in dict(listed)
    assert all(description for _, description in listed)

CORONA = """
[experiment]
name = corona
seed = 0

[measure]
generator = segment-with-cluster
atoms = 200
cluster_atoms = 20

[lattice]
a0 = 16
"""

AINFTY = """
[experiment]
name = ainfty
seed = 5

[domain]
name = disk

[measure]
generator = circle
atoms = 200

[walks]
walks = 2000

[lattice]
a0 = 16

[experiment.params]
pole = 0.3, 0.2
eps_grid = 0.05, 0.1
"""


def read_bytes(directory, name):
    with open(os.path.join(directory, name), "rb") as f:
        return f.read()


def test_lattice_audit_flag_exports_invariant_checks_of_any_lattice(write_config, tmp_path):
    out = str(tmp_path / "out")
    assert main(["-d", "0", "run", "--config", write_config(CORONA), "--out", out, "--lattice-audit"]) == EXIT_OK
    assert os.path.exists(os.path.join(out, "corona_lattice.json"))
    lines = read_bytes(out, "corona_lattice_audit.csv").decode("utf-8").split("\r\n")
    assert lines[0] == "generation,cell,check,value,passed"
    assert any(",partition," in line for line in lines[1:])


def test_corona_reports_are_reproducible(write_config, tmp_path):
    path = write_config(CORONA)
    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    for out in (first, second):
        assert main(["-d", "0", "run", "--config", path, "--out", out]) == EXIT_OK
    assert sorted(os.listdir(first)) == sorted(os.listdir(second))
    for name in os.listdir(first):
        assert read_bytes(first, name) == read_bytes(second, name)


def test_monte_carlo_reports_are_reproducible(write_config, tmp_path):
    path = write_config(AINFTY)
    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    for out in (first, second):
        assert main(["-d", "0", "run", "--config", path, "--out", out]) == EXIT_OK
    for name in ("ainfty_summary.json", "ainfty_ainfty.csv"):
        assert read_bytes(first, name) == read_bytes(second, name)
    with open(os.path.join(first, "ainfty_summary.json"), encoding="utf-8") as f:
        worst = json.load(f)["worst_eps_prime"]
    assert worst["N"] == 2000 and worst["seed"] == 5
    assert worst["std_error"] >= 0
