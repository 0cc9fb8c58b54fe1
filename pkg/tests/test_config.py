import glob
import os

import pytest

from coronaLab.coronaLab import EXPERIMENTS, coronaLab
from coronaLab.config import load_config, parse_param
from coronaLab.errors import ConfigError


def test_sample_configs_load_and_construct(sample_configs):
    paths = sorted(glob.glob(os.path.join(sample_configs, "*.conf")))
    assert len(paths) == len(EXPERIMENTS)
    for path in paths:
        cfg = load_config(path)
        assert os.path.basename(path) == f"{cfg.experiment}.conf"
        coronaLab(cfg)


def test_bad_cubes_sample(sample_configs):
    cfg = load_config(os.path.join(sample_configs, "bad-cubes.conf"))
    assert cfg.experiment == "bad-cubes"
    assert cfg.measure == "circle" and cfg.atoms == 1000
    assert cfg.stopping.A == 50.0
    assert cfg.stopping.C1 == 10.0
    assert cfg.stopping.C2 == pytest.approx(40.0)
    assert cfg.lattice.A0 == 16.0 and cfg.lattice.C0 == 128.0
    assert cfg.params["ball_center"] == (1.0, 0.0)
    assert cfg.params["ball_radius"] == 0.5


def test_command_line_overrides(write_config):
    path = write_config("[experiment]\nname = ainfty\nseed = 3\n")
    cfg = load_config(path, seed=11, output_dir="elsewhere")
    assert cfg.seed == 11
    assert cfg.output_dir == "elsewhere"
    assert load_config(path).seed == 3


def test_domain_slope_maps_to_the_factory_argument(write_config):
    cfg = load_config(write_config("[experiment]\nname = wos-validate\n[domain]\nname = lipschitz_graph\nslope = 0.5\n"))
    assert cfg.domain == "lipschitz_graph"
    assert cfg.domain_params == {"A": 0.5}


@pytest.mark.parametrize("text", [
    "[experiment]\nseed = 1\n",
    "[experiment]\nname = ainfty\n[colors]\nred = 1\n",
    "[experiment]\nname = ainfty\n[walks]\nwalkers = 10\n",
    "[experiment]\nname = ainfty\n[walks]\nwalks = many\n",
    "[experiment]\nname = ainfty\n[walks]\nwalks = 0\n",
    "[experiment]\nname = bad-cubes\n[stopping]\neta = 0.5\n",
    "[experiment]\nname = ainfty\n[measure]\ngenerator = circle\nfile = atoms.csv\n",
    "[experiment]\nname = ainfty\nname = ainfty\n",
])
def test_invalid_configs(write_config, text):
    with pytest.raises(ConfigError):
        load_config(write_config(text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.conf"))


def test_parse_param():
    assert parse_param("4") == 4
    assert parse_param(" 0.5 ") == 0.5
    assert parse_param("1e-3") == 1e-3
    assert parse_param("1.0, 0.0") == (1.0, 0.0)
    assert parse_param("lanczos") == "lanczos"


def test_unknown_experiment_and_params(write_config):
    with pytest.raises(ConfigError):
        coronaLab(load_config(write_config("[experiment]\nname = teleport\n")))
    with pytest.raises(ConfigError):
        coronaLab(load_config(write_config("[experiment]\nname = ainfty\n[experiment.params]\nvelocity = 3\n")))


def test_unknown_domain_is_a_config_error(write_config):
    lab = coronaLab(load_config(write_config("[experiment]\nname = wos-validate\n[domain]\nname = torus\n")))
    with pytest.raises(ConfigError):
        lab.domain()
