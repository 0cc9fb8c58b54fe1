"""
Experiment configuration: INI files read with configparser and validated
against a fixed schema into an immutable ExperimentConfig.
"""
import configparser
import logging
from dataclasses import dataclass, field, replace

from coronaLab.Corona import StoppingConfig
from coronaLab.errors import ConfigError


def _vector(text):
    return tuple(float(part) for part in text.split(","))


def _int_list(text):
    return tuple(int(part) for part in text.split(","))


def _positive(value):
    return value > 0


def _unit(value):
    return 0 < value < 1


# section -> key -> (parser, check, description of the allowed range)
SCHEMA = {
    "experiment": {
        "name": (str, None, "registered experiment"),
        "seed": (int, lambda v: v >= 0, "integer >= 0"),
        "output_dir": (str, None, "directory"),
    },
    "domain": {
        "name": (str, None, "builtin domain"),
        "radius": (float, _positive, "> 0"),
        "center": (_vector, None, "comma separated coordinates"),
        "dim": (int, lambda v: v >= 2, "integer >= 2"),
        "half_side": (float, _positive, "> 0"),
        "slope": (float, _positive, "> 0"),
        "teeth": (int, lambda v: v >= 1, "integer >= 1"),
        "r_inner": (float, _positive, "> 0"),
        "r_outer": (float, _positive, "> 0"),
        "theta0": (float, None, "angle"),
        "theta1": (float, None, "angle"),
    },
    "measure": {
        "generator": (str, None, "builtin generator"),
        "file": (str, None, "CSV or JSON measure file"),
        "atoms": (int, lambda v: v >= 1, "integer >= 1"),
        "start": (_vector, None, "comma separated coordinates"),
        "end": (_vector, None, "comma separated coordinates"),
        "center": (_vector, None, "comma separated coordinates"),
        "total_mass": (float, _positive, "> 0"),
        "density": (float, _positive, "> 0"),
        "radius": (float, _positive, "> 0"),
        "half_side": (float, _positive, "> 0"),
        "separation": (float, _positive, "> 0"),
        "width": (float, _positive, "> 0"),
        "mass_ratio": (float, _positive, "> 0"),
        "dim": (int, lambda v: v >= 2, "integer >= 2"),
        "seed": (int, lambda v: v >= 0, "integer >= 0"),
        "gap": (float, _positive, "> 0"),
        "length": (float, _positive, "> 0"),
        "cluster_atoms": (int, lambda v: v >= 1, "integer >= 1"),
        "cluster_center": (float, None, "position along the segment"),
        "cluster_width": (float, _positive, "> 0"),
        "cluster_mass": (float, _positive, "> 0"),
    },
    "walks": {
        "walks": (int, lambda v: v >= 1, "integer >= 1"),
        "shell_eps": (float, _positive, "> 0"),
        "max_steps": (int, lambda v: v >= 1, "integer >= 1"),
    },
    "stopping": {
        "a": (float, lambda v: v > 1, "> 1"),
        "eps": (float, _unit, "in (0, 1)"),
        "eps_prime": (float, _unit, "in (0, 1)"),
        "eta": (float, lambda v: 0 < v < 0.1, "in (0, 1/10)"),
        "tau": (float, _unit, "in (0, 1)"),
        "lambda0": (float, _unit, "in (0, 1)"),
        "delta0": (float, _unit, "in (0, 1)"),
        "c1": (float, lambda v: v >= 1, ">= 1"),
        "c2": (float, lambda v: v >= 1, ">= 1"),
    },
    "lattice": {
        "c0": (float, lambda v: v > 1, "> 1"),
        "a0": (float, lambda v: v > 1, "> 1"),
        "k0": (int, None, "integer"),
        "k_max": (int, None, "integer"),
    },
    "riesz": {
        "c1": (float, _positive, "> 0"),
        "cn": (float, _positive, "> 0"),
        "sizes": (_int_list, lambda v: len(v) > 0 and min(v) >= 2, "comma separated integers >= 2"),
        "eps_factor": (float, _positive, "> 0"),
        "method": (str, lambda v: v in ("lanczos", "power"), "lanczos or power"),
    },
}

PARAMS_SECTION = "experiment.params"

# configparser lowercases keys
STOPPING_FIELDS = {"a": "A", "c1": "C1", "c2": "C2"}


@dataclass(frozen=True)
class WalkSettings:
    walks: int = 100000
    shell_eps: float = 1e-4
    max_steps: int = 10 ** 6


@dataclass(frozen=True)
class LatticeSettings:
    C0: float = 128.0
    A0: float = None
    k0: int = None
    k_max: int = None


@dataclass(frozen=True)
class RieszSettings:
    c1: float = None
    cn: float = None
    sizes: tuple = (100, 400, 1600)
    eps_factor: float = 1.0
    method: str = "lanczos"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output_dir: str = "."
    domain: str = "disk"
    domain_params: dict = field(default_factory=dict)
    measure: str = None
    measure_file: str = None
    atoms: int = 1000
    measure_params: dict = field(default_factory=dict)
    walks: WalkSettings = WalkSettings()
    stopping: StoppingConfig = StoppingConfig()
    lattice: LatticeSettings = LatticeSettings()
    riesz: RieszSettings = RieszSettings()
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "domain": self.domain,
            "domain_params": dict(self.domain_params),
            "measure": self.measure,
            "measure_file": self.measure_file,
            "atoms": self.atoms,
            "measure_params": dict(self.measure_params),
            "walks": vars(self.walks).copy(),
            "stopping": self.stopping.to_dict(),
            "lattice": vars(self.lattice).copy(),
            "riesz": vars(self.riesz).copy(),
            "params": dict(self.params),
        }


def _parse_value(section, key, raw):
    try:
        parser, check, allowed = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"Unknown key '{key}' in section [{section}]")
    try:
        value = parser(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = '{raw}' is not a valid {parser.__name__.strip('_')}")
    if check is not None and not check(value):
        raise ConfigError(f"[{section}] {key} = {value!r} out of range ({allowed})")
    return value


def parse_param(raw):
    """Literal value of an [experiment.params] entry: int, float, vector or string."""
    raw = raw.strip()
    for parser in (int, float, _vector):
        try:
            return parser(raw)
        except ValueError:
            pass
    return raw


def _section(parser, name):
    if not parser.has_section(name):
        return {}
    return {key: _parse_value(name, key, raw) for key, raw in parser.items(name)}


def load_config(path, seed=None, output_dir=None):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"Config file not found: '{path}'")
    except configparser.Error as e:
        raise ConfigError(f"Config file '{path}' is not valid INI: {e}")

    unknown = [s for s in parser.sections() if s not in SCHEMA and s != PARAMS_SECTION]
    if unknown:
        raise ConfigError(f"Unknown sections {unknown} in '{path}'")

    experiment = _section(parser, "experiment")
    if "name" not in experiment:
        raise ConfigError("[experiment] name is required")
    domain = _section(parser, "domain")
    measure = _section(parser, "measure")
    stopping = _section(parser, "stopping")
    lattice = _section(parser, "lattice")

    if "slope" in domain:
        domain["A"] = domain.pop("slope")
    try:
        stopping_cfg = StoppingConfig(**{STOPPING_FIELDS.get(k, k): v for k, v in stopping.items()})
    except ValueError as e:
        raise ConfigError(f"[stopping] {e}")

    cfg = ExperimentConfig(
        experiment=experiment["name"],
        seed=experiment.get("seed", 0),
        output_dir=experiment.get("output_dir", "."),
        domain=domain.pop("name", "disk"),
        domain_params=domain,
        measure=measure.pop("generator", None),
        measure_file=measure.pop("file", None),
        atoms=measure.pop("atoms", 1000),
        measure_params=measure,
        walks=WalkSettings(**_section(parser, "walks")),
        stopping=stopping_cfg,
        lattice=LatticeSettings(C0=lattice.get("c0", 128.0), A0=lattice.get("a0"),
                                k0=lattice.get("k0"), k_max=lattice.get("k_max")),
        riesz=RieszSettings(**_section(parser, "riesz")),
        params={key: parse_param(raw) for key, raw in parser.items(PARAMS_SECTION)}
        if parser.has_section(PARAMS_SECTION) else {},
    )
    if cfg.measure is not None and cfg.measure_file is not None:
        raise ConfigError("[measure] takes either generator or file, not both")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if output_dir is not None:
        cfg = replace(cfg, output_dir=output_dir)
    logging.debug(f"Loaded configuration for experiment '{cfg.experiment}' from {path}")
    return cfg

