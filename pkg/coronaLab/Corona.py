"""
Stopping-time machinery on top of the lattice, measure and harmonic modules:
the B0 ball, bad-cube classification against harmonic measure, growth and
transform checks on the good set, nice/ugly classification and the corona
tree with its packing and maximal-transform checks.

Every check produces rows (check, lhs, rhs, passed) so reports can carry
them verbatim. Set arithmetic on cells is exact; Monte Carlo masses only
enter through ratios that are reported, never used to gate assertions.
"""
import json
import logging
import math
from collections import deque, namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from coronaLab.DMLattice import build_lattice, covering_by_doubling
from coronaLab.Domain import corkscrew_point
from coronaLab.HarmonicMeasure import ainfty_scan
from coronaLab.PointMeasure import Ball, PointMeasure, ball_growth_sup, find_thin_boundary_ball, \
    thin_boundary_profile
from coronaLab.RieszTransform import RieszConfig, maximal_double_truncation, maximal_riesz, \
    operator_norm_l2, truncated_riesz
from coronaLab.errors import DepthExhausted, EmptyG0, EmptyProbeFamily, NoInteriorPoint, NoThinBall, \
    PreconditionFailed

A_SWEEP = (10.0, 50.0, 250.0)
PROBE_POINT_CAP = 512
MAX_CORONA_NODES = 10000

JointMeasure = namedtuple("JointMeasure", ["lattice", "omega", "mu"])


def _row(check, lhs, rhs, passed, **extra):
    row = {"check": check, "lhs": float(lhs), "rhs": float(rhs), "passed": bool(passed)}
    row.update(extra)
    return row


@dataclass(frozen=True)
class StoppingConfig:
    A: float = 50.0
    eps: float = 0.1
    eps_prime: float = 0.5
    eta: float = 0.02
    tau: float = 0.1
    lambda0: float = 0.05
    delta0: float = 0.125
    C1: float = 10.0
    C2: float = None

    def __post_init__(self):
        if self.C2 is None:
            object.__setattr__(self, "C2", 5.0 / self.delta0)
        if not self.A > 1:
            raise ValueError(f"A must exceed 1, got {self.A}")
        for name in ("eps", "eps_prime", "tau", "lambda0"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if not 0 < self.eta < 0.1:
            raise ValueError(f"eta must lie in (0, 1/10), got {self.eta}")
        if not 0 < self.delta0 < 1:
            raise ValueError(f"delta0 must lie in (0, 1), got {self.delta0}")
        if self.C1 < 1 or self.C2 < 1:
            raise ValueError(f"C1 and C2 must be >= 1, got {self.C1}, {self.C2}")
        if not 0.5 < self.lam < 1:
            raise ValueError(f"lambda = 1 - eps/(2 C1 C2) = {self.lam} is outside (1/2, 1)")

    @property
    def lam(self):
        return 1.0 - self.eps / (2.0 * self.C1 * self.C2)

    @property
    def alpha(self):
        return 1.0 / self.lam

    @property
    def kappa(self):
        return self.delta0 / 2.0

    def to_dict(self):
        return {"A": self.A, "eps": self.eps, "eps_prime": self.eps_prime, "eta": self.eta,
                "tau": self.tau, "lambda0": self.lambda0, "delta0": self.delta0,
                "C1": self.C1, "C2": self.C2, "lambda": self.lam, "alpha": self.alpha}


def _ball_mass(points, weights, ball):
    return float(weights[ball.contains(points)].sum())


def b0_conclusions(mu, B, B0, cfg, omega=None):
    """Numerical checks of the conclusions about B0 = lambda B."""
    rows = [
        _row("mu(2B0) <= 2 C2 mu(B0)", _ball_mass(mu.points, mu.weights, B0.scaled(2.0)),
             2.0 * cfg.C2 * _ball_mass(mu.points, mu.weights, B0), True),
        _row("mu(B) <= C2 mu(B0)", _ball_mass(mu.points, mu.weights, B),
             cfg.C2 * _ball_mass(mu.points, mu.weights, B0), True),
    ]
    if omega is not None:
        rows.append(_row("omega(alpha B0) <= omega(B0)/(1-eps)",
                         _ball_mass(omega.points, omega.weights, B0.scaled(cfg.alpha)),
                         _ball_mass(omega.points, omega.weights, B0) / (1.0 - cfg.eps), True))
    for row in rows:
        row["passed"] = row["lhs"] <= row["rhs"]
    return rows


def make_B0(mu, B, cfg, omega=None):
    profile = thin_boundary_profile(mu, B)
    worst = max((ratio for _, ratio in profile), default=0.0)
    if worst > cfg.C1:
        raise PreconditionFailed(f"B has {cfg.C1:g}-thin boundary", f"worst shell ratio {worst:g}")
    big = _ball_mass(mu.points, mu.weights, B.scaled(2.0))
    small = _ball_mass(mu.points, mu.weights, B.scaled(cfg.delta0 / 2.0))
    if big > cfg.C2 * small:
        raise PreconditionFailed("mu(2B) <= C2 mu(delta0 B / 2)", f"{big:g} > {cfg.C2:g} * {small:g}")

    B0 = B.scaled(cfg.lam)
    failed = [row["check"] for row in b0_conclusions(mu, B, B0, cfg, omega) if not row["passed"]]
    if failed:
        logging.warning(f"B0 conclusions fail on the discrete measure: {failed}")
    logging.debug(f"B0 = {B0!r} with lambda = {cfg.lam:.6f}")
    return B0


def joint_lattice(mu, exits, B0, C0=128.0, A0=1e4, k_range=(0, None)):
    """Lattice on harmonic measure binned onto the atoms of mu inside 10 B0.

    Exits outside 10 B0 are dropped; the remaining ones are counted on their
    nearest atom and divided by the total number of kept walks, so omega
    masses stay probabilities of the whole walk population.
    """
    region = B0.scaled(10.0)
    support = mu.restrict(region)
    if len(support) == 0:
        raise ValueError("No atom of mu lies in 10 B0")
    near = region.contains(exits.exit_points)
    counts = np.zeros(len(support))
    if near.any():
        _, nearest = support.tree.query(exits.exit_points[near])
        counts = np.bincount(nearest, minlength=len(support)).astype(float)
    omega = support.with_weights(counts / max(len(exits), 1))
    lattice = build_lattice(omega, C0=C0, A0=A0, k_range=k_range)
    return JointMeasure(lattice, omega, support)


def _weights(mu, size):
    weights = mu.weights if isinstance(mu, PointMeasure) else np.asarray(mu, dtype=float)
    if weights.shape != (size,):
        raise ValueError(f"mu weights of shape {weights.shape} do not match {size} lattice points")
    return weights


@dataclass
class BadCubeReport:
    A: float
    bad1: list
    bad2: list
    omega_mass: dict
    mu_mass: dict
    G0: np.ndarray
    omega_B0: float
    mu_B0: float
    eps1_achieved: float
    eps2_achieved: float
    poisson_bounds: tuple
    eps_prime_scan: float
    complement_ok: bool
    checks: list = field(default_factory=list)

    @property
    def bad(self):
        return self.bad1 + self.bad2

    def summary(self):
        return {
            "A": self.A,
            "bad1_cells": len(self.bad1),
            "bad2_cells": len(self.bad2),
            "omega_bad1_fraction": self.omega_mass["bad1"] / self.omega_B0,
            "omega_bad2_fraction": self.omega_mass["bad2"] / self.omega_B0,
            "mu_bad1_fraction": self.mu_mass["bad1"] / self.mu_B0,
            "mu_bad2_fraction": self.mu_mass["bad2"] / self.mu_B0,
            "G0_atoms": int(self.G0.size),
            "eps1_achieved": self.eps1_achieved,
            "eps2_achieved": self.eps2_achieved,
            "poisson_lower": self.poisson_bounds[0],
            "poisson_upper": self.poisson_bounds[1],
            "eps_prime_scan": self.eps_prime_scan,
            "complement_ok": self.complement_ok,
        }


def _bad_mask(lat, cells):
    mask = np.zeros(len(lat.base_measure), dtype=bool)
    for c in cells:
        mask[lat.cells[c].members] = True
    return mask


def classify_bad(lat_omega, mu, B0, cfg):
    points = lat_omega.base_measure.points
    omega_w = lat_omega.base_measure.weights
    mu_w = _weights(mu, len(points))
    in_B0 = B0.contains(points)
    in_alpha = B0.scaled(cfg.alpha).contains(points)
    omega_B0, mu_B0 = float(omega_w[in_B0].sum()), float(mu_w[in_B0].sum())
    if omega_B0 <= 0 or mu_B0 <= 0:
        raise EmptyG0(f"B0 carries omega mass {omega_B0:g} and mu mass {mu_B0:g}")

    bad1, bad2 = [], []
    queue = deque(lat_omega.generations[0])
    while queue:
        cell = lat_omega.cells[queue.popleft()]
        w_om = float(omega_w[cell.members].sum())
        w_mu = float(mu_w[cell.members].sum())
        if in_alpha[cell.members].all():
            if w_mu > 0 and w_om / omega_B0 <= w_mu / (cfg.A * mu_B0):
                bad1.append(cell.id)
                continue
            if w_om > 0 and w_mu / mu_B0 <= w_om / (cfg.A * omega_B0):
                bad2.append(cell.id)
                continue
        queue.extend(cell.children)

    bad = _bad_mask(lat_omega, bad1 + bad2)
    G0 = np.flatnonzero(in_B0 & ~bad)
    if G0.size == 0:
        raise EmptyG0(f"Every atom of B0 is bad at A = {cfg.A:g}; A is too small or omega and mu disagree")

    m1, m2 = _bad_mask(lat_omega, bad1), _bad_mask(lat_omega, bad2)
    omega_mass = {"bad1": float(omega_w[m1].sum()), "bad2": float(omega_w[m2].sum())}
    mu_mass = {"bad1": float(mu_w[m1].sum()), "bad2": float(mu_w[m2].sum())}
    mu_alpha = float(mu_w[in_alpha].sum())
    omega_alpha = float(omega_w[in_alpha].sum())
    eps2 = float(omega_w[G0].sum()) / omega_B0
    eps1 = float(mu_w[G0].sum()) / mu_B0

    # dω/dμ on the G0 atoms
    charged = G0[mu_w[G0] > 0]
    ratios = omega_w[charged] / mu_w[charged] if charged.size else np.zeros(1)
    poisson = (float(ratios.min()), float(ratios.max()))

    checks = [
        _row("omega(Bad1) <= A^-1 omega(B0) mu(alpha B0)/mu(B0)", omega_mass["bad1"],
             omega_B0 * mu_alpha / (cfg.A * mu_B0), omega_mass["bad1"] <= omega_B0 * mu_alpha / (cfg.A * mu_B0)),
        _row("mu(Bad2) <= A^-1 mu(B0) omega(alpha B0)/omega(B0)", mu_mass["bad2"],
             mu_B0 * omega_alpha / (cfg.A * omega_B0), mu_mass["bad2"] <= mu_B0 * omega_alpha / (cfg.A * omega_B0)),
        _row("omega(G0) >= eps'2 omega(B0)", eps2, 0.0, eps2 > 0),
        _row("mu(G0) >= eps'1 mu(B0)", eps1, 0.0, eps1 > 0),
        _row("A^-1 omega(B0)/mu(B0) <= dω/dμ on G0", omega_B0 / (cfg.A * mu_B0), poisson[0],
             poisson[0] >= omega_B0 / (cfg.A * mu_B0)),
    ]

    # A-infinity scan and the complement identity on the finest cells of B0
    finest = lat_omega.k_max
    mu_cells = lat_omega.cell_masses(finest, mu_w, in_B0)
    om_cells = lat_omega.cell_masses(finest, omega_w, in_B0)
    scan = ainfty_scan(mu_cells, om_cells, cfg.eps)
    complement_ok = _complement_identity(mu_cells, om_cells, omega_B0, mu_B0, cfg)
    checks.append(_row("complement identity", float(complement_ok), 1.0, complement_ok))

    report = BadCubeReport(cfg.A, bad1, bad2, omega_mass, mu_mass, G0, omega_B0, mu_B0, eps1, eps2,
                           poisson, scan.eps_prime, complement_ok, checks)
    logging.info(f"Bad cubes at A = {cfg.A:g}: {len(bad1)} of type 1, {len(bad2)} of type 2; "
                 f"eps'1 = {eps1:.4f}, eps'2 = {eps2:.4f}")
    return report


def _complement_identity(mu_cells, om_cells, omega_B0, mu_B0, cfg):
    # prefixes of cells by increasing omega/mu are the extreme sets E for the implication
    keys = sorted(mu_cells)
    ratio = [om_cells[k] / mu_cells[k] if mu_cells[k] > 0 else math.inf for k in keys]
    order = sorted(range(len(keys)), key=lambda j: (ratio[j], keys[j]))
    om_E = mu_E = 0.0
    for j in order:
        om_E += om_cells[keys[j]]
        mu_E += mu_cells[keys[j]]
        if om_E < (1.0 - cfg.eps_prime) * omega_B0 and not mu_E < (1.0 - cfg.eps / 2.0) * mu_B0:
            logging.warning(f"Complement identity fails: omega(E) = {om_E:g}, mu(E) = {mu_E:g}")
            return False
    return True


def bad_cube_sweep(lat_omega, mu, B0, cfg, A_values=A_SWEEP):
    rows = []
    for A in A_values:
        try:
            report = classify_bad(lat_omega, mu, B0, replace(cfg, A=float(A)))
            rows.append(dict(report.summary(), empty_G0=False))
        except EmptyG0:
            logging.warning(f"G0 is empty at A = {A:g}")
            rows.append({"A": float(A), "empty_G0": True})
    return rows


def _good_cells(lat, report):
    bad = set(report.bad)
    good, queue = [], deque(lat.generations[0])
    while queue:
        cell = lat.cells[queue.popleft()]
        if cell.id in bad:
            continue
        good.append(cell)
        queue.extend(cell.children)
    return good


GrowthCheck = namedtuple("GrowthCheck", ["worst", "worst_cell", "worst_ball", "rows"])


def growth_check(lat_omega, report, B0, cfg):
    omega = lat_omega.base_measure
    n = omega.n
    scale = report.mu_B0 / report.omega_B0
    alpha_ball = B0.scaled(cfg.alpha)
    in_B0 = B0.contains(omega.points)

    rows, worst_cell = [], 0.0
    for cell in _good_cells(lat_omega, report):
        if not in_B0[cell.members].any() or not alpha_ball.contains_ball(cell.ball(100.0)):
            continue
        value = lat_omega.ball_mass(cell.ball(100.0)) * scale / cell.side_length ** n
        rows.append({"cell": cell.id, "generation": cell.generation, "constant": value})
        worst_cell = max(worst_cell, value)

    worst_ball = 0.0
    finest = lat_omega.k_max
    for i in report.G0:
        floor = lat_omega.cell_containing(i, finest).side_length
        value = ball_growth_sup(omega.points, omega.weights, omega.points[i], floor, n) * scale
        worst_ball = max(worst_ball, value)
    logging.info(f"Growth constants: cells {worst_cell:g}, balls {worst_ball:g}")
    return GrowthCheck(max(worst_cell, worst_ball), worst_cell, worst_ball, rows)


def _cap(indices, cap):
    indices = np.asarray(indices, dtype=int)
    if indices.size <= cap:
        return indices
    return indices[np.linspace(0, indices.size - 1, cap).astype(int)]


@dataclass
class KeyLemmaReport:
    worst_truncated: float
    worst_maximal: float
    probe_cells: list
    probe_points: int
    vacuous: bool
    rows: list = field(default_factory=list)


def probe_family(lat_omega, report, B0, B, x_B, cfg, good_only=True):
    points = lat_omega.base_measure.points
    reach = cfg.eta * B.radius
    near_pole = np.linalg.norm(points - x_B, axis=1)
    annulus = B0.contains(points) & (near_pole > reach)
    cells = _good_cells(lat_omega, report) if good_only else lat_omega.cells
    family = []
    for cell in cells:
        if not annulus[cell.members].any():
            continue
        if not B.contains_ball(cell.ball(100.0)):
            continue
        if cfg.delta0 * 28.0 * cell.radius > reach:
            continue
        if np.any(near_pole[cell.members] <= reach / 2.0):
            continue
        family.append(cell)
    return family


def key_lemma_check(lat_omega, report, B0, B, x_B, cfg, cap=PROBE_POINT_CAP, good_only=True, strict=False):
    omega = lat_omega.base_measure
    riesz = RieszConfig(n=omega.n)
    x_B = np.asarray(x_B, dtype=float)
    scale = report.mu_B0 / report.omega_B0

    family = probe_family(lat_omega, report, B0, B, x_B, cfg, good_only)
    rows, worst_truncated = [], 0.0
    probe_points = 0
    if not family:
        if strict:
            raise EmptyProbeFamily(f"No cell of the lattice fits the probe constraints inside B = {B!r}")
        logging.warning("Key lemma probe family is empty; truncated transform check is vacuous")
    else:
        per_cell = max(1, cap // len(family))
        for cell in family:
            for z in _cap(cell.members, per_cell):
                value = float(np.linalg.norm(truncated_riesz(riesz, omega, None, omega.points[z],
                                                             cell.side_length))) * scale
                probe_points += 1
                worst_truncated = max(worst_truncated, value)
            rows.append({"cell": cell.id, "generation": cell.generation, "worst": worst_truncated})

    tilde = report.G0[np.linalg.norm(omega.points[report.G0] - x_B, axis=1) > cfg.eta * B.radius]
    worst_maximal = 0.0
    for i in _cap(tilde, cap):
        worst_maximal = max(worst_maximal, maximal_riesz(riesz, omega, None, omega.points[i]) * scale)
    return KeyLemmaReport(worst_truncated, worst_maximal, [c.id for c in family], probe_points,
                          not family, rows)


@dataclass
class T1Report:
    C4: float
    C5: float
    delta1: float
    operator_norm: float
    norm_converged: bool
    nu_over_mu_B0: float
    nu_mass_ok: bool
    G1: np.ndarray
    degenerate: bool
    covered_fraction: float

    def summary(self):
        return {"C4": self.C4, "C5": self.C5, "delta1": self.delta1, "operator_norm": self.operator_norm,
                "norm_converged": self.norm_converged, "nu_over_mu_B0": self.nu_over_mu_B0,
                "nu_mass_ok": self.nu_mass_ok, "G1_atoms": int(self.G1.size),
                "degenerate": self.degenerate, "G1_omega_fraction": self.covered_fraction}


def t1_hypotheses(lat_omega, report, B0, B, x_B, cfg):
    omega = lat_omega.base_measure
    riesz = RieszConfig(n=omega.n)
    x_B = np.asarray(x_B, dtype=float)
    in_alpha = B0.scaled(cfg.alpha).contains(omega.points)
    nu = omega.with_weights(np.where(in_alpha, omega.weights, 0.0) * report.mu_B0 / report.omega_B0)
    total = nu.total_mass()

    # G1: the part of G0 away from x_B with the smallest maximal transform
    tilde = report.G0[np.linalg.norm(omega.points[report.G0] - x_B, axis=1) > cfg.eta * B.radius]
    target = report.eps2_achieved / 3.0 * report.omega_B0
    values = np.array([maximal_riesz(riesz, omega, None, omega.points[i]) for i in tilde])
    G1, carried = [], 0.0
    for j in np.lexsort((tilde, values)):
        if carried >= target:
            break
        G1.append(int(tilde[j]))
        carried += float(omega.weights[tilde[j]])
    G1 = np.array(sorted(G1), dtype=int)
    if carried < target:
        logging.warning(f"G1 carries only {carried:g} of the required {target:g} omega mass")

    ratio = total / report.mu_B0
    nu_mass_ok = 1.0 - 1e-12 <= ratio <= 1.0 / (1.0 - cfg.eps_prime)
    if G1.size == 0:
        logging.warning("G1 is empty; H is all of alpha B0")
        return T1Report(0.0, 0.0, 1.0, 0.0, True, ratio, nu_mass_ok, G1, True, 0.0)

    floor = nu.resolution()
    C4 = max(ball_growth_sup(nu.points, nu.weights, nu.points[i], floor, nu.n) for i in G1) if floor > 0 else math.inf
    C5 = float(sum(nu.weights[i] * maximal_riesz(riesz, nu, None, nu.points[i]) for i in G1) / total)
    delta1 = (total - float(nu.weights[G1].sum())) / total
    norm = operator_norm_l2(riesz, nu, G1, 0.5 * floor if floor > 0 else 1e-12)
    return T1Report(float(C4), C5, delta1, norm.norm, norm.converged, ratio, nu_mass_ok, G1, False,
                    carried / report.omega_B0)


@dataclass
class NiceUglyResult:
    label: str
    B: Ball
    x_B: np.ndarray
    witness: Ball
    witness_ratio: float
    interior_fraction: float
    good_set: np.ndarray
    separation: float
    separated: bool
    proxy_pole: bool
    flags: list = field(default_factory=list)


def classify_nice_ugly(mu, R, cfg, dom=None, bad_mask=None, seed=0):
    """Label a doubling cell nice or ugly.

    Q_lambda0 and B' are measured in units of the cell radius r(Q). B is centered at a point of
    Q_lambda0 with radius at most 0.44 lambda0 r(Q), so 2B meets supp mu only inside Q.
    """
    members = R.members
    inside = np.zeros(len(mu), dtype=bool)
    inside[members] = True
    support = mu.weights > 0
    outside = np.flatnonzero(support & ~inside)
    scale = R.radius
    flags = []

    if outside.size:
        gap, _ = cKDTree(mu.points[outside]).query(mu.points[members])
    else:
        gap = np.full(members.size, math.inf)
    interior = members[gap >= cfg.lambda0 * scale]
    cell_mass = float(mu.weights[members].sum())
    interior_fraction = float(mu.weights[interior].sum()) / cell_mass if cell_mass > 0 else 0.0
    if interior_fraction < 0.5:
        raise PreconditionFailed("mu(Q_lambda0) >= mu(Q)/2",
                                 f"cell {R.id}: the lambda0-interior carries only {interior_fraction:.3f} "
                                 f"of its mass")

    r_prime = cfg.delta0 * cfg.lambda0 * scale / 10.0
    masses = [mu.weights[mu.tree.query_ball_point(mu.points[i], r_prime)].sum() for i in interior]
    best = interior[int(np.argmax(masses))]
    B = find_thin_boundary_ball(mu, Ball(mu.points[best], r_prime), C1=cfg.C1, delta0=cfg.delta0)

    reach = cfg.eta * B.radius
    proxy = dom is None
    if proxy:
        # densest point of the interior part at the witness scale
        near = [mu.weights[mu.tree.query_ball_point(mu.points[i], reach)].sum() for i in interior]
        x_B = mu.points[interior[int(np.argmax(near))]].copy()
        flags.append("proxy-pole")
    else:
        x_B = corkscrew_point(dom, B.center, cfg.kappa * B.radius, seed=seed).point

    witness = Ball(x_B, reach)
    mass_B = float(mu.weights[B.contains(mu.points)].sum())
    ratio = float(mu.weights[witness.contains(mu.points)].sum()) / mass_B if mass_B > 0 else 0.0
    label = "ugly" if ratio >= cfg.tau else "nice"

    good = members[B.contains(mu.points[members]) & ~witness.contains(mu.points[members])]
    if bad_mask is not None:
        good = good[~bad_mask[good]]
    if good.size and outside.size:
        separation = float(cKDTree(mu.points[outside]).query(mu.points[good])[0].min())
    else:
        separation = math.inf
    separated = separation >= B.radius
    if label == "nice" and not separated:
        flags.append("good-set-not-separated")
    return NiceUglyResult(label, B, x_B, witness, ratio, interior_fraction, good, separation,
                          separated, proxy, flags)


@dataclass
class CoronaNode:
    cell: int
    level: int
    label: str
    theta: float
    mass: float
    stop: list = field(default_factory=list)
    next: list = field(default_factory=list)
    ball: Ball = None
    pole: np.ndarray = None
    witness_ratio: float = 0.0
    density_lhs: float = 0.0
    density_rhs: float = 0.0
    density_ok: bool = True
    good_set: np.ndarray = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "cell": self.cell,
            "level": self.level,
            "label": self.label,
            "theta": self.theta,
            "mass": self.mass,
            "theta_mass": self.theta * self.mass,
            "stop": self.stop,
            "next": self.next,
            "ball": self.ball.to_dict() if self.ball is not None else None,
            "pole": [float(c) for c in self.pole] if self.pole is not None else None,
            "witness_ratio": self.witness_ratio,
            "density_lhs": self.density_lhs,
            "density_rhs": self.density_rhs,
            "density_ok": self.density_ok,
            "flags": self.flags,
        }


class CoronaTree:
    def __init__(self, lattice, mu, root, cfg):
        self.lattice = lattice
        self.mu = mu
        self.root = root
        self.cfg = cfg
        # insertion order is breadth first, so parents precede their Next cells
        self.nodes = {}
        self.truncated = False

    def top(self):
        return list(self.nodes)

    def levels(self):
        return max((node.level for node in self.nodes.values()), default=-1) + 1

    def packing_partial_sums(self):
        sums = [0.0] * self.levels()
        for node in self.nodes.values():
            sums[node.level] += node.theta * node.mass
        return sums

    def audit(self):
        lat = self.lattice
        rows = []
        for node in self.nodes.values():
            rows.append({"cell": node.cell, "check": "top-doubling", "passed": lat.cells[node.cell].doubling})
            claimed = np.concatenate([lat.cells[c].members for c in node.next]) if node.next else np.zeros(0, int)
            rows.append({"cell": node.cell, "check": "next-disjoint-within",
                         "passed": np.unique(claimed).size == claimed.size})
        # no cell belongs to the Next families of two distinct nodes
        owner = {}
        clash = False
        for node in self.nodes.values():
            for c in node.next:
                if owner.setdefault(c, node.cell) != node.cell:
                    clash = True
        rows.append({"cell": "", "check": "next-disjoint-across", "passed": not clash})
        return rows

    def to_dict(self):
        return {
            "root": self.root,
            "stopping": self.cfg.to_dict(),
            "truncated": self.truncated,
            "packing_partial_sums": self.packing_partial_sums(),
            "nodes": [node.to_dict() for node in self.nodes.values()],
        }

    def export_to_json_file(self, filename):
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=4)
        logging.info(f"Corona tree exported to JSON: {filename}")


def theta(lat, cell, weights=None):
    return lat.mass_of(cell, weights) / cell.side_length ** lat.base_measure.n


def _stopping_candidate(lat, Q, result, cfg):
    """Deeper cell with radius closest to eta r(B), inside the witness ball, of largest mass."""
    target = cfg.eta * result.B.radius
    floor = lat.resolution_generation()
    last = lat.k_max if floor is None else min(lat.k_max, floor)
    deeper = range(Q.generation + 1, last + 1)
    if not deeper:
        raise DepthExhausted(f"Cell {Q.id} sits on the last lattice generation above the resolution floor")
    k = min(deeper, key=lambda g: (abs(math.log(lat.scale(g) / target)), g))
    candidates = [c for c in lat.descendants_at(Q, k) if result.witness.contains(c.center[None, :])[0]]
    if not candidates:
        pts = lat.base_measure.points[Q.members]
        nearest = Q.members[int(np.argmin(np.linalg.norm(pts - result.x_B, axis=1)))]
        candidates = [lat.cell_containing(nearest, k)]
    return max(candidates, key=lambda c: (lat.mass_of(c), -c.id))


_LEAF_FLAGS = {NoThinBall: "no-thin-ball", NoInteriorPoint: "no-interior-point",
               PreconditionFailed: "thin-interior"}


def build_corona(lat_mu, R, cfg, dom=None, max_nodes=MAX_CORONA_NODES):
    if not R.doubling:
        raise PreconditionFailed("R is a doubling cell", f"cell {R.id} is not doubling")
    mu = lat_mu.base_measure
    tree = CoronaTree(lat_mu, mu, R.id, cfg)
    queue = deque([(R, 0)])
    while queue:
        if len(tree.nodes) >= max_nodes:
            logging.warning(f"Corona tree truncated at {max_nodes} nodes")
            tree.truncated = True
            break
        Q, level = queue.popleft()
        node = CoronaNode(Q.id, level, "nice", theta(lat_mu, Q), lat_mu.mass_of(Q))
        tree.nodes[Q.id] = node
        try:
            result = classify_nice_ugly(mu, Q, cfg, dom)
        except (NoThinBall, NoInteriorPoint, PreconditionFailed) as e:
            logging.warning(f"Cell {Q.id} kept as a leaf: {e}")
            node.label = "ugly"
            node.flags.append(_LEAF_FLAGS[type(e)])
            continue
        node.label, node.ball, node.pole = result.label, result.B, result.x_B
        node.witness_ratio = result.witness_ratio
        node.flags.extend(result.flags)
        if result.label == "nice":
            node.good_set = result.good_set
            continue

        try:
            candidate = _stopping_candidate(lat_mu, Q, result, cfg)
        except DepthExhausted as e:
            logging.warning(f"{e}; leaf forced")
            node.flags.append("depth-exhausted")
            continue
        stop_parent = next((c for c in [candidate] + lat_mu.ancestors(candidate)
                            if c.doubling and lat_mu.is_descendant(c, Q)), Q)
        if stop_parent.id == Q.id:
            node.flags.append("stalled")
            continue

        stop = lat_mu.descendants_at(Q, stop_parent.generation)
        nxt = []
        for P in stop:
            family, _ = covering_by_doubling(lat_mu, P)
            nxt.extend(family)
        node.stop = [P.id for P in stop]
        node.next = [P.id for P in nxt]
        node.density_lhs = sum(theta(lat_mu, P) * lat_mu.mass_of(P) for P in nxt)
        node.density_rhs = 2.0 * node.theta * node.mass
        node.density_ok = node.density_lhs >= node.density_rhs
        if not node.density_ok:
            logging.warning(f"Cell {Q.id}: Next density sum {node.density_lhs:g} < {node.density_rhs:g}; "
                            f"eta = {cfg.eta:g} may be too large")
        queue.extend((P, level + 1) for P in nxt)
    logging.info(f"Corona tree: {len(tree.nodes)} Top cells over {tree.levels()} levels")
    return tree


def packing_check(tree):
    root_mass = tree.nodes[tree.root].mass
    if root_mass <= 0:
        return 0.0
    return sum(node.theta * node.mass for node in tree.nodes.values()) / root_mass


def good_region(tree):
    """Indices of (R minus the nice leaves) plus the good sets of the nice leaves."""
    lat = tree.lattice
    keep = np.zeros(len(tree.mu), dtype=bool)
    keep[lat.cells[tree.root].members] = True
    for node in tree.nodes.values():
        if node.label == "nice" and node.good_set is not None:
            keep[lat.cells[node.cell].members] = False
            keep[node.good_set] = True
    return np.flatnonzero(keep)


def _chain(tree, i):
    lat = tree.lattice
    chain = [tree.nodes[tree.root]]
    while True:
        node = chain[-1]
        following = None
        for c in node.next:
            cell = lat.cells[c]
            if c in tree.nodes and lat.cell_of[cell.generation - lat.k0, i] == c:
                following = tree.nodes[c]
                break
        if following is None:
            return chain
        chain.append(following)


@dataclass
class RStarReport:
    normalized: float
    nu_mass: float
    tail: float
    ugly_levels: float
    nice_levels: float
    dominated: bool
    rows: list = field(default_factory=list)


def r_star_l1_check(tree, mu, cfg=None):
    lat = tree.lattice
    riesz = RieszConfig(n=mu.n) if cfg is None else cfg
    region = good_region(tree)
    nu = mu.restrict(region)
    nu_mass = nu.total_mass()
    if len(nu) == 0 or nu_mass <= 0:
        return RStarReport(0.0, 0.0, 0.0, 0.0, 0.0, True)

    total = tail_sum = ugly_sum = nice_sum = 0.0
    dominated = True
    rows = []
    for j, i in enumerate(region):
        x = mu.points[i]
        w = float(nu.weights[j])
        value = maximal_riesz(riesz, nu, None, x)
        chain = _chain(tree, i)
        hi = lat.cells[chain[0].cell].radius
        tail = maximal_riesz(riesz, nu, None, x, delta=hi)
        ugly = 0.0
        for node, following in zip(chain, chain[1:]):
            lo = lat.cells[following.cell].radius
            ugly += maximal_double_truncation(riesz, nu, None, x, lo, lat.cells[node.cell].radius)
        nice = maximal_double_truncation(riesz, nu, None, x, 0.0, lat.cells[chain[-1].cell].radius)
        bound = tail + ugly + nice
        if value > bound * (1.0 + 1e-9):
            dominated = False
        total += w * value
        tail_sum += w * tail
        ugly_sum += w * ugly
        nice_sum += w * nice
        rows.append({"atom": int(i), "weight": w, "r_star": value, "tail": tail, "ugly": ugly,
                     "nice": nice, "depth": len(chain)})
    if not dominated:
        logging.warning("Per-level split of R_* does not dominate the maximal transform")
    return RStarReport(total / nu_mass, nu_mass, tail_sum / nu_mass, ugly_sum / nu_mass,
                       nice_sum / nu_mass, dominated, rows)
