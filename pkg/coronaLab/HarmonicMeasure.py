"""
Harmonic measure and Green functions by walk-on-spheres.

Every walk draws its randomness from a counter-based stream: the uniform
used by walk i at step t for component c is a hash of (seed, i, t, c).
Batches are therefore vectorized freely and still reproduce a serial run
walk by walk, and doubling N keeps the first N walks unchanged.
"""
import csv
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri
from scipy.stats import qmc

from coronaLab.PointMeasure import Ball, growth_constant, mass
from coronaLab.RieszTransform import RieszConfig, fundamental_solution
from coronaLab.errors import MaxStepsExceeded, PreconditionFailed, SingularPair

DEFAULT_SHELL_EPS = 1e-4
DEFAULT_MAX_STEPS = 10 ** 6
MIN_PIECE_EXITS = 30
DEFAULT_GROWTH_BOUND = 10.0

Estimate = namedtuple("Estimate", ["value", "std_error", "N", "seed", "shell_eps", "discard_fraction"])

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def walk_uniforms(seed, walk_ids, step, count):
    """Uniforms in (0, 1) of shape (len(walk_ids), count), one hash per (seed, walk, step, component)."""
    walk_ids = np.atleast_1d(np.asarray(walk_ids, dtype=np.uint64))
    key = _splitmix64(np.full(walk_ids.shape, seed, dtype=np.uint64)) ^ walk_ids
    key = _splitmix64(_splitmix64(key) ^ np.uint64(step))
    columns = []
    for c in range(count):
        bits = _splitmix64(key ^ np.uint64(c + 1)) >> np.uint64(11)
        columns.append((bits.astype(np.float64) + 0.5) * 2.0 ** -53)
    return np.column_stack(columns)


def sphere_directions(seed, walk_ids, step, dim, rotation=None):
    if dim == 2:
        theta = 2.0 * np.pi * walk_uniforms(seed, walk_ids, step, 1)[:, 0]
        directions = np.column_stack((np.cos(theta), np.sin(theta)))
    else:
        gauss = ndtri(walk_uniforms(seed, walk_ids, step, dim))
        directions = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    if rotation is not None:
        directions = directions @ np.asarray(rotation, dtype=float).T
    return directions


class ExitDistribution:
    def __init__(self, pole, exit_points, walk_indices, walk_count, shell_eps, seed,
                 discarded=0, sides=None, steps=None):
        self.pole = np.asarray(pole, dtype=float)
        self.exit_points = exit_points
        self.walk_indices = walk_indices
        self.walk_count = walk_count
        self.shell_eps = shell_eps
        self.seed = seed
        self.discarded = discarded
        self.sides = np.zeros(len(walk_indices), dtype=int) if sides is None else sides
        self.steps = steps

    def __len__(self):
        return self.exit_points.shape[0]

    @property
    def discard_fraction(self):
        return self.discarded / self.walk_count if self.walk_count else 0.0

    def stamp(self):
        return {"N": self.walk_count, "seed": self.seed, "shell_eps": self.shell_eps,
                "discard_fraction": self.discard_fraction}

    def to_point_measure(self, support):
        """Exit frequencies binned on the nearest atom of `support` (total mass 1)."""
        if len(self) == 0:
            return support.with_weights(np.zeros(len(support)))
        _, nearest = support.tree.query(self.exit_points)
        counts = np.bincount(nearest, minlength=len(support))
        return support.with_weights(counts / len(self))

    def export_to_csv_file(self, filename, targets=None):
        labels = targets.labels(self.exit_points, self.sides) if targets is not None else None
        dim = self.exit_points.shape[1]
        fieldnames = ["walk_index"] + [f"exit_x{i + 1}" for i in range(dim)] + ["target_id"]
        with open(filename, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=fieldnames)
            writer.writeheader()
            for j, (walk, point) in enumerate(zip(self.walk_indices, self.exit_points)):
                row = {"walk_index": int(walk)}
                row.update({f"exit_x{i + 1}": repr(float(c)) for i, c in enumerate(point)})
                row["target_id"] = int(labels[j]) if labels is not None else ""
                writer.writerow(row)
        logging.info(f"Exit distribution exported to CSV: {filename}")


def sample_exits(dom, x, N, shell_eps=DEFAULT_SHELL_EPS, seed=0, max_steps=DEFAULT_MAX_STEPS,
                 walk_offset=0, rotation=None):
    x = np.asarray(x, dtype=float).reshape(-1)
    if dom.sdf(x[None, :])[0] >= 0:
        raise ValueError(f"Walk start {x.tolist()} is not inside {dom.name}")
    positions = np.tile(x, (N, 1))
    walk_ids = np.arange(walk_offset, walk_offset + N, dtype=np.uint64)
    steps = np.zeros(N, dtype=np.int64)
    active = np.arange(N)
    step = 0
    while active.size:
        depth = -dom.sdf(positions[active])
        running = depth >= shell_eps
        active, depth = active[running], depth[running]
        if active.size == 0 or step == max_steps:
            break
        directions = sphere_directions(seed, walk_ids[active], step, dom.ambient_dim, rotation)
        positions[active] += depth[:, None] * directions
        steps[active] += 1
        step += 1

    kept = np.ones(N, dtype=bool)
    kept[active] = False
    if active.size:
        logging.warning(f"{active.size} of {N} walks from {x.tolist()} hit max_steps = {max_steps} and were discarded")
    last = positions[kept]
    return ExitDistribution(x, dom.boundary_project(last), walk_ids[kept], N, shell_eps, seed,
                            discarded=int(active.size), sides=dom.side(last), steps=steps[kept])


def wos_exit(dom, x, shell_eps=DEFAULT_SHELL_EPS, rng_seed=0, walk_index=0, max_steps=DEFAULT_MAX_STEPS):
    exits = sample_exits(dom, x, 1, shell_eps, rng_seed, max_steps, walk_offset=walk_index)
    if exits.discarded:
        raise MaxStepsExceeded(f"Walk {walk_index} from {np.asarray(x).tolist()} exceeded {max_steps} steps")
    return exits.exit_points[0]


class ArcPartition:
    """Equal angular pieces of the window [theta0, theta1) around `center`."""

    def __init__(self, pieces, theta0=0.0, theta1=2.0 * np.pi, center=(0.0, 0.0)):
        self.size = int(pieces)
        self.theta0 = float(theta0)
        self.span = float(theta1 - theta0)
        self.center = np.asarray(center, dtype=float)
        self.partial = self.span < 2.0 * np.pi

    def edges(self):
        return [self.theta0 + self.span * k / self.size for k in range(self.size + 1)]

    def labels(self, points, sides=None):
        rel = np.atleast_2d(points) - self.center
        offset = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - self.theta0, 2.0 * np.pi)
        label = np.floor(offset / self.span * self.size).astype(int)
        return np.where(offset < self.span, np.minimum(label, self.size - 1), -1)


class BallPartition:
    def __init__(self, balls):
        self.balls = list(balls)
        self.size = len(self.balls)
        self.partial = True

    def labels(self, points, sides=None):
        points = np.atleast_2d(points)
        label = np.full(points.shape[0], -1)
        for k in reversed(range(self.size)):
            label = np.where(self.balls[k].contains(points), k, label)
        return label


class BallTracePartition:
    """Pieces of the boundary trace inside `ball`: equal angular sectors around its
    center, optionally split by slit side (lower side numbered after the upper)."""

    def __init__(self, ball, pieces, split_sides=False, theta0=0.0):
        self.ball = ball
        self.sectors = int(pieces)
        self.split_sides = split_sides
        self.theta0 = theta0
        self.size = self.sectors * (2 if split_sides else 1)
        self.partial = True

    def labels(self, points, sides=None):
        points = np.atleast_2d(points)
        rel = points - self.ball.center
        offset = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - self.theta0, 2.0 * np.pi)
        label = np.minimum((offset / (2.0 * np.pi) * self.sectors).astype(int), self.sectors - 1)
        if self.split_sides and sides is not None:
            label = label + self.sectors * (np.asarray(sides) < 0)
        return np.where(self.ball.contains(points), label, -1)


@dataclass
class HarmonicMeasureEstimate:
    probabilities: np.ndarray
    std_errors: np.ndarray
    counts: np.ndarray
    walks: int
    N: int
    seed: int
    shell_eps: float
    discard_fraction: float
    covered_fraction: float
    partial: bool

    def rows(self):
        return [{"target": k, "probability": float(p), "std_error": float(s), "count": int(c),
                 "N": self.N, "seed": self.seed}
                for k, (p, s, c) in enumerate(zip(self.probabilities, self.std_errors, self.counts))]


def frequencies(exits, targets):
    labels = targets.labels(exits.exit_points, exits.sides)
    kept = len(exits)
    counts = np.bincount(labels[labels >= 0], minlength=targets.size)[:targets.size]
    p = counts / kept if kept else np.zeros(targets.size)
    se = np.sqrt(p * (1.0 - p) / kept) if kept else np.zeros(targets.size)
    covered = float(counts.sum() / kept) if kept else 0.0
    return HarmonicMeasureEstimate(p, se, counts, kept, exits.walk_count, exits.seed, exits.shell_eps,
                                   exits.discard_fraction, covered, targets.partial or covered < 1.0)


def harmonic_measure(dom, x, targets, N, shell_eps=DEFAULT_SHELL_EPS, seed=0,
                     max_steps=DEFAULT_MAX_STEPS, walk_offset=0):
    exits = sample_exits(dom, x, N, shell_eps, seed, max_steps, walk_offset)
    estimate = frequencies(exits, targets)
    if estimate.partial and not targets.partial:
        logging.warning(f"Targets cover only {estimate.covered_fraction:.4f} of the exits")
    return estimate


def green_from_exits(cfg, x, y, exits):
    """G(x, y) from exits of walks started at y."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    kernel = fundamental_solution(cfg, x - exits.exit_points)
    kept = kernel.size
    value = float(fundamental_solution(cfg, (x - y)[None, :])[0] - kernel.mean())
    std_error = float(kernel.std(ddof=1) / math.sqrt(kept)) if kept > 1 else math.inf
    return Estimate(value, std_error, exits.walk_count, exits.seed, exits.shell_eps, exits.discard_fraction)


def green_estimate(dom, x, y, N, shell_eps=DEFAULT_SHELL_EPS, seed=0, walk_offset=0, cfg=None):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.linalg.norm(x - y) < 1e-9 * dom.scale:
        raise SingularPair(f"Green function requested at coincident points {x.tolist()}")
    cfg = cfg or RieszConfig(n=dom.ambient_dim - 1)
    exits = sample_exits(dom, y, N, shell_eps, seed, walk_offset=walk_offset)
    return green_from_exits(cfg, x, y, exits)


def sphere_points(center, radius, m, seed=0):
    """Quasi-uniform points on the sphere of given radius, keyed to the seed."""
    center = np.asarray(center, dtype=float)
    dim = center.size
    if dim == 2:
        offset = qmc.Sobol(1, scramble=True, seed=seed).random(1)[0, 0]
        theta = 2.0 * np.pi * (np.arange(m) + offset) / m
        directions = np.column_stack((np.cos(theta), np.sin(theta)))
    else:
        sobol = qmc.Sobol(dim, scramble=True, seed=seed)
        gauss = ndtri(sobol.random_base2(max(1, math.ceil(math.log2(m))))[:m])
        directions = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    return center + radius * directions


def rho(dom, x0, sphere_samples=16, N_per_sample=2000, seed=0, shell_eps=DEFAULT_SHELL_EPS, walk_offset=0):
    x0 = np.asarray(x0, dtype=float)
    depth = -float(dom.sdf(x0[None, :])[0])
    if depth <= 0:
        raise ValueError(f"rho needs an interior point, got {x0.tolist()}")
    cfg = RieszConfig(n=dom.ambient_dim - 1)
    values, errors = [], []
    for j, y in enumerate(sphere_points(x0, depth / 4.0, sphere_samples, seed)):
        g = green_estimate(dom, x0, y, N_per_sample, shell_eps, seed,
                           walk_offset=walk_offset + j * N_per_sample, cfg=cfg)
        values.append(g.value)
        errors.append(g.std_error)
    se = math.sqrt(sum(e * e for e in errors)) / sphere_samples
    return Estimate(float(np.mean(values)), se, N_per_sample * sphere_samples, seed, shell_eps, 0.0)


def ball_interior_samples(dom, ball, count, seed=0):
    """First `count` quasi-random points of ball ∩ Ω."""
    sobol = qmc.Sobol(dom.ambient_dim, scramble=True, seed=seed)
    u = sobol.random_base2(max(4, math.ceil(math.log2(64 * count))))
    points = ball.center - ball.radius + 2.0 * ball.radius * u
    keep = (np.linalg.norm(points - ball.center, axis=1) < ball.radius) & (dom.sdf(points) < 0)
    return points[keep][:count]


@dataclass
class BourgainReport:
    worst_ratio: float
    worst_std_error: float
    ratios: list
    std_errors: list
    poles: np.ndarray
    vacuous: bool
    growth_constant: float
    N: int
    seed: int
    shell_eps: float
    growth_ok: bool = True


def bourgain_check(dom, mu_boundary, xi, r, delta, poles, N, seed=0, shell_eps=DEFAULT_SHELL_EPS,
                   resolution=None, growth_bound=DEFAULT_GROWTH_BOUND):
    xi = np.asarray(xi, dtype=float)
    big = Ball(xi, r)
    small = Ball(xi, delta * r)
    if np.isscalar(poles):
        poles = ball_interior_samples(dom, small, int(poles), seed)
    poles = np.atleast_2d(np.asarray(poles, dtype=float))
    growth = growth_constant(mu_boundary, resolution=resolution)
    growth_ok = growth <= growth_bound
    if growth_ok:
        logging.info(f"Boundary measure growth constant at resolution: {growth:g}")
    else:
        logging.warning(f"Boundary measure growth constant {growth:g} exceeds {growth_bound:g}; "
                        f"the lower bound is not expected to hold")

    mu_small = mass(mu_boundary, small)
    if mu_small == 0:
        logging.warning("mu(delta B) = 0; Bourgain ratio is vacuous")
        return BourgainReport(math.inf, 0.0, [], [], poles, True, growth, N, seed, shell_eps, growth_ok)

    n = dom.ambient_dim - 1
    scale = (delta * r) ** n / mu_small
    ratios, errors = [], []
    for j, pole in enumerate(poles):
        estimate = harmonic_measure(dom, pole, BallPartition([big]), N, shell_eps, seed, walk_offset=j * N)
        ratios.append(float(estimate.probabilities[0] * scale))
        errors.append(float(estimate.std_errors[0] * scale))
    worst = int(np.argmin(ratios))
    return BourgainReport(ratios[worst], errors[worst], ratios, errors, poles, False, growth, N, seed, shell_eps,
                          growth_ok)


@dataclass
class GreenOmegaReport:
    ratios: list
    std_errors: list
    spread: float
    omega_pole: float
    rho: float
    negative_control: bool
    N: int
    seed: int
    omega_pole_std_error: float = 0.0
    rho_std_error: float = 0.0
    rho_walks: int = 0


def green_omega_relation(dom, B, x_B, xs, N, seed=0, shell_eps=DEFAULT_SHELL_EPS, sphere_samples=16,
                         uniform=True):
    x_B = np.asarray(x_B, dtype=float)
    cfg = RieszConfig(n=dom.ambient_dim - 1)
    pole_exits = sample_exits(dom, x_B, N, shell_eps, seed)
    omega_pole = float(B.contains(pole_exits.exit_points).mean())
    rho_pole = rho(dom, x_B, sphere_samples, max(1, N // sphere_samples), seed, shell_eps, walk_offset=N)
    if not uniform:
        logging.warning(f"{dom.name} is not a uniform domain; Green/harmonic-measure ratios are a negative control")

    ratios, errors = [], []
    for j, x in enumerate(np.atleast_2d(xs)):
        if np.linalg.norm(x - B.center) <= 2.0 * B.radius:
            logging.warning(f"Test point {x.tolist()} lies inside 2B")
        exits = sample_exits(dom, x, N, shell_eps, seed, walk_offset=(j + 2) * N)
        hits = B.contains(exits.exit_points)
        omega_x = float(hits.mean())
        g = green_from_exits(cfg, x, x_B, pole_exits)
        ratio = omega_x * rho_pole.value / (omega_pole * g.value)
        relative = math.sqrt(
            (1.0 - omega_x) / max(hits.sum(), 1)
            + (1.0 - omega_pole) / max(omega_pole * len(pole_exits), 1)
            + (g.std_error / g.value) ** 2
            + (rho_pole.std_error / rho_pole.value) ** 2)
        ratios.append(float(ratio))
        errors.append(float(abs(ratio) * relative))
    positive = [r for r in ratios if r > 0]
    spread = max(positive) / min(positive) if len(positive) == len(ratios) and ratios else math.inf
    omega_pole_se = math.sqrt(omega_pole * (1.0 - omega_pole) / max(len(pole_exits), 1))
    return GreenOmegaReport(ratios, errors, spread, omega_pole, rho_pole.value, not uniform, N, seed,
                            omega_pole_se, rho_pole.std_error, rho_pole.N)


@dataclass
class ChangeOfPoleReport:
    max_quotient: float
    quotients: list
    std_errors: list
    groups: list
    merged: bool
    counts: list = field(default_factory=list)
    N: int = 0
    seed: int = 0
    max_std_error: float = 0.0


def _merge_sparse_pieces(counts):
    groups = [[k] for k in range(len(counts))]
    totals = [int(c) for c in counts]
    while len(groups) > 1 and min(totals) < MIN_PIECE_EXITS:
        k = int(np.argmin(totals))
        j = k + 1 if k + 1 < len(groups) else k - 1
        lo, hi = min(j, k), max(j, k)
        groups[lo:hi + 1] = [groups[lo] + groups[hi]]
        totals[lo:hi + 1] = [totals[lo] + totals[hi]]
    return groups


def change_of_pole(dom, B, partition, p1, p2, c0, N, seed=0, shell_eps=DEFAULT_SHELL_EPS):
    trace = dom.boundary_sample(4096)
    trace = trace[B.contains(trace)]
    for name, p in (("p1", p1), ("p2", p2)):
        gap = float(np.min(np.linalg.norm(trace - np.asarray(p), axis=1))) if trace.size else math.inf
        if gap < B.radius / c0:
            raise PreconditionFailed(f"dist({name}, B ∩ boundary) >= r(B)/c0",
                                     f"distance {gap:g} < {B.radius / c0:g}")

    # common walk indices for both poles
    labels = []
    for p in (p1, p2):
        exits = sample_exits(dom, p, N, shell_eps, seed)
        labels.append(partition.labels(exits.exit_points, exits.sides))
    c1 = np.bincount(labels[0][labels[0] >= 0], minlength=partition.size)[:partition.size]
    c2 = np.bincount(labels[1][labels[1] >= 0], minlength=partition.size)[:partition.size]

    groups = _merge_sparse_pieces(c1 + c2)
    if len(groups) < partition.size:
        logging.info(f"Merged {partition.size} pieces into {len(groups)} to keep at least {MIN_PIECE_EXITS} exits each")
    total1, total2 = c1.sum(), c2.sum()
    quotients, errors, counts = [], [], []
    for group in groups:
        e1, e2 = int(c1[group].sum()), int(c2[group].sum())
        counts.append((e1, e2))
        if total1 == 0 or total2 == 0 or e1 == 0 or e2 == 0:
            quotients.append(math.inf)
            errors.append(math.inf)
            continue
        a, b = e1 / total1, e2 / total2
        q = max(a / b, b / a)
        relative = math.sqrt((1.0 - a) / e1 + (1.0 - b) / e2)
        quotients.append(float(q))
        errors.append(float(q * relative))
    worst = int(np.argmax(quotients))
    return ChangeOfPoleReport(quotients[worst], quotients, errors, groups, len(groups) < partition.size,
                              counts, N, seed, errors[worst])


@dataclass(frozen=True, eq=False)
class HarmonicFunctionSpec:
    """x -> omega^x(ball) (kind 'omega') or x -> G(pole, x) (kind 'green')."""
    kind: str
    ball: Ball = None
    pole: np.ndarray = None

    def distance_to(self, xi):
        if self.kind == "omega":
            return float(np.linalg.norm(self.ball.center - xi)) - self.ball.radius
        return float(np.linalg.norm(np.asarray(self.pole) - xi))

    def samples(self, cfg, x, exits):
        """One unbiased sample per kept walk from x; their mean is the function value at x."""
        if self.kind == "omega":
            return self.ball.contains(exits.exit_points).astype(float)
        if self.kind == "green":
            pole = np.asarray(self.pole, dtype=float)
            x = np.asarray(x, dtype=float)
            return (fundamental_solution(cfg, (pole - x)[None, :])[0]
                    - fundamental_solution(cfg, pole - exits.exit_points))
        raise ValueError(f"Unknown harmonic function kind '{self.kind}'")

    def evaluate(self, cfg, x, exits):
        return float(self.samples(cfg, x, exits).mean())


@dataclass
class HarnackReport:
    oscillation: float
    ratios: list
    vanishing_ok: bool
    N: int
    seed: int
    std_errors: list = field(default_factory=list)
    oscillation_std_error: float = 0.0


def _ratio_of_means(u, v):
    """u.mean()/v.mean() over paired walk samples, with its delta-method standard error."""
    if u.size == 0:
        return math.inf, math.inf
    mu_u, mu_v = float(u.mean()), float(v.mean())
    if mu_v <= 0:
        return math.inf, math.inf
    ratio = mu_u / mu_v
    if mu_u <= 0 or u.size < 2:
        return ratio, math.inf
    cov = np.cov(u, v)
    relative = cov[0, 0] / mu_u ** 2 + cov[1, 1] / mu_v ** 2 - 2.0 * cov[0, 1] / (mu_u * mu_v)
    return ratio, abs(ratio) * math.sqrt(max(relative, 0.0) / u.size)


def boundary_harnack_check(dom, xi, r, A1_candidate, u_spec, v_spec, probes, N, seed=0,
                           shell_eps=DEFAULT_SHELL_EPS):
    xi = np.asarray(xi, dtype=float)
    reach = A1_candidate * r
    vanishing_ok = u_spec.distance_to(xi) > reach and v_spec.distance_to(xi) > reach
    if not vanishing_ok:
        logging.warning(f"u or v is not guaranteed to vanish on the boundary within {reach:g} of xi")
    cfg = RieszConfig(n=dom.ambient_dim - 1)
    ratios, errors = [], []
    for j, x in enumerate(np.atleast_2d(probes)):
        exits = sample_exits(dom, x, N, shell_eps, seed, walk_offset=j * N)
        u = u_spec.samples(cfg, x, exits)
        if v_spec is u_spec:
            ratio, error = (1.0, 0.0) if u.mean() > 0 else (math.inf, math.inf)
        else:
            ratio, error = _ratio_of_means(u, v_spec.samples(cfg, x, exits))
        ratios.append(ratio)
        errors.append(error)

    finite = [q for q in ratios if np.isfinite(q) and q > 0]
    if not (len(finite) == len(ratios) and ratios):
        return HarnackReport(math.inf, ratios, vanishing_ok, N, seed, errors, math.inf)
    hi, lo = int(np.argmax(ratios)), int(np.argmin(ratios))
    oscillation = ratios[hi] / ratios[lo]
    # test points use disjoint walk indices
    relative = math.hypot(errors[hi] / ratios[hi], errors[lo] / ratios[lo]) if hi != lo else 0.0
    return HarnackReport(oscillation, ratios, vanishing_ok, N, seed, errors, oscillation * relative)


@dataclass
class AinftyResult:
    eps_prime: float
    selected: list
    fractional_index: int
    fraction: float
    fails: bool


def ainfty_scan(mu, omega, eps):
    """Worst omega-fraction over sets of mu-fraction at most eps (fractional knapsack)."""
    if isinstance(mu, dict):
        keys = sorted(mu)
        mu = [mu[k] for k in keys]
        omega = [omega[k] for k in keys]
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    total = omega.sum()
    if total <= 0:
        raise ValueError("ainfty_scan needs positive omega mass")

    free = np.flatnonzero((mu == 0) & (omega > 0))
    taken = float(omega[free].sum())
    selected = [int(i) for i in free]
    if free.size:
        logging.warning(f"{free.size} atoms carry omega mass but no mu mass; the A-infinity condition fails")

    costly = np.flatnonzero(mu > 0)
    ratio = omega[costly] / mu[costly]
    remaining = eps * mu.sum()
    fractional_index, fraction = -1, 0.0
    for i in costly[np.lexsort((costly, -ratio))]:
        if mu[i] <= remaining:
            remaining -= mu[i]
            taken += omega[i]
            selected.append(int(i))
        else:
            fraction = remaining / mu[i]
            taken += fraction * omega[i]
            fractional_index = int(i)
            break
    return AinftyResult(taken / total, selected, fractional_index, fraction, bool(free.size))


def disk_poisson_arc(x, theta0, theta1):
    """Harmonic measure of the arc [theta0, theta1] of the unit circle seen from x."""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    kernel = lambda t: (1.0 - r2) / (2.0 * np.pi * ((x[0] - np.cos(t)) ** 2 + (x[1] - np.sin(t)) ** 2))
    return quad(kernel, theta0, theta1, limit=200)[0]


def disk_green(x, y):
    x, y = complex(*x), complex(*y)
    return math.log(abs(1.0 - x * y.conjugate()) / abs(x - y)) / (2.0 * math.pi)
