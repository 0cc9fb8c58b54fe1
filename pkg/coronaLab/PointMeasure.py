"""
Point measures
==============

Finite Radon measures stored as weighted point clouds in (n+1)-dimensional
space, together with the diagnostics every other module relies on: masses
and densities of closed balls, growth constants, doubling tests, thin
boundary profiles and AD-regularity constants.

Balls are closed everywhere (a point on the sphere counts as inside).
Atomic measures are only faithful above their resolution scale, the minimum
pairwise distance between support points; diagnostics take a resolution
argument and warn when asked to probe below it.
"""
import csv
import json
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri
from scipy.stats import qmc

from coronaLab.errors import NoThinBall

DEFAULT_T_GRID = tuple(2.0 ** -k for k in range(1, 11))

# Radius grid of find_thin_boundary_ball: 64 equal steps, endpoints included
THIN_BALL_RADII = 64

ADRegularity = namedtuple("ADRegularity", ["c_lower", "c_upper", "degenerate"])


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        radius = float(self.radius)
        if not radius > 0:
            raise ValueError(f"Ball radius must be positive, got {radius}")
        object.__setattr__(self, "radius", radius)

    def scaled(self, a):
        return Ball(self.center, a * self.radius)

    def distances(self, points):
        return np.linalg.norm(np.asarray(points, dtype=float) - self.center, axis=-1)

    def contains(self, points):
        return self.distances(points) <= self.radius

    def contains_ball(self, other):
        return float(np.linalg.norm(other.center - self.center)) + other.radius <= self.radius

    def to_dict(self):
        return {"center": [float(c) for c in self.center], "radius": self.radius}

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius!r})"


class PointMeasure:
    def __init__(self, points, weights, n=None, signed=False):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {points.shape}")
        ambient_dim = points.shape[1]
        if ambient_dim < 2:
            raise ValueError("ambient dimension must be at least 2")
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape[0] != points.shape[0]:
            raise ValueError(f"{points.shape[0]} points but {weights.shape[0]} weights")
        if not signed and np.any(weights < 0):
            raise ValueError("negative weight in an unsigned measure")
        if n is None:
            n = ambient_dim - 1
        if n != ambient_dim - 1:
            raise ValueError(f"n = {n} does not match ambient dimension {ambient_dim}")

        self.points = points
        self.weights = weights
        self.n = int(n)
        self.ambient_dim = ambient_dim
        self.signed = signed
        self._tree = None

    @classmethod
    def empty(cls, ambient_dim=2):
        return cls(np.zeros((0, ambient_dim)), np.zeros(0))

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"PointMeasure({len(self)} atoms, d={self.ambient_dim}, mass={self.total_mass()!r})"

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def total_mass(self):
        return float(self.weights.sum())

    def total_variation(self):
        return float(np.abs(self.weights).sum())

    def restrict(self, region):
        """Copy of the measure with weights outside `region` removed (points dropped)."""
        mask = region_mask(self, region)
        return PointMeasure(self.points[mask], self.weights[mask], self.n, self.signed)

    def with_weights(self, weights, signed=None):
        return PointMeasure(self.points, weights, self.n, self.signed if signed is None else signed)

    def scaled(self, factor):
        return self.with_weights(self.weights * factor)

    def transformed(self, rotation=None, shift=None, scale=1.0):
        points = self.points * scale
        if rotation is not None:
            points = points @ np.asarray(rotation, dtype=float).T
        if shift is not None:
            points = points + np.asarray(shift, dtype=float)
        return PointMeasure(points, self.weights.copy(), self.n, self.signed)

    def resolution(self):
        # Minimum positive pairwise distance; 0 when fewer than two distinct points
        if len(self) < 2:
            return 0.0
        dist, _ = self.tree.query(self.points, k=2)
        positive = dist[:, 1][dist[:, 1] > 0]
        if positive.size == 0:
            return 0.0
        return float(positive.min())

    def diameter(self):
        if len(self) < 2:
            return 0.0
        best = 0.0
        for start in range(0, len(self), 1024):
            block = self.points[start:start + 1024]
            dist = np.linalg.norm(block[:, None, :] - self.points[None, :, :], axis=-1)
            best = max(best, float(dist.max()))
        return best

    def to_dict(self):
        return {
            "dim": self.ambient_dim,
            "n": self.n,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            dim = int(data["dim"])
            points = np.asarray(data["points"], dtype=float).reshape(-1, dim)
            return cls(points, data["weights"], int(data.get("n", dim - 1)))
        except KeyError as e:
            raise ValueError(f"Point measure document misses key {e}")

    def export_to_json_file(self, filename):
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=4)
        logging.info(f"Point measure exported to JSON: {filename}")

    @classmethod
    def import_from_json_file(cls, filename):
        with open(filename, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def export_to_csv_file(self, filename):
        fieldnames = [f"x{i + 1}" for i in range(self.ambient_dim)] + ["weight"]
        with open(filename, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=fieldnames)
            writer.writeheader()
            for point, weight in zip(self.points, self.weights):
                row = {f"x{i + 1}": repr(float(c)) for i, c in enumerate(point)}
                row["weight"] = repr(float(weight))
                writer.writerow(row)
        logging.info(f"Point measure exported to CSV: {filename}")

    @classmethod
    def import_from_csv_file(cls, filename):
        logging.info(f"Importing point measure from CSV-file: {filename}")
        with open(filename, "r", newline="", encoding="utf-8") as csvfile:
            reader = csv.DictReader(csvfile)
            fields = reader.fieldnames or []
            coords = sorted((f for f in fields if f.startswith("x") and f[1:].isdigit()),
                            key=lambda f: int(f[1:]))
            if "weight" not in fields or not coords:
                raise ValueError(f"CSV header must be x1..xd,weight, got {fields}")
            points, weights = [], []
            for line, row in enumerate(reader, start=2):
                try:
                    points.append([float(row[c]) for c in coords])
                    weights.append(float(row["weight"]))
                except (TypeError, ValueError):
                    raise ValueError(f"Malformed row {line} in {filename}: {row}")
        return cls(np.asarray(points, dtype=float).reshape(-1, len(coords)), weights)


def region_mask(mu, region):
    """Boolean mask of the atoms of `mu` inside `region` (Ball, mask or index set)."""
    if isinstance(region, Ball):
        return region.contains(mu.points)
    region = np.asarray(region)
    if region.dtype == bool:
        if region.shape != (len(mu),):
            raise ValueError("indicator length does not match the measure")
        return region
    mask = np.zeros(len(mu), dtype=bool)
    mask[region.astype(int).reshape(-1)] = True
    return mask


def mass(mu, region):
    if len(mu) == 0:
        return 0.0
    return float(mu.weights[region_mask(mu, region)].sum())


def density(mu, ball):
    return mass(mu, ball) / (2.0 * ball.radius) ** mu.n


def ball_growth_sup(points, weights, x, r_min, n):
    """Exact sup over r >= r_min of weight(B(x, r)) / r**n for closed balls.

    The mass is a step function of r, so the sup sits at r_min or at one of
    the atom distances. With r_min = 0 an atom at x gives an infinite sup.
    """
    if points.shape[0] == 0:
        return 0.0
    dist = np.linalg.norm(points - x, axis=1)
    order = np.argsort(dist, kind="stable")
    dist = dist[order]
    cum = np.cumsum(weights[order])
    if r_min <= 0:
        if weights[order][dist == 0].sum() > 0:
            return math.inf
        radii = np.unique(dist[dist > 0])
    else:
        radii = np.unique(np.concatenate(([r_min], dist[dist >= r_min])))
    if radii.size == 0:
        return 0.0
    idx = np.searchsorted(dist, radii, side="right")
    masses = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return float(np.max(masses / radii ** n))


def growth_constant(mu, probe_balls=None, resolution=None):
    if len(mu) == 0 or mu.total_mass() == 0:
        return 0.0
    floor = mu.resolution() if resolution is None else float(resolution)

    if probe_balls is not None:
        probe_balls = list(probe_balls)
        if not probe_balls:
            raise ValueError("growth_constant needs a nonempty probe set")
        if floor <= 0 or any(b.radius < floor for b in probe_balls):
            logging.warning(f"Growth probes go below the resolution floor {floor:g}; "
                            "ratios there reflect atoms, not the measure")
        return max(mass(mu, b) / b.radius ** mu.n for b in probe_balls)

    if floor <= 0:
        logging.warning("Growth constant of a measure without positive resolution is infinite")
        return math.inf
    return max(ball_growth_sup(mu.points, mu.weights, x, floor, mu.n) for x in mu.points)


def is_doubling_ball(mu, ball, a, b):
    return mass(mu, ball.scaled(a)) <= b * mass(mu, ball)


def _shell_ratios(dist, weights, radius, t_grid):
    inside2 = dist <= 2.0 * radius
    mass2 = weights[inside2].sum()
    if mass2 <= 0:
        return []
    gap = np.abs(dist[inside2] - radius)
    w = weights[inside2]
    return [(t, float(w[gap <= t * radius].sum() / (t * mass2))) for t in t_grid]


def thin_boundary_profile(mu, ball, t_grid=DEFAULT_T_GRID):
    if len(mu) == 0:
        return []
    return _shell_ratios(ball.distances(mu.points), mu.weights, ball.radius, t_grid)


def find_thin_boundary_ball(mu, inner, scale_window=None, C1=10.0, delta0=0.125,
                            t_grid=DEFAULT_T_GRID):
    if scale_window is None:
        s_lo, s_hi = 2.0 / delta0 * inner.radius, 2.2 / delta0 * inner.radius
    else:
        s_lo, s_hi = (float(s) for s in scale_window)
    if not s_lo < s_hi:
        raise ValueError(f"Empty scale window [{s_lo}, {s_hi}]")

    radii = np.linspace(s_lo, s_hi, THIN_BALL_RADII)
    dist = inner.distances(mu.points)
    keep = dist <= 2.0 * s_hi
    dist, weights = dist[keep], mu.weights[keep]

    worst = np.empty(radii.size)
    for i, radius in enumerate(radii):
        profile = _shell_ratios(dist, weights, radius, t_grid)
        worst[i] = max((ratio for _, ratio in profile), default=0.0)

    mid = 0.5 * (s_lo + s_hi)
    best = np.lexsort((radii, np.abs(radii - mid), worst))[0]
    if worst[best] > C1:
        raise NoThinBall(f"No {C1:g}-thin boundary ball around {inner.center.tolist()} "
                         f"with radius in [{s_lo:g}, {s_hi:g}]; best worst-ratio {worst[best]:g}")
    logging.debug(f"Thin boundary ball radius {radii[best]:g}, worst shell ratio {worst[best]:g}")
    return Ball(inner.center, radii[best])


def ad_regularity(mu, probe_balls=None, resolution=None):
    if probe_balls is not None:
        ratios = [mass(mu, b) / b.radius ** mu.n for b in probe_balls]
        if not ratios:
            return ADRegularity(0.0, 0.0, True)
        return ADRegularity(min(ratios), max(ratios), False)

    floor = mu.resolution() if resolution is None else float(resolution)
    diam = mu.diameter()
    if floor <= 0 or diam <= 0 or floor > diam:
        logging.warning("AD-regularity probe range is empty; reporting degenerate constants")
        upper = mu.total_mass() / floor ** mu.n if floor > 0 else 0.0
        return ADRegularity(0.0, upper, True)

    lower, upper = math.inf, 0.0
    for x in mu.points:
        dist = np.linalg.norm(mu.points - x, axis=1)
        order = np.argsort(dist, kind="stable")
        dist = dist[order]
        cum = np.cumsum(mu.weights[order])

        # closed-ball masses at the probe radii
        radii = np.unique(np.concatenate(([floor, diam], dist[(dist >= floor) & (dist <= diam)])))
        closed = cum[np.searchsorted(dist, radii, side="right") - 1]
        upper = max(upper, float(np.max(closed / radii ** mu.n)))

        # the inf is approached from the left of each jump
        jumps = np.unique(dist[(dist > floor) & (dist <= diam)])
        idx = np.searchsorted(dist, jumps, side="left")
        open_masses = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        candidates = closed / radii ** mu.n
        if jumps.size:
            candidates = np.concatenate((candidates, open_masses / jumps ** mu.n))
        lower = min(lower, float(np.min(candidates)))
    return ADRegularity(lower, upper, False)


# Builtin generators. Arclength measures put each atom at the midpoint of an
# equal-length piece and give it that piece's length times `density`.

def segment(atoms, start=(0.0, 0.0), end=(1.0, 0.0), total_mass=1.0):
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    s = (np.arange(atoms) + 0.5) / atoms
    points = start + s[:, None] * (end - start)
    return PointMeasure(points, np.full(atoms, total_mass / atoms))


def circle(atoms, radius=1.0, center=(0.0, 0.0), density=1.0):
    theta = 2.0 * np.pi * (np.arange(atoms) + 0.5) / atoms
    points = np.asarray(center, dtype=float) + radius * np.column_stack((np.cos(theta), np.sin(theta)))
    return PointMeasure(points, np.full(atoms, density * 2.0 * np.pi * radius / atoms))


def square_boundary(atoms, half_side=1.0, density=1.0):
    # perimeter walked counterclockwise from the corner (-h, -h)
    per_side = max(1, atoms // 4)
    side = 2.0 * half_side
    s = (np.arange(per_side) + 0.5) / per_side * side - half_side
    h = np.full(per_side, half_side)
    points = np.concatenate((
        np.column_stack((s, -h)),
        np.column_stack((h, s)),
        np.column_stack((-s, h)),
        np.column_stack((-h, -s)),
    ))
    return PointMeasure(points, np.full(points.shape[0], density * side / per_side))


def two_cluster(atoms, separation=1.0, width=0.01, mass_ratio=1.0):
    half = max(1, atoms // 2)
    s = (np.arange(half) + 0.5) / half * width - 0.5 * width
    left = np.column_stack((s, np.zeros(half)))
    right = np.column_stack((s + separation, np.zeros(half)))
    weights = np.concatenate((np.full(half, 1.0 / half), np.full(half, mass_ratio / half)))
    return PointMeasure(np.concatenate((left, right)), weights)


def sphere_shell(atoms, radius=1.0, dim=3, seed=0):
    """Equal-weight atoms on the sphere of radius `radius` in R^dim, total mass = area."""
    if dim == 3:
        # spherical Fibonacci lattice
        k = np.arange(atoms) + 0.5
        z = 1.0 - 2.0 * k / atoms
        phi = np.pi * (1.0 + 5.0 ** 0.5) * k
        rho = np.sqrt(1.0 - z * z)
        directions = np.column_stack((rho * np.cos(phi), rho * np.sin(phi), z))
    else:
        sobol = qmc.Sobol(dim, scramble=True, seed=seed)
        gauss = ndtri(sobol.random(atoms))
        directions = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    area = 2.0 * np.pi ** (dim / 2.0) / math.gamma(dim / 2.0) * radius ** (dim - 1)
    return PointMeasure(radius * directions, np.full(atoms, area / atoms))


def parallel_segments(atoms, gap=0.5, length=1.0):
    half = max(1, atoms // 2)
    lower = segment(half, (0.0, 0.0), (length, 0.0), length)
    upper = segment(half, (0.0, gap), (length, gap), length)
    return PointMeasure(np.concatenate((lower.points, upper.points)),
                        np.concatenate((lower.weights, upper.weights)))


def segment_with_cluster(atoms, cluster_atoms=50, cluster_center=0.5, cluster_width=1e-3,
                         cluster_mass=0.2):
    base = segment(atoms)
    s = (np.arange(cluster_atoms) + 0.5) / cluster_atoms * cluster_width - 0.5 * cluster_width
    cluster = np.column_stack((cluster_center + s, np.zeros(cluster_atoms)))
    return PointMeasure(np.concatenate((base.points, cluster)),
                        np.concatenate((base.weights, np.full(cluster_atoms, cluster_mass / cluster_atoms))))


MEASURE_GENERATORS = {
    "segment": segment,
    "circle": circle,
    "square-boundary": square_boundary,
    "two-cluster": two_cluster,
    "sphere-shell": sphere_shell,
    "parallel-segments": parallel_segments,
    "segment-with-cluster": segment_with_cluster,
}


def builtin_measure(name, atoms, **params):
    try:
        generator = MEASURE_GENERATORS[name]
    except KeyError:
        raise ValueError(f"Unknown measure generator '{name}'; known: {sorted(MEASURE_GENERATORS)}")
    return generator(atoms, **params)
