"""
Domains given by signed distance functions.

A Domain answers three questions about a point set: the signed distance to
the boundary (negative inside, 1-Lipschitz), the nearest boundary point,
and which side of a slit a point sits on. Planar domains are assembled
from boundary pieces (segments and circular arcs) plus an inside test, so
their distance functions are exact.
"""
import logging
import math
from collections import namedtuple

import numpy as np
from scipy.stats import qmc

from coronaLab.PointMeasure import sphere_shell, square_boundary
from coronaLab.errors import NoInteriorPoint, UnknownDomain

Corkscrew = namedtuple("Corkscrew", ["point", "c_achieved"])


class _Segment:
    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.length = float(np.linalg.norm(self.b - self.a))

    def project(self, x):
        ab = self.b - self.a
        t = np.clip(((x - self.a) @ ab) / (ab @ ab), 0.0, 1.0)
        return self.a + t[:, None] * ab

    def sample(self, m):
        t = (np.arange(m) + 0.5) / m
        return self.a + t[:, None] * (self.b - self.a)


class _Arc:
    def __init__(self, center, radius, theta0, theta1):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.theta0 = float(theta0)
        self.span = float(theta1 - theta0)
        self.length = self.radius * self.span

    def _point(self, theta):
        return self.center + self.radius * np.column_stack((np.cos(theta), np.sin(theta)))

    def project(self, x):
        rel = x - self.center
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        offset = np.mod(theta - self.theta0, 2.0 * np.pi)
        on_arc = offset <= self.span
        ends = self._point(np.array([self.theta0, self.theta0 + self.span]))
        d0 = np.linalg.norm(x - ends[0], axis=1)
        d1 = np.linalg.norm(x - ends[1], axis=1)
        nearest_end = np.where((d0 <= d1)[:, None], ends[0], ends[1])
        # the center itself projects to the arc start
        radial = np.where(np.linalg.norm(rel, axis=1) > 0, theta, self.theta0)
        return np.where(on_arc[:, None], self._point(radial), nearest_end)

    def sample(self, m):
        return self._point(self.theta0 + (np.arange(m) + 0.5) / m * self.span)


class Domain:
    """Base class: subclasses implement sdf, boundary_project and boundary_sample."""

    def __init__(self, name, ambient_dim, bbox):
        self.name = name
        self.ambient_dim = ambient_dim
        self.bbox = np.asarray(bbox, dtype=float)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    @property
    def scale(self):
        return float(np.max(self.bbox[1] - self.bbox[0]))

    def sdf(self, x):
        raise NotImplementedError

    def boundary_project(self, x):
        raise NotImplementedError

    def boundary_sample(self, m):
        raise NotImplementedError

    def side(self, x):
        return np.zeros(np.atleast_2d(x).shape[0], dtype=int)

    def contains(self, x):
        return self.sdf(x) < 0

    def lipschitz_audit(self, pairs=1024, seed=0):
        """Largest |sdf(x) - sdf(y)| / |x - y| over quasi-random pairs in the padded bbox."""
        lo, hi = self.bbox[0], self.bbox[1]
        pad = 0.25 * (hi - lo)
        u = qmc.Sobol(2 * self.ambient_dim, scramble=True, seed=seed).random(pairs)
        x = lo - pad + u[:, :self.ambient_dim] * (hi - lo + 2 * pad)
        y = lo - pad + u[:, self.ambient_dim:] * (hi - lo + 2 * pad)
        gap = np.linalg.norm(x - y, axis=1)
        keep = gap > 0
        return float(np.max(np.abs(self.sdf(x[keep]) - self.sdf(y[keep])) / gap[keep]))


class BallDomain(Domain):
    def __init__(self, ambient_dim=2, radius=1.0, center=None, name=None):
        center = np.zeros(ambient_dim) if center is None else np.asarray(center, dtype=float)
        super().__init__(name or ("disk" if ambient_dim == 2 else "ball"), ambient_dim,
                         [center - radius, center + radius])
        self.center = center
        self.radius = float(radius)

    def sdf(self, x):
        return np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) - self.radius

    def boundary_project(self, x):
        rel = np.atleast_2d(x) - self.center
        r = np.linalg.norm(rel, axis=1, keepdims=True)
        e1 = np.zeros(self.ambient_dim)
        e1[0] = 1.0
        direction = np.where(r > 0, rel / np.where(r > 0, r, 1.0), e1)
        return self.center + self.radius * direction

    def boundary_sample(self, m):
        if self.ambient_dim == 2:
            theta = 2.0 * np.pi * (np.arange(m) + 0.5) / m
            return self.center + self.radius * np.column_stack((np.cos(theta), np.sin(theta)))
        return self.center + sphere_shell(m, self.radius, self.ambient_dim).points


class BoxDomain(Domain):
    def __init__(self, half_side=1.0, name="square"):
        super().__init__(name, 2, [[-half_side, -half_side], [half_side, half_side]])
        self.half_side = float(half_side)

    def sdf(self, x):
        q = np.abs(np.atleast_2d(x)) - self.half_side
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def boundary_project(self, x):
        x = np.atleast_2d(x).astype(float)
        h = self.half_side
        projected = np.clip(x, -h, h)
        interior = np.all(np.abs(x) < h, axis=1)
        if np.any(interior):
            inner = x[interior]
            axis = np.argmax(np.abs(inner), axis=1)
            rows = np.arange(inner.shape[0])
            inner[rows, axis] = np.where(inner[rows, axis] >= 0, h, -h)
            projected[interior] = inner
        return projected

    def boundary_sample(self, m):
        return square_boundary(m, self.half_side).points


class PiecewiseDomain(Domain):
    """Planar domain bounded by segments and arcs; `inside` decides the sign."""

    def __init__(self, name, pieces, inside, bbox, slit=None):
        super().__init__(name, 2, bbox)
        self.pieces = pieces
        self._inside = inside
        # pieces on which the domain lies on both sides
        self.slit = slit or []

    def _nearest(self, x):
        x = np.atleast_2d(x).astype(float)
        best = np.full(x.shape[0], np.inf)
        nearest = np.zeros_like(x)
        for piece in self.pieces:
            p = piece.project(x)
            d = np.linalg.norm(x - p, axis=1)
            closer = d < best
            best = np.where(closer, d, best)
            nearest[closer] = p[closer]
        return best, nearest

    def sdf(self, x):
        x = np.atleast_2d(x)
        dist, _ = self._nearest(x)
        return np.where(self._inside(x), -dist, dist)

    def boundary_project(self, x):
        return self._nearest(x)[1]

    def side(self, x):
        x = np.atleast_2d(x)
        tags = np.zeros(x.shape[0], dtype=int)
        for piece in self.slit:
            dist = np.linalg.norm(x - piece.project(x), axis=1)
            near = dist <= 0.5 * self.scale
            normal = np.array([-(piece.b - piece.a)[1], (piece.b - piece.a)[0]])
            sign = np.sign((x - piece.a) @ normal).astype(int)
            tags = np.where(near & (tags == 0), sign, tags)
        return tags

    def boundary_sample(self, m):
        total = sum(p.length for p in self.pieces)
        counts = [max(1, int(round(m * p.length / total))) for p in self.pieces]
        return np.concatenate([p.sample(c) for p, c in zip(self.pieces, counts)])


def _polygon_inside(vertices):
    vertices = np.asarray(vertices, dtype=float)
    edges = list(zip(vertices, np.roll(vertices, -1, axis=0)))

    def inside(x):
        result = np.zeros(x.shape[0], dtype=bool)
        for a, b in edges:
            straddle = (a[1] > x[:, 1]) != (b[1] > x[:, 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                cross = a[0] + (x[:, 1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            result ^= straddle & (x[:, 0] < cross)
        return result

    return inside, [_Segment(a, b) for a, b in edges]


class WholeSpace(Domain):
    def __init__(self, ambient_dim=2):
        super().__init__("whole_space", ambient_dim, [np.full(ambient_dim, -np.inf), np.full(ambient_dim, np.inf)])

    def sdf(self, x):
        return np.full(np.atleast_2d(x).shape[0], -np.inf)

    def boundary_project(self, x):
        raise ValueError("The whole space has no boundary")

    def boundary_sample(self, m):
        return np.zeros((0, self.ambient_dim))


def half_disk():
    inside = lambda x: (np.linalg.norm(x, axis=1) < 1.0) & (x[:, 1] > 0)
    pieces = [_Arc((0.0, 0.0), 1.0, 0.0, np.pi), _Segment((-1.0, 0.0), (1.0, 0.0))]
    return PiecewiseDomain("half_disk", pieces, inside, [[-1.0, 0.0], [1.0, 1.0]])


def slit_disk():
    inside = lambda x: (np.linalg.norm(x, axis=1) < 1.0) & ~((x[:, 1] == 0) & (x[:, 0] >= 0))
    slit = _Segment((0.0, 0.0), (1.0, 0.0))
    pieces = [_Arc((0.0, 0.0), 1.0, 0.0, 2.0 * np.pi), slit]
    return PiecewiseDomain("slit_disk", pieces, inside, [[-1.0, -1.0], [1.0, 1.0]], slit=[slit])


def lipschitz_graph(A=1.0, teeth=8):
    """Region above a sawtooth of slope +-A over [-1, 1], capped one unit above its peaks."""
    period = 2.0 / teeth
    peak = A * period / 2.0
    xs = np.linspace(-1.0, 1.0, 2 * teeth + 1)
    ys = np.where(np.arange(xs.size) % 2 == 1, peak, 0.0)
    top = peak + 1.0
    vertices = np.column_stack((xs, ys)).tolist() + [[1.0, top], [-1.0, top]]
    inside, pieces = _polygon_inside(vertices)
    return PiecewiseDomain(f"lipschitz_graph({A:g})", pieces, inside, [[-1.0, 0.0], [1.0, top]])


def annulus_sector(r_inner=0.5, r_outer=1.0, theta0=0.0, theta1=0.5 * np.pi):
    def inside(x):
        r = np.linalg.norm(x, axis=1)
        offset = np.mod(np.arctan2(x[:, 1], x[:, 0]) - theta0, 2.0 * np.pi)
        return (r > r_inner) & (r < r_outer) & (offset > 0) & (offset < theta1 - theta0)

    u0 = np.array([np.cos(theta0), np.sin(theta0)])
    u1 = np.array([np.cos(theta1), np.sin(theta1)])
    pieces = [
        _Arc((0.0, 0.0), r_outer, theta0, theta1),
        _Arc((0.0, 0.0), r_inner, theta0, theta1),
        _Segment(r_inner * u0, r_outer * u0),
        _Segment(r_inner * u1, r_outer * u1),
    ]
    return PiecewiseDomain("annulus_sector", pieces, inside, [[-r_outer, -r_outer], [r_outer, r_outer]])


DOMAIN_FACTORIES = {
    "disk": lambda radius=1.0, center=(0.0, 0.0): BallDomain(2, radius, center),
    "ball": lambda dim=3, radius=1.0: BallDomain(int(dim), radius),
    "square": lambda half_side=1.0: BoxDomain(half_side),
    "half_disk": half_disk,
    "lipschitz_graph": lambda A=1.0, teeth=8: lipschitz_graph(A, int(teeth)),
    "slit_disk": slit_disk,
    "annulus_sector": annulus_sector,
    "whole_space": lambda dim=2: WholeSpace(int(dim)),
}


def builtin_domain(name, **params):
    try:
        factory = DOMAIN_FACTORIES[name]
    except KeyError:
        raise UnknownDomain(f"Unknown domain '{name}'; known: {sorted(DOMAIN_FACTORIES)}")
    return factory(**params)


def corkscrew_point(dom, xi, r, samples=4096, seed=0):
    xi = np.asarray(xi, dtype=float)
    if not r > 0:
        raise ValueError(f"Corkscrew radius must be positive, got {r}")
    sobol = qmc.Sobol(dom.ambient_dim, scramble=True, seed=seed)
    u = sobol.random_base2(max(1, math.ceil(math.log2(samples))))[:samples]
    candidates = xi - r + 2.0 * r * u
    offset = np.linalg.norm(candidates - xi, axis=1)
    depth = -dom.sdf(candidates)
    usable = (offset < r) & (depth > 0)
    if not np.any(usable):
        raise NoInteriorPoint(f"No sample of B({xi.tolist()}, {r:g}) lies in {dom.name}")
    score = np.where(usable, np.minimum(depth, r - offset), -np.inf)
    best = int(np.argmax(score))
    logging.debug(f"Corkscrew point {candidates[best].tolist()} with c = {score[best] / r:.4f}")
    return Corkscrew(candidates[best], float(score[best] / r))
