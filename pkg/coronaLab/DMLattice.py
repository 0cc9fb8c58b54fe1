"""
Dyadic lattices on point measures
=================================

A DMLattice is a hierarchy of partitions of the support of a PointMeasure.
Generation k is built from a greedy net of centers whose 5-balls are
disjoint (radius r(Q) = A0**-k); cells are nested because every generation
is assembled from the cells of the next finer one. After construction the
partition, nesting, ball sandwich and disjointness properties are checked
pointwise; small-boundary ratios are measured, not enforced.
"""
import json
import logging
import math
from collections import deque, namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from coronaLab.PointMeasure import Ball
from coronaLab.errors import ChainNotNonDoubling, InvariantViolation, NoCellSmallEnough

# Relative slack for kd-tree range queries; exact tests are redone with numpy
_KD_SLACK = 1e-9

MAX_AUTO_GENERATIONS = 64

LatticeParameters = namedtuple("LatticeParameters", ["C0", "A0", "k0", "relaxed"])
DoublingReport = namedtuple("DoublingReport", ["cells", "violations"])
ChainDensity = namedtuple("ChainDensity", ["bound_lhs", "bound_rhs", "sum_ratio"])


@dataclass(eq=False)
class DMCell:
    id: int
    generation: int
    center: np.ndarray
    center_index: int
    radius: float
    side_length: float
    members: np.ndarray
    parent: int = None
    children: list = field(default_factory=list)
    doubling: bool = False

    def ball(self, a=1.0):
        return Ball(self.center, a * self.radius)

    def to_dict(self):
        return {
            "id": self.id,
            "generation": self.generation,
            "center": [float(c) for c in self.center],
            "radius": self.radius,
            "side_length": self.side_length,
            "parent": self.parent,
            "members": [int(i) for i in self.members],
            "doubling": self.doubling,
        }


def _separation(centers, radii):
    """Smallest |z - z'| - 5r - 5r' over pairs of distinct centers (inf for one center)."""
    if len(centers) < 2:
        return math.inf
    tree = cKDTree(centers)
    pairs = tree.query_pairs(10.0 * float(np.max(radii)) * (1 + _KD_SLACK), output_type="ndarray")
    if pairs.size == 0:
        return math.inf
    gaps = (np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1)
            - 5.0 * radii[pairs[:, 0]] - 5.0 * radii[pairs[:, 1]])
    return float(gaps.min())


class DMLattice:
    def __init__(self, base_measure, C0, A0, k0, cells, generations, cell_of):
        self.base_measure = base_measure
        self.C0 = C0
        self.A0 = A0
        self.k0 = k0
        self.cells = cells
        # generations[g] lists the cell ids of generation k0 + g
        self.generations = generations
        # cell_of[g, i] is the cell id of point i at generation k0 + g
        self.cell_of = cell_of
        self.relaxed = A0 <= 5000 * C0

    @property
    def k_max(self):
        return self.k0 + len(self.generations) - 1

    def scale(self, k):
        return self.A0 ** (-k)

    def side_length(self, k):
        return 56.0 * self.C0 * self.A0 ** (-k)

    def resolution_generation(self):
        """First generation whose net keeps every support point as its own center; None for one point."""
        resolution = self.base_measure.resolution()
        if resolution <= 0:
            return None
        k = self.k0
        while 10.0 * self.A0 ** (-k) * (1 + _KD_SLACK) >= resolution:
            k += 1
        return k

    def generation_cells(self, k):
        return [self.cells[c] for c in self.generations[k - self.k0]]

    def cell_containing(self, point_index, k):
        return self.cells[int(self.cell_of[k - self.k0, point_index])]

    def ancestors(self, cell):
        """Strict ancestors of `cell`, nearest first."""
        chain = []
        while cell.parent is not None:
            cell = self.cells[cell.parent]
            chain.append(cell)
        return chain

    def is_descendant(self, cell, of):
        if cell.generation < of.generation:
            return False
        return self.cell_of[of.generation - self.k0, cell.members[0]] == of.id

    def descendants_at(self, cell, k):
        if k < cell.generation:
            return []
        ids = np.unique(self.cell_of[k - self.k0, cell.members])
        return [self.cells[int(c)] for c in ids]

    def mass_of(self, cell, weights=None):
        weights = self.base_measure.weights if weights is None else weights
        return float(weights[cell.members].sum())

    def ball_mass(self, ball, weights=None):
        weights = self.base_measure.weights if weights is None else weights
        return float(weights[ball.contains(self.base_measure.points)].sum())

    def cell_masses(self, k, weights=None, mask=None):
        """Mass per cell id of generation k, optionally restricted to the points in `mask`."""
        weights = self.base_measure.weights if weights is None else np.asarray(weights, dtype=float)
        if mask is not None:
            weights = np.where(mask, weights, 0.0)
        ids = self.generations[k - self.k0]
        totals = np.bincount(self.cell_of[k - self.k0], weights=weights, minlength=len(self.cells))
        return {c: float(totals[c]) for c in ids}

    def audit(self):
        """Every invariant check as a row (generation, cell, check, value, passed)."""
        rows = []
        points = self.base_measure.points
        n_points = len(self.base_measure)
        tree = self.base_measure.tree
        for g, ids in enumerate(self.generations):
            k = self.k0 + g
            counts = np.bincount(np.concatenate([self.cells[c].members for c in ids]),
                                 minlength=n_points)
            rows.append({"generation": k, "cell": "", "check": "partition",
                         "value": int(np.abs(counts - 1).sum()), "passed": bool(np.all(counts == 1))})

            centers = np.array([self.cells[c].center for c in ids])
            radii = np.array([self.cells[c].radius for c in ids])
            gap = _separation(centers, radii)
            rows.append({"generation": k, "cell": "", "check": "5B-disjointness",
                         "value": gap, "passed": gap > 0})

            for c in ids:
                cell = self.cells[c]
                reach = float(np.max(np.linalg.norm(points[cell.members] - cell.center, axis=1)))
                rows.append({"generation": k, "cell": c, "check": "members-in-28B",
                             "value": reach / cell.radius, "passed": reach <= 28.0 * cell.radius})

                near = np.asarray(tree.query_ball_point(cell.center, cell.radius * (1 + _KD_SLACK)), dtype=int)
                near = near[np.linalg.norm(points[near] - cell.center, axis=1) <= cell.radius]
                stray = np.setdiff1d(near, cell.members)
                rows.append({"generation": k, "cell": c, "check": "B-inside-cell",
                             "value": int(stray.size), "passed": stray.size == 0})

                if cell.children:
                    union = np.sort(np.concatenate([self.cells[ch].members for ch in cell.children]))
                    nested = union.size == cell.members.size and bool(np.all(union == cell.members))
                    rows.append({"generation": k, "cell": c, "check": "nesting",
                                 "value": int(union.size - cell.members.size), "passed": nested})
        return rows

    def check_invariants(self):
        for row in self.audit():
            if not row["passed"]:
                cell = self.cells[row["cell"]] if row["cell"] != "" else None
                raise InvariantViolation(
                    f"Lattice check '{row['check']}' failed at generation {row['generation']} "
                    f"(cell {row['cell']}, value {row['value']})", cell)

    def to_dict(self):
        return {
            "C0": self.C0,
            "A0": self.A0,
            "k0": self.k0,
            "k_max": self.k_max,
            "relaxed": self.relaxed,
            "cells": [cell.to_dict() for cell in self.cells],
        }

    def export_to_json_file(self, filename):
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=4)
        logging.info(f"Lattice exported to JSON: {filename}")


def default_lattice_parameters(sigma, C0=128.0, A0=1e4):
    diam = sigma.diameter()
    resolution = sigma.resolution()
    relaxed = False
    if resolution <= 0 or diam / resolution < A0:
        A0 = max(64.0, 2.0 * C0)
        relaxed = True
        logging.warning(f"Support dynamic range too small for the asymptotic lattice constants; "
                        f"using C0 = {C0:g}, A0 = {A0:g}")
    k0 = -math.ceil(math.log(diam) / math.log(A0)) if diam > 0 else 0
    return LatticeParameters(C0, A0, k0, relaxed)


class _LatticeBuilder:
    def __init__(self, sigma, C0, A0, k0, k_max):
        self.sigma = sigma
        self.C0 = C0
        self.A0 = A0
        self.k0 = k0
        self.k_max = k_max
        self.attempt = 0
        self.diameter = sigma.diameter()

    def _last_generation(self):
        if self.k_max is not None:
            return self.k_max
        resolution = self.sigma.resolution()
        if resolution <= 0:
            return self.k0
        # first generation whose net keeps every point as its own center
        for k in range(self.k0, self.k0 + MAX_AUTO_GENERATIONS):
            if 10.0 * self.A0 ** (-k) * (1 + _KD_SLACK) < resolution:
                return k
        logging.warning(f"Lattice depth capped at {MAX_AUTO_GENERATIONS} generations")
        return self.k0 + MAX_AUTO_GENERATIONS - 1

    def _select_centers(self, s, tie_keys):
        points, weights, tree = self.sigma.points, self.sigma.weights, self.sigma.tree
        n_points = len(self.sigma)
        if 10.0 * s >= self.diameter:
            scores = np.full(n_points, weights.sum())
        else:
            neighbours = tree.query_ball_point(points, s * (1 + _KD_SLACK))
            scores = np.empty(n_points)
            for i, near in enumerate(neighbours):
                near = np.sort(np.asarray(near, dtype=int))
                near = near[np.linalg.norm(points[near] - points[i], axis=1) <= s]
                scores[i] = weights[near].sum()

        blocked = np.zeros(n_points, dtype=bool)
        centers = []
        for i in np.lexsort((tie_keys, -scores)):
            if blocked[i]:
                continue
            centers.append(int(i))
            blocked[tree.query_ball_point(points[i], 10.0 * s * (1 + _KD_SLACK))] = True
        return np.array(centers, dtype=int)

    @retry(retry=retry_if_exception_type(InvariantViolation), stop=stop_after_attempt(2), reraise=True)
    def build(self):
        self.attempt += 1
        sigma = self.sigma
        n_points = len(sigma)
        if self.attempt == 1:
            tie_keys = np.arange(n_points)
        else:
            logging.warning("Lattice invariants failed; rebuilding with jittered tie-breaking")
            tie_keys = np.random.default_rng(self.attempt).permutation(n_points)

        k_last = self._last_generation()
        levels = list(range(k_last, self.k0 - 1, -1))
        cell_of = np.empty((len(levels), n_points), dtype=int)
        level_cells = []

        # finest generation: points join their nearest center
        k = k_last
        centers = self._select_centers(self.A0 ** (-k), tie_keys)
        _, owner = cKDTree(sigma.points[centers]).query(sigma.points)
        level_cells.append((k, centers, [np.flatnonzero(owner == j) for j in range(len(centers))], None))
        child_owner = owner

        for k in levels[1:]:
            # coarser generations: whole child cells join the center nearest to their own center
            centers = self._select_centers(self.A0 ** (-k), tie_keys)
            child_centers = level_cells[-1][1]
            _, parent_of_child = cKDTree(sigma.points[centers]).query(sigma.points[child_centers])
            owner = parent_of_child[child_owner]
            level_cells.append((k, centers, [np.flatnonzero(owner == j) for j in range(len(centers))],
                                parent_of_child))
            child_owner = owner

        # number cells top-down so parents precede children
        cells, generations = [], []
        previous_ids = None
        coarse_first = list(reversed(level_cells))
        for g, (k, centers, members, _) in enumerate(coarse_first):
            first = len(cells)
            ids = list(range(first, first + len(centers)))
            r = self.A0 ** (-k)
            for j, c in enumerate(centers):
                cells.append(DMCell(first + j, k, sigma.points[c].copy(), int(c), r,
                                    56.0 * self.C0 * r, members[j]))
                cell_of[g, members[j]] = first + j
            if previous_ids is not None:
                # parent slots of this level were recorded on the coarser entry
                links = coarse_first[g - 1][3]
                for j, parent_slot in enumerate(links):
                    cells[first + j].parent = previous_ids[parent_slot]
                    cells[previous_ids[parent_slot]].children.append(first + j)
            generations.append(ids)
            previous_ids = ids

        lattice = DMLattice(sigma, self.C0, self.A0, self.k0, cells, generations, cell_of)
        _flag_doubling(lattice)
        lattice.check_invariants()
        return lattice


def _flag_doubling(lat):
    weights, points, tree = lat.base_measure.weights, lat.base_measure.points, lat.base_measure.tree
    for cell in lat.cells:
        near = np.asarray(tree.query_ball_point(cell.center, 100.0 * cell.radius * (1 + _KD_SLACK)), dtype=int)
        dist = np.linalg.norm(points[near] - cell.center, axis=1)
        big = weights[near[dist <= 100.0 * cell.radius]].sum()
        small = weights[near[dist <= cell.radius]].sum()
        cell.doubling = bool(big <= lat.C0 * small)


def build_lattice(sigma, C0=128.0, A0=1e4, k_range=(0, None)):
    if len(sigma) == 0:
        raise ValueError("Cannot build a lattice on an empty support")
    if not (C0 > 1 and A0 > 1):
        raise ValueError(f"Lattice constants need C0 > 1 and A0 > 1, got C0 = {C0}, A0 = {A0}")
    if A0 <= 5000 * C0:
        logging.warning(f"Relaxed lattice constants: A0 = {A0:g} <= 5000 C0 = {5000 * C0:g}")
    k0, k_max = k_range
    if k_max is not None and k_max < k0:
        raise ValueError(f"Empty generation range [{k0}, {k_max}]")
    lattice = _LatticeBuilder(sigma, float(C0), float(A0), int(k0), k_max).build()
    logging.info(f"Lattice built: {len(lattice.cells)} cells in generations {lattice.k0}..{lattice.k_max}")
    return lattice


def doubling_cells(lat):
    violations = []
    for cell in lat.cells:
        if not cell.doubling:
            continue
        # 3 B_Q = 84 B(Q)
        if lat.ball_mass(cell.ball(84.0)) > lat.C0 * lat.mass_of(cell):
            violations.append(cell.id)
    if violations:
        logging.warning(f"{len(violations)} doubling cells violate sigma(3B_Q) <= C0 sigma(Q)")
    return DoublingReport({cell.id for cell in lat.cells if cell.doubling}, violations)


def small_boundary_ratio(lat, Q, l):
    points, weights = lat.base_measure.points, lat.base_measure.weights
    big = lat.ball_mass(Q.ball(90.0))
    if big <= 0:
        return 0.0
    threshold = lat.A0 ** (-Q.generation - l)

    inside = np.zeros(len(points), dtype=bool)
    inside[Q.members] = True
    reach = Q.ball(28.0 + threshold / Q.radius + 1.0)
    outside = np.flatnonzero(~inside & reach.contains(points))
    if outside.size == 0:
        return 0.0

    # exterior shell: outside points closer than threshold to Q, and the interior one
    d_ext, _ = cKDTree(points[Q.members]).query(points[outside])
    d_int, _ = cKDTree(points[outside]).query(points[Q.members])
    shell = weights[outside[d_ext < threshold]].sum() + weights[Q.members[d_int < threshold]].sum()
    return float(shell / big)


def small_boundary_decay(lat, Q, l_max=4):
    """Ratios for l = 0..l_max and the fitted geometric decay factor per step of l."""
    ratios = [small_boundary_ratio(lat, Q, l) for l in range(l_max + 1)]
    positive = [(l, r) for l, r in enumerate(ratios) if r > 0]
    if len(positive) < 2:
        return ratios, 0.0
    slope = np.polyfit([l for l, _ in positive], np.log([r for _, r in positive]), 1)[0]
    return ratios, float(np.exp(slope))


def covering_by_doubling(lat, R):
    family, uncovered = [], 0.0
    queue = deque([R])
    while queue:
        cell = queue.popleft()
        if cell.doubling:
            family.append(cell)
        elif cell.children:
            queue.extend(lat.cells[c] for c in cell.children)
        else:
            uncovered += lat.mass_of(cell)
    return family, uncovered


def _ball_density(lat, cell, a):
    return lat.ball_mass(cell.ball(a)) / (2.0 * a * cell.radius) ** lat.base_measure.n


def chain_density_check(lat, Q, R):
    if not lat.is_descendant(Q, R):
        raise ValueError(f"Cell {Q.id} is not contained in cell {R.id}")
    chain = [Q]
    cell = Q
    while cell.id != R.id:
        cell = lat.cells[cell.parent]
        chain.append(cell)
    doubling_between = [c.id for c in chain[1:-1] if c.doubling]
    if doubling_between:
        raise ChainNotNonDoubling(f"Cells {doubling_between} between {Q.id} and {R.id} are doubling")

    n = lat.base_measure.n
    lhs = lat.ball_mass(Q.ball(100.0))
    rhs = lat.A0 ** (-10.0 * n * (Q.generation - R.generation - 1)) * lat.ball_mass(R.ball(100.0))
    top = _ball_density(lat, R, 100.0)
    total = sum(_ball_density(lat, S, 100.0) for S in chain)
    return ChainDensity(lhs, rhs, total / top if top > 0 else 0.0)


@dataclass
class WhitneyResult:
    cells: list
    inside_ok: bool
    min_inside_margin: float
    t0: list
    t0_vacuous: bool
    max_overlap: int
    max_generation_gap: int
    doubling_fraction: float
    cover_mass: float
    in_set_mass: float

    def summary(self):
        return {
            "cells": len(self.cells),
            "inside_ok": self.inside_ok,
            "min_inside_margin": self.min_inside_margin,
            "max_t0": max(self.t0) if self.t0 else None,
            "min_t0": min(self.t0) if self.t0 else None,
            "t0_vacuous": self.t0_vacuous,
            "max_overlap": self.max_overlap,
            "max_generation_gap": self.max_generation_gap,
            "doubling_fraction": self.doubling_fraction,
            "cover_mass": self.cover_mass,
            "in_set_mass": self.in_set_mass,
        }


def whitney_decompose(lat, open_set, delta1):
    if not 0 < delta1 < 0.01:
        raise ValueError(f"whitney_delta must lie in (0, 1/100), got {delta1}")
    points, weights = lat.base_measure.points, lat.base_measure.weights
    depth = -np.asarray(open_set.sdf(points), dtype=float)
    inside = np.flatnonzero(depth > 0)
    if inside.size == 0:
        raise ValueError("Open set contains no support point")

    # coarsest generation with side length <= delta1 * dist(x, complement)
    chosen = {}
    for i in inside:
        if np.isinf(depth[i]):
            k = lat.k0
        else:
            k = math.ceil(math.log(56.0 * lat.C0 / (delta1 * depth[i])) / math.log(lat.A0) - 1e-12)
            k = max(k, lat.k0)
        if k > lat.k_max:
            raise NoCellSmallEnough(f"Point {i} needs generation {k} but the lattice stops at {lat.k_max}")
        cell = lat.cell_containing(i, k)
        chosen[cell.id] = cell

    covered = np.zeros(len(points), dtype=bool)
    family = []
    for cell in sorted(chosen.values(), key=lambda c: (c.generation, c.id)):
        if covered[cell.members].any():
            continue
        family.append(cell)
        covered[cell.members] = True

    centers = np.array([c.center for c in family])
    radii = np.array([c.radius for c in family])
    gens = np.array([c.generation for c in family])
    center_depth = -np.asarray(open_set.sdf(centers), dtype=float)

    margins = center_depth - 1e4 * radii
    t0 = [float(d / r) for d, r in zip(center_depth, radii) if np.isfinite(d)]

    max_overlap, max_gap = 0, 0
    for j in range(len(family)):
        meet = np.linalg.norm(centers - centers[j], axis=1) <= 1e4 * (radii + radii[j])
        max_overlap = max(max_overlap, int(meet.sum()))
        max_gap = max(max_gap, int(np.abs(gens[meet] - gens[j]).max()))

    in_set_mass = float(weights[inside].sum())
    cover_mass = float(sum(weights[c.members].sum() for c in family))
    doubling_mass = float(sum(weights[c.members].sum() for c in family if c.doubling))
    result = WhitneyResult(
        cells=family,
        inside_ok=bool(np.all(margins > 0)),
        min_inside_margin=float(margins.min()),
        t0=t0,
        t0_vacuous=not t0,
        max_overlap=max_overlap,
        max_generation_gap=max_gap,
        doubling_fraction=doubling_mass / in_set_mass if in_set_mass > 0 else 0.0,
        cover_mass=cover_mass,
        in_set_mass=in_set_mass,
    )
    if result.doubling_fraction < 0.5:
        logging.warning(f"Doubling Whitney cells carry only {result.doubling_fraction:.3f} of the open set's mass")
    return result
