"""
Riesz transforms of atomic measures: kernels, truncated and maximal
transforms, maximal densities and L2 operator norms.

All sums are direct over the atoms in index order. For an atomic measure
eps -> R_eps nu(x) is piecewise constant with jumps at the atom distances,
so every supremum over truncation radii is computed exactly on those
breakpoints.
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import gamma

from coronaLab.errors import BadTruncationOrder, SingularPoint

NormResult = namedtuple("NormResult", ["norm", "iterations", "converged"])
MaximalDensity = namedtuple("MaximalDensity", ["value", "attained"])

# Below this many atoms the kernel matrix norm is taken from a dense SVD
DENSE_NORM_ATOMS = 64


def unit_sphere_area(n):
    """Surface area of the unit sphere S^n in R^(n+1)."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0)


@dataclass(frozen=True)
class RieszConfig:
    n: int = 1
    c1: float = None
    cn: float = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Riesz dimension n must be >= 1, got {self.n}")
        if self.c1 is None:
            object.__setattr__(self, "c1", 1.0 / (2.0 * math.pi))
        if self.cn is None and self.n >= 2:
            object.__setattr__(self, "cn", 1.0 / ((self.n - 1) * unit_sphere_area(self.n)))
        if self.c1 <= 0 or (self.cn is not None and self.cn <= 0):
            raise ValueError("Normalization constants must be positive")

    @property
    def ambient_dim(self):
        return self.n + 1

    @classmethod
    def for_measure(cls, mu):
        return cls(n=mu.n)


def _norms(v):
    return np.sqrt((v * v).sum(axis=-1))


def fundamental_solution(cfg, x):
    r = _norms(np.asarray(x, dtype=float))
    if np.any(r == 0):
        raise SingularPoint("Fundamental solution evaluated at the origin")
    if cfg.n == 1:
        return -cfg.c1 * np.log(r)
    return cfg.cn * r ** (1 - cfg.n)


def riesz_kernel(cfg, x):
    x = np.asarray(x, dtype=float)
    r = _norms(x)
    if np.any(r == 0):
        raise SingularPoint("Riesz kernel evaluated at the origin")
    return x / np.expand_dims(r ** (cfg.n + 1), -1)


def _contributions(cfg, nu, f, x):
    """Per-atom vectors K(x - y_i) f_i w_i and distances |x - y_i| (zero vector at distance 0)."""
    x = np.asarray(x, dtype=float)
    diff = x - nu.points
    dist = _norms(diff)
    fw = nu.weights if f is None else np.asarray(f, dtype=float) * nu.weights
    safe = np.where(dist > 0, dist, 1.0)
    vectors = diff / (safe ** (cfg.n + 1))[:, None] * fw[:, None]
    vectors[dist == 0] = 0.0
    return vectors, dist


def truncated_riesz(cfg, nu, f, x, eps):
    if not eps > 0:
        raise ValueError(f"Truncation radius must be positive, got {eps}")
    vectors, dist = _contributions(cfg, nu, f, x)
    return vectors[dist > eps].sum(axis=0) if len(nu) else np.zeros(np.size(x))


def double_truncation(cfg, nu, f, x, eps1, eps2):
    if eps1 > eps2:
        raise BadTruncationOrder(f"eps1 = {eps1} exceeds eps2 = {eps2}")
    return truncated_riesz(cfg, nu, f, x, eps1) - truncated_riesz(cfg, nu, f, x, eps2)


def _sup_of_outer_sums(vectors, dist):
    # sup over t of |sum of vectors with dist > t|, t ranging over the distinct
    # distances and below all of them; the empty sum contributes 0
    if dist.size == 0:
        return 0.0
    order = np.argsort(-dist, kind="stable")
    dist, vectors = dist[order], vectors[order]
    partial = np.vstack((np.zeros(vectors.shape[1]), np.cumsum(vectors, axis=0)))
    starts = np.flatnonzero(np.concatenate(([True], dist[1:] != dist[:-1])))
    lengths = np.concatenate((starts, [dist.size]))
    return float(_norms(partial[lengths]).max())


def maximal_riesz(cfg, nu, f, x, delta=0.0):
    vectors, dist = _contributions(cfg, nu, f, x)
    keep = dist > max(delta, 0.0)
    return _sup_of_outer_sums(vectors[keep], dist[keep])


def maximal_double_truncation(cfg, nu, f, x, lo, hi):
    """Exact sup over lo < eps <= hi of |R_{eps,hi} nu(x)|."""
    if not lo < hi:
        return 0.0
    vectors, dist = _contributions(cfg, nu, f, x)
    keep = (dist > max(lo, 0.0)) & (dist <= hi)
    return _sup_of_outer_sums(vectors[keep], dist[keep])


def maximal_density(cfg, nu, x, delta=0.0):
    dist = _norms(np.asarray(x, dtype=float) - nu.points)
    order = np.argsort(dist, kind="stable")
    dist = dist[order]
    cum = np.cumsum(np.abs(nu.weights)[order])

    radii = np.unique(dist[dist > delta])
    best, attained = 0.0, False
    if radii.size:
        masses = cum[np.searchsorted(dist, radii, side="right") - 1]
        best, attained = float(np.max(masses / radii ** cfg.n)), True

    # right limit at r = delta, approached but never attained
    at_delta = float(cum[np.searchsorted(dist, delta, side="right") - 1]) if np.any(dist <= delta) else 0.0
    if at_delta > 0:
        edge = math.inf if delta <= 0 else at_delta / delta ** cfg.n
        if edge > best:
            best, attained = edge, False
    return MaximalDensity(best, attained)


def kernel_matrix(cfg, mu, subset, eps):
    """Weighted truncated kernel matrix, shape (d*m, m), rows grouped by component."""
    idx = np.asarray(subset, dtype=int)
    points = mu.points[idx]
    root_w = np.sqrt(np.abs(mu.weights[idx]))
    diff = points[:, None, :] - points[None, :, :]
    dist = _norms(diff)
    far = dist > eps
    scale = np.where(far, 1.0 / np.where(far, dist, 1.0) ** (cfg.n + 1), 0.0)
    scale *= root_w[:, None] * root_w[None, :]
    blocks = [diff[:, :, c] * scale for c in range(points.shape[1])]
    return np.vstack(blocks)


def _power_iteration(A, tol, max_iter):
    m = A.shape[1]
    v = np.full(m, 1.0 / math.sqrt(m))
    estimate = 0.0
    for iteration in range(1, max_iter + 1):
        w = A.T @ (A @ v)
        size = float(np.linalg.norm(w))
        if size == 0:
            return NormResult(0.0, iteration, True)
        new_estimate = math.sqrt(size)
        v = w / size
        if abs(new_estimate - estimate) <= tol * new_estimate:
            return NormResult(new_estimate, iteration, True)
        estimate = new_estimate
    return NormResult(estimate, max_iter, False)


def operator_norm_l2(cfg, mu, subset, eps, method="lanczos", tol=1e-8, max_iter=10000):
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise ValueError("operator_norm_l2 needs a nonempty subset")
    if not eps > 0:
        raise ValueError(f"Truncation radius must be positive, got {eps}")
    if subset.size == 1:
        return NormResult(0.0, 0, True)

    A = kernel_matrix(cfg, mu, subset, eps)
    if not np.any(A):
        return NormResult(0.0, 0, True)
    if method == "power":
        result = _power_iteration(A, tol, max_iter)
    elif method == "lanczos":
        if subset.size <= DENSE_NORM_ATOMS:
            return NormResult(float(np.linalg.norm(A, 2)), 0, True)
        calls = [0]

        def gram(v):
            calls[0] += 1
            return A.T @ (A @ v)

        op = LinearOperator((subset.size, subset.size), matvec=gram, dtype=float)
        try:
            top = eigsh(op, k=1, which="LA", tol=tol, maxiter=max_iter,
                        v0=np.full(subset.size, 1.0 / math.sqrt(subset.size)), return_eigenvectors=False)
            result = NormResult(float(math.sqrt(max(top[0], 0.0))), calls[0], True)
        except ArpackNoConvergence as e:
            best = float(math.sqrt(max(e.eigenvalues.max(), 0.0))) if len(e.eigenvalues) else 0.0
            result = NormResult(best, calls[0], False)
    else:
        raise ValueError(f"Unknown norm method '{method}'")

    if not result.converged:
        logging.warning(f"Operator norm did not converge after {result.iterations} iterations; "
                        f"best estimate {result.norm:g}")
    return result


def norm_sweep(cfg, mu, subset, eps_grid, method="lanczos"):
    """Norms over a grid of truncation radii; returns (rows, max norm)."""
    rows = []
    for eps in eps_grid:
        result = operator_norm_l2(cfg, mu, subset, eps, method=method)
        rows.append({"N": int(np.size(subset)), "eps": float(eps), "norm": result.norm,
                     "iterations": result.iterations, "converged": result.converged})
    return rows, max((row["norm"] for row in rows), default=0.0)


def r_star_l1_norm(cfg, nu):
    """||R_* nu||_{L1(|nu|)} / ||nu|| with R_* the unrestricted maximal transform."""
    total = nu.total_variation()
    if total == 0:
        return 0.0
    values = np.array([maximal_riesz(cfg, nu, None, x, 0.0) for x in nu.points])
    return float((np.abs(nu.weights) * values).sum() / total)
