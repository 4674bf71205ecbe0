"""Stochastic-testing collocation fits.

Testing points are taken from a tensor Gauss grid with p+1 nodes per axis,
visited in descending weight order; a point is kept when its basis row is
numerically independent of the rows kept so far. The square collocation
system is then solved for the gPC coefficients.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, RankDeficient, SingularSystem, SizeOverflow
from .gpc_basis import GpcSurrogate, MultiIndexSet, basis_matrix, total_degree_set

MAX_CANDIDATES = 10 ** 7
PIVOT_TOL = 1e-10
COND_BOUND = 1e8
DROP_TOL = 1e-14


@dataclass(frozen=True)
class TestingPlan:
    points: np.ndarray
    basis: MultiIndexSet
    distributions: tuple
    collocation_matrix: np.ndarray
    condition: float

    def __len__(self):
        return len(self.points)


def candidate_grid(dists: Sequence, p: int):
    """Tensor grid of (p+1)-point Gauss rules.

    Points are listed in graded order of their node-index tuples (lower index
    sums first), which is also the tie-break order used during selection.
    Returns ``(points, weights)``; zero-weight nodes are dropped.
    """
    dists = tuple(dists)
    n = p + 1
    if n ** len(dists) > MAX_CANDIDATES:
        raise SizeOverflow(f"candidate grid of {n}^{len(dists)} points exceeds {MAX_CANDIDATES}")
    return _candidate_grid(dists, p)


@lru_cache(maxsize=128)
def _candidate_grid(dists: tuple, p: int):
    n = p + 1
    rules = [dist.gauss_rule(n) for dist in dists]
    idx = np.array(list(itertools.product(range(n), repeat=len(dists))), dtype=np.int64)
    idx = idx.reshape(-1, len(dists))
    order = np.lexsort(tuple(idx[:, k] for k in range(len(dists) - 1, -1, -1)) + (idx.sum(axis=1),))
    idx = idx[order]
    points = np.column_stack([rules[k].nodes[idx[:, k]] for k in range(len(dists))])
    weights = np.prod([rules[k].weights[idx[:, k]] for k in range(len(dists))], axis=0)
    keep = weights > 0
    points, weights = points[keep], weights[keep]
    points.flags.writeable = False
    weights.flags.writeable = False
    return points, weights


def _round_sig(x: np.ndarray, digits: int = 12) -> np.ndarray:
    out = np.zeros_like(x)
    nz = x != 0
    mag = np.floor(np.log10(np.abs(x[nz])))
    scale = 10.0 ** (digits - 1 - mag)
    out[nz] = np.round(x[nz] * scale) / scale
    return out


def select_testing_points(candidates, weights, basis: MultiIndexSet, dists: Sequence,
                          pivot_tol: float = PIVOT_TOL, cond_bound: float = COND_BOUND
                          ) -> TestingPlan:
    """Greedy largest-weight selection of K independent testing points."""
    candidates = np.asarray(candidates, dtype=float)
    weights = np.asarray(weights, dtype=float)
    size = len(basis)
    if len(candidates) < size:
        raise RankDeficient(f"{len(candidates)} candidates cannot support {size} basis functions")
    # stable sort keeps the grid's graded order among equal weights
    order = np.argsort(-_round_sig(weights), kind="stable")
    rows = basis_matrix(basis, dists, candidates[order])
    q = np.zeros((size, size))
    chosen = []
    for pos in range(len(order)):
        v = rows[pos]
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        k = len(chosen)
        r = v.copy()
        for _ in range(2):
            if k:
                r -= q[:k].T @ (q[:k] @ r)
        rn = np.linalg.norm(r)
        if rn > pivot_tol * norm:
            q[k] = r / rn
            chosen.append(pos)
            if len(chosen) == size:
                break
    if len(chosen) < size:
        raise RankDeficient(
            f"only {len(chosen)} of {size} testing points are independent; lower the order")
    chosen = np.array(chosen)
    matrix = rows[chosen]
    cond = float(np.linalg.cond(matrix))
    if not cond <= cond_bound:
        raise RankDeficient(f"collocation matrix condition {cond:.3e} exceeds {cond_bound:.1e}")
    points = candidates[order[chosen]]
    points.flags.writeable = False
    matrix.flags.writeable = False
    return TestingPlan(points, basis, tuple(dists), matrix, cond)


@lru_cache(maxsize=128)
def testing_plan(dists: tuple, p: int) -> TestingPlan:
    """Cached plan for a total-degree basis of order ``p`` over ``dists``."""
    points, weights = candidate_grid(dists, p)
    return select_testing_points(points, weights, total_degree_set(len(dists), p), dists)


def fit_values(values, plan: TestingPlan, drop_tol: float = DROP_TOL) -> GpcSurrogate:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape[0] != len(plan):
        raise SingularSystem(f"expected {len(plan)} model values, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise NumericError("model returned non-finite values at testing points")
    try:
        coeffs = np.linalg.solve(plan.collocation_matrix, values)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(coeffs)):
        raise SingularSystem("collocation solve produced non-finite coefficients")
    biggest = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    terms = {alpha: float(c) for alpha, c in zip(plan.basis, coeffs)
             if c != 0.0 and abs(c) >= drop_tol * biggest}
    return GpcSurrogate(plan.basis.dimension, plan.basis.order, plan.distributions, terms)


def fit_coefficients(model: Callable, plan: TestingPlan, drop_tol: float = DROP_TOL) -> GpcSurrogate:
    """Collocation fit of ``model`` (vectorized over rows of an (n, d) array)."""
    values = model(np.array(plan.points))
    return fit_values(values, plan, drop_tol)


def fit_surrogate(model: Callable, dists: Sequence, p: int) -> GpcSurrogate:
    return fit_coefficients(model, testing_plan(tuple(dists), p))
