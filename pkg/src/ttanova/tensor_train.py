"""Tensor trains: evaluation, TT-SVD, maxvol, TT-cross and contractions.

Indices are 0-based throughout. Cores have shape ``(r_{k-1}, n_k, r_k)`` with
``r_0 = r_d = 1``.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, MaxRankExceeded, MaxvolStall, RankDeficient

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TensorTrain:
    cores: tuple
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        cores = tuple(np.array(c, dtype=float) for c in self.cores)
        if not cores:
            raise ConfigurationError("a tensor train needs at least one core")
        if cores[0].ndim != 3 or cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ConfigurationError("boundary ranks must be 1")
        for a, b in zip(cores, cores[1:]):
            if b.ndim != 3 or a.shape[2] != b.shape[0]:
                raise ConfigurationError("core shapes do not chain")
        for c in cores:
            c.flags.writeable = False
        object.__setattr__(self, "cores", cores)

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> list:
        return [1] + [c.shape[2] for c in self.cores]

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def full(self) -> np.ndarray:
        out = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for core in self.cores[1:]:
            out = out @ core.reshape(core.shape[0], -1)
            out = out.reshape(-1, core.shape[2])
        return out.reshape(self.shape)

    def to_json(self) -> dict:
        return {"ranks": self.ranks,
                "cores": [{"shape": list(c.shape), "data": c.ravel().tolist()} for c in self.cores]}

    @classmethod
    def from_json(cls, obj: dict) -> "TensorTrain":
        return cls(tuple(np.array(c["data"], dtype=float).reshape(c["shape"]) for c in obj["cores"]))


class FunctionalTensor:
    """Tensor known only through an element oracle.

    ``oracle`` receives an integer array of shape ``(n, d)`` and returns the
    ``n`` element values. Calls are counted in ``evaluations``.
    """

    def __init__(self, shape: Sequence[int], oracle: Callable):
        self.shape = tuple(int(n) for n in shape)
        if not self.shape or min(self.shape) < 1:
            raise ConfigurationError("mode sizes must be >= 1")
        self._oracle = oracle
        self.evaluations = 0
        self._lock = threading.Lock()

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def __call__(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.ndim)
        with self._lock:
            self.evaluations += idx.shape[0]
        values = np.asarray(self._oracle(idx), dtype=float).reshape(-1)
        if values.shape[0] != idx.shape[0]:
            raise ConfigurationError("oracle returned the wrong number of values")
        return values


def _check_index(tt: TensorTrain, idx: np.ndarray):
    if idx.shape[1] != tt.ndim:
        raise ConfigurationError(f"index has {idx.shape[1]} entries, tensor has {tt.ndim} modes")
    if np.any(idx < 0) or np.any(idx >= np.array(tt.shape)):
        raise IndexError("tensor index out of range")


def tt_eval(tt: TensorTrain, idx) -> float:
    idx = np.asarray(idx, dtype=np.int64).reshape(1, -1)
    _check_index(tt, idx)
    row = np.ones(1)
    for core, i in zip(tt.cores, idx[0]):
        row = row @ core[:, i, :]
    return float(row[0])


def tt_eval_many(tt: TensorTrain, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    idx = idx.reshape(-1, tt.ndim)
    _check_index(tt, idx)
    rows = np.ones((idx.shape[0], 1))
    for k, core in enumerate(tt.cores):
        rows = np.einsum("nr,nrs->ns", rows, core.transpose(1, 0, 2)[idx[:, k]])
    return rows[:, 0]


def tt_svd(dense, eps: float) -> TensorTrain:
    """TT-SVD with per-step truncation threshold ``eps * ||A||_F / sqrt(d - 1)``."""
    a = np.asarray(dense, dtype=float)
    shape = a.shape
    d = a.ndim
    if a.size > 10 ** 7:
        raise ConfigurationError("tt_svd is meant for explicit tensors of at most 1e7 entries")
    norm = np.linalg.norm(a)
    if d == 1:
        return TensorTrain((a.reshape(1, -1, 1),))
    if norm == 0.0:
        return TensorTrain(tuple(np.zeros((1, n, 1)) for n in shape))
    delta = eps * norm / math.sqrt(d - 1)
    cores = []
    rank = 1
    rest = a.reshape(shape[0], -1)
    for k in range(d - 1):
        rest = rest.reshape(rank * shape[k], -1)
        u, s, vt = np.linalg.svd(rest, full_matrices=False)
        # smallest r with tail energy <= delta
        tail = np.sqrt(np.cumsum((s ** 2)[::-1]))[::-1]
        keep = max(1, int(np.sum(tail > delta)))
        cores.append(u[:, :keep].reshape(rank, shape[k], keep))
        rest = s[:keep, None] * vt[:keep]
        rank = keep
    cores.append(rest.reshape(rank, shape[-1], 1))
    return TensorTrain(tuple(cores))


def maxvol(m, tol: float = 1e-2, max_swaps: int = 100) -> np.ndarray:
    """Rows of a tall ``n x r`` matrix spanning a quasi-maximal-volume submatrix."""
    m = np.asarray(m, dtype=float)
    n, r = m.shape
    if n < r:
        raise RankDeficient(f"maxvol needs at least as many rows as columns, got {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    # starting rows from Gaussian elimination with partial pivoting
    work = m.copy()
    perm = np.arange(n)
    for j in range(r):
        p = j + int(np.argmax(np.abs(work[j:, j])))
        if not abs(work[p, j]) > 1e-14 * scale:
            raise RankDeficient("maxvol input is numerically rank deficient")
        work[[j, p]] = work[[p, j]]
        perm[[j, p]] = perm[[p, j]]
        work[j + 1:, j] /= work[j, j]
        work[j + 1:, j + 1:] -= np.outer(work[j + 1:, j], work[j, j + 1:])
    rows = perm[:r].copy()
    coef = np.linalg.solve(m[rows].T, m.T).T
    for _ in range(max_swaps + 1):
        i, j = np.unravel_index(np.argmax(np.abs(coef)), coef.shape)
        if abs(coef[i, j]) <= 1.0 + tol:
            return rows
        update = coef[i].copy()
        update[j] -= 1.0
        coef -= np.outer(coef[:, j], update / coef[i, j])
        rows[j] = i
    raise MaxvolStall(f"maxvol did not settle within {max_swaps} swaps")


def tt_inner_rank1(tt: TensorTrain, weights: Sequence) -> float:
    """<tt, w^(1) o ... o w^(d)> by contracting each core with its weight vector."""
    if len(weights) != tt.ndim:
        raise ConfigurationError("one weight vector per mode is required")
    row = np.ones(1)
    for core, w in zip(tt.cores, weights):
        w = np.asarray(w, dtype=float)
        if w.shape != (core.shape[1],):
            raise ConfigurationError(f"weight vector of length {w.shape} for mode size {core.shape[1]}")
        row = row @ np.tensordot(core, w, axes=([1], [0]))
    return float(row[0])


def tt_frobenius(tt: TensorTrain) -> float:
    gram = np.ones((1, 1))
    for core in tt.cores:
        gram = np.einsum("ab,aic,bid->cd", gram, core, core)
    return math.sqrt(max(float(gram[0, 0]), 0.0))


# ---------------------------------------------------------------------------
# cross approximation


def _merge(left: np.ndarray, n: int, right: np.ndarray) -> np.ndarray:
    """All index rows (left, i, right) in C order, shape (|left|*n*|right|, d)."""
    nl, nr = left.shape[0], right.shape[0]
    a = np.repeat(left, n * nr, axis=0)
    b = np.tile(np.repeat(np.arange(n), nr), nl)[:, None]
    c = np.tile(right, (nl * n, 1))
    return np.hstack([a, b, c])


def _leading_rank(s: np.ndarray, tol: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _interpolating_factor(mat: np.ndarray, tol: float, max_rank: int, side_size: float):
    """Column basis of ``mat`` with rows chosen by maxvol.

    Returns (factor, rows, rank, saturated) where ``factor @ mat[rows]`` is
    the skeleton approximation of ``mat``. Columns are sampled fibers out of
    ``side_size`` possible ones; the bond is saturated when the sampled
    columns are all independent and more could still be drawn.
    """
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    rank = _leading_rank(s, tol)
    if rank == 0:
        factor = np.zeros((mat.shape[0], 1))
        factor[0, 0] = 1.0
        return factor, np.array([0]), 1, False
    saturated = rank >= mat.shape[1] and rank < mat.shape[0] and rank < side_size
    rank = min(rank, max_rank)
    u = u[:, :rank]
    rows = maxvol(u)
    factor = np.linalg.solve(u[rows].T, u.T).T
    return factor, rows, rank, saturated


def tt_cross(f: FunctionalTensor, eps: float = 1e-12, max_rank: int = 64, max_sweeps: int = 10,
             seed: int = 0, n_validation: int = 1000, kick: int = 2,
             tol_shrink: float = 0.1, tol_floor: float = 1e-15, measure=None) -> TensorTrain:
    """Cross approximation of a black-box tensor.

    Alternating sweeps keep nested left/right index sets chosen by maxvol on
    SVD column bases of the current fiber matrices. Each half-sweep samples
    a few extra random indices on the far side of every bond, so a bond
    whose numerical rank fills the sampled fibers grows on the next pass.
    Stops once no bond is saturated and the relative error on held-out
    random entries is at most ``eps``.

    ``measure`` (one positive weight vector per mode) switches to the
    weighted norm of the product measure: fibers are sampled from
    ``sqrt(w) * f`` so truncation is relative in that norm, held-out indices
    are drawn from the measure (or every entry is weighted, for tensors small
    enough to check exhaustively), and the returned train is unscaled back to
    ``f``.
    """
    rng = np.random.default_rng(seed)
    shape = np.array(f.shape)
    d = len(shape)
    start = f.evaluations
    if d == 1:
        all_idx = np.arange(shape[0])[:, None]
        tt = TensorTrain((f(all_idx).reshape(1, -1, 1),))
        tt.info.update(evaluations=f.evaluations - start, sweeps=0, validation_error=0.0,
                       converged=True)
        return tt

    if measure is not None:
        measure = [np.asarray(w, dtype=float) for w in measure]
        if len(measure) != d or any(w.shape != (n,) for w, n in zip(measure, shape)):
            raise ConfigurationError("measure needs one weight vector per mode")
        if any(np.any(~(w > 0)) for w in measure):
            raise ConfigurationError("measure weights must be positive")
        probs = [w / w.sum() for w in measure]
        root = [np.sqrt(pk) for pk in probs]

        def sample(idx):
            idx = np.asarray(idx, dtype=np.int64).reshape(-1, d)
            scale = np.ones(idx.shape[0])
            for k in range(d):
                scale *= root[k][idx[:, k]]
            return f(idx) * scale
    else:
        probs = root = None
        sample = f
    check_scale = None
    if np.prod(shape.astype(float)) <= n_validation:
        # small tensors are validated on every entry
        check_idx = np.indices(tuple(shape)).reshape(d, -1).T
        if measure is not None:
            check_scale = np.prod([r[check_idx[:, k]] for k, r in enumerate(root)], axis=0)
    elif measure is None:
        check_idx = rng.integers(0, shape, size=(n_validation, d))
    else:
        check_idx = np.column_stack([rng.choice(n, size=n_validation, p=pk)
                                     for n, pk in zip(shape, probs)])
    check_val = f(check_idx)
    if check_scale is not None:
        check_val = check_val * check_scale
    check_norm = np.linalg.norm(check_val)
    tol = eps / math.sqrt(d - 1)
    sizes = shape.astype(float)
    side = [float(np.prod(sizes[k:])) for k in range(d + 1)]  # fibers right of bond k
    side_left = [float(np.prod(sizes[:k])) for k in range(d + 1)]

    def random_rows(lo, hi, count):
        if hi <= lo:
            return np.zeros((count, 0), np.int64)
        if probs is None:
            return rng.integers(0, shape[lo:hi], size=(count, hi - lo))
        # with a measure, extra fibers come from it so they carry weight
        return np.column_stack([rng.choice(shape[k], size=count, p=probs[k]) for k in range(lo, hi)])

    # right[k]: index rows over modes k..d-1 for bond k (between cores k-1 and k)
    right = [None] + [random_rows(k, d, 1) for k in range(1, d)] + [np.zeros((1, 0), np.int64)]
    left = [np.zeros((1, 0), np.int64)] + [None] * d
    error = best_error = math.inf
    best = None
    history = []
    for sweep in range(1, max_sweeps + 1):
        # left-to-right
        cores = []
        saturated = False
        for k in range(d - 1):
            rk = right[k + 1]
            extra = max(kick, rk.shape[0] // 2)
            cols = np.vstack([rk, random_rows(k + 1, d, extra)])
            vals = sample(_merge(left[k], shape[k], cols))
            mat = vals.reshape(left[k].shape[0] * shape[k], cols.shape[0])
            factor, rows, rank, sat = _interpolating_factor(mat, tol, max_rank, side[k + 1])
            saturated |= sat and rank < max_rank
            cores.append(factor.reshape(left[k].shape[0], shape[k], rank))
            li, ii = np.divmod(rows, shape[k])
            left[k + 1] = np.hstack([left[k][li], ii[:, None]])
        last = sample(_merge(left[d - 1], shape[d - 1], right[d]))
        cores.append(last.reshape(left[d - 1].shape[0], shape[d - 1], 1))
        tt = _unscaled(cores, root)
        error = _validation_error(tt, check_idx, check_val, check_norm, check_scale)
        history.append(error)
        if error < best_error:
            best, best_error = tt, error
        log.debug("cross sweep %d L->R ranks %s error %.3e", sweep, tt.ranks, error)
        if error <= eps and not saturated:
            break
        if not saturated:
            tol = max(tol * tol_shrink, tol_floor)
        # right-to-left
        cores = [None] * d
        saturated = False
        for k in range(d - 1, 0, -1):
            lk = left[k]
            extra = max(kick, lk.shape[0] // 2)
            rows_l = np.vstack([lk, random_rows(0, k, extra)])
            vals = sample(_merge(rows_l, shape[k], right[k + 1]))
            mat = vals.reshape(rows_l.shape[0], shape[k] * right[k + 1].shape[0]).T
            factor, rows, rank, sat = _interpolating_factor(mat, tol, max_rank, side_left[k])
            saturated |= sat and rank < max_rank
            cores[k] = factor.T.reshape(rank, shape[k], right[k + 1].shape[0])
            ii, ri = np.divmod(rows, right[k + 1].shape[0])
            right[k] = np.hstack([ii[:, None], right[k + 1][ri]])
        first = sample(_merge(left[0], shape[0], right[1]))
        cores[0] = first.reshape(1, shape[0], right[1].shape[0])
        tt = _unscaled(cores, root)
        error = _validation_error(tt, check_idx, check_val, check_norm, check_scale)
        history.append(error)
        if error < best_error:
            best, best_error = tt, error
        log.debug("cross sweep %d R->L ranks %s error %.3e", sweep, tt.ranks, error)
        if error <= eps and not saturated:
            break
        if not saturated:
            tol = max(tol * tol_shrink, tol_floor)
    else:
        if best.max_rank >= max_rank:
            raise MaxRankExceeded(
                f"cross did not reach relative error {eps:.1e} at max_rank {max_rank} "
                f"(best error {best_error:.3e}, ranks {best.ranks})")
        # ranks stopped growing below the cap: the error is at the rounding floor
        log.warning("cross stopped at relative error %.3e above eps %.1e after %d sweeps "
                    "(ranks below max_rank %d)", best_error, eps, max_sweeps, max_rank)
        best.info.update(evaluations=f.evaluations - start, sweeps=sweep,
                         validation_error=best_error, history=history, converged=False)
        return best
    tt.info.update(evaluations=f.evaluations - start, sweeps=sweep, validation_error=error,
                   history=history, converged=True)
    return tt


def _unscaled(cores, root) -> TensorTrain:
    if root is None:
        return TensorTrain(tuple(cores))
    return TensorTrain(tuple(c / r[None, :, None] for c, r in zip(cores, root)))


def _validation_error(tt, idx, values, norm, scale=None) -> float:
    approx = tt_eval_many(tt, idx)
    if scale is not None:
        approx = approx * scale
    diff = np.linalg.norm(approx - values)
    if norm == 0.0:
        return float(diff)
    return float(diff / norm)
