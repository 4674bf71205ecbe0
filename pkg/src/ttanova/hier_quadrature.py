"""Orthonormal polynomials and Gauss rules for an intermediate variable.

The variable ``zeta`` is a standardized subsystem output given by its sparse
gPC surrogate in the bottom-level parameters. Its moments ``E[q(zeta)]`` are
tensor-grid quadratures over the bottom-level Gauss rules; the grid of zeta
values is compressed once into a tensor train, every integrand ``q(zeta)``
is cross-approximated from that train, and contracted against the rank-one
weight tensor. The monic recurrence then follows moment by moment.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .dist_poly import QuadratureRule, RecurrenceFamily, RecurrencePair, golub_welsch
from .errors import (ConfigurationError, DegenerateOutput, MaxRankExceeded, MaxvolStall,
                     MomentIndefinite, MomentUnavailable, NumericalError, RankDeficient)
from .gpc_basis import GpcSurrogate, surrogate_stats
from .tensor_train import FunctionalTensor, TensorTrain, tt_cross, tt_eval_many, tt_inner_rank1

log = logging.getLogger(__name__)

MAX_ORDER = 8
DEFAULT_POINTS = 9


@dataclass(frozen=True)
class UnivariateEvalTable:
    """``values[k, j, i] = phi_j^(k)(nodes[k, i])`` with matching weights."""

    values: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    @property
    def points(self) -> int:
        return self.values.shape[2]


@lru_cache(maxsize=64)
def _family_rows(dist, p: int, m: int):
    rule = dist.gauss_rule(m)
    return dist.orthonormal(p, rule.nodes), rule.nodes, rule.weights


def build_eval_table(dists: Sequence, p: int, m: int) -> UnivariateEvalTable:
    if m < 1 or p < 0:
        raise ConfigurationError("need m >= 1 and p >= 0")
    d = len(dists)
    values = np.empty((d, p + 1, m))
    nodes = np.empty((d, m))
    weights = np.empty((d, m))
    # one computation per distinct distribution, copied to every matching dimension
    for k, dist in enumerate(dists):
        rows, x, w = _family_rows(dist, p, m)
        values[k], nodes[k], weights[k] = rows, x, w
    for arr in (values, nodes, weights):
        arr.flags.writeable = False
    return UnivariateEvalTable(values, nodes, weights)


def zeta_tensor(surrogate: GpcSurrogate, table: UnivariateEvalTable) -> FunctionalTensor:
    """Grid values of the surrogate, assembled from the sparse coefficients.

    Terms are grouped by their active coordinates; each group with at most
    three active coordinates is pre-summed into a small dense table over
    those coordinates, larger groups are multiplied out per element.
    """
    d, m = surrogate.dimension, table.points
    if table.dimension != d:
        raise ConfigurationError("evaluation table and surrogate dimensions differ")
    if table.values.shape[1] <= max((max(a) for a in surrogate.coefficients), default=0):
        raise ConfigurationError("evaluation table order is below the surrogate order")
    const = 0.0
    groups: dict = {}
    for alpha, c in surrogate.coefficients.items():
        active = tuple(k for k, a in enumerate(alpha) if a)
        if not active:
            const += c
            continue
        groups.setdefault(active, []).append((tuple(alpha[k] for k in active), c))
    dense = []
    sparse = []
    X = table.values
    for active, terms in groups.items():
        if len(active) <= 3:
            block = np.zeros((m,) * len(active))
            for degs, c in terms:
                piece = np.array(c)
                for k, a in zip(active, degs):
                    piece = np.multiply.outer(piece, X[k, a])
                block += piece
            dense.append((list(active), block))
        else:
            sparse.append((list(active), terms))

    def oracle(idx):
        out = np.full(idx.shape[0], const)
        for active, block in dense:
            out += block[tuple(idx[:, k] for k in active)]
        for active, terms in sparse:
            for degs, c in terms:
                term = np.full(idx.shape[0], c)
                for k, a in zip(active, degs):
                    term *= X[k, a, idx[:, k]]
                out += term
        return out

    return FunctionalTensor((m,) * d, oracle)


@dataclass(frozen=True)
class IntermediateVariable:
    source: GpcSurrogate
    shift: float
    scale: float
    surrogate: GpcSurrogate


def standardize(s: GpcSurrogate) -> IntermediateVariable:
    mean, var = surrogate_stats(s)
    if not var > 0.0:
        raise DegenerateOutput("cannot standardize a surrogate with zero variance")
    scale = math.sqrt(var)
    return IntermediateVariable(s, mean, scale, s.affine(mean, scale))


@dataclass(frozen=True)
class CrossSettings:
    eps: float = 1e-12
    max_rank: int = 64
    max_sweeps: int = 10
    seed: int = 0


def tt_moment(a_tt: TensorTrain, q, table: UnivariateEvalTable,
              settings: CrossSettings = CrossSettings()) -> tuple:
    """E[q(zeta)] for a polynomial ``q`` given by ascending monomial coefficients.

    The cross is validated in the norm of the quadrature measure, which
    bounds the moment error by ``eps * sqrt(E[q(zeta)^2])``. Returns
    ``(value, tensor_train_of_q)``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))

    def oracle(idx):
        return P.polyval(tt_eval_many(a_tt, idx), q)

    f = FunctionalTensor(a_tt.shape, oracle)
    try:
        q_tt = tt_cross(f, settings.eps, settings.max_rank, settings.max_sweeps, settings.seed,
                        measure=table.weights)
    except (MaxRankExceeded, MaxvolStall, RankDeficient) as exc:
        raise MomentUnavailable(
            f"moment of a degree-{len(q) - 1} polynomial unavailable: "
            f"{type(exc).__name__}: {exc}") from exc
    return tt_inner_rank1(q_tt, list(table.weights)), q_tt


@dataclass(frozen=True)
class CustomBasis:
    recurrence: tuple
    rule: QuadratureRule
    monic: tuple  # ascending monomial coefficients of pi_0..pi_p
    a_tt: TensorTrain | None = field(default=None, compare=False)
    info: dict = field(default_factory=dict, compare=False)

    @property
    def order(self) -> int:
        return len(self.recurrence) - 1

    @property
    def family(self) -> RecurrenceFamily:
        return RecurrenceFamily(self.recurrence)

    def orthonormal(self, p: int, x) -> np.ndarray:
        return self.family.orthonormal(p, x)

    def monic_eval(self, j: int, x):
        return P.polyval(np.asarray(x, dtype=float), np.asarray(self.monic[j]))

    def to_json(self) -> dict:
        return {
            "gamma": [r.gamma for r in self.recurrence],
            "kappa": [r.kappa for r in self.recurrence],
            "monic": [list(c) for c in self.monic],
            "nodes": self.rule.nodes.tolist(),
            "weights": self.rule.weights.tolist(),
            "info": {k: v for k, v in self.info.items() if isinstance(v, (int, float, list, str))},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CustomBasis":
        rec = tuple(RecurrencePair(float(g), float(k)) for g, k in zip(obj["gamma"], obj["kappa"]))
        rule = QuadratureRule(np.array(obj["nodes"]), np.array(obj["weights"]))
        monic = tuple(tuple(float(v) for v in c) for c in obj["monic"])
        return cls(rec, rule, monic, None, dict(obj.get("info", {})))


def custom_basis(z: IntermediateVariable, p: int, m: int = DEFAULT_POINTS,
                 settings: CrossSettings = CrossSettings()) -> CustomBasis:
    """Recurrence, orthonormal family and (p+1)-point Gauss rule of ``zeta``."""
    if not 1 <= p <= MAX_ORDER:
        raise ConfigurationError(f"order must be in 1..{MAX_ORDER} for the monomial recurrence")
    if m < p + 2:
        raise ConfigurationError(f"need at least p+2 = {p + 2} points per parameter, got {m}")
    s = z.surrogate
    table = build_eval_table(s.distributions, s.order, m)
    zt = zeta_tensor(s, table)
    try:
        a_tt = tt_cross(zt, settings.eps, settings.max_rank, settings.max_sweeps, settings.seed)
    except (MaxRankExceeded, MaxvolStall, RankDeficient) as exc:
        raise MomentUnavailable(f"tensor train of zeta unavailable: {exc}") from exc
    evaluations = a_tt.info["evaluations"]
    moment_ranks = []
    moment_errors = []
    unconverged = []  # degrees whose cross stopped at the rounding floor above eps

    def moment(q):
        nonlocal evaluations
        value, q_tt = tt_moment(a_tt, q, table, settings)
        evaluations += q_tt.info["evaluations"]
        moment_ranks.append(q_tt.max_rank)
        moment_errors.append(q_tt.info["validation_error"])
        if not q_tt.info.get("converged", True):
            unconverged.append(len(q) - 1)
        return value

    def fail(j, value):
        raise MomentIndefinite(
            f"kappa_{j} = {value:.3e} is not positive; lower the order or raise m / tighten eps")

    cur = np.array([0.0, 1.0])  # pi_1 = zeta
    monic = [np.array([1.0]), cur]
    norm0 = moment([1.0])
    a = moment(P.polymul(cur, cur))
    kappa = [1.0, a / norm0]
    if abs(kappa[1] - 1.0) > 1e-8:
        raise MomentIndefinite(f"E[zeta^2] = {kappa[1]:.12g} deviates from 1 beyond 1e-8")
    gamma = [0.0, moment(P.polymul([0.0, 1.0], P.polymul(cur, cur))) / a]
    prev = monic[0]
    for j in range(2, p + 1):
        nxt = P.polysub(P.polymul([-gamma[j - 1], 1.0], cur), kappa[j - 1] * prev)
        sq = P.polymul(nxt, nxt)
        a_hat = moment(sq)
        kj = a_hat / a
        if not (math.isfinite(kj) and kj > 0):
            fail(j, kj)
        kappa.append(kj)
        a = a_hat
        gamma.append(moment(P.polymul([0.0, 1.0], sq)) / a)
        monic.append(nxt)
        prev, cur = cur, nxt
    recurrence = tuple(RecurrencePair(float(g), float(k)) for g, k in zip(gamma, kappa))
    rule = golub_welsch(recurrence)
    info = {"a_ranks": a_tt.ranks, "a_max_rank": a_tt.max_rank, "evaluations": int(evaluations),
            "moment_max_ranks": moment_ranks, "moment_errors": moment_errors,
            "a_error": a_tt.info["validation_error"], "unconverged_degrees": unconverged,
            "points": m, "order": p}
    log.info("custom basis: A ranks max %d, %d oracle evaluations", a_tt.max_rank, evaluations)
    return CustomBasis(recurrence, rule, tuple(tuple(float(v) for v in c) for c in monic), a_tt, info)


def dense_moment(surrogate: GpcSurrogate, q, m: int) -> float:
    """Exhaustive grid quadrature of E[q(zeta)]; a reference for small d."""
    table = build_eval_table(surrogate.distributions, surrogate.order, m)
    d = surrogate.dimension
    if m ** d > 10 ** 7:
        raise ConfigurationError("dense grid too large")
    idx = np.indices((m,) * d).reshape(d, -1).T
    values = zeta_tensor(surrogate, table)(idx)
    w = np.ones(idx.shape[0])
    for k in range(d):
        w *= table.weights[k, idx[:, k]]
    return float(np.dot(w, P.polyval(values, np.asarray(q, dtype=float))))
