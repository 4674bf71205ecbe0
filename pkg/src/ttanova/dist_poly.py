"""Univariate distributions, orthonormal polynomial families and Gauss rules.

Every builtin distribution is handled through its zero-mean, unit-variance
standard form ``z = (x - loc) / scale``. Recurrence coefficients of the
standard form have closed expressions (Hermite, Legendre, Laguerre); the
affine map carries them back to physical coordinates when asked.

Gauss rules come from the Golub-Welsch construction. The symmetric
tridiagonal eigenproblem is solved here by implicit-shift QL, accumulating
only the first row of the eigenvector matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidRecurrence, NumericalError

FAMILIES = ("gaussian", "uniform", "gamma")

# weights below this are treated as exact zeros
WEIGHT_FLOOR = 1e-300


class RecurrencePair(NamedTuple):
    gamma: float
    kappa: float


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, QuadratureRule):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.nodes.tobytes(), self.weights.tobytes()))

    def integrate(self, values) -> float:
        """Weighted sum of node values (or of a callable at the nodes), summed exactly."""
        if callable(values):
            values = values(self.nodes)
        return math.fsum(np.multiply(self.weights, values).tolist())


def _as_arrays(recurrence: Sequence[RecurrencePair]):
    rec = np.asarray(recurrence, dtype=float).reshape(-1, 2)
    return rec[:, 0], rec[:, 1]


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class DistributionSpec:
    """A builtin marginal distribution.

    ``params`` are (mean, stddev) for gaussian, (lower, upper) for uniform
    and (shape, scale) for gamma.
    """

    family: str
    params: tuple

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in FAMILIES:
            raise ConfigurationError(f"unsupported distribution family {self.family!r}")
        params = tuple(float(v) for v in self.params)
        if len(params) != 2 or not all(math.isfinite(v) for v in params):
            raise ConfigurationError(f"{family} needs two finite parameters, got {self.params!r}")
        a, b = params
        if family == "gaussian" and not b > 0:
            raise ConfigurationError("gaussian stddev must be positive")
        if family == "uniform" and not a < b:
            raise ConfigurationError("uniform needs lower < upper")
        if family == "gamma" and not (a > 0 and b > 0):
            raise ConfigurationError("gamma shape and scale must be positive")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)

    @classmethod
    def gaussian(cls, mean=0.0, std=1.0):
        return cls("gaussian", (mean, std))

    @classmethod
    def uniform(cls, lower=-1.0, upper=1.0):
        return cls("uniform", (lower, upper))

    @classmethod
    def gamma(cls, shape, scale=1.0):
        return cls("gamma", (shape, scale))

    @property
    def mean(self) -> float:
        a, b = self.params
        if self.family == "gaussian":
            return a
        if self.family == "uniform":
            return 0.5 * (a + b)
        return a * b

    @property
    def std(self) -> float:
        a, b = self.params
        if self.family == "gaussian":
            return b
        if self.family == "uniform":
            return (b - a) / math.sqrt(12.0)
        return math.sqrt(a) * b

    @property
    def support(self) -> tuple:
        a, b = self.params
        if self.family == "gaussian":
            return (-math.inf, math.inf)
        if self.family == "uniform":
            return (a, b)
        return (0.0, math.inf)

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def destandardize(self, z):
        return self.mean + self.std * np.asarray(z, dtype=float)

    def recurrence(self, n: int, standardized: bool = False) -> list:
        return recurrence_coefficients(self, n, standardized=standardized)

    def orthonormal(self, p: int, x) -> np.ndarray:
        """Values of phi_0..phi_p at ``x``; shape ``(p + 1,) + x.shape``."""
        gamma, kappa = _standard_recurrence(self.family, self.params, p + 1)
        return _orthonormal_table(gamma, kappa, p, self.standardize(x))

    def gauss_rule(self, n: int) -> QuadratureRule:
        return _gauss_rule(self, n)

    def moment(self, k: int) -> float:
        """Exact raw moment E[x^k]."""
        a, b = self.params
        if self.family == "gaussian":
            # E[(a + bZ)^k] with E[Z^j] = (j-1)!! for even j
            total = 0.0
            for j in range(0, k + 1, 2):
                total += math.comb(k, j) * a ** (k - j) * b ** j * _double_factorial(j - 1)
            return total
        if self.family == "uniform":
            return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        return b ** k * math.exp(math.lgamma(a + k) - math.lgamma(a))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        a, b = self.params
        if self.family == "gaussian":
            return rng.normal(a, b, size)
        if self.family == "uniform":
            return rng.uniform(a, b, size)
        return rng.gamma(a, b, size)

    def to_json(self) -> dict:
        return {"family": self.family, "params": list(self.params)}


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@dataclass(frozen=True)
class RecurrenceFamily:
    """Orthonormal family of an arbitrary measure given by its recurrence.

    Used for intermediate variables whose density is only known through
    moments. Supports degrees up to ``len(recurrence) - 1`` and Gauss rules
    of up to ``len(recurrence)`` points.
    """

    recurrence: tuple

    def __post_init__(self):
        rec = tuple(RecurrencePair(float(g), float(k)) for g, k in self.recurrence)
        if not rec:
            raise ConfigurationError("empty recurrence")
        if any(k <= 0 for _, k in rec[1:]):
            raise InvalidRecurrence("non-positive kappa in recurrence")
        object.__setattr__(self, "recurrence", rec)
        object.__setattr__(self, "family", "custom")

    @property
    def max_degree(self) -> int:
        return len(self.recurrence) - 1

    @property
    def mean(self) -> float:
        return self.recurrence[0].gamma

    def orthonormal(self, p: int, x) -> np.ndarray:
        if p > self.max_degree:
            raise ConfigurationError(
                f"custom family supports degree <= {self.max_degree}, asked for {p}")
        gamma, kappa = _as_arrays(self.recurrence)
        return _orthonormal_table(gamma, kappa, p, np.asarray(x, dtype=float))

    def gauss_rule(self, n: int) -> QuadratureRule:
        if n > len(self.recurrence):
            raise ConfigurationError(
                f"custom family supports rules of <= {len(self.recurrence)} points")
        return golub_welsch(self.recurrence[:n])

    def to_json(self) -> dict:
        gamma, kappa = _as_arrays(self.recurrence)
        return {"family": "custom", "gamma": gamma.tolist(), "kappa": kappa.tolist()}


def family_from_json(obj: dict):
    family = str(obj.get("family", "")).lower()
    if family == "custom":
        return RecurrenceFamily(tuple(zip(obj["gamma"], obj["kappa"])))
    if "params" not in obj:
        raise ConfigurationError(f"distribution entry lacks params: {obj!r}")
    return DistributionSpec(family, tuple(obj["params"]))


# ---------------------------------------------------------------------------
# recurrences


@lru_cache(maxsize=256)
def _standard_recurrence(family: str, params: tuple, n: int):
    j = np.arange(n, dtype=float)
    if family == "gaussian":
        gamma = np.zeros(n)
        kappa = j.copy()
    elif family == "uniform":
        gamma = np.zeros(n)
        kappa = 3.0 * j ** 2 / (4.0 * j ** 2 - 1.0)
    elif family == "gamma":
        k = params[0]
        gamma = 2.0 * j / math.sqrt(k)
        kappa = j * (j + k - 1.0) / k
    else:
        raise ConfigurationError(f"unsupported distribution family {family!r}")
    kappa[0] = 1.0
    gamma.flags.writeable = False
    kappa.flags.writeable = False
    return gamma, kappa


def recurrence_coefficients(dist: DistributionSpec, n: int, standardized: bool = False) -> list:
    """First ``n`` monic three-term recurrence pairs of ``dist``.

    By default the pairs describe polynomials in the physical variable; with
    ``standardized=True`` they describe the zero-mean, unit-variance form.
    """
    if n < 1:
        raise ConfigurationError("need at least one recurrence pair")
    if not isinstance(dist, DistributionSpec):
        raise ConfigurationError(f"unsupported distribution {dist!r}")
    gamma, kappa = _standard_recurrence(dist.family, dist.params, n)
    if not standardized:
        loc, scale = dist.mean, dist.std
        gamma = loc + scale * gamma
        kappa = np.concatenate(([1.0], scale ** 2 * kappa[1:]))
    return [RecurrencePair(float(g), float(k)) for g, k in zip(gamma, kappa)]


def _orthonormal_table(gamma, kappa, p, x):
    x = np.asarray(x, dtype=float)
    out = np.empty((p + 1,) + x.shape)
    out[0] = 1.0
    if p == 0:
        return out
    # normalized recurrence: sqrt(k_{j+1}) phi_{j+1} = (x - g_j) phi_j - sqrt(k_j) phi_{j-1}
    root = np.sqrt(kappa[: p + 1])
    prev = np.zeros_like(x)
    cur = out[0]
    for j in range(p):
        nxt = ((x - gamma[j]) * cur - (root[j] if j > 0 else 0.0) * prev) / root[j + 1]
        out[j + 1] = nxt
        prev, cur = cur, nxt
    return out


def eval_orthonormal(recurrence: Sequence[RecurrencePair], j: int, x):
    """phi_j(x) from the monic recurrence, normalized by sqrt(k_0...k_j)."""
    gamma, kappa = _as_arrays(recurrence)
    if not 0 <= j < len(gamma):
        raise ConfigurationError(f"degree {j} needs {j + 1} recurrence pairs, have {len(gamma)}")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for i in range(j):
        prev, cur = cur, (x - gamma[i]) * cur - kappa[i] * prev
    norm = math.sqrt(math.prod(kappa[: j + 1]))
    out = cur / norm
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Golub-Welsch


def tridiagonal_eigen(diag, offdiag, max_iter: int = 60):
    """Eigenvalues and first eigenvector components of a symmetric tridiagonal matrix.

    Implicit-shift QL with Wilkinson-type shifts. Returns ``(values, first)``
    where ``first[j]`` is the first component of the unit eigenvector for
    ``values[j]``; output is sorted by eigenvalue.
    """
    d = [float(v) for v in diag]
    n = len(d)
    e = [float(v) for v in offdiag] + [0.0]
    if len(e) != n:
        raise ValueError("offdiag must have length len(diag) - 1")
    z = [0.0] * n
    z[0] = 1.0
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise NumericalError("tridiagonal QL failed to converge")
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    return np.asarray(d)[order], np.asarray(z)[order]


def golub_welsch(recurrence: Sequence[RecurrencePair]) -> QuadratureRule:
    """Gauss rule with ``len(recurrence)`` points for a probability measure."""
    gamma, kappa = _as_arrays(recurrence)
    if len(gamma) == 0:
        raise ConfigurationError("empty recurrence")
    if np.any(~np.isfinite(kappa[1:])) or np.any(kappa[1:] <= 0):
        raise InvalidRecurrence(f"recurrence has non-positive kappa: {kappa[1:].tolist()}")
    nodes, first = tridiagonal_eigen(gamma, np.sqrt(kappa[1:]))
    weights = first ** 2
    if not np.any(gamma):
        # symmetric measure: remove rounding asymmetry between mirrored nodes
        nodes = 0.5 * (nodes - nodes[::-1])
        weights = 0.5 * (weights + weights[::-1])
    weights[weights < WEIGHT_FLOOR] = 0.0
    return QuadratureRule(nodes, weights)


@lru_cache(maxsize=256)
def _gauss_rule(dist: DistributionSpec, n: int) -> QuadratureRule:
    if n < 1:
        raise ConfigurationError("a Gauss rule needs at least one point")
    rule = golub_welsch(recurrence_coefficients(dist, n, standardized=True))
    return QuadratureRule(dist.destandardize(rule.nodes), rule.weights)
