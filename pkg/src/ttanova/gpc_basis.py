"""Total-degree multi-index sets and sparse gPC surrogates.

A surrogate stores ``{alpha: coeff}`` over the tensor-product orthonormal
basis ``H_alpha(xi) = prod_k phi_{alpha_k}(xi_k)``. Because the basis is
orthonormal, the mean is the constant coefficient and the variance is the
sum of squares of the rest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .dist_poly import DistributionSpec, family_from_json
from .errors import ConfigurationError, SizeOverflow

MAX_BASIS_SIZE = 10 ** 8


def basis_size(d: int, p: int) -> int:
    return math.comb(p + d, d)


def graded_key(alpha) -> tuple:
    """Sort key: total degree first, then larger leading powers first."""
    return (sum(alpha), tuple(-a for a in alpha))


def _compositions(total: int, parts: int) -> Iterator[tuple]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


@dataclass(frozen=True)
class MultiIndexSet:
    dimension: int
    order: int
    indices: tuple
    _lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(tuple(int(a) for a in al) for al in self.indices))
        object.__setattr__(self, "_lookup", {al: j for j, al in enumerate(self.indices)})

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, j):
        return self.indices[j]

    def position(self, alpha) -> int:
        return self._lookup[tuple(alpha)]

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.dimension)


def total_degree_set(d: int, p: int) -> MultiIndexSet:
    """All alpha with |alpha| <= p, in graded order: (0,0), (1,0), (0,1), (2,0), ..."""
    if d < 1 or p < 0:
        raise ConfigurationError(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    size = basis_size(d, p)
    if size > MAX_BASIS_SIZE:
        raise SizeOverflow(f"total-degree basis with d={d}, p={p} has {size} terms")
    indices = [alpha for t in range(p + 1) for alpha in _compositions(t, d)]
    return MultiIndexSet(d, p, tuple(indices))


def eval_basis(alpha: Sequence[int], dists: Sequence, xi: Sequence[float]) -> float:
    if not len(alpha) == len(dists) == len(xi):
        raise ConfigurationError("alpha, distributions and point must have equal length")
    value = 1.0
    for a, dist, x in zip(alpha, dists, xi):
        if a:
            value *= float(dist.orthonormal(a, x)[a])
    return value


def basis_matrix(basis: MultiIndexSet, dists: Sequence, points) -> np.ndarray:
    """V[j, k] = H_{alpha_k}(points[j])."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    alphas = basis.as_array()
    out = np.ones((points.shape[0], len(basis)))
    for k, dist in enumerate(dists):
        degree = int(alphas[:, k].max()) if len(alphas) else 0
        if degree == 0:
            continue
        table = dist.orthonormal(degree, points[:, k])  # (degree+1, n)
        out *= table[alphas[:, k]].T
    return out


@dataclass(frozen=True)
class GpcSurrogate:
    dimension: int
    order: int
    distributions: tuple
    coefficients: dict

    def __post_init__(self):
        dists = tuple(self.distributions)
        if len(dists) != self.dimension:
            raise ConfigurationError(
                f"surrogate of dimension {self.dimension} got {len(dists)} distributions")
        coeffs = {}
        for alpha, c in self.coefficients.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dimension or min(alpha, default=0) < 0:
                raise ConfigurationError(f"bad multi-index {alpha} for dimension {self.dimension}")
            if sum(alpha) > self.order:
                raise ConfigurationError(f"multi-index {alpha} exceeds order {self.order}")
            c = float(c)
            if c != 0.0:
                coeffs[alpha] = coeffs.get(alpha, 0.0) + c
        coeffs = {a: coeffs[a] for a in sorted(coeffs, key=graded_key) if coeffs[a] != 0.0}
        object.__setattr__(self, "distributions", dists)
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, xi):
        return surrogate_eval(self, xi)

    @property
    def mean(self) -> float:
        return surrogate_stats(self)[0]

    @property
    def variance(self) -> float:
        return surrogate_stats(self)[1]

    def embed(self, coords: Sequence[int], dimension: int, distributions) -> "GpcSurrogate":
        """Lift to ``dimension`` variables; local variable j becomes ``coords[j]``."""
        terms = {}
        for alpha, c in self.coefficients.items():
            full = [0] * dimension
            for j, a in zip(coords, alpha):
                full[j] = a
            terms[tuple(full)] = c
        return GpcSurrogate(dimension, self.order, tuple(distributions), terms)

    def affine(self, shift: float, scale: float) -> "GpcSurrogate":
        """Surrogate of ``(y - shift) / scale``."""
        zero = (0,) * self.dimension
        terms = {a: c / scale for a, c in self.coefficients.items() if a != zero}
        c0 = (self.coefficients.get(zero, 0.0) - shift) / scale
        if c0 != 0.0:
            terms[zero] = c0
        return GpcSurrogate(self.dimension, self.order, self.distributions, terms)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "order": self.order,
            "distributions": [d.to_json() for d in self.distributions],
            "terms": [{"alpha": list(a), "coeff": c} for a, c in self.coefficients.items()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GpcSurrogate":
        try:
            dists = tuple(family_from_json(d) for d in obj["distributions"])
            terms = {tuple(t["alpha"]): float(t["coeff"]) for t in obj["terms"]}
            return cls(int(obj["dimension"]), int(obj["order"]), dists, terms)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed surrogate JSON: {exc}") from exc


def surrogate_eval(s: GpcSurrogate, xi):
    """Evaluate at one point (length d) or a batch of shape (n, d)."""
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != s.dimension:
        raise ConfigurationError(f"expected points with {s.dimension} coordinates, got {x.shape[1]}")
    n = x.shape[0]
    if not s.coefficients:
        out = np.zeros(n)
        return float(out[0]) if single else out
    alphas = np.array(list(s.coefficients), dtype=np.int64)
    coeffs = np.array(list(s.coefficients.values()))
    max_deg = alphas.max(axis=0)
    tables = {k: s.distributions[k].orthonormal(int(max_deg[k]), x[:, k])
              for k in range(s.dimension) if max_deg[k] > 0}
    out = np.zeros(n)
    for alpha, c in zip(alphas, coeffs):
        term = np.full(n, c)
        for k in np.flatnonzero(alpha):
            term *= tables[k][alpha[k]]
        out += term
    return float(out[0]) if single else out


def surrogate_stats(s: GpcSurrogate) -> tuple:
    zero = (0,) * s.dimension
    mean = s.coefficients.get(zero, 0.0)
    variance = math.fsum(c * c for a, c in s.coefficients.items() if a != zero)
    return mean, variance


def constant_surrogate(value: float, distributions, order: int = 0) -> GpcSurrogate:
    d = len(distributions)
    return GpcSurrogate(d, order, tuple(distributions), {(0,) * d: value})


__all__ = [
    "DistributionSpec", "GpcSurrogate", "MultiIndexSet", "basis_matrix", "basis_size",
    "constant_surrogate", "eval_basis", "graded_key", "surrogate_eval", "surrogate_stats",
    "total_degree_set",
]
