"""Adaptive anchored ANOVA built from low-dimensional stochastic-testing fits.

Each term ``g_s`` is fitted on the restriction of the model that pins the
coordinates outside ``s`` to the anchor, minus the constant and every
retained lower-order term inside ``s``. After each level, terms whose
relative variance ``theta_s`` falls below the threshold remove all of
their supersets from the later levels.

Index sets are 0-based tuples internally; reports use 1-based indices.
"""
from __future__ import annotations

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateOutput, SizeOverflow
from .gpc_basis import GpcSurrogate, surrogate_stats
from .stoch_testing import DROP_TOL, fit_values, testing_plan

log = logging.getLogger(__name__)

MAX_SETS = 10 ** 7
MAX_SAMPLES = 2 ** 63 - 1


@dataclass(frozen=True)
class AnchoredConfig:
    d_eff: int = 2
    sigma: float = 1e-2
    order: int = 3
    anchor: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if self.d_eff < 1:
            raise ConfigurationError("effective dimension must be >= 1")
        if not 0.0 <= self.sigma < 1.0:
            raise ConfigurationError("threshold sigma must lie in [0, 1)")
        if self.order < 1:
            raise ConfigurationError("order must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")


@dataclass(frozen=True)
class AnovaTerm:
    index_set: tuple
    surrogate: GpcSurrogate
    variance: float


@dataclass(frozen=True)
class SensitivityReport:
    main: np.ndarray
    total: np.ndarray

    def rows(self):
        return [(k + 1, float(s), float(t)) for k, (s, t) in enumerate(zip(self.main, self.total))]


@dataclass(frozen=True)
class AnovaSurrogate:
    g0: float
    terms: tuple
    assembled: GpcSurrogate
    level_sets: tuple
    theta: dict
    pruned: tuple
    samples_used: int
    model_evaluations: int
    config: AnchoredConfig = field(repr=False, default=None)

    def report(self) -> dict:
        """Decomposition report with 1-based index sets."""
        by_set = {t.index_set: t for t in self.terms}
        levels = []
        for k, sets in enumerate(self.level_sets, start=1):
            levels.append({
                "k": k,
                "retained": [[i + 1 for i in s] for s in sets],
                "variances": [by_set[s].variance for s in sets],
                "theta": [self.theta[s] for s in sets],
            })
        return {"g0": self.g0, "levels": levels, "samples_used": self.samples_used,
                "model_evaluations": self.model_evaluations,
                "nonzero_terms": len(self.assembled.coefficients)}


class EvaluationCache:
    """Memoizes model values by exact input vector; safe for concurrent use."""

    def __init__(self, model: Callable, dimension: int):
        self.model = model
        self.dimension = dimension
        self.values = {}
        self.requested = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        return len(self.values)

    def __call__(self, points) -> np.ndarray:
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        keys = [row.tobytes() for row in points]
        with self._lock:
            self.requested += len(keys)
            missing = [i for i, key in enumerate(keys) if key not in self.values]
        # duplicates inside one batch are evaluated once
        fresh = {}
        for i in missing:
            fresh.setdefault(keys[i], i)
        if fresh:
            rows = list(fresh.values())
            vals = np.asarray(self.model(points[rows]), dtype=float).reshape(-1)
            with self._lock:
                for key, v in zip(fresh, vals):
                    self.values.setdefault(key, float(v))
        with self._lock:
            return np.array([self.values[key] for key in keys])


def init_level_sets(d: int, d_eff: int) -> list:
    if not 1 <= d_eff <= d:
        raise ConfigurationError(f"need 1 <= d_eff <= d, got d_eff={d_eff}, d={d}")
    total = sum(math.comb(d, k) for k in range(1, d_eff + 1))
    if total > MAX_SETS:
        raise SizeOverflow(f"{total} index sets exceed the limit of {MAX_SETS}")
    return [list(itertools.combinations(range(d), k)) for k in range(1, d_eff + 1)]


def sample_count(level_sizes: Sequence[int], p: int) -> int:
    """1 + sum_k |S_k| (k+p)!/(k! p!), in exact integer arithmetic."""
    total = 1
    for k, size in enumerate(level_sizes, start=1):
        total += int(size) * math.comb(k + p, k)
    if total > MAX_SAMPLES:
        raise SizeOverflow(f"sample count {total} does not fit in 64 bits")
    return total


def anchored_restriction(model: Callable, s: Sequence[int], anchor) -> Callable:
    """Function of the ``|s|`` coordinates in ``s`` with the rest held at ``anchor``."""
    s = list(s)
    if not s:
        raise ConfigurationError("restriction needs a nonempty index set")
    anchor = np.asarray(anchor, dtype=float)

    def restricted(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        full = np.tile(anchor, (points.shape[0], 1))
        full[:, s] = points
        return model(full)

    return restricted


def extract_term(model: Callable, s: Sequence[int], anchor, lower_terms: dict, p: int,
                 dists: Sequence, g0: float) -> AnovaTerm:
    """Fit the anchored restriction on ``s`` and subtract ``g0`` and lower terms.

    ``lower_terms`` maps retained strict subsets of ``s`` to their local
    surrogates; subsets that are absent contribute nothing.
    """
    s = tuple(s)
    local = tuple(dists[k] for k in s)
    plan = testing_plan(local, p)
    values = np.asarray(anchored_restriction(model, s, anchor)(np.array(plan.points)), dtype=float)
    fitted = fit_values(values, plan)
    coeffs = dict(fitted.coefficients)
    zero = (0,) * len(s)
    coeffs[zero] = coeffs.get(zero, 0.0) - g0
    for t, term in lower_terms.items():
        if not set(t) < set(s):
            continue
        where = [s.index(j) for j in t]
        for alpha_t, c in term.coefficients.items():
            alpha = [0] * len(s)
            for j, a in zip(where, alpha_t):
                alpha[j] = a
            alpha = tuple(alpha)
            coeffs[alpha] = coeffs.get(alpha, 0.0) - c
    # cancellation leaves rounding residue; drop it on the fit's own scale
    scale = max((abs(c) for c in fitted.coefficients.values()), default=0.0)
    coeffs = {a: c for a, c in coeffs.items() if abs(c) > DROP_TOL * scale}
    surrogate = GpcSurrogate(len(s), p, local, coeffs)
    return AnovaTerm(s, surrogate, surrogate_stats(surrogate)[1])


def _assemble(g0, terms, d, p, dists) -> GpcSurrogate:
    coeffs = {(0,) * d: g0}
    for term in terms:
        for alpha_s, c in term.surrogate.coefficients.items():
            alpha = [0] * d
            for j, a in zip(term.index_set, alpha_s):
                alpha[j] = a
            alpha = tuple(alpha)
            coeffs[alpha] = coeffs.get(alpha, 0.0) + c
    return GpcSurrogate(d, p, tuple(dists), coeffs)


def adaptive_decompose(model: Callable, dists: Sequence, config: AnchoredConfig = AnchoredConfig()
                       ) -> AnovaSurrogate:
    """Adaptive anchored ANOVA of a vectorized black-box model."""
    dists = tuple(dists)
    d = len(dists)
    p = config.order
    anchor = np.array([dist.mean for dist in dists] if config.anchor is None else config.anchor,
                      dtype=float)
    if anchor.shape != (d,):
        raise ConfigurationError(f"anchor must have {d} entries")
    levels = init_level_sets(d, min(config.d_eff, d))
    cache = EvaluationCache(model, d)
    g0 = float(cache(anchor[None, :])[0])
    requested = 1

    fitted: dict = {}
    theta: dict = {}
    low: set = set()
    retained_levels = []
    pruned = []
    beta = 0.0
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for k, candidates in enumerate(levels, start=1):
            current = []
            for s in candidates:
                if k > 1 and any(sub in low for j in range(1, k)
                                 for sub in itertools.combinations(s, j)):
                    pruned.append(s)
                else:
                    current.append(s)

            def fit(s):
                lower = {t: fitted[t].surrogate for j in range(1, len(s))
                         for t in itertools.combinations(s, j) if t in fitted}
                return extract_term(cache, s, anchor, lower, p, dists, g0)

            terms = list(pool.map(fit, current)) if pool else [fit(s) for s in current]
            for s, term in zip(current, terms):
                fitted[s] = term
            requested += len(current) * math.comb(k + p, k)
            beta += math.fsum(t.variance for t in terms)
            if k == 1 and not beta > 1e-26 * max(1.0, g0 * g0):
                raise DegenerateOutput("model output has zero variance over the univariate terms")
            for s, term in zip(current, terms):
                theta[s] = term.variance / beta
                if theta[s] < config.sigma:
                    low.add(s)
            retained_levels.append(tuple(current))
            log.info("level %d: %d sets fitted, %d pruned so far, beta=%.6g",
                     k, len(current), len(pruned), beta)
    finally:
        if pool:
            pool.shutdown()

    ordered = tuple(fitted[s] for level in retained_levels for s in level)
    assembled = _assemble(g0, ordered, d, p, dists)
    return AnovaSurrogate(g0, ordered, assembled, tuple(retained_levels), theta, tuple(pruned),
                          requested, cache.evaluations, config)


def sensitivities(s: GpcSurrogate) -> SensitivityReport:
    """Main (S_k) and total (T_k) variance fractions from the coefficients."""
    _, var = surrogate_stats(s)
    if not var > 0.0:
        raise DegenerateOutput("sensitivities need a surrogate with positive variance")
    main = np.zeros(s.dimension)
    total = np.zeros(s.dimension)
    for alpha, c in s.coefficients.items():
        active = [k for k, a in enumerate(alpha) if a]
        if not active:
            continue
        c2 = c * c
        for k in active:
            total[k] += c2
        if len(active) == 1:
            main[active[0]] += c2
    return SensitivityReport(main / var, total / var)
