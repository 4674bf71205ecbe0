"""Two-level composition of subsystem surrogates.

Each subsystem output is standardized into an intermediate variable zeta_i
with its own orthonormal family and Gauss rule. A system-level function
h(z1..zq) is then fitted by stochastic testing over those custom families.
Subsystems listed with a multiplicity share one surrogate and one basis.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .anova import AnchoredConfig, AnovaSurrogate, adaptive_decompose
from .dist_poly import RecurrenceFamily
from .errors import ConfigurationError
from .gpc_basis import GpcSurrogate, surrogate_eval, surrogate_stats
from .hier_quadrature import (CrossSettings, CustomBasis, IntermediateVariable, custom_basis,
                              standardize)
from .model_def import ModelSpec, model_from_json, parse
from .stoch_testing import fit_coefficients, testing_plan

log = logging.getLogger(__name__)

SAMPLE_CHUNK = 65536

__all__ = ["standardize", "compose", "sample_density", "sample_system", "HierarchySpec",
           "Subsystem", "run_hierarchy", "HierarchyResult", "Histogram"]


def compose(h: Callable, bases: Sequence, p_hi: int) -> GpcSurrogate:
    """Stochastic-testing fit of ``h`` over the custom per-zeta families.

    ``bases`` holds CustomBasis or RecurrenceFamily objects, one per input of
    ``h``; each needs at least ``p_hi + 1`` recurrence pairs.
    """
    families = []
    for b in bases:
        fam = b.family if isinstance(b, CustomBasis) else b
        if not isinstance(fam, RecurrenceFamily):
            raise ConfigurationError("compose expects custom bases or recurrence families")
        if len(fam.recurrence) < p_hi + 1:
            raise ConfigurationError(
                f"basis with {len(fam.recurrence)} recurrence pairs cannot support order {p_hi}")
        families.append(RecurrenceFamily(fam.recurrence[: p_hi + 1]))
    plan = testing_plan(tuple(families), p_hi)
    return fit_coefficients(h, plan)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    samples: np.ndarray | None = None

    def rows(self):
        return [(float(a), float(b), float(c))
                for a, b, c in zip(self.edges[:-1], self.edges[1:], self.density)]


def _chunks(n: int):
    start = 0
    chunk = 0
    while start < n:
        size = min(SAMPLE_CHUNK, n - start)
        yield chunk, size
        start += size
        chunk += 1


def sample_system(s: GpcSurrogate, n: int, seed: int = 0, lower: Sequence | None = None
                  ) -> np.ndarray:
    """Draw ``n`` values of ``s``.

    Without ``lower`` the inputs are drawn from ``s.distributions``. With
    ``lower`` (one IntermediateVariable per input) each zeta_i is produced by
    drawing its bottom-level parameters and mapping them through the
    standardized subsystem surrogate. Chunk ``c`` uses the generator seeded
    by ``(seed, c)``, so output does not depend on how chunks are scheduled.
    """
    if n < 1:
        raise ConfigurationError("need at least one sample")
    if lower is not None and len(lower) != s.dimension:
        raise ConfigurationError("one intermediate variable per surrogate input is required")
    out = np.empty(n)
    pos = 0
    for chunk, size in _chunks(n):
        rng = np.random.default_rng([seed, chunk])
        if lower is None:
            x = np.column_stack([dist.sample(rng, size) for dist in s.distributions])
        else:
            cols = []
            for z in lower:
                xi = np.column_stack([dist.sample(rng, size) for dist in z.surrogate.distributions])
                cols.append(surrogate_eval(z.surrogate, xi))
            x = np.column_stack(cols)
        out[pos:pos + size] = surrogate_eval(s, x)
        pos += size
    return out


def sample_density(s: GpcSurrogate, n: int, bins: int = 50, seed: int = 0,
                   lower: Sequence | None = None, keep_samples: bool = False) -> Histogram:
    values = sample_system(s, n, seed, lower)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5])
        density = np.array([1.0])
    else:
        density, edges = np.histogram(values, bins=bins, range=(lo, hi), density=True)
    return Histogram(edges, density, values if keep_samples else None)


# ---------------------------------------------------------------------------
# hierarchy files


@dataclass(frozen=True)
class Subsystem:
    name: str
    count: int
    model: ModelSpec | None = None
    surrogate: GpcSurrogate | None = None
    basis: CustomBasis | None = None


@dataclass(frozen=True)
class HierarchySpec:
    subsystems: tuple
    h_text: str
    order: int = 3
    low_order: int = 3
    d_eff: int = 2
    sigma: float = 1e-2
    points: int = 9

    @property
    def q(self) -> int:
        return sum(s.count for s in self.subsystems)

    def h(self):
        return parse(self.h_text, "z", self.q)

    @classmethod
    def from_json(cls, obj: dict, base_dir=None) -> "HierarchySpec":
        from pathlib import Path

        from ._jsonio import read_json

        base = Path(base_dir or ".")
        subs = []
        for entry in obj.get("subsystems", []):
            count = int(entry.get("count", 1))
            if count < 1:
                raise ConfigurationError("subsystem count must be >= 1")
            model = surrogate = basis = None

            def load(key):
                value = entry[key]
                return read_json(base / value) if isinstance(value, str) else value

            if "surrogate" in entry:
                surrogate = GpcSurrogate.from_json(load("surrogate"))
            elif "model" in entry:
                model = model_from_json(load("model"))
            else:
                raise ConfigurationError("each subsystem needs a 'model' or a 'surrogate'")
            if "basis" in entry:
                basis = CustomBasis.from_json(load("basis"))
            subs.append(Subsystem(str(entry.get("name", f"group{len(subs) + 1}")), count,
                                  model, surrogate, basis))
        if not subs:
            raise ConfigurationError("hierarchy needs at least one subsystem")
        if "h" not in obj:
            raise ConfigurationError("hierarchy needs a system-level function 'h'")
        spec = cls(tuple(subs), str(obj["h"]), int(obj.get("order", 3)),
                   int(obj.get("low_order", 3)), int(obj.get("d_eff", 2)),
                   float(obj.get("sigma", 1e-2)), int(obj.get("points", 9)))
        spec.h()  # fail early on a bad expression
        return spec


@dataclass
class HierarchyResult:
    surrogate: GpcSurrogate
    groups: list
    variables: list
    bases: list
    alg1_runs: int = 0
    alg2_runs: int = 0
    timings: dict = field(default_factory=dict)
    testing_points: np.ndarray | None = None

    @property
    def moments(self) -> dict:
        mean, var = surrogate_stats(self.surrogate)
        return {"mean": mean, "variance": var, "std": math.sqrt(var),
                "testing_samples": 0 if self.testing_points is None else len(self.testing_points)}


def _fit_residual(model: Callable, s: GpcSurrogate, n: int, seed: int) -> float:
    """Relative RMS mismatch of surrogate against model on fresh random inputs."""
    rng = np.random.default_rng([seed, 1 << 20])
    x = np.column_stack([dist.sample(rng, n) for dist in s.distributions])
    y = np.asarray(model(x), dtype=float)
    r = surrogate_eval(s, x) - y
    scale = np.std(y) if np.std(y) > 0 else 1.0
    return float(np.sqrt(np.mean(r * r)) / scale)


def run_hierarchy(spec: HierarchySpec, cross: CrossSettings = CrossSettings(), threads: int = 1,
                  residual_samples: int = 2000) -> HierarchyResult:
    """Extract, standardize and build a basis once per group, then compose."""
    timings = {}
    groups = []
    variables = []
    bases = []
    alg1 = alg2 = 0
    t0 = time.perf_counter()
    for sub in spec.subsystems:
        info = {"name": sub.name, "count": sub.count}
        if sub.surrogate is not None:
            surrogate = sub.surrogate
        else:
            cfg = AnchoredConfig(spec.d_eff, spec.sigma, spec.low_order, None, threads)
            anova: AnovaSurrogate = adaptive_decompose(sub.model, sub.model.distributions, cfg)
            alg1 += 1
            surrogate = anova.assembled
            info["samples_used"] = anova.samples_used
            info["fit_residual"] = _fit_residual(sub.model, surrogate, residual_samples, cross.seed)
        z = standardize(surrogate)
        if sub.basis is not None:
            basis = sub.basis
        else:
            basis = custom_basis(z, spec.order, spec.points, cross)
            alg2 += 1
            info["a_ranks"] = basis.info.get("a_ranks")
            info["alg2_evaluations"] = basis.info.get("evaluations")
        info["shift"], info["scale"] = z.shift, z.scale
        groups.append({"info": info, "surrogate": surrogate, "variable": z, "basis": basis})
        variables.extend([z] * sub.count)
        bases.extend([basis] * sub.count)
    timings["low_level_s"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    h = spec.h()
    high = compose(h, bases, spec.order)
    timings["high_level_s"] = time.perf_counter() - t1
    plan = testing_plan(tuple(RecurrenceFamily(b.recurrence[: spec.order + 1]) for b in bases),
                        spec.order)
    log.info("hierarchy: %d Alg.1 runs, %d Alg.2 runs, %d testing samples", alg1, alg2, len(plan))
    return HierarchyResult(high, groups, variables, bases, alg1, alg2, timings, np.array(plan.points))
