"""Acceptance criteria, one test each, with their stated tolerances and time budgets.

A pass/fail line per criterion is printed in the terminal summary.
"""
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from ttanova import _jsonio
from ttanova.anova import AnchoredConfig, adaptive_decompose, sample_count, sensitivities
from ttanova.dist_poly import DistributionSpec
from ttanova.gpc_basis import GpcSurrogate, basis_size, surrogate_eval, total_degree_set
from ttanova.hier_quadrature import (CrossSettings, build_eval_table, custom_basis, dense_moment,
                                     standardize, tt_moment, zeta_tensor)
from ttanova.high_level import HierarchySpec, run_hierarchy
from ttanova.model_def import builtin, sparse46_coefficients
from ttanova.tensor_train import (FunctionalTensor, TensorTrain, tt_cross, tt_eval_many,
                                  tt_frobenius, tt_inner_rank1)

MODELS = Path(__file__).resolve().parents[1] / "models"


def criterion(number):
    def mark(fn):
        fn.criterion = number
        return fn
    return mark


def sum_of_products(d, m, terms, seed):
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(0.5, 1.5, size=(d, m)) for _ in range(terms)]
    cols = np.arange(d)

    def oracle(idx):
        return sum(np.prod(fac[cols, idx], axis=1) for fac in factors)

    return FunctionalTensor((m,) * d, oracle)


@criterion(1)
def test_criterion_01_combinatorics(record_criterion):
    t0 = time.perf_counter()
    assert basis_size(4, 3) == 35 == len(total_degree_set(4, 3))
    assert basis_size(46, 3) == 18424
    counts = [sample_count(sizes, 3) for sizes in ([46, 0, 0], [46, 3, 0], [46, 10, 1], [46, 21, 1])]
    assert counts == [185, 215, 305, 415]
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    record_criterion(1, "combinatorics K(3,4)=35, K(3,46)=18424, 185/215/305/415", True,
                     f"{elapsed:.3f} s")


@criterion(2)
def test_criterion_02_quadrature_exactness(record_criterion):
    t0 = time.perf_counter()
    families = [DistributionSpec.gaussian(), DistributionSpec.gaussian(1.0, 0.03),
                DistributionSpec.uniform(-1, 1), DistributionSpec.uniform(-math.pi, math.pi),
                DistributionSpec.uniform(2, 5), DistributionSpec.gamma(2.0, 1.0),
                DistributionSpec.gamma(0.5, 2.0), DistributionSpec.gamma(7.0, 0.3)]
    worst = 0.0
    for dist in families:
        for n in range(1, 11):
            rule = dist.gauss_rule(n)
            for k in range(2 * n):
                exact = dist.moment(k)
                err = abs(rule.integrate(lambda x: x ** k) - exact) / max(1.0, abs(exact))
                worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10
    assert elapsed < 1.0
    record_criterion(2, "Gauss rules exact to degree 2n-1, n <= 10", True,
                     f"max rel err {worst:.1e}, {elapsed:.2f} s")


@criterion(3)
def test_criterion_03_tensor_train(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 6))
        shape = rng.integers(1, 5, size=d)
        ranks = [1] + list(rng.integers(1, 4, size=d - 1)) + [1]
        tt = TensorTrain(tuple(rng.standard_normal((ranks[k], n, ranks[k + 1]))
                               for k, n in enumerate(shape)))
        dense = tt.full()
        weights = [rng.uniform(0, 1, n) for n in shape]
        ref = dense
        for w in weights:
            ref = np.tensordot(ref, w, axes=([0], [0]))
        ref = float(ref)
        worst = max(worst, abs(tt_inner_rank1(tt, weights) - ref) / max(abs(ref), 1e-300),
                    abs(tt_frobenius(tt) - np.linalg.norm(dense)) / np.linalg.norm(dense))
    assert worst <= 1e-12
    f = sum_of_products(46, 9, 2, seed=3)
    tt = tt_cross(f, eps=1e-12)
    idx = np.random.default_rng(77).integers(0, 9, size=(10 ** 4, 46))
    exact = f(idx)
    err = np.linalg.norm(tt_eval_many(tt, idx) - exact) / np.linalg.norm(exact)
    elapsed = time.perf_counter() - t0
    assert max(tt.ranks[1:-1]) <= 2
    assert err <= 1e-10
    assert elapsed < 30
    record_criterion(3, "TT contractions vs dense; cross of rank-2 sum at d=46", True,
                     f"contraction err {worst:.1e}, cross err {err:.1e}, {elapsed:.1f} s")


@criterion(4)
def test_criterion_04_rank_of_zeta_tensor(record_criterion):
    t0 = time.perf_counter()
    model = builtin("sparse46")
    s = GpcSurrogate(46, 3, model.distributions, sparse46_coefficients())
    z = standardize(s).surrogate
    table = build_eval_table(z.distributions, 3, 9)
    a_tt = tt_cross(zeta_tensor(z, table), eps=1e-12)
    elapsed = time.perf_counter() - t0
    interior = max(a_tt.ranks[1:-1])
    assert interior <= 4
    assert elapsed < 60
    record_criterion(4, "sparse46 zeta tensor max interior rank <= 4", True,
                     f"max rank {interior}, {elapsed:.1f} s")


@criterion(5)
def test_criterion_05_custom_basis_ground_truth(record_criterion):
    t0 = time.perf_counter()
    g = DistributionSpec.gaussian()
    basis = custom_basis(standardize(GpcSurrogate(1, 1, (g,), {(1,): 1.0})), 3, 9)
    x, w = hermite_e.hermegauss(4)
    node_err = np.abs(basis.rule.nodes - x).max()
    weight_err = np.abs(basis.rule.weights - w / w.sum()).max()
    assert node_err <= 1e-8 and weight_err <= 1e-8
    rng = np.random.default_rng(5)
    fams = [g, DistributionSpec.uniform(-1, 1), DistributionSpec.gamma(3.0, 1.0)]
    worst = natural = 0.0
    for d in (1, 2, 3):
        for _ in range(3):
            dists = tuple(fams[int(i)] for i in rng.integers(0, 3, size=d))
            coeffs = {a: rng.standard_normal() for a in total_degree_set(d, 3)
                      if rng.uniform() < 0.6}
            coeffs[(1,) + (0,) * (d - 1)] = 1.0
            s = standardize(GpcSurrogate(d, 3, dists, coeffs)).surrogate
            table = build_eval_table(dists, 3, 6)
            a_tt = tt_cross(zeta_tensor(s, table))
            for deg in range(8):
                q = np.zeros(deg + 1)
                q[deg] = 1.0
                value, _ = tt_moment(a_tt, q, table, CrossSettings())
                ref = dense_moment(s, q, 6)
                worst = max(worst, abs(value - ref) / max(1.0, abs(ref)))
                # error on the integrand's own scale sqrt(E[q^2]), which rounding cannot beat
                rms = math.sqrt(dense_moment(s, np.polynomial.polynomial.polymul(q, q), 6))
                natural = max(natural, abs(value - ref) / rms)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10, (f"moment rel err {worst:.2e} > 1e-10; "
                            f"error relative to sqrt(E[q^2]) is {natural:.1e}")
    assert elapsed < 30
    record_criterion(5, "Gaussian passthrough = Gauss-Hermite; TT moments = full grid", True,
                     f"node err {node_err:.1e}, moment err {worst:.1e}, {elapsed:.1f} s")


def random_pairwise_cubic(rng, d):
    terms = [((k,), (deg,), rng.standard_normal()) for k in range(d) for deg in (1, 2, 3)]
    for a, b in itertools.combinations(range(d), 2):
        if rng.uniform() < 0.4:
            da = int(rng.integers(1, 3))
            terms.append(((a, b), (da, int(rng.integers(1, 4 - da))), rng.standard_normal()))
    c0 = rng.standard_normal()

    def model(x):
        out = np.full(x.shape[0], c0)
        for ks, degs, c in terms:
            t = np.full(x.shape[0], c)
            for k, deg in zip(ks, degs):
                t = t * x[:, k] ** deg
            out = out + t
        return out

    return model


@criterion(6)
def test_criterion_06_anova_exact_recovery(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    fams = [DistributionSpec.gaussian(), DistributionSpec.uniform(-1, 1),
            DistributionSpec.gamma(2.0, 1.0), DistributionSpec.gaussian(1.0, 0.5)]
    worst = 0.0
    for d in (2, 5, 10):
        model = random_pairwise_cubic(rng, d)
        dists = tuple(fams[k % 4] for k in range(d))
        result = adaptive_decompose(model, dists, AnchoredConfig(d_eff=2, sigma=0.0, order=3))
        x = np.column_stack([dist.sample(rng, 100) for dist in dists])
        y = model(x)
        worst = max(worst, np.abs(surrogate_eval(result.assembled, x) - y).max() / np.abs(y).max())
    additive = builtin("additive_quadratic", c=[1.0, -0.5, 2.0, 0.25, 1.5, -1.0])
    result = adaptive_decompose(additive, additive.distributions, AnchoredConfig(2, 0.0, 3))
    bivariate = max(t.variance for t in result.terms if len(t.index_set) == 2)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-8
    assert bivariate <= 1e-20
    assert elapsed < 10
    record_criterion(6, "sigma=0 anchored ANOVA recovers pairwise cubics", True,
                     f"rel err {worst:.1e}, bivariate var {bivariate:.1e}, {elapsed:.1f} s")


def ishigami_indices(a=7.0, b=0.1):
    v1 = 0.5 * (1 + b * math.pi ** 4 / 5) ** 2
    v2 = a * a / 8
    v13 = b * b * math.pi ** 8 * (1 / 18 - 1 / 50)
    var = v1 + v2 + v13
    return np.array([v1, v2, 0.0]) / var, np.array([v1 + v13, v2, v13]) / var


@criterion(7)
def test_criterion_07_ishigami_sensitivities(record_criterion):
    t0 = time.perf_counter()
    model = builtin("ishigami")
    result = adaptive_decompose(model, model.distributions, AnchoredConfig(3, 0.0, 9))
    rep = sensitivities(result.assembled)
    main, total = ishigami_indices()
    err = max(np.abs(rep.main - main).max(), np.abs(rep.total - total).max())
    elapsed = time.perf_counter() - t0
    assert err <= 2e-2
    assert elapsed < 30
    record_criterion(7, "Ishigami main/total indices at p=9", True,
                     f"max abs err {err:.1e}, {elapsed:.1f} s")


@criterion(8)
def test_criterion_08_adaptive_pruning(record_criterion):
    t0 = time.perf_counter()
    model = builtin("sparse46")
    result = adaptive_decompose(model, model.distributions, AnchoredConfig(d_eff=3, sigma=1e-2))
    sizes = [len(s) for s in result.level_sets]
    elapsed = time.perf_counter() - t0
    assert set(result.level_sets[1]) == {(4, 5), (4, 7), (5, 7)}
    assert sizes == [46, 3, 0]
    assert result.samples_used == sample_count(sizes, 3) == 215
    assert elapsed < 60
    record_criterion(8, "sparse46 sigma=1e-2 keeps the 3 dominant pairs, 215 samples", True,
                     f"levels {sizes}, {elapsed:.1f} s")


@criterion(9)
def test_criterion_09_end_to_end_hierarchy(record_criterion):
    t0 = time.perf_counter()
    spec = HierarchySpec.from_json(_jsonio.read_json(MODELS / "hierarchy.json"), MODELS)
    result = run_hierarchy(spec)
    pipeline = time.perf_counter() - t0
    assert result.moments["testing_samples"] == 35
    assert result.alg2_runs == 1
    # two-level Monte Carlo through the true subsystem models
    rng = np.random.default_rng(0)
    n = 10 ** 5
    cols = []
    for sub in spec.subsystems:
        z = next(g["variable"] for g in result.groups if g["info"]["name"] == sub.name)
        for _ in range(sub.count):
            x = np.column_stack([d.sample(rng, n) for d in sub.model.distributions])
            cols.append((sub.model(x) - z.shift) / z.scale)
    y = spec.h()(np.column_stack(cols))
    mc_mean, mc_std = float(y.mean()), float(y.std(ddof=1))
    mean_err = abs(result.moments["mean"] - mc_mean) / mc_std
    std_err = abs(result.moments["std"] - mc_std) / mc_std
    assert mean_err <= 5e-3 and std_err <= 5e-3
    assert pipeline <= 600
    record_criterion(9, "4-subsystem hierarchy: 35 samples, one basis build, MC moments", True,
                     f"mean {mean_err:.1e} std, std {std_err:.1e} std, {pipeline:.1f} s")


@criterion(10)
def test_criterion_10_linear_cost(record_criterion):
    t0 = time.perf_counter()
    dims = np.array([8, 16, 32, 64])
    counts = []
    for d in dims:
        f = sum_of_products(int(d), 9, 2, seed=int(d))
        tt = tt_cross(f, eps=1e-12)
        counts.append(tt.info["evaluations"])
    counts = np.array(counts, dtype=float)
    slope, intercept = np.polyfit(dims, counts, 1)
    resid = counts - (slope * dims + intercept)
    r2 = 1 - resid @ resid / np.sum((counts - counts.mean()) ** 2)
    elapsed = time.perf_counter() - t0
    assert r2 >= 0.98
    record_criterion(10, "cross oracle calls linear in d", True,
                     f"counts {counts.astype(int).tolist()}, R^2 {r2:.4f}, {elapsed:.1f} s")
