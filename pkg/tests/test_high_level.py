import json
import math

import numpy as np
import pytest

from ttanova.dist_poly import DistributionSpec, RecurrenceFamily, recurrence_coefficients
from ttanova.errors import ConfigurationError, UnknownSymbol
from ttanova.gpc_basis import GpcSurrogate, surrogate_stats
from ttanova.hier_quadrature import standardize
from ttanova.high_level import (HierarchySpec, compose, run_hierarchy, sample_density,
                                sample_system)
from ttanova.model_def import parse

G = DistributionSpec.gaussian()
HERMITE = RecurrenceFamily(recurrence_coefficients(G, 6))


def test_compose_over_hermite_reproduces_polynomials():
    h = parse("1 + z1 + z1*z2 + 0.5*z2^2", "z", 2)
    s = compose(h, [HERMITE, HERMITE], 3)
    mean, var = surrogate_stats(s)
    assert mean == pytest.approx(1.5, abs=1e-12)
    assert var == pytest.approx(1 + 1 + 0.5, rel=1e-12)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 2))
    np.testing.assert_allclose(s(x), h(x), rtol=1e-10)


def test_compose_rejects_short_bases():
    short = RecurrenceFamily(recurrence_coefficients(G, 2))
    with pytest.raises(ConfigurationError):
        compose(lambda z: z[:, 0], [short], 3)
    with pytest.raises(ConfigurationError):
        compose(lambda z: z[:, 0], [G], 1)


def test_sampling_is_reproducible_and_chunk_invariant():
    s = GpcSurrogate(2, 2, (G, G), {(0, 0): 1.0, (1, 0): 0.5, (1, 1): 0.2})
    a = sample_system(s, 70000, seed=4)
    b = sample_system(s, 70000, seed=4)
    np.testing.assert_array_equal(a, b)
    # whole chunks are drawn from their own generators
    np.testing.assert_array_equal(sample_system(s, 65536, seed=4), a[:65536])
    assert abs(a.mean() - 1.0) < 5 * math.sqrt(0.29 / a.size)


def test_two_level_sampling_uses_lower_surrogates():
    low = GpcSurrogate(1, 1, (G,), {(0,): 3.0, (1,): 2.0})
    z = standardize(low)
    top = GpcSurrogate(1, 1, (HERMITE,), {(1,): 1.0})
    vals = sample_system(top, 50000, 1, [z])
    assert abs(vals.mean()) < 0.02 and abs(vals.std() - 1) < 0.02
    with pytest.raises(ConfigurationError):
        sample_system(top, 10, 1, [z, z])


def test_density_histogram():
    s = GpcSurrogate(1, 1, (G,), {(1,): 1.0})
    hist = sample_density(s, 20000, bins=30, seed=0)
    widths = np.diff(hist.edges)
    assert np.sum(hist.density * widths) == pytest.approx(1.0)
    assert len(hist.rows()) == 30
    flat = sample_density(GpcSurrogate(1, 0, (G,), {(0,): 2.0}), 10)
    assert flat.density.tolist() == [1.0]


def small_hierarchy(tmp_path=None):
    model = {"dimension": 2, "model": {"expr": "1 + 0.5*x1 + 0.2*x2 + 0.1*x1*x2"},
             "distributions": [{"family": "gaussian", "params": [0, 1]},
                               {"family": "uniform", "params": [-1, 1]}]}
    return {"subsystems": [{"name": "a", "count": 2, "model": model},
                           {"name": "b", "model": {"dimension": 1, "model": {"expr": "x1 + x1^2"},
                                                   "distributions": [{"family": "gaussian",
                                                                      "params": [0, 1]}]}}],
            "h": "z1 + z2*z3 + 0.1*z1^2", "order": 2, "low_order": 2, "d_eff": 2,
            "sigma": 0.0, "points": 6}


def test_hierarchy_spec_validation(tmp_path):
    spec = HierarchySpec.from_json(small_hierarchy())
    assert spec.q == 3
    bad = small_hierarchy()
    bad["h"] = "z4"
    with pytest.raises(UnknownSymbol):
        HierarchySpec.from_json(bad)
    for key in ("subsystems", "h"):
        obj = small_hierarchy()
        del obj[key]
        with pytest.raises(ConfigurationError):
            HierarchySpec.from_json(obj)
    model_file = tmp_path / "m.json"
    model_file.write_text(json.dumps(small_hierarchy()["subsystems"][1]["model"]))
    obj = {"subsystems": [{"model": "m.json"}], "h": "z1"}
    assert HierarchySpec.from_json(obj, base_dir=tmp_path).subsystems[0].model.dimension == 1


def test_run_hierarchy_small_against_monte_carlo():
    spec = HierarchySpec.from_json(small_hierarchy())
    result = run_hierarchy(spec)
    assert result.alg1_runs == 2 and result.alg2_runs == 2
    assert result.moments["testing_samples"] == math.comb(2 + 3, 3)
    a = spec.subsystems[0].model
    b = spec.subsystems[1].model
    rng = np.random.default_rng(0)
    n = 200000
    za = [result.groups[0]["variable"], result.groups[0]["variable"]]
    zb = result.groups[1]["variable"]
    cols = []
    for z, model in ((za[0], a), (za[1], a), (zb, b)):
        x = np.column_stack([d.sample(rng, n) for d in model.distributions])
        cols.append((model(x) - z.shift) / z.scale)
    y = spec.h()(np.column_stack(cols))
    std = y.std()
    assert abs(result.moments["mean"] - y.mean()) <= 0.02 * std
    assert abs(result.moments["std"] - std) <= 0.02 * std
