"""Scenario generators: skew-normal, negative-binomial, and gaussian mixtures."""

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from stare.errors import ConfigError
from stare.generate import (
    SCENARIO_PRESETS,
    GeneratorSpec,
    read_spec,
    sample_generator,
    sample_mv_skew_normal,
    sample_skew_normal,
    scenario_spec,
    skew_normal_logpdf,
    squared_exponential_correlation,
    write_spec,
)


@pytest.mark.parametrize("shape", [-10.0, -1.0, 0.0, 3.0])
def test_skew_normal_sampler_matches_reference_distribution(shape):
    x = sample_skew_normal(20000, loc=0.0, scale=1.0, shape=shape,
                           rng=np.random.default_rng(5))
    # two-sided KS against the reference implementation's distribution
    stat = stats.kstest(x, stats.skewnorm(shape).cdf)
    assert stat.pvalue > 1e-3


def test_skew_normal_logpdf_integrates_to_one():
    total, _ = quad(lambda t: np.exp(skew_normal_logpdf(t, loc=-3.0, scale=1.5,
                                                        shape=-10.0)), -20, 10)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_skew_normal_logpdf_matches_reference():
    x = np.linspace(-6, 2, 30)
    got = skew_normal_logpdf(x, loc=-3.0, scale=1.5, shape=-10.0)
    want = stats.skewnorm(-10.0, loc=-3.0, scale=1.5).logpdf(x)
    np.testing.assert_allclose(got, want, rtol=1e-9)


def test_mv_skew_normal_coordinate_means():
    # with a shared latent, each coordinate has mean delta * sqrt(2/pi)
    corr = squared_exponential_correlation(4, 0.6)
    x = sample_mv_skew_normal(60000, mean=np.zeros(4), corr=corr, shape=-10.0,
                              rng=np.random.default_rng(9))
    delta = -10.0 / np.sqrt(101.0)
    want = delta * np.sqrt(2 / np.pi)  # -0.7939248114932145
    np.testing.assert_allclose(x.mean(axis=0), want, atol=0.02)


def test_squared_exponential_correlation_structure():
    corr = squared_exponential_correlation(5, 0.6)
    assert corr[0, 0] == 1.0
    assert corr[0, 1] == pytest.approx(np.exp(-1.0 / 0.36), rel=1e-12)
    assert corr[0, 2] == pytest.approx(np.exp(-4.0 / 0.36), rel=1e-12)
    np.linalg.cholesky(corr)  # must be positive definite


def test_negbin_sampler_matches_reference_pmf():
    spec = scenario_spec("negbin3", seed=3)
    one = GeneratorSpec(scenario="negbin-mixture", n=30000, seed=3,
                        weights=(1.0,), negbin_m=(55.0,), negbin_p=(0.5,))
    data, _ = sample_generator(one)
    x = data.observations[:, 0].astype(int)
    assert x.mean() == pytest.approx(55.0, abs=1.0)  # m(1-p)/p = 55
    assert x.var() == pytest.approx(110.0, rel=0.05)
    hi = np.quantile(x, 0.995)
    edges = np.arange(0, hi + 1)
    counts = np.array([(x == v).sum() for v in edges])
    pmf = stats.nbinom(55, 0.5).pmf(edges)
    keep = pmf * x.size >= 5
    stat = stats.chisquare(counts[keep], pmf[keep] / pmf[keep].sum() * counts[keep].sum())
    assert stat.pvalue > 1e-3
    assert spec.negbin_m == [55.0, 75.0, 100.0]


def test_generator_spec_round_trip(tmp_path):
    spec = scenario_spec("skewnorm-large-small", seed=42)
    path = tmp_path / "spec.json"
    write_spec(spec, str(path))
    back = read_spec(str(path))
    assert back == spec


def test_generator_spec_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        GeneratorSpec.from_jsonable({"scenario": "gaussian-mixture", "n": 10,
                                     "seed": 0, "weights": [1.0], "locations": [0.0],
                                     "scales": [1.0], "mystery": True})


def test_scenario_presets_cover_documented_aliases():
    want = {"skewnorm-same", "skewnorm-different", "skewnorm-large-small",
            "skewnorm-small-large", "skewnorm-large-large", "negbin3",
            "highdim3", "gauss-two"}
    assert want <= set(SCENARIO_PRESETS)
    # frozen scenario parameters
    same = scenario_spec("skewnorm-same")
    assert same.n == 10000 and same.weights == [0.5, 0.5]
    assert same.locations == [-3.0, 3.0] and same.skewness == [-10.0, -10.0]
    sl = scenario_spec("skewnorm-small-large")
    assert sl.n == 5000 and sl.weights == [0.95, 0.05]
    assert sl.skewness == [-1.0, -10.0]
    hd = scenario_spec("highdim3")
    assert hd.dim == 50 and hd.corr_sigma == 0.6 and hd.n == 10000


def test_scenario_spec_overrides_n_and_seed():
    spec = scenario_spec("skewnorm-same", n=1234, seed=77)
    assert spec.n == 1234 and spec.seed == 77


def test_sample_generator_reproducible_and_labeled():
    spec = scenario_spec("skewnorm-different", n=2000, seed=1)
    d1, z1 = sample_generator(spec)
    d2, z2 = sample_generator(spec)
    np.testing.assert_array_equal(d1.observations, d2.observations)
    np.testing.assert_array_equal(z1, z2)
    counts = np.bincount(z1, minlength=2)
    stat = stats.chisquare(counts, 2000 * np.asarray(spec.weights))
    assert stat.pvalue > 1e-3


def test_sample_generator_seed_override_changes_draw():
    spec = scenario_spec("skewnorm-same", n=500, seed=1)
    d1, _ = sample_generator(spec)
    d2, _ = sample_generator(spec, seed=2)
    assert not np.array_equal(d1.observations, d2.observations)


def test_highdim_generator_shape_and_separation():
    spec = scenario_spec("highdim3", n=3000, seed=0)
    data, z = sample_generator(spec)
    assert data.observations.shape == (3000, 50)
    for label, loc in [(0, -3.0), (1, 0.0), (2, 3.0)]:
        mu = data.observations[z == label].mean(axis=0)
        np.testing.assert_allclose(mu, loc - 0.7939248114932145, atol=0.15)


def test_generator_spec_validation():
    with pytest.raises(ConfigError):
        scenario_spec("no-such-scenario")
    with pytest.raises(ConfigError):
        GeneratorSpec(scenario="skew-normal-mixture", n=100, seed=0,
                      weights=(0.5, 0.6), locations=(0.0, 1.0),
                      scales=(1.0, 1.0), skewness=(0.0, 0.0)).validate()
