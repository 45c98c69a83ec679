"""Structurally aware loss, loss curves, model selection, stable regions."""

import numpy as np
import pytest
from conftest import profile_from, random_profile

from stare.data import Dataset
from stare.divergence import estimator_from_tag
from stare.em import EmConfig, fit_em
from stare.errors import ConfigError, DataError
from stare.families import (
    GAUSSIAN_1D,
    GaussianComponent,
    MixtureParams,
    sample_mixture,
)
from stare.selection import (
    ComponentDivergence,
    ComponentDivergenceProfile,
    LossCurve,
    argmin_partition,
    component_divergences,
    default_rho_max,
    fit_candidates,
    loss_curve,
    penalized_loss,
    select_k,
    stable_region_select,
    structurally_aware_loss,
)


# ---------------------------------------------------------------- loss values

def test_loss_hand_example():
    # two components: 10 * max(0, 0.5 - rho) + 30 * max(0, 0.1 - rho)
    prof = profile_from([10, 30], [0.5, 0.1])
    assert structurally_aware_loss(prof, 0.0) == pytest.approx(10 * 0.5 + 30 * 0.1)
    assert structurally_aware_loss(prof, 0.2) == pytest.approx(10 * 0.3)
    assert structurally_aware_loss(prof, 0.5) == 0.0
    assert penalized_loss(prof, 0.2, lam=0.25) == pytest.approx(10 * 0.3 + 0.5)


def test_loss_rejects_negative_rho_and_lambda():
    prof = profile_from([5], [0.3])
    with pytest.raises(ConfigError):
        structurally_aware_loss(prof, -0.1)
    with pytest.raises(ConfigError):
        penalized_loss(prof, 0.1, lam=0.0)


def test_loss_nonnegative_and_zero_iff_within_tolerance():
    rng = np.random.default_rng(0)
    for _ in range(200):
        prof = random_profile(rng)
        rho = float(rng.uniform(0, 2.5))
        val = structurally_aware_loss(prof, rho)
        assert val >= 0.0
        within = all(c.divergence <= rho for c in prof.per_component if c.n > 0)
        assert (val == 0.0) == within


def test_loss_monotone_in_rho():
    rng = np.random.default_rng(1)
    for _ in range(200):
        prof = random_profile(rng)
        r1, r2 = np.sort(rng.uniform(0, 2.5, size=2))
        assert structurally_aware_loss(prof, r1) >= structurally_aware_loss(prof, r2)


def test_loss_permutation_invariant():
    rng = np.random.default_rng(2)
    for _ in range(100):
        prof = random_profile(rng)
        perm = rng.permutation(prof.k)
        shuffled = profile_from(prof.counts[perm], prof.divergences[perm])
        for rho in rng.uniform(0, 2.5, size=3):
            assert structurally_aware_loss(shuffled, rho) == pytest.approx(
                structurally_aware_loss(prof, rho), rel=1e-12)


def test_empty_component_contributes_nothing_but_still_pays_penalty():
    full = profile_from([10, 20], [0.4, 0.2])
    padded = profile_from([10, 20, 0], [0.4, 0.2, 0.0])
    rho = 0.1
    assert structurally_aware_loss(padded, rho) == pytest.approx(
        structurally_aware_loss(full, rho))
    assert penalized_loss(padded, rho, 0.5) == pytest.approx(
        penalized_loss(full, rho, 0.5) + 0.5)


def test_penalty_separation_when_both_fit_within_tolerance():
    p2 = profile_from([50, 50], [0.1, 0.2])
    p3 = profile_from([30, 30, 40], [0.15, 0.1, 0.2])
    lam, rho = 0.7, 0.5
    assert penalized_loss(p3, rho, lam) - penalized_loss(p2, rho, lam) == pytest.approx(lam)


def test_profile_validation():
    with pytest.raises(ConfigError):
        profile_from([10, 10], [0.5, np.nan])
    with pytest.raises(ConfigError):
        # zero-count component must carry zero divergence
        ComponentDivergenceProfile(
            k=1, per_component=[ComponentDivergence(0, 0.0, 0.3)], total_n=0.0)
    with pytest.raises(ConfigError):
        ComponentDivergenceProfile(
            k=1, per_component=[ComponentDivergence(0, 10.0, 0.1)], total_n=25.0)


# ---------------------------------------------------------------- loss curves

def test_loss_curve_matches_pointwise_loss_everywhere():
    rng = np.random.default_rng(3)
    for _ in range(50):
        prof = random_profile(rng)
        lam = float(rng.uniform(0.01, 2.0))
        curve = loss_curve(prof, lam)
        rhos = np.concatenate([rng.uniform(0, 3.0, size=40), prof.divergences,
                               [0.0, prof.divergences.max() + 1.0]])
        for rho in rhos:
            direct = penalized_loss(prof, float(rho), lam)
            assert curve.value(float(rho)) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_loss_curve_structure_hand_example():
    prof = profile_from([10, 30], [0.5, 0.1])
    curve = loss_curve(prof, lam=0.25)
    np.testing.assert_allclose(curve.breakpoints, [0.1, 0.5])
    # slopes: below 0.1 both hinges active (-40); between, only the 0.5 one (-10)
    np.testing.assert_allclose(curve.slopes, [-40.0, -10.0, 0.0])
    assert curve.value(10.0) == pytest.approx(2 * 0.25)  # lambda * k exactly
    assert curve.max_breakpoint() == pytest.approx(0.5)


def test_loss_curve_flat_value_is_exactly_lambda_k():
    rng = np.random.default_rng(4)
    for _ in range(30):
        prof = random_profile(rng)
        lam = float(rng.uniform(0.01, 1.0))
        curve = loss_curve(prof, lam)
        top = prof.divergences.max() if prof.k else 0.0
        assert curve.value(top + 1e-9) == lam * prof.k


def test_loss_curve_json_round_trippable_fields():
    prof = profile_from([5, 5], [0.2, 0.6])
    curve = loss_curve(prof, lam=0.1)
    blob = curve.to_jsonable()
    assert blob["k"] == 2 and blob["lambda"] == 0.1
    assert len(blob["segments"]) == len(blob["breakpoints"]) + 1
    assert blob["segments"][-1]["rho_hi"] == "inf"  # JSON-safe sentinel
    for seg in blob["segments"][:-1]:
        assert seg["rho_lo"] <= seg["rho_hi"]


# ---------------------------------------------------------------- partitions

def hand_curves():
    # K=1: single component, large divergence; K=2: tight; K=3: tighter + penalty
    c1 = loss_curve(profile_from([100], [1.0]), lam=0.1)
    c2 = loss_curve(profile_from([60, 40], [0.2, 0.3]), lam=0.1)
    c3 = loss_curve(profile_from([50, 30, 20], [0.2, 0.25, 0.28]), lam=0.1)
    return [c1, c2, c3]


def test_argmin_partition_hand_checked():
    curves = hand_curves()
    regions = argmin_partition(curves, rho_max=1.5)
    # above all breakpoints the smallest penalty wins
    assert regions[-1][0] == 1
    assert regions[-1][2] == pytest.approx(1.5)
    ks = [k for k, _, _ in regions]
    assert ks == sorted(ks, reverse=True) or len(set(ks)) == len(ks)
    # boundaries tile [0, rho_max] without gaps
    for (_, lo1, hi1), (_, lo2, _) in zip(regions, regions[1:]):
        assert hi1 == pytest.approx(lo2)
    assert regions[0][1] == 0.0


def test_argmin_partition_midpoints_agree_with_direct_argmin():
    rng = np.random.default_rng(5)
    for _ in range(25):
        profs = [random_profile(rng, k) for k in (1, 2, 3, 4)]
        lam = 0.05
        curves = [loss_curve(p, lam) for p in profs]
        rho_max = default_rho_max(curves)
        regions = argmin_partition(curves, rho_max)
        for k, lo, hi in regions:
            mid = 0.5 * (lo + hi)
            vals = [(c.value(mid), c.k) for c in curves]
            assert min(vals)[1] == k


def test_stable_region_select_picks_first_wide_region():
    curves = hand_curves()
    verdict = stable_region_select(curves, rho_max=1.5, width_fraction=0.2)
    # regions: K=3 on [0, 0.2975], K=2 on [0.2975, 0.999], K=1 above.
    # threshold 0.2 * 1.5 = 0.3 disqualifies the K=3 sliver (width 0.2975)
    assert verdict.k == 2
    assert verdict.confident
    lo, hi = verdict.interval
    assert lo == pytest.approx(0.2975, abs=1e-9)
    assert hi == pytest.approx(0.999, abs=1e-9)


def test_stable_region_falls_back_to_widest_when_none_qualify():
    curves = hand_curves()
    verdict = stable_region_select(curves, rho_max=1.5, width_fraction=0.99)
    # threshold 1.485 exceeds every region width; widest is K=2 at ~0.7015
    assert not verdict.confident
    assert verdict.k == 2
    lo, hi = verdict.interval
    assert hi - lo == pytest.approx(0.999 - 0.2975, abs=1e-9)


def test_stable_region_respects_explicit_rho_max():
    curves = hand_curves()
    wide = stable_region_select(curves, rho_max=0.29, width_fraction=0.2)
    # the whole clipped range [0, 0.29] is won by K=3
    assert wide.k == 3
    assert wide.confident
    assert wide.rho_max == pytest.approx(0.29)
    assert wide.interval == (pytest.approx(0.0), pytest.approx(0.29))


def test_default_rho_max_is_1_5x_largest_breakpoint():
    curves = hand_curves()
    assert default_rho_max(curves) == pytest.approx(1.5)


def test_stable_region_requires_curves():
    with pytest.raises(ConfigError):
        stable_region_select([], rho_max=1.0)


# ---------------------------------------------------------------- end to end

def two_gaussians(n=3000, seed=0):
    mix = MixtureParams(
        family=GAUSSIAN_1D,
        weights=np.array([0.5, 0.5]),
        components=[GaussianComponent(-3.0, 1.0), GaussianComponent(3.0, 1.0)],
    )
    data, z = sample_mixture(mix, n, seed=seed)
    return data


def test_component_divergences_profile_shape():
    data = two_gaussians()
    est = estimator_from_tag("knn-adaptive")
    cands = fit_candidates(data, GAUSSIAN_1D, 3, EmConfig(seed=0), est, seed=0)
    prof = next(c for c in cands if c.k == 2).profile
    assert prof.k == 2
    assert prof.counts.sum() == pytest.approx(data.n)
    assert np.all(prof.divergences >= 0)


def test_select_k_well_specified_two_component_data():
    data = two_gaussians()
    est = estimator_from_tag("knn-adaptive")
    result = select_k(data, GAUSSIAN_1D, 3, rho=0.2, lam=0.01,
                      em_config=EmConfig(seed=0), estimator=est, seed=0)
    assert result.chosen_k == 2
    assert result.provenance["estimator"] == "knn-adaptive"
    chosen = result.chosen()
    assert chosen.k == 2 and chosen.ok


def test_select_k_generous_rho_prefers_one_component():
    data = two_gaussians(n=1000, seed=2)
    est = estimator_from_tag("knn-adaptive")
    result = select_k(data, GAUSSIAN_1D, 3, rho=50.0, lam=0.01,
                      em_config=EmConfig(seed=0), estimator=est, seed=0)
    assert result.chosen_k == 1  # every divergence is inside the tolerance


def test_select_k_reproducible():
    data = two_gaussians(n=1200, seed=3)
    est = estimator_from_tag("knn-fixed:10")
    a = select_k(data, GAUSSIAN_1D, 3, rho=0.2, lam=0.01,
                 em_config=EmConfig(seed=7), estimator=est, seed=7)
    b = select_k(data, GAUSSIAN_1D, 3, rho=0.2, lam=0.01,
                 em_config=EmConfig(seed=7), estimator=est, seed=7)
    assert a.chosen_k == b.chosen_k
    for ca, cb in zip(a.candidates, b.candidates):
        if ca.ok:
            np.testing.assert_array_equal(ca.profile.divergences, cb.profile.divergences)


def test_component_divergences_validates_assignments():
    data = two_gaussians(n=200, seed=4)
    est = estimator_from_tag("knn-fixed:5")
    model = fit_em(data, GAUSSIAN_1D, 2, EmConfig(seed=0))
    with pytest.raises(DataError):
        component_divergences(model, np.zeros(50, dtype=int), data, est)
    bad = np.zeros(data.n, dtype=int)
    bad[0] = 5  # references a component the model does not have
    with pytest.raises(DataError):
        component_divergences(model, bad, data, est)


def test_tiny_component_yields_infinite_divergence_flag():
    # a component with fewer points than the estimator needs becomes +inf
    data = two_gaussians(n=70, seed=4)
    est = estimator_from_tag("knn-fixed:35")  # needs at least 36 points
    model = fit_em(data, GAUSSIAN_1D, 2, EmConfig(seed=0))
    z = np.array([0] * 40 + [1] * 30)
    prof = component_divergences(model, z, data, est)
    assert prof.has_infinite()
    assert np.isfinite(prof.divergences[0]) and np.isinf(prof.divergences[1])
    assert structurally_aware_loss(prof, 1e6) == np.inf
    curve = loss_curve(prof, lam=0.01)
    assert curve.infinite
    assert curve.value(1e9) == np.inf


def test_fit_candidates_z_replicates_average():
    data = two_gaussians(n=800, seed=5)
    est = estimator_from_tag("knn-fixed:5")
    single = fit_candidates(data, GAUSSIAN_1D, 2, EmConfig(seed=2), est, seed=2,
                            z_replicates=1)
    averaged = fit_candidates(data, GAUSSIAN_1D, 2, EmConfig(seed=2), est, seed=2,
                              z_replicates=4)
    one = next(c for c in averaged if c.k == 2)
    assert len(one.replicate_profiles) == 4
    assert one.profile.counts.sum() == pytest.approx(data.n)
    # merging is exact: the merged loss is the mean of the replicate losses
    for rho in (0.0, 0.05, 0.2, 1.0):
        merged = penalized_loss(one.profile, rho, 0.01)
        mean = np.mean([penalized_loss(p, rho, 0.01) for p in one.replicate_profiles])
        assert merged == pytest.approx(mean, rel=1e-12)
    base = next(c for c in single if c.k == 2)
    assert base.profile.k == one.profile.k
    # the first replicate reuses the single-draw assignment stream
    np.testing.assert_array_equal(
        base.profile.divergences, one.replicate_profiles[0].divergences)


def test_selection_result_json_shape():
    data = two_gaussians(n=600, seed=6)
    est = estimator_from_tag("knn-fixed:5")
    result = select_k(data, GAUSSIAN_1D, 2, rho=0.3, lam=0.01,
                      em_config=EmConfig(seed=0), estimator=est, seed=0)
    blob = result.to_jsonable()
    assert blob["chosen_k"] == result.chosen_k
    assert {p["k"] for p in blob["per_k"]} == {1, 2}
    for p in blob["per_k"]:
        assert "loss" in p and ("model" in p or "failure" in p)
