"""F-measure scoring, tolerance calibration, and tolerance transfer."""

import json

import numpy as np
import pytest
from conftest import profile_from

from stare.data import Dataset
from stare.em import FittedModel
from stare.errors import ConfigError, DataError
from stare.evaluation import (
    CalibrationResult,
    calibrate_rho,
    choose_k_for_rho,
    f_measure,
)
from stare.families import GAUSSIAN_1D, GaussianComponent, MixtureParams
from stare.selection import CandidateFit, loss_curve


# ------------------------------------------------------------------ f_measure

def test_f_measure_perfect_clustering_is_one():
    truth = np.array([0, 0, 1, 1, 2, 2, 2])
    assert f_measure(truth, truth) == pytest.approx(1.0)
    # label values are arbitrary; any bijective relabeling is still perfect
    relabeled = np.array([5, 5, 9, 9, 3, 3, 3])
    assert f_measure(relabeled, truth) == pytest.approx(1.0)


def test_f_measure_merged_clusters_hand_value():
    # predicted lumps two equal truth clusters together:
    # each truth cluster scores 2*2 / (2 + 4) = 2/3
    truth = np.array([0, 0, 1, 1])
    pred = np.zeros(4, dtype=int)
    assert f_measure(pred, truth) == pytest.approx(2.0 / 3.0)


def test_f_measure_split_cluster_hand_value():
    # one truth cluster of 4 split into two predicted halves:
    # best match is 2*2 / (4 + 2) = 2/3
    truth = np.zeros(4, dtype=int)
    pred = np.array([0, 0, 1, 1])
    assert f_measure(pred, truth) == pytest.approx(2.0 / 3.0)


def test_f_measure_asymmetric_hand_value():
    # truth {0,1},{2,3,4}; pred puts row 2 with the first group.
    # t0 (size 2): best c0 = {0,1,2} -> 2*2/(2+3) = 0.8
    # t1 (size 3): best c1 = {3,4}   -> 2*2/(3+2) = 0.8
    truth = np.array([0, 0, 1, 1, 1])
    pred = np.array([0, 0, 0, 1, 1])
    assert f_measure(pred, truth) == pytest.approx(0.8)


def test_f_measure_unknown_rows_dropped_entirely():
    # after dropping the -1 row the merged prediction has size 3:
    # t0 (2): 2*2/(2+3) = 0.8, t1 (1): 2*1/(1+3) = 0.5
    # weighted: (2/3)*0.8 + (1/3)*0.5 = 0.7
    truth = np.array([0, 0, 1, -1])
    pred = np.zeros(4, dtype=int)
    assert f_measure(pred, truth) == pytest.approx(0.7)
    # dropping the row by hand must give the identical score
    assert f_measure(pred[:3], truth[:3]) == pytest.approx(0.7)


def test_f_measure_invariances():
    rng = np.random.default_rng(0)
    truth = rng.integers(0, 4, size=200)
    pred = rng.integers(0, 5, size=200)
    base = f_measure(pred, truth)
    assert 0.0 < base <= 1.0
    # joint row shuffle changes nothing
    perm = rng.permutation(200)
    assert f_measure(pred[perm], truth[perm]) == pytest.approx(base, rel=1e-12)
    # renaming predicted labels changes nothing
    assert f_measure(pred + 100, truth) == pytest.approx(base, rel=1e-12)


def test_f_measure_validation():
    with pytest.raises(DataError):
        f_measure(np.array([0, 1]), np.array([0]))
    with pytest.raises(DataError):
        f_measure(np.array([]), np.array([]))
    with pytest.raises(DataError):
        f_measure(np.array([0, 1]), np.array([-1, -1]))


# ---------------------------------------------------------------- calibration

def one_component_model(mu, sd=1.0):
    params = MixtureParams(family=GAUSSIAN_1D, weights=np.array([1.0]),
                           components=[GaussianComponent(mu, sd)])
    return FittedModel(params=params, log_likelihood=0.0, iterations_used=1,
                       converged=True, seed=0)


def two_component_model(mu0, mu1, sd=0.5):
    params = MixtureParams(family=GAUSSIAN_1D, weights=np.array([0.5, 0.5]),
                           components=[GaussianComponent(mu0, sd),
                                       GaussianComponent(mu1, sd)])
    return FittedModel(params=params, log_likelihood=0.0, iterations_used=1,
                       converged=True, seed=0)


def labeled_run_split_preferred():
    """Two well-separated truth clusters; K=2 is right until rho ~ 0.9975."""
    x = np.array([-3.0, -3.1, 3.0, 3.1])
    data = Dataset(x.reshape(-1, 1), labels=np.array([0, 0, 1, 1]), name="split")
    cands = [
        CandidateFit(k=1, model=one_component_model(0.0, 3.0),
                     profile=profile_from([4], [1.0])),
        CandidateFit(k=2, model=two_component_model(-3.0, 3.0),
                     profile=profile_from([2, 2], [0.1, 0.1])),
    ]
    return data, cands


def labeled_run_merge_preferred():
    """A single truth cluster; K=1 is right once rho reaches ~ 0.2975."""
    x = np.array([-3.0, -3.1, 3.0, 3.1])
    data = Dataset(x.reshape(-1, 1), labels=np.zeros(4, dtype=int), name="merge")
    cands = [
        CandidateFit(k=1, model=one_component_model(0.0, 3.0),
                     profile=profile_from([4], [0.3])),
        CandidateFit(k=2, model=two_component_model(-3.0, 3.0),
                     profile=profile_from([2, 2], [0.05, 0.05])),
    ]
    return data, cands


def test_calibrate_rho_single_dataset_exact():
    data, cands = labeled_run_split_preferred()
    grid = np.linspace(0.0, 1.2, 25)  # step 0.05
    result = calibrate_rho([(data, cands)], lam=0.01, rho_grid=grid)
    # K=2 wins while 4*(1 - rho) + 0.01 > 0.02, i.e. rho < 0.9975
    ks = result.chosen_k["split"]
    np.testing.assert_array_equal(ks[grid < 0.9975], 2)
    np.testing.assert_array_equal(ks[grid > 0.9975], 1)
    # MAP under the K=2 model reproduces the labels exactly -> F = 1
    fs = result.per_dataset["split"]
    np.testing.assert_allclose(fs[grid < 0.9975], 1.0)
    np.testing.assert_allclose(fs[grid > 0.9975], 2.0 / 3.0)
    # plateau of maxima starts at the first grid point
    assert result.rho_star == 0.0


def test_calibrate_rho_averages_across_datasets():
    run_a = labeled_run_split_preferred()
    run_b = labeled_run_merge_preferred()
    grid = np.linspace(0.0, 1.2, 25)
    result = calibrate_rho([run_a, run_b], lam=0.01, rho_grid=grid)
    # dataset A scores 1 below rho = 0.9975, 2/3 above;
    # dataset B scores 2/3 below rho = 0.2975, 1 above.
    # mean is 5/6, then 1 on [0.2975, 0.9975), then 5/6 again; the first
    # grid point inside the joint window is 0.30.
    assert result.rho_star == pytest.approx(0.30)
    expected_mean = np.where((grid >= 0.2975) & (grid < 0.9975), 1.0, 5.0 / 6.0)
    np.testing.assert_allclose(result.averaged, expected_mean)
    assert set(result.per_dataset) == {"split", "merge"}


def test_calibrate_rho_ties_break_to_smallest_rho():
    data, cands = labeled_run_split_preferred()
    # the whole grid sits inside the F = 1 plateau
    grid = np.array([0.1, 0.2, 0.3])
    result = calibrate_rho([(data, cands)], lam=0.01, rho_grid=grid)
    assert result.rho_star == pytest.approx(0.1)


def test_calibrate_rho_validation():
    data, cands = labeled_run_split_preferred()
    with pytest.raises(ConfigError):
        calibrate_rho([], lam=0.01, rho_grid=[0.1, 0.2])
    with pytest.raises(ConfigError):
        calibrate_rho([(data, cands)], lam=0.01, rho_grid=[0.2, 0.1])
    with pytest.raises(ConfigError):
        calibrate_rho([(data, cands)], lam=0.01, rho_grid=[])
    unlabeled = Dataset(data.observations, name="nolabels")
    with pytest.raises(DataError):
        calibrate_rho([(unlabeled, cands)], lam=0.01, rho_grid=[0.1, 0.2])
    broken = [CandidateFit(k=1, failure="did not converge")]
    with pytest.raises(DataError):
        calibrate_rho([(data, broken)], lam=0.01, rho_grid=[0.1, 0.2])


def test_calibration_result_json_round_trip():
    data, cands = labeled_run_split_preferred()
    grid = np.linspace(0.0, 1.2, 13)
    result = calibrate_rho([(data, cands)], lam=0.01, rho_grid=grid)
    blob = result.to_jsonable()
    text = json.dumps(blob)
    back = json.loads(text)
    assert back["rho_star"] == result.rho_star
    assert back["lambda"] == 0.01
    assert len(back["grid"]) == 13
    assert len(back["averaged_f"]) == 13
    assert back["per_dataset"]["split"] == result.per_dataset["split"].tolist()
    assert back["chosen_k"]["split"] == result.chosen_k["split"].tolist()


# ----------------------------------------------------------- tolerance reuse

def transfer_curves():
    # argmin regions on [0, 1.5]: K=3 on [0, 0.2975] (narrow),
    # K=2 on [0.2975, 0.999], K=1 on [0.999, 1.5]
    c1 = loss_curve(profile_from([100], [1.0]), lam=0.1)
    c2 = loss_curve(profile_from([60, 40], [0.2, 0.3]), lam=0.1)
    c3 = loss_curve(profile_from([50, 30, 20], [0.2, 0.25, 0.28]), lam=0.1)
    return [c1, c2, c3]


def test_choose_k_contained_in_wide_region():
    k, (lo, hi), contained = choose_k_for_rho(transfer_curves(), rho_star=0.5,
                                              rho_max=1.5, width_fraction=0.2)
    assert (k, contained) == (2, True)
    assert lo <= 0.5 <= hi


def test_choose_k_in_narrow_region_moves_to_nearest_wide():
    # rho = 0.1 falls in the K=3 sliver; the nearest qualifying region
    # boundary is K=2 at 0.2975 (K=1 starts at 0.999)
    k, (lo, hi), contained = choose_k_for_rho(transfer_curves(), rho_star=0.1,
                                              rho_max=1.5, width_fraction=0.2)
    assert (k, contained) == (2, False)
    assert lo == pytest.approx(0.2975, abs=1e-9)


def test_choose_k_when_no_region_qualifies_uses_containing():
    k, _, contained = choose_k_for_rho(transfer_curves(), rho_star=0.1,
                                       rho_max=1.5, width_fraction=0.99)
    assert (k, contained) == (3, True)


def test_choose_k_extends_range_to_cover_rho_star():
    # default rho_max would be 1.5; a larger rho_star stretches the range
    k, (lo, hi), contained = choose_k_for_rho(transfer_curves(), rho_star=2.0)
    assert k == 1
    assert contained
    assert hi >= 2.0


def test_choose_k_rejects_negative_rho_star():
    with pytest.raises(ConfigError):
        choose_k_for_rho(transfer_curves(), rho_star=-0.2)
