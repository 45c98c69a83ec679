"""Cluster-quality evaluation and tolerance calibration.

The F-measure here is the matching form used for cluster comparison: each
truth cluster is matched to its best predicted cluster by F score, and the
per-cluster scores are averaged weighted by truth-cluster size.  Rows with
the reserved truth label -1 ("unknown") are excluded before anything is
counted.

Calibration turns labeled datasets into a tolerance: for every rho on a
grid, select K by penalized loss, score the winning model's MAP
clustering against the labels, and take the rho maximizing the
across-dataset mean score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .em import sample_assignments
from .errors import ConfigError, DataError
from .selection import CandidateFit, LossCurve, penalized_loss

UNKNOWN_LABEL = -1


def f_measure(predicted, truth) -> float:
    """Size-weighted best-match F score of a predicted clustering.

    For each truth cluster t, F(t) = max over predicted clusters c of
    2|t&c| / (|t| + |c|); the result is sum_t (|t|/N) F(t).  Rows whose
    truth label is -1 are dropped entirely (they belong to no truth
    cluster and do not count toward predicted cluster sizes either).
    Labels are compared by value, so any integer labelings work.
    """
    pred = np.asarray(predicted).ravel()
    tru = np.asarray(truth).ravel()
    if pred.shape != tru.shape:
        raise DataError(f"label vectors disagree: {pred.shape} vs {tru.shape}")
    if pred.size == 0:
        raise DataError("empty label vectors")
    keep = tru != UNKNOWN_LABEL
    pred = pred[keep]
    tru = tru[keep]
    n = tru.size
    if n == 0:
        raise DataError("every row is labeled 'unknown' (-1); nothing to score")

    t_values, t_idx = np.unique(tru, return_inverse=True)
    c_values, c_idx = np.unique(pred, return_inverse=True)
    table = np.zeros((t_values.size, c_values.size))
    np.add.at(table, (t_idx, c_idx), 1.0)
    t_sizes = table.sum(axis=1)
    c_sizes = table.sum(axis=0)
    f_per_truth = (2.0 * table / (t_sizes[:, None] + c_sizes[None, :])).max(axis=1)
    return float(np.sum(t_sizes / n * f_per_truth))


@dataclass
class CalibrationResult:
    """Tolerance calibrated from labeled datasets.

    ``per_dataset`` maps dataset name to its F-vs-rho curve on ``grid``;
    ``averaged`` is the across-dataset mean curve whose argmax (smallest
    rho on ties) is ``rho_star``.
    """

    rho_star: float
    grid: np.ndarray
    per_dataset: dict
    averaged: np.ndarray
    lam: float
    chosen_k: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "rho_star": self.rho_star,
            "lambda": self.lam,
            "grid": self.grid.tolist(),
            "averaged_f": self.averaged.tolist(),
            "per_dataset": {name: curve.tolist() for name, curve in self.per_dataset.items()},
            "chosen_k": {name: ks.tolist() for name, ks in self.chosen_k.items()},
        }


def calibrate_rho(labeled_runs: list, lam: float, rho_grid) -> CalibrationResult:
    """Choose the tolerance maximizing mean F-measure over labeled datasets.

    ``labeled_runs`` is a list of (Dataset, candidates) pairs where the
    candidates come from :func:`stare.selection.fit_candidates` on that
    dataset.  For each grid rho the per-dataset winner K is re-selected by
    penalized loss and its MAP clustering is scored against the labels; the
    F value for a given (dataset, K) is computed once and reused, so the
    resulting curves are exactly piecewise constant in rho.
    """
    grid = np.asarray(rho_grid, dtype=float).ravel()
    if grid.size < 1 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError("rho_grid must be a non-empty strictly increasing grid of rho >= 0")
    if not labeled_runs:
        raise ConfigError("calibration needs at least one labeled dataset")

    per_dataset: dict[str, np.ndarray] = {}
    chosen_k: dict[str, np.ndarray] = {}
    for pos, (dataset, candidates) in enumerate(labeled_runs):
        if dataset.labels is None:
            raise DataError(f"dataset {dataset.name or pos!r} has no labels; "
                            "calibration needs ground truth")
        usable = [c for c in candidates if c.ok]
        if not usable:
            raise DataError(f"dataset {dataset.name or pos!r}: no usable candidate fits")
        f_cache: dict[int, float] = {}

        def _score(cand: CandidateFit) -> float:
            if cand.k not in f_cache:
                z_map = sample_assignments(cand.model, dataset, mode="map")
                f_cache[cand.k] = f_measure(z_map, dataset.labels)
            return f_cache[cand.k]

        fs = np.empty(grid.size)
        ks = np.empty(grid.size, dtype=int)
        for i, rho in enumerate(grid):
            losses = [penalized_loss(c.profile, float(rho), lam) for c in usable]
            j = min(range(len(usable)), key=lambda t: (losses[t], usable[t].k))
            ks[i] = usable[j].k
            fs[i] = _score(usable[j])
        name = dataset.name or f"dataset-{pos}"
        per_dataset[name] = fs
        chosen_k[name] = ks

    averaged = np.mean(np.vstack(list(per_dataset.values())), axis=0)
    best = int(np.argmax(averaged))  # argmax returns the first (smallest rho) maximizer
    return CalibrationResult(rho_star=float(grid[best]), grid=grid,
                             per_dataset=per_dataset, averaged=averaged,
                             lam=float(lam), chosen_k=chosen_k)


def choose_k_for_rho(curves: list[LossCurve], rho_star: float,
                     rho_max: float | None = None,
                     width_fraction: float = 0.2):
    """Transfer a calibrated tolerance to a new dataset's loss curves.

    Computes the argmin partition of [0, rho_max]; if rho_star falls inside
    a region that meets the width threshold, that region's K is returned.
    Otherwise the qualifying region whose boundary is nearest rho_star is
    used (falling back to the raw region containing rho_star when none
    qualifies).  Returns (k, (lo, hi), contained).
    """
    from .selection import argmin_partition, default_rho_max

    if rho_star < 0:
        raise ConfigError("rho_star must be >= 0")
    if rho_max is None:
        rho_max = max(default_rho_max(curves), rho_star * 1.0001 + 1e-12)
    regions = argmin_partition(curves, rho_max)
    threshold = width_fraction * rho_max
    wide = [r for r in regions if r[2] - r[1] >= threshold]
    pool = wide if wide else regions
    containing = [r for r in pool if r[1] <= rho_star <= r[2]]
    if containing:
        k, lo, hi = containing[0]
        return k, (lo, hi), True
    k, lo, hi = min(pool, key=lambda r: min(abs(r[1] - rho_star), abs(r[2] - rho_star)))
    return k, (lo, hi), False
