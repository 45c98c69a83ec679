"""Maximum-likelihood mixture fitting by expectation-maximization.

The fitter is generic over component families: the E-step works on the
(N, K) matrix of component log densities, and the M-step delegates to the
family's weighted maximum-likelihood update.  Restarts, initialization
schemes, and degeneracy handling live here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .errors import ConfigError, DataError, DegenerateFitError
from .families import Family, MixtureParams
from .util import STREAM_ASSIGN, STREAM_EM, child_rng

INIT_SCHEMES = ("kmeans-plus-plus", "random-responsibility", "quantile")

# A restart is discarded when any mixture weight falls below this.
_WEIGHT_FLOOR = 1e-10


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 500
    tol: float = 1e-7
    restarts: int = 5
    init: str = "kmeans-plus-plus"
    covariance_ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"init must be one of {INIT_SCHEMES}, got {self.init!r}")
        if self.covariance_ridge < 0:
            raise ConfigError("covariance_ridge must be >= 0")

    def digest(self) -> str:
        """Short stable hash of the configuration, for provenance records."""
        blob = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class FittedModel:
    """One fitted K-component mixture plus fit diagnostics."""

    params: MixtureParams
    log_likelihood: float
    iterations_used: int
    converged: bool
    seed: int
    restart_index: int = 0
    ll_history: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def family(self) -> Family:
        return self.params.family

    def to_jsonable(self) -> dict:
        out = self.params.to_jsonable()
        out.update({
            "k": self.k,
            "log_likelihood": self.log_likelihood,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "seed": self.seed,
        })
        return out

    @classmethod
    def from_jsonable(cls, obj: dict) -> "FittedModel":
        return cls(
            params=MixtureParams.from_jsonable(obj),
            log_likelihood=float(obj["log_likelihood"]),
            iterations_used=int(obj.get("iterations_used", 0)),
            converged=bool(obj["converged"]),
            seed=int(obj["seed"]),
        )


class _DegenerateRestart(Exception):
    """Internal: this restart collapsed; try the next one."""


def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Rows of x chosen by squared-distance weighted seeding."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _init_params(family: Family, x: np.ndarray, k: int, config: EmConfig,
                 rng: np.random.Generator) -> MixtureParams:
    n, dim = x.shape
    weights = np.full(k, 1.0 / k)

    if config.init == "random-responsibility":
        resp = rng.random((n, k)) + 1e-3
        resp /= resp.sum(axis=1, keepdims=True)
        comps = [family.fit_weighted(x, resp[:, j], config.covariance_ridge) for j in range(k)]
        return MixtureParams(family=family, weights=weights, components=comps)

    if config.init == "kmeans-plus-plus":
        centers = _kmeans_plus_plus(x, k, rng)
    else:  # quantile: spread centers along the first coordinate
        order = np.argsort(x[:, 0], kind="stable")
        picks = ((2 * np.arange(k) + 1) * n) // (2 * k)
        centers = x[order[picks]]

    # Hard-assign each point to its nearest center and take one M-step on
    # that partition.  Seeding the covariances from the partition (rather
    # than the whole sample) keeps well-separated clusters separated: a
    # global covariance is dominated by the between-cluster spread, which
    # flattens the responsibilities in the very first E-step.
    d2 = np.square(x[:, None, :] - centers[None, :, :]).sum(axis=2) if n * k * dim <= 10_000_000 else None
    if d2 is None:
        labels = np.empty(n, dtype=np.int64)
        step = max(1, 10_000_000 // max(k * dim, 1))
        for lo in range(0, n, step):
            block = np.square(x[lo:lo + step, None, :] - centers[None, :, :]).sum(axis=2)
            labels[lo:lo + step] = block.argmin(axis=1)
    else:
        labels = d2.argmin(axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0
    counts = resp.sum(axis=0)
    # A center with fewer than two points cannot seed a spread estimate;
    # borrow the whole sample at low weight so the first E-step decides.
    for j in np.flatnonzero(counts < 2.0):
        resp[:, j] = 1.0 / n
        counts[j] = resp[:, j].sum()
    weights = counts / counts.sum()
    comps = [family.fit_weighted(x, resp[:, j], config.covariance_ridge) for j in range(k)]
    return MixtureParams(family=family, weights=weights, components=comps)


def _run_em(family: Family, x: np.ndarray, params: MixtureParams,
            config: EmConfig) -> tuple[MixtureParams, float, int, bool, np.ndarray]:
    n = x.shape[0]
    prev_ll = -np.inf
    history = []
    converged = False
    iterations = 0
    for it in range(config.max_iterations):
        iterations = it + 1
        logjoint = params.component_log_densities(x) + np.log(params.weights)
        lognorm = logsumexp(logjoint, axis=1)
        ll = float(lognorm.sum())
        if not np.isfinite(ll):
            raise _DegenerateRestart
        history.append(ll)
        if abs(ll - prev_ll) / (abs(ll) + 1.0) < config.tol:
            converged = True
            break
        prev_ll = ll
        resp = np.exp(logjoint - lognorm[:, None])
        weights = resp.sum(axis=0) / n
        if np.any(weights < _WEIGHT_FLOOR):
            raise _DegenerateRestart
        comps = [family.fit_weighted(x, resp[:, j], config.covariance_ridge)
                 for j in range(params.k)]
        try:
            params = MixtureParams(family=family, weights=weights, components=comps)
        except ConfigError as exc:  # collapsed component (e.g. singular covariance)
            raise _DegenerateRestart from exc
    if not converged:
        # The loop ended on an M-step; refresh ll so it matches the returned params.
        lognorm = logsumexp(params.component_log_densities(x) + np.log(params.weights), axis=1)
        ll = float(lognorm.sum())
        history.append(ll)
    return params, ll, iterations, converged, np.array(history)


def fit_em(data: Dataset, family: Family, k: int, config: EmConfig = EmConfig()) -> FittedModel:
    """Best-of-restarts EM fit of a k-component mixture.

    Each restart draws its initialization from an independent stream keyed
    by (seed, k, restart), so fits for different k can run concurrently and
    still reproduce exactly.  The restart with the highest final
    log-likelihood wins; ties keep the earlier restart.  If every restart
    collapses (a mixture weight below 1e-10), DegenerateFitError is raised.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    x = family.validate_data(data.observations)
    if x.shape[0] < k:
        raise DataError(f"cannot fit k={k} components to {x.shape[0]} observations")

    best: FittedModel | None = None
    for r in range(config.restarts):
        rng = child_rng(config.seed, STREAM_EM, k, r)
        try:
            params0 = _init_params(family, x, k, config, rng)
            params, ll, iterations, converged, history = _run_em(family, x, params0, config)
        except _DegenerateRestart:
            continue
        if best is None or ll > best.log_likelihood:
            best = FittedModel(params=params, log_likelihood=ll,
                               iterations_used=iterations, converged=converged,
                               seed=config.seed, restart_index=r, ll_history=history)
    if best is None:
        raise DegenerateFitError(k)
    return best


def responsibilities(model: FittedModel, data: Dataset) -> np.ndarray:
    """Posterior component membership probabilities, one row per observation.

    Rows are normalized to sum to one exactly (up to float rounding).
    """
    x = model.family.validate_data(data.observations)
    logjoint = model.params.component_log_densities(x) + np.log(model.params.weights)
    resp = np.exp(logjoint - logsumexp(logjoint, axis=1)[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp


def sample_assignments(model: FittedModel, data: Dataset, mode: str = "sample",
                       seed: int = 0) -> np.ndarray:
    """Component assignment vector drawn from (or maximizing) the posterior.

    ``mode='sample'`` draws one z per observation from its responsibility
    row (seeded, reproducible); ``mode='map'`` takes the argmax, breaking
    ties toward the lower component index.
    """
    resp = responsibilities(model, data)
    if mode == "map":
        return np.argmax(resp, axis=1)
    if mode != "sample":
        raise ConfigError(f"mode must be 'sample' or 'map', got {mode!r}")
    rng = child_rng(seed, STREAM_ASSIGN, model.k)
    u = rng.random(resp.shape[0])
    cum = np.cumsum(resp, axis=1)
    cum[:, -1] = 1.0  # guard against rounding just below 1
    return np.sum(u[:, None] > cum, axis=1)


def bic(model: FittedModel, n: int) -> float:
    """Bayesian information criterion p*log(n) - 2*log_likelihood (lower is better)."""
    if n < 1:
        raise DataError("n must be >= 1")
    dim = model.family.event_dim(model.params.components[0])
    p = model.family.n_free_params(model.k, dim)
    return p * float(np.log(n)) - 2.0 * model.log_likelihood
