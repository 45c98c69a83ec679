"""Divergence estimators between an observed sample and a fitted component.

Three routes are provided, matching the three data regimes:

* plug-in discrete KL for count data,
* k-nearest-neighbor KL for continuous data (biased, bias-corrected, or
  the adaptive k = ceil(sqrt(n)) variant), with a coordinatewise version
  that sums one-dimensional estimates for high-dimensional data,
* a kernel MMD between the sample and a synthetic draw from the component.

All estimators return a :class:`DivergenceEstimate`; the closed-form
gaussian KL lives here too as the shared accuracy oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .errors import ConfigError, DataError, EstimatorError, InsufficientSamplesError
from .families import Family
from .util import STREAM_MODEL_SAMPLE, child_rng

# Dimension cutoff for tree-based neighbor search; above it the pairwise
# scan wins and avoids the tree's degraded pruning.
_TREE_MAX_DIM = 16


def digamma(k: int) -> float:
    """Digamma at a positive integer, accurate to at least 10 significant digits.

    Small arguments are shifted up with psi(x+1) = psi(x) + 1/x until the
    asymptotic series in 1/x^2 converges to machine precision.
    """
    if k != int(k) or k < 1:
        raise ConfigError(f"digamma is defined here for integers >= 1, got {k}")
    x = float(k)
    acc = 0.0
    while x < 20.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # Bernoulli-number tail: -1/(12x^2) + 1/(120x^4) - 1/(252x^6) + ...
    tail = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (
        1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))))
    return acc + math.log(x) - 0.5 / x - tail


def _row_distances(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    # Shared distance kernel: every caller computes distances through this
    # exact expression so tree and scan paths agree bit for bit.
    return np.sqrt(np.square(points - query).sum(axis=-1))


def knn_radii(points: np.ndarray, k: int, min_radius: float = 1e-12) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor (self excluded).

    Uses a k-d tree for dimension <= 16 and a blocked pairwise scan above;
    both paths compute distances through one shared kernel, so they agree
    exactly.  Radii are clamped below at ``min_radius`` so duplicate points
    cannot produce log(0) downstream.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError(f"points must be (n, d), got shape {x.shape}")
    n, d = x.shape
    if k < 1 or k != int(k):
        raise ConfigError(f"k must be a positive integer, got {k}")
    if n < k + 1:
        raise InsufficientSamplesError(f"need at least k+1={k + 1} points, got {n}")

    radii = np.empty(n)
    if d <= _TREE_MAX_DIM:
        tree = cKDTree(x)
        # Extra candidates absorb tie-ordering differences between the
        # tree's internal arithmetic and the shared kernel.
        m = min(n, k + 1 + 8)
        _, idx = tree.query(x, k=m)
        for i in range(n):
            cand = idx[i][idx[i] != i]
            dist = _row_distances(x[i], x[cand])
            radii[i] = np.partition(dist, k - 1)[k - 1]
    else:
        block = max(1, int(1e7) // max(n * d, 1))
        for lo in range(0, n, block):
            hi = min(lo + block, n)
            diff = x[lo:hi, None, :] - x[None, :, :]
            dist = np.sqrt(np.square(diff).sum(axis=-1))
            for i in range(lo, hi):
                row = np.delete(dist[i - lo], i)
                radii[i] = np.partition(row, k - 1)[k - 1]
    return np.maximum(radii, min_radius)


@dataclass(frozen=True)
class KnnConfig:
    """Neighbor count and correction for the k-NN KL estimator.

    ``k`` is either a fixed positive integer or the string 'adaptive-sqrt',
    which uses ceil(sqrt(n)) neighbors and never applies the correction
    term (the growing k already removes the bias asymptotically).
    """

    k: int | str = "adaptive-sqrt"
    correction: str = "biased"
    min_radius: float = 1e-12

    def __post_init__(self):
        if isinstance(self.k, str):
            if self.k != "adaptive-sqrt":
                raise ConfigError(f"k must be a positive int or 'adaptive-sqrt', got {self.k!r}")
        elif self.k < 1 or self.k != int(self.k):
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if self.correction not in ("biased", "bias-corrected"):
            raise ConfigError(
                f"correction must be 'biased' or 'bias-corrected', got {self.correction!r}")
        if self.min_radius <= 0:
            raise ConfigError("min_radius must be positive")

    @property
    def adaptive(self) -> bool:
        return isinstance(self.k, str)

    def resolve_k(self, n: int) -> int:
        if self.adaptive:
            return int(math.ceil(math.sqrt(n)))
        return int(self.k)

    def tag(self) -> str:
        if self.adaptive:
            return "knn-adaptive"
        if self.correction == "bias-corrected":
            return f"knn-corrected:{self.k}"
        return f"knn-fixed:{self.k}"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel and sampling choices for the MMD estimator.

    ``bandwidth=None`` selects the median heuristic on the pooled sample at
    call time; ``model_sample_size=None`` matches the observed sample size.
    """

    bandwidth: float | None = None
    model_sample_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.model_sample_size is not None and self.model_sample_size < 2:
            raise ConfigError("model_sample_size must be >= 2")


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    n_used: int
    estimator: str
    component_index: int = -1


def _as_sample_matrix(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError(f"samples must be a non-empty (n, d) matrix, got shape {x.shape}")
    return x


def kl_plugin_discrete(samples, q) -> DivergenceEstimate:
    """Plug-in KL between the empirical pmf of integer samples and pmf ``q``.

    Sums (N(x)/N) * log(N(x) / (N q(x))) over the observed support.  The
    value can be negative when q places mass off the observed support; it
    is exactly zero iff the empirical pmf equals q on that support.
    """
    x = _as_sample_matrix(samples)
    if x.shape[1] != 1:
        raise DataError("plug-in estimator expects univariate counts")
    v = x[:, 0]
    if np.any(v != np.floor(v)):
        raise DataError("plug-in estimator expects integer observations")
    values, counts = np.unique(v, return_counts=True)
    qs = np.asarray(q(values), dtype=float).ravel()
    if qs.shape != values.shape:
        raise EstimatorError("pmf callable returned a mismatched shape")
    if np.any(qs <= 0) or np.any(~np.isfinite(qs)):
        bad = values[(qs <= 0) | ~np.isfinite(qs)][0]
        raise EstimatorError(f"model pmf is zero (or invalid) at observed value {bad}")
    n = v.size
    phat = counts / n
    value = float(np.sum(phat * (np.log(phat) - np.log(qs))))
    return DivergenceEstimate(value=value, n_used=n, estimator="plugin")


def _log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1.0))


def kl_knn(samples, log_q, config: KnnConfig = KnnConfig()) -> DivergenceEstimate:
    """k-NN estimate of KL(sample distribution || model with log density log_q).

    The biased form averages log{ (k/(n-1)) / (V_d(r_i) q(y_i)) } over the
    sample, where V_d(r) is the volume of the radius-r ball; the
    bias-corrected form adds psi(k) - log k.  The adaptive variant uses
    k = ceil(sqrt(n)) with no correction.
    """
    x = _as_sample_matrix(samples)
    n, d = x.shape
    k = config.resolve_k(n)
    if n < k + 1:
        raise InsufficientSamplesError(
            f"k-NN estimator with k={k} needs at least {k + 1} samples, got {n}")
    lq = np.asarray(log_q(x), dtype=float).ravel()
    if lq.shape != (n,):
        raise EstimatorError("log-density callable returned a mismatched shape")
    if np.any(np.isnan(lq)) or np.any(lq == np.inf):
        raise EstimatorError("model log-density is NaN or +inf at a sample point")
    if np.any(np.isneginf(lq)):
        raise EstimatorError("model log-density is -inf at a sample point")
    r = knn_radii(x, k, min_radius=config.min_radius)
    log_vol = _log_unit_ball_volume(d) + d * np.log(r)
    value = float(np.mean(math.log(k / (n - 1.0)) - log_vol - lq))
    if not config.adaptive and config.correction == "bias-corrected":
        value += digamma(k) - math.log(k)
    return DivergenceEstimate(value=value, n_used=n, estimator=config.tag())


def kl_knn_independent(samples, marginal_log_qs, config: KnnConfig = KnnConfig()) -> DivergenceEstimate:
    """Sum of univariate k-NN KL estimates, one per coordinate.

    Treats coordinates as independent: coordinate j of the sample is
    compared against the model's j-th marginal log density.  Appropriate
    when cross-coordinate correlation is weak; the full-dimensional
    estimator is hopeless there while one-dimensional estimates stay
    well-behaved.
    """
    x = _as_sample_matrix(samples)
    n, d = x.shape
    if len(marginal_log_qs) != d:
        raise ConfigError(
            f"need one marginal per coordinate: got {len(marginal_log_qs)} for d={d}")
    total = 0.0
    for j in range(d):
        est = kl_knn(x[:, j], marginal_log_qs[j], config)
        total += est.value
    return DivergenceEstimate(value=total, n_used=n, estimator="knn-independent")


def kl_gaussian_closed_form(mean_p, cov_p, mean_q, cov_q) -> float:
    """Exact KL( N(mean_p, cov_p) || N(mean_q, cov_q) ).

    Scalars are accepted for univariate inputs (cov arguments are then
    variances).
    """
    mp = np.atleast_1d(np.asarray(mean_p, dtype=float)).ravel()
    mq = np.atleast_1d(np.asarray(mean_q, dtype=float)).ravel()
    d = mp.size
    if mq.size != d:
        raise ConfigError("mean dimensions disagree")
    cp = np.asarray(cov_p, dtype=float).reshape(d, d) if np.ndim(cov_p) == 2 \
        else np.eye(d) * np.atleast_1d(np.asarray(cov_p, dtype=float))
    cq = np.asarray(cov_q, dtype=float).reshape(d, d) if np.ndim(cov_q) == 2 \
        else np.eye(d) * np.atleast_1d(np.asarray(cov_q, dtype=float))
    sign_p, logdet_p = np.linalg.slogdet(cp)
    sign_q, logdet_q = np.linalg.slogdet(cq)
    if sign_p <= 0 or sign_q <= 0:
        raise ConfigError("covariances must be positive definite")
    solve = np.linalg.solve
    diff = mq - mp
    maha = float(diff @ solve(cq, diff))
    trace = float(np.trace(solve(cq, cp)))
    return 0.5 * (logdet_q - logdet_p - d + trace + maha)


def median_heuristic_bandwidth(points: np.ndarray, max_points: int = 1000,
                               seed: int = 0) -> float:
    """Median pairwise distance of (a subsample of) the pooled points."""
    x = _as_sample_matrix(points)
    n = x.shape[0]
    if n > max_points:
        idx = child_rng(seed, STREAM_MODEL_SAMPLE, 1).choice(n, size=max_points, replace=False)
        x = x[idx]
    norms = np.square(x).sum(axis=1)
    sq = norms[:, None] + norms[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.median(np.sqrt(np.maximum(sq[iu], 0.0))))
    if med <= 0:
        return 1.0  # all points identical; any positive bandwidth behaves the same
    return med


def mmd_vstat(x, y, bandwidth: float, x_weights=None, y_weights=None) -> float:
    """Biased V-statistic MMD between two weighted point sets.

    With the gaussian-rbf kernel K(a,b) = exp(-|a-b|^2 / (2 h^2)) this is
    the exact kernel distance between the two discrete measures, so it is
    jointly convex in the pair of measures.  Weights default to uniform and
    must sum to one.
    """
    if not bandwidth > 0:
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
    xm = _as_sample_matrix(x)
    ym = _as_sample_matrix(y)
    if xm.shape[1] != ym.shape[1]:
        raise DataError("point sets must share a dimension")

    def _weights(w, n):
        if w is None:
            return np.full(n, 1.0 / n)
        w = np.asarray(w, dtype=float).ravel()
        if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("weights must be non-negative and sum to 1")
        return w

    wx = _weights(x_weights, xm.shape[0])
    wy = _weights(y_weights, ym.shape[0])
    inv = 1.0 / (2.0 * bandwidth * bandwidth)

    def _gram(a, b):
        sq = (np.square(a).sum(axis=1)[:, None] + np.square(b).sum(axis=1)[None, :]
              - 2.0 * (a @ b.T))
        return np.exp(-inv * np.maximum(sq, 0.0))

    mmd2 = (wx @ _gram(xm, xm) @ wx + wy @ _gram(ym, ym) @ wy
            - 2.0 * (wx @ _gram(xm, ym) @ wy))
    return float(np.sqrt(max(mmd2, 0.0)))


def mmd_estimate(samples, family: Family, params, config: KernelConfig = KernelConfig(),
                 stream_key: tuple = ()) -> DivergenceEstimate:
    """MMD between the sample and a seeded synthetic draw from the component.

    The model side is represented by ``model_sample_size`` draws (default:
    same size as the sample) from the fitted component; ``stream_key``
    isolates the RNG stream, so estimates for different components of the
    same run never share draws.
    """
    x = _as_sample_matrix(samples)
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError("MMD estimator needs at least 2 samples")
    m = config.model_sample_size or n
    rng = child_rng(config.seed, STREAM_MODEL_SAMPLE, *[int(t) for t in stream_key])
    y = family.sample(params, m, rng)
    if y.shape[1] != x.shape[1]:
        raise DataError(
            f"component dimension {y.shape[1]} does not match sample dimension {x.shape[1]}")
    h = config.bandwidth
    if h is None:
        h = median_heuristic_bandwidth(np.vstack([x, y]), seed=config.seed)
    value = mmd_vstat(x, y, h)
    return DivergenceEstimate(value=value, n_used=n, estimator="mmd")


class DivergenceEstimator:
    """Callable wrapper tying an estimator route to a fitted component.

    Instances adapt ``(x, family, params)`` to the low-level functions above
    and are what the selection layer iterates over components.
    """

    tag: str = ""

    def min_samples(self, n: int) -> int:
        return 1

    def __call__(self, x, family: Family, params, stream_key: tuple = ()) -> DivergenceEstimate:
        raise NotImplementedError


class KnnKlEstimator(DivergenceEstimator):
    def __init__(self, config: KnnConfig = KnnConfig()):
        self.config = config
        self.tag = config.tag()

    def min_samples(self, n: int) -> int:
        return self.config.resolve_k(n) + 1

    def __call__(self, x, family, params, stream_key=()) -> DivergenceEstimate:
        return kl_knn(x, lambda pts: family.log_density(params, pts), self.config)


class IndependentKnnKlEstimator(DivergenceEstimator):
    tag = "knn-independent"

    def __init__(self, config: KnnConfig = KnnConfig()):
        self.config = config

    def min_samples(self, n: int) -> int:
        return self.config.resolve_k(n) + 1

    def __call__(self, x, family, params, stream_key=()) -> DivergenceEstimate:
        return kl_knn_independent(x, family.marginal_log_densities(params), self.config)


class PluginKlEstimator(DivergenceEstimator):
    tag = "plugin"

    def __call__(self, x, family, params, stream_key=()) -> DivergenceEstimate:
        return kl_plugin_discrete(x, lambda v: np.exp(family.log_density(params, v)))


class MmdEstimator(DivergenceEstimator):
    tag = "mmd"

    def __init__(self, config: KernelConfig = KernelConfig()):
        self.config = config

    def min_samples(self, n: int) -> int:
        return 2

    def __call__(self, x, family, params, stream_key=()) -> DivergenceEstimate:
        return mmd_estimate(x, family, params, self.config, stream_key=stream_key)


def estimator_from_tag(tag: str, min_radius: float = 1e-12,
                       kernel_config: KernelConfig | None = None) -> DivergenceEstimator:
    """Parse an estimator tag as accepted on the command line.

    Recognized forms: ``knn-adaptive``, ``knn-fixed:K``, ``knn-corrected:K``,
    ``knn-independent``, ``plugin``, ``mmd``.
    """
    if tag == "knn-adaptive":
        return KnnKlEstimator(KnnConfig(min_radius=min_radius))
    if tag == "knn-independent":
        return IndependentKnnKlEstimator(KnnConfig(min_radius=min_radius))
    if tag == "plugin":
        return PluginKlEstimator()
    if tag == "mmd":
        return MmdEstimator(kernel_config or KernelConfig())
    for prefix, correction in (("knn-fixed:", "biased"), ("knn-corrected:", "bias-corrected")):
        if tag.startswith(prefix):
            try:
                k = int(tag[len(prefix):])
            except ValueError:
                raise ConfigError(f"estimator {tag!r}: expected an integer after the colon")
            return KnnKlEstimator(KnnConfig(k=k, correction=correction, min_radius=min_radius))
    raise ConfigError(
        f"unknown estimator {tag!r}; expected knn-adaptive, knn-fixed:K, "
        f"knn-corrected:K, knn-independent, plugin, or mmd")
