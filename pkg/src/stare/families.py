"""Mixture component families and mixture-level operations.

A *family* fixes the parametric form of a single mixture component
(univariate gaussian, multivariate gaussian, or poisson) and provides the
operations the rest of the package needs: log densities, weighted maximum
likelihood (the EM M-step), sampling, marginals, and parameter counting.
Families are stateless singletons; component parameters travel in small
per-family records.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .data import Dataset
from .errors import ConfigError, DataError
from .util import STREAM_GENERATE, child_rng

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    sd: float


@dataclass(eq=False)
class MvGaussianComponent:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.cov = np.asarray(self.cov, dtype=float)


@dataclass(frozen=True)
class PoissonComponent:
    rate: float


class Family(abc.ABC):
    """Parametric form shared by all components of one mixture."""

    kind: str = ""

    @abc.abstractmethod
    def validate_params(self, params) -> None:
        ...

    @abc.abstractmethod
    def validate_data(self, x: np.ndarray) -> np.ndarray:
        """Check observations and return them in canonical (N, D) float form."""

    @abc.abstractmethod
    def log_density(self, params, x: np.ndarray) -> np.ndarray:
        """Componentwise log density at each row of (N, D) input ``x``."""

    @abc.abstractmethod
    def sample(self, params, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n observations, returned as an (n, D) matrix."""

    @abc.abstractmethod
    def fit_weighted(self, x: np.ndarray, w: np.ndarray, ridge: float):
        """Weighted maximum-likelihood parameters (the EM M-step update)."""

    @abc.abstractmethod
    def n_free_params(self, k: int, dim: int) -> int:
        """Free parameters of a k-component mixture of this family."""

    def event_dim(self, params) -> int:
        """Dimension of one observation under these parameters."""
        return 1

    @abc.abstractmethod
    def marginal_log_densities(self, params) -> list:
        """Per-coordinate log-density callables of the component.

        Used by the coordinatewise divergence estimator; families without a
        continuous marginal decomposition raise ConfigError.
        """

    @abc.abstractmethod
    def params_to_jsonable(self, params) -> dict:
        ...

    @abc.abstractmethod
    def params_from_jsonable(self, obj: dict):
        ...

    def _as_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            x = x[:, None]
        return x


class Gaussian1dFamily(Family):
    kind = "gaussian-1d"

    def validate_params(self, params) -> None:
        if not isinstance(params, GaussianComponent):
            raise ConfigError(f"{self.kind} expects GaussianComponent, got {type(params).__name__}")
        if not (np.isfinite(params.mean) and np.isfinite(params.sd) and params.sd > 0):
            raise ConfigError(f"invalid gaussian parameters mean={params.mean} sd={params.sd}")

    def validate_data(self, x) -> np.ndarray:
        x = self._as_matrix(x)
        if x.shape[1] != 1:
            raise DataError(f"{self.kind} needs 1-dimensional observations, got D={x.shape[1]}")
        return x

    def log_density(self, params, x) -> np.ndarray:
        t = (self._as_matrix(x)[:, 0] - params.mean) / params.sd
        return -0.5 * t * t - np.log(params.sd) - 0.5 * _LOG_2PI

    def sample(self, params, n, rng) -> np.ndarray:
        return rng.normal(params.mean, params.sd, size=n)[:, None]

    def fit_weighted(self, x, w, ridge) -> GaussianComponent:
        xf = x[:, 0]
        wsum = w.sum()
        mean = float(np.dot(w, xf) / wsum)
        var = float(np.dot(w, (xf - mean) ** 2) / wsum)
        # Ridge regularization; for D=1 the covariance trace is the variance.
        var *= 1.0 + ridge
        return GaussianComponent(mean=mean, sd=float(np.sqrt(max(var, 1e-300))))

    def n_free_params(self, k, dim) -> int:
        return 3 * k - 1

    def marginal_log_densities(self, params) -> list:
        return [lambda v, p=params: self.log_density(p, v)]

    def params_to_jsonable(self, params) -> dict:
        return {"mean": params.mean, "sd": params.sd}

    def params_from_jsonable(self, obj) -> GaussianComponent:
        return GaussianComponent(mean=float(obj["mean"]), sd=float(obj["sd"]))


class MvGaussianFamily(Family):
    kind = "gaussian-multivariate"

    def validate_params(self, params) -> None:
        if not isinstance(params, MvGaussianComponent):
            raise ConfigError(
                f"{self.kind} expects MvGaussianComponent, got {type(params).__name__}"
            )
        d = params.mean.shape[0]
        if params.cov.shape != (d, d):
            raise ConfigError(f"covariance shape {params.cov.shape} does not match mean dim {d}")
        if not (np.all(np.isfinite(params.mean)) and np.all(np.isfinite(params.cov))):
            raise ConfigError("non-finite gaussian parameters")
        if not np.allclose(params.cov, params.cov.T, atol=1e-10):
            raise ConfigError("covariance must be symmetric")
        self._cholesky(params.cov)

    @staticmethod
    def _cholesky(cov) -> np.ndarray:
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("covariance is not positive definite") from exc

    def validate_data(self, x) -> np.ndarray:
        x = self._as_matrix(x)
        if x.shape[1] < 1:
            raise DataError("observations must have at least one coordinate")
        return x

    def log_density(self, params, x) -> np.ndarray:
        x = self._as_matrix(x)
        if x.shape[1] != params.mean.shape[0]:
            raise DataError(
                f"observation dim {x.shape[1]} does not match component dim {params.mean.shape[0]}"
            )
        chol = self._cholesky(params.cov)
        y = np.linalg.solve(chol, (x - params.mean).T)
        maha = np.sum(y * y, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        d = params.mean.shape[0]
        return -0.5 * (maha + logdet + d * _LOG_2PI)

    def sample(self, params, n, rng) -> np.ndarray:
        chol = self._cholesky(params.cov)
        z = rng.standard_normal((n, params.mean.shape[0]))
        return params.mean + z @ chol.T

    def fit_weighted(self, x, w, ridge) -> MvGaussianComponent:
        wsum = w.sum()
        mean = (w @ x) / wsum
        xc = x - mean
        cov = (w[:, None] * xc).T @ xc / wsum
        cov = 0.5 * (cov + cov.T)
        d = x.shape[1]
        cov += ridge * (np.trace(cov) / d) * np.eye(d)
        return MvGaussianComponent(mean=mean, cov=cov)

    def n_free_params(self, k, dim) -> int:
        return (k - 1) + k * (dim + dim * (dim + 1) // 2)

    def event_dim(self, params) -> int:
        return int(params.mean.shape[0])

    def marginal_log_densities(self, params) -> list:
        out = []
        for d in range(params.mean.shape[0]):
            comp = GaussianComponent(
                mean=float(params.mean[d]), sd=float(np.sqrt(params.cov[d, d]))
            )
            out.append(lambda v, p=comp: GAUSSIAN_1D.log_density(p, v))
        return out

    def params_to_jsonable(self, params) -> dict:
        return {"mean": params.mean.tolist(), "cov": params.cov.tolist()}

    def params_from_jsonable(self, obj) -> MvGaussianComponent:
        return MvGaussianComponent(mean=np.array(obj["mean"]), cov=np.array(obj["cov"]))


class PoissonFamily(Family):
    kind = "poisson"

    def validate_params(self, params) -> None:
        if not isinstance(params, PoissonComponent):
            raise ConfigError(f"{self.kind} expects PoissonComponent, got {type(params).__name__}")
        if not (np.isfinite(params.rate) and params.rate > 0):
            raise ConfigError(f"poisson rate must be positive, got {params.rate}")

    def validate_data(self, x) -> np.ndarray:
        x = self._as_matrix(x)
        if x.shape[1] != 1:
            raise DataError(f"{self.kind} needs 1-dimensional counts, got D={x.shape[1]}")
        v = x[:, 0]
        if np.any(v < 0) or np.any(v != np.floor(v)):
            raise DataError("poisson observations must be non-negative integers")
        return x

    def log_density(self, params, x) -> np.ndarray:
        v = self.validate_data(x)[:, 0]
        return v * np.log(params.rate) - params.rate - gammaln(v + 1.0)

    def sample(self, params, n, rng) -> np.ndarray:
        return rng.poisson(params.rate, size=n).astype(float)[:, None]

    def fit_weighted(self, x, w, ridge) -> PoissonComponent:
        rate = float(np.dot(w, x[:, 0]) / w.sum())
        return PoissonComponent(rate=max(rate, 1e-12))

    def n_free_params(self, k, dim) -> int:
        return 2 * k - 1

    def marginal_log_densities(self, params) -> list:
        raise ConfigError("coordinatewise k-NN divergence assumes continuous data; "
                          "use the plug-in estimator for counts")

    def params_to_jsonable(self, params) -> dict:
        return {"rate": params.rate}

    def params_from_jsonable(self, obj) -> PoissonComponent:
        return PoissonComponent(rate=float(obj["rate"]))


GAUSSIAN_1D = Gaussian1dFamily()
GAUSSIAN_MV = MvGaussianFamily()
POISSON = PoissonFamily()

_FAMILIES = {f.kind: f for f in (GAUSSIAN_1D, GAUSSIAN_MV, POISSON)}
# CLI spellings accepted alongside the canonical kind strings.
_FAMILY_ALIASES = {
    "gaussian1d": "gaussian-1d",
    "gaussiannd": "gaussian-multivariate",
    "gaussianNd": "gaussian-multivariate",
}


def get_family(kind: str) -> Family:
    key = _FAMILY_ALIASES.get(kind, kind)
    key = _FAMILY_ALIASES.get(key.lower(), key)
    if key not in _FAMILIES:
        raise ConfigError(f"unknown family {kind!r}; choose from {sorted(_FAMILIES)}")
    return _FAMILIES[key]


@dataclass
class MixtureParams:
    """Weights plus per-component parameter records of a single family."""

    family: Family
    weights: np.ndarray
    components: list

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise ConfigError("a mixture needs at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights must be non-negative and sum to 1, got {w}")
        if len(self.components) != w.size:
            raise ConfigError(
                f"{w.size} weights but {len(self.components)} component records"
            )
        for c in self.components:
            self.family.validate_params(c)
        self.weights = w

    @property
    def k(self) -> int:
        return int(self.weights.size)

    def component_log_densities(self, x) -> np.ndarray:
        """Matrix of shape (N, K): log f_k(x_i) for every component k."""
        return np.column_stack([self.family.log_density(c, x) for c in self.components])

    def to_jsonable(self) -> dict:
        return {
            "family": self.family.kind,
            "weights": self.weights.tolist(),
            "components": [self.family.params_to_jsonable(c) for c in self.components],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "MixtureParams":
        family = get_family(obj["family"])
        comps = [family.params_from_jsonable(c) for c in obj["components"]]
        return cls(family=family, weights=np.array(obj["weights"]), components=comps)


def component_log_density(family: Family, params, x):
    """Log density of one component; scalar in, scalar out."""
    family.validate_params(params)
    out = family.log_density(params, x)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def mixture_log_density(mix: MixtureParams, x):
    """Mixture log density via log-sum-exp over components.

    Stable for log weights plus component log densities down to extreme
    underflow; scalar input gives scalar output.
    """
    logs = mix.component_log_densities(x) + np.log(mix.weights)
    out = logsumexp(logs, axis=1)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def sample_mixture(mix: MixtureParams, n: int, seed: int, name: str = "") -> tuple[Dataset, np.ndarray]:
    """Draw n observations from the mixture.

    Returns the dataset together with the latent component index of every
    row.  Deterministic given ``seed``.
    """
    if n < 1:
        raise DataError(f"sample size must be >= 1, got {n}")
    rng = child_rng(seed, STREAM_GENERATE)
    z = rng.choice(mix.k, size=n, p=mix.weights)
    dim = mix.family.event_dim(mix.components[0])
    x = np.empty((n, dim))
    for k in range(mix.k):
        idx = np.flatnonzero(z == k)
        if idx.size:
            x[idx] = mix.family.sample(mix.components[k], idx.size, rng)
    return Dataset(observations=x, labels=z, name=name), z
