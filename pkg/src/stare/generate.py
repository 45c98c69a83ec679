"""Synthetic data generators for the simulation scenarios.

Each generator produces data from a mixture whose components are *not* in
the fitted family (skewed or overdispersed), which is what the selection
procedure is designed to tolerate.  Scenarios are described by a
:class:`GeneratorSpec`; a registry of named presets covers the standard
benchmark settings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import ConfigError, DataError
from .util import STREAM_GENERATE, atomic_write_text, child_rng

SCENARIO_KINDS = (
    "skew-normal-mixture",
    "negbin-mixture",
    "multivariate-skew-normal-mixture",
    "gaussian-mixture",
)


@dataclass
class GeneratorSpec:
    """Declarative description of one synthetic dataset.

    Which fields are required depends on ``scenario``; ``validate`` checks
    the combination.  JSON field names match the attribute names exactly.
    """

    scenario: str
    n: int
    seed: int = 0
    weights: list = field(default_factory=list)
    locations: list | None = None
    scales: list | None = None
    skewness: list | None = None
    negbin_m: list | None = None
    negbin_p: list | None = None
    corr_sigma: float | None = None
    dim: int | None = None

    def __post_init__(self):
        self.validate()

    @property
    def k(self) -> int:
        return len(self.weights)

    def validate(self) -> None:
        if self.scenario not in SCENARIO_KINDS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; choose from {list(SCENARIO_KINDS)}"
            )
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        w = np.asarray(self.weights, dtype=float)
        if w.size < 1 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"weights must be positive and sum to 1, got {self.weights}")
        k = w.size

        def _need(name, value, length):
            if value is None or len(value) != length:
                raise ConfigError(f"scenario {self.scenario!r} needs {name} of length {length}")

        if self.scenario == "skew-normal-mixture":
            _need("locations", self.locations, k)
            _need("scales", self.scales, k)
            _need("skewness", self.skewness, k)
            if np.any(np.asarray(self.scales, dtype=float) <= 0):
                raise ConfigError("scales must be positive")
        elif self.scenario == "gaussian-mixture":
            _need("locations", self.locations, k)
            _need("scales", self.scales, k)
            if np.any(np.asarray(self.scales, dtype=float) <= 0):
                raise ConfigError("scales must be positive")
        elif self.scenario == "negbin-mixture":
            _need("negbin_m", self.negbin_m, k)
            _need("negbin_p", self.negbin_p, k)
            m = np.asarray(self.negbin_m, dtype=float)
            p = np.asarray(self.negbin_p, dtype=float)
            if np.any(m <= 0):
                raise ConfigError("negbin_m must be positive")
            if np.any((p <= 0) | (p >= 1)):
                raise ConfigError("negbin_p must lie strictly in (0, 1)")
        elif self.scenario == "multivariate-skew-normal-mixture":
            if self.dim is None or self.dim < 1:
                raise ConfigError("multivariate scenario needs dim >= 1")
            if self.corr_sigma is None or self.corr_sigma <= 0:
                raise ConfigError("multivariate scenario needs corr_sigma > 0")
            _need("locations", self.locations, k)
            _need("skewness", self.skewness, k)
            if self.scales is not None:
                _need("scales", self.scales, k)
                if np.any(np.asarray(self.scales, dtype=float) <= 0):
                    raise ConfigError("scales must be positive")

    def to_jsonable(self) -> dict:
        out = {"scenario": self.scenario, "n": self.n, "seed": self.seed,
               "weights": list(self.weights)}
        for name in ("locations", "scales", "skewness", "negbin_m", "negbin_p",
                     "corr_sigma", "dim"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_jsonable(cls, obj: dict) -> "GeneratorSpec":
        known = {"scenario", "n", "seed", "weights", "locations", "scales",
                 "skewness", "negbin_m", "negbin_p", "corr_sigma", "dim"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown generator fields: {sorted(unknown)}")
        if "scenario" not in obj or "n" not in obj:
            raise ConfigError("generator spec needs at least 'scenario' and 'n'")
        return cls(**obj)


def write_spec(spec: GeneratorSpec, path: str) -> None:
    atomic_write_text(path, json.dumps(spec.to_jsonable(), sort_keys=True, indent=2) + "\n")


def read_spec(path: str) -> GeneratorSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return GeneratorSpec.from_jsonable(obj)


def squared_exponential_correlation(dim: int, corr_sigma: float) -> np.ndarray:
    """Correlation matrix C_ij = exp(-(i-j)^2 / corr_sigma^2).

    Positive definite for any corr_sigma > 0 (checked via Cholesky so a bad
    input fails loudly rather than downstream).
    """
    idx = np.arange(dim, dtype=float)
    diff = idx[:, None] - idx[None, :]
    corr = np.exp(-(diff ** 2) / float(corr_sigma) ** 2)
    np.linalg.cholesky(corr)
    return corr


def skew_normal_logpdf(x, loc: float, scale: float, shape: float) -> np.ndarray:
    """Log density 2/s * phi((x-m)/s) * Phi(shape*(x-m)/s)."""
    t = (np.asarray(x, dtype=float) - loc) / scale
    return np.log(2.0) - np.log(scale) + norm.logpdf(t) + norm.logcdf(shape * t)


def sample_skew_normal(n: int, loc: float, scale: float, shape: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Skew-normal draws via the half-normal latent construction.

    With delta = shape/sqrt(1+shape^2) and independent standard normals
    (u0, u1), delta*|u0| + sqrt(1-delta^2)*u1 has the standard skew-normal
    law with the given shape; location and scale are applied afterwards.
    """
    delta = shape / np.sqrt(1.0 + shape * shape)
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    z = delta * np.abs(u0) + np.sqrt(1.0 - delta * delta) * u1
    return loc + scale * z


def sample_mv_skew_normal(n: int, mean: np.ndarray, corr: np.ndarray,
                          shape: np.ndarray, rng: np.random.Generator,
                          scale: float = 1.0) -> np.ndarray:
    """Coordinatewise-skewed correlated gaussian draws.

    One half-normal latent |u0| is shared across coordinates; coordinate j
    mixes it in with weight delta_j = shape_j/sqrt(1+shape_j^2) on top of a
    correlated gaussian vector, then the result is shifted and scaled.
    """
    mean = np.asarray(mean, dtype=float).ravel()
    shape = np.asarray(shape, dtype=float).ravel()
    d = mean.size
    if shape.size == 1:
        shape = np.full(d, shape[0])
    if shape.size != d or corr.shape != (d, d):
        raise ConfigError("mean, correlation, and skewness dimensions disagree")
    delta = shape / np.sqrt(1.0 + shape * shape)
    chol = np.linalg.cholesky(corr)
    u = rng.standard_normal((n, d)) @ chol.T
    u0 = np.abs(rng.standard_normal(n))
    z = delta * u0[:, None] + np.sqrt(1.0 - delta * delta) * u
    return mean + scale * z


def sample_generator(spec: GeneratorSpec, seed: int | None = None,
                     name: str = "") -> tuple[Dataset, np.ndarray]:
    """Draw one dataset from a generator spec.

    Returns the labeled dataset and the component label vector.  ``seed``
    overrides ``spec.seed`` when given; the same (spec, seed) pair always
    produces the same dataset.
    """
    spec.validate()
    used_seed = spec.seed if seed is None else int(seed)
    rng = child_rng(used_seed, STREAM_GENERATE)
    w = np.asarray(spec.weights, dtype=float)
    w = w / w.sum()
    z = rng.choice(w.size, size=spec.n, p=w)

    if spec.scenario == "multivariate-skew-normal-mixture":
        dim = int(spec.dim)
    else:
        dim = 1
    x = np.empty((spec.n, dim))

    for k in range(w.size):
        idx = np.flatnonzero(z == k)
        if idx.size == 0:
            continue
        m = idx.size
        if spec.scenario == "skew-normal-mixture":
            x[idx, 0] = sample_skew_normal(
                m, float(spec.locations[k]), float(spec.scales[k]),
                float(spec.skewness[k]), rng)
        elif spec.scenario == "gaussian-mixture":
            x[idx, 0] = rng.normal(float(spec.locations[k]), float(spec.scales[k]), size=m)
        elif spec.scenario == "negbin-mixture":
            # Negative binomial as a gamma-poisson mixture: lam ~ Gamma(m, (1-p)/p),
            # x | lam ~ Poisson(lam) has mean m(1-p)/p.
            mm = float(spec.negbin_m[k])
            pp = float(spec.negbin_p[k])
            lam = rng.gamma(shape=mm, scale=(1.0 - pp) / pp, size=m)
            x[idx, 0] = rng.poisson(lam)
        else:
            corr = squared_exponential_correlation(dim, float(spec.corr_sigma))
            loc = np.asarray(spec.locations[k], dtype=float).ravel()
            if loc.size == 1:
                loc = np.full(dim, loc[0])
            scale = 1.0 if spec.scales is None else float(spec.scales[k])
            x[idx] = sample_mv_skew_normal(
                m, loc, corr, np.asarray(spec.skewness[k], dtype=float), rng, scale=scale)

    return Dataset(observations=x, labels=z, name=name or spec.scenario), z


def _skewnorm_preset(weights, skewness, n):
    return GeneratorSpec(
        scenario="skew-normal-mixture", n=n, weights=list(weights),
        locations=[-3.0, 3.0], scales=[1.0, 1.0], skewness=list(skewness))


def scenario_spec(alias: str, n: int | None = None, seed: int = 0) -> GeneratorSpec:
    """Preset generator spec for a named benchmark scenario.

    ``n`` overrides the preset sample size; ``seed`` is stored on the
    returned :class:`GeneratorSpec`.
    """
    if alias not in SCENARIO_PRESETS:
        raise ConfigError(
            f"unknown scenario alias {alias!r}; choose from {sorted(SCENARIO_PRESETS)}")
    spec = SCENARIO_PRESETS[alias]()
    if n is not None:
        spec.n = int(n)
    spec.seed = int(seed)
    spec.validate()
    return spec


SCENARIO_PRESETS = {
    # Two skewed clusters at -3 and 3, unit scale.  Names describe the
    # skewness pattern (first cluster, second cluster).
    "skewnorm-same": lambda: _skewnorm_preset([0.5, 0.5], [-10.0, -10.0], 10000),
    "skewnorm-different": lambda: _skewnorm_preset([0.5, 0.5], [-10.0, -1.0], 10000),
    "skewnorm-large-small": lambda: _skewnorm_preset([0.95, 0.05], [-10.0, -1.0], 5000),
    "skewnorm-small-large": lambda: _skewnorm_preset([0.95, 0.05], [-1.0, -10.0], 5000),
    "skewnorm-large-large": lambda: _skewnorm_preset([0.95, 0.05], [-10.0, -10.0], 5000),
    # Three overdispersed count clusters fitted by a poisson mixture.
    "negbin3": lambda: GeneratorSpec(
        scenario="negbin-mixture", n=20000, weights=[0.3, 0.3, 0.4],
        negbin_m=[55.0, 75.0, 100.0], negbin_p=[0.5, 0.3, 0.5]),
    # Three skewed clusters in 50 dimensions with weak banded correlation.
    "highdim3": lambda: GeneratorSpec(
        scenario="multivariate-skew-normal-mixture", n=10000,
        weights=[0.3, 0.3, 0.4], locations=[-3.0, 0.0, 3.0],
        skewness=[[-10.0], [-10.0], [-10.0]], corr_sigma=0.6, dim=50),
    # Perfectly specified gaussian pair, for calibration sanity checks.
    "gauss-two": lambda: GeneratorSpec(
        scenario="gaussian-mixture", n=5000, weights=[0.5, 0.5],
        locations=[-3.0, 3.0], scales=[1.0, 1.0]),
}
