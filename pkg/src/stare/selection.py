"""Structurally aware selection of the number of mixture components.

For each candidate count K the pipeline fits a mixture, assigns each
observation to a component, and estimates a divergence between every
component's assigned data and its fitted law.  The loss

    sum_k  n_k * max(0, d_k - rho)  +  lambda * K

charges a component only for divergence beyond the tolerance ``rho`` and
adds a small per-component penalty.  Because the loss is piecewise linear
in rho it can be swept exactly; the first sufficiently wide interval of
rho on which one K is the minimizer is the stable-region choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .divergence import DivergenceEstimator
from .em import EmConfig, FittedModel, bic, fit_em, sample_assignments
from .errors import (ConfigError, DataError, DegenerateFitError, EstimatorError,
                     InsufficientSamplesError, NumericalError, StareError)
from .families import Family
from .util import parallel_map

__version_tag__ = "stare-0.1.0"


@dataclass(frozen=True)
class ComponentDivergence:
    """Divergence of one component's assigned data from its fitted law."""

    component_index: int
    n: float
    divergence: float


@dataclass
class ComponentDivergenceProfile:
    """Per-component divergences for one candidate K.

    Empty components carry n = 0 and divergence 0 by convention; a
    component whose assigned sample was too small for the estimator
    carries divergence +inf, which makes every finite-rho loss infinite.
    Counts are floats so averaged profiles (z replicates) stay exact.
    """

    k: int
    per_component: list[ComponentDivergence]
    total_n: int

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("profile needs k >= 1")
        s = 0.0
        for c in self.per_component:
            if c.n < 0:
                raise ConfigError("component counts must be non-negative")
            if math.isnan(c.divergence):
                raise ConfigError("divergences must not be NaN")
            if c.n == 0 and c.divergence != 0.0:
                raise ConfigError("empty components must carry divergence 0")
            s += c.n
        if abs(s - self.total_n) > 1e-9 * max(1.0, self.total_n):
            raise ConfigError(f"component counts sum to {s}, expected {self.total_n}")

    @property
    def counts(self) -> np.ndarray:
        return np.array([c.n for c in self.per_component])

    @property
    def divergences(self) -> np.ndarray:
        return np.array([c.divergence for c in self.per_component])

    def has_infinite(self) -> bool:
        return any(math.isinf(c.divergence) and c.n > 0 for c in self.per_component)

    def to_jsonable(self) -> dict:
        return {
            "k": self.k,
            "total_n": self.total_n,
            "per_component": [
                {"component_index": c.component_index, "n": c.n,
                 "divergence": (c.divergence if math.isfinite(c.divergence) else "inf")}
                for c in self.per_component
            ],
        }


def component_divergences(model: FittedModel, z: np.ndarray, data: Dataset,
                          estimator: DivergenceEstimator) -> ComponentDivergenceProfile:
    """Estimate the divergence of every component against its assigned rows.

    Components with no assigned rows contribute (0, 0.0).  Components whose
    assigned sample is smaller than the estimator's minimum get divergence
    +inf rather than a silent zero.  Any other estimator failure is
    re-raised with the component index attached.
    """
    z = np.asarray(z)
    x = model.family.validate_data(data.observations)
    if z.shape != (x.shape[0],):
        raise DataError(f"assignments must have shape ({x.shape[0]},), got {z.shape}")
    if z.min(initial=0) < 0 or z.max(initial=0) >= model.k:
        raise DataError("assignments reference components outside the model")
    entries = []
    for k in range(model.k):
        rows = x[z == k]
        n_k = rows.shape[0]
        if n_k == 0:
            entries.append(ComponentDivergence(k, 0, 0.0))
            continue
        if n_k < estimator.min_samples(n_k):
            entries.append(ComponentDivergence(k, n_k, math.inf))
            continue
        try:
            est = estimator(rows, model.family, model.params.components[k],
                            stream_key=(model.k, k))
        except InsufficientSamplesError:
            entries.append(ComponentDivergence(k, n_k, math.inf))
            continue
        except (EstimatorError, NumericalError) as exc:
            raise EstimatorError(str(exc), component_index=k) from exc
        entries.append(ComponentDivergence(k, n_k, est.value))
    return ComponentDivergenceProfile(k=model.k, per_component=entries, total_n=x.shape[0])


def structurally_aware_loss(profile: ComponentDivergenceProfile, rho: float) -> float:
    """Hinge loss sum_k n_k * max(0, d_k - rho) at tolerance rho >= 0.

    Zero exactly when every non-empty component's divergence is within the
    tolerance; infinite when a non-empty component carries divergence +inf.
    """
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    total = 0.0
    for c in profile.per_component:
        if c.n == 0:
            continue
        excess = c.divergence - rho
        if excess > 0:
            total += c.n * excess
    return total


def penalized_loss(profile: ComponentDivergenceProfile, rho: float, lam: float) -> float:
    """Hinge loss plus lambda * K.

    Empty components still count toward the K penalty: the candidate asked
    for K components, so it pays for K.
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    return structurally_aware_loss(profile, rho) + lam * profile.k


@dataclass
class LossCurve:
    """The penalized loss of one candidate K as an exact function of rho.

    Piecewise linear with breakpoints at the distinct positive component
    divergences; on the segment [b_j, b_{j+1}) the value is
    intercepts[j] + slopes[j] * rho.  Beyond the last breakpoint the curve
    is exactly lambda * k.  ``infinite`` marks candidates with an infinite
    component divergence: their loss is +inf for every finite rho.
    """

    k: int
    lam: float
    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    infinite: bool = False

    def value(self, rho):
        scalar = np.ndim(rho) == 0
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(r < 0):
            raise ConfigError("rho must be >= 0")
        if self.infinite:
            out = np.full(r.shape, np.inf)
        else:
            seg = np.searchsorted(self.breakpoints, r, side="right")
            out = self.intercepts[seg] + self.slopes[seg] * r
        return float(out[0]) if scalar else out

    def max_breakpoint(self) -> float:
        return float(self.breakpoints[-1]) if self.breakpoints.size else 0.0

    def to_jsonable(self) -> dict:
        segments = []
        if not self.infinite:
            edges = [0.0, *self.breakpoints.tolist(), math.inf]
            for j in range(len(self.slopes)):
                segments.append({
                    "rho_lo": edges[j],
                    "rho_hi": (edges[j + 1] if math.isfinite(edges[j + 1]) else "inf"),
                    "slope": float(self.slopes[j]),
                    "intercept": float(self.intercepts[j]),
                })
        return {
            "k": self.k,
            "lambda": self.lam,
            "infinite": self.infinite,
            "breakpoints": self.breakpoints.tolist(),
            "segments": segments,
        }


def loss_curve(profile: ComponentDivergenceProfile, lam: float) -> LossCurve:
    """Exact piecewise-linear representation of rho -> penalized_loss.

    Aggregates counts at each distinct positive divergence; non-positive
    divergences never contribute to the hinge on rho >= 0.  The slope on a
    segment is minus the total count of components whose divergence exceeds
    it, so curves are convex, non-increasing, and end flat at lambda * k.
    """
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    if profile.has_infinite():
        return LossCurve(k=profile.k, lam=lam, breakpoints=np.array([]),
                         slopes=np.array([0.0]), intercepts=np.array([np.inf]),
                         infinite=True)
    agg: dict[float, float] = {}
    for c in profile.per_component:
        if c.n > 0 and c.divergence > 0:
            agg[c.divergence] = agg.get(c.divergence, 0.0) + c.n
    if not agg:
        return LossCurve(k=profile.k, lam=lam, breakpoints=np.array([]),
                         slopes=np.array([0.0]), intercepts=np.array([lam * profile.k]))
    bps = np.array(sorted(agg))
    counts = np.array([agg[b] for b in bps])
    # Segment j covers rho in [b_{j-1}, b_j); components active there are
    # those with divergence >= b_j, i.e. suffix sums starting at j.
    suffix_n = np.concatenate([np.cumsum(counts[::-1])[::-1], [0.0]])
    suffix_nb = np.concatenate([np.cumsum((counts * bps)[::-1])[::-1], [0.0]])
    slopes = -suffix_n
    intercepts = suffix_nb + lam * profile.k
    return LossCurve(k=profile.k, lam=lam, breakpoints=bps,
                     slopes=slopes, intercepts=intercepts)


@dataclass
class CandidateFit:
    """Everything retained for one candidate K along the selection path."""

    k: int
    model: FittedModel | None = None
    assignments: np.ndarray | None = None
    profile: ComponentDivergenceProfile | None = None
    replicate_profiles: list = field(default_factory=list)
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _merge_replicates(k: int, profiles: list, total_n: int) -> ComponentDivergenceProfile:
    if len(profiles) == 1:
        return profiles[0]
    r = len(profiles)
    entries = []
    for p in profiles:
        for c in p.per_component:
            entries.append(ComponentDivergence(c.component_index, c.n / r, c.divergence))
    return ComponentDivergenceProfile(k=k, per_component=entries, total_n=total_n)


def fit_candidates(data: Dataset, family: Family, k_max: int,
                   em_config: EmConfig = EmConfig(),
                   estimator: DivergenceEstimator | None = None,
                   seed: int | None = None, z_mode: str = "sample",
                   z_replicates: int = 1) -> list[CandidateFit]:
    """Fit K = 1..k_max and estimate each candidate's divergence profile.

    Individual candidates that fail (all EM restarts degenerate) are
    recorded with their failure message rather than aborting the run.
    ``z_replicates`` > 1 averages the profile over several assignment draws
    (an extension beyond the single-draw procedure; the default of 1 keeps
    the single configured draw).  Work is distributed over STARE_THREADS.
    """
    if k_max < 1:
        raise ConfigError(f"k_max must be >= 1, got {k_max}")
    if z_replicates < 1:
        raise ConfigError("z_replicates must be >= 1")
    if estimator is None:
        raise ConfigError("an estimator is required to build divergence profiles")
    if seed is not None:
        em_config = replace(em_config, seed=int(seed))
    base_seed = em_config.seed

    def _one(k: int) -> CandidateFit:
        try:
            model = fit_em(data, family, k, em_config)
        except (DegenerateFitError, DataError) as exc:
            return CandidateFit(k=k, failure=str(exc))
        profiles = []
        first_z = None
        try:
            for rep in range(z_replicates):
                z = sample_assignments(model, data, mode=z_mode,
                                       seed=base_seed + 7919 * rep)
                if first_z is None:
                    first_z = z
                profiles.append(component_divergences(model, z, data, estimator))
        except EstimatorError as exc:
            return CandidateFit(k=k, model=model, failure=str(exc))
        profile = _merge_replicates(k, profiles, data.n)
        return CandidateFit(k=k, model=model, assignments=first_z,
                            profile=profile, replicate_profiles=profiles)

    return parallel_map(_one, range(1, k_max + 1))


@dataclass
class SelectionResult:
    """Outcome of a fixed-rho selection over K = 1..k_max."""

    chosen_k: int
    rho: float
    lam: float
    candidates: list
    provenance: dict = field(default_factory=dict)

    def chosen(self) -> CandidateFit:
        for c in self.candidates:
            if c.k == self.chosen_k:
                return c
        raise StareError("chosen candidate missing from result")

    def to_jsonable(self) -> dict:
        per_k = []
        for c in self.candidates:
            entry: dict = {"k": c.k}
            if c.ok:
                loss = penalized_loss(c.profile, self.rho, self.lam)
                entry.update({
                    "loss": (loss if math.isfinite(loss) else "inf"),
                    "log_likelihood": c.model.log_likelihood,
                    "bic": bic(c.model, c.profile.total_n),
                    "converged": c.model.converged,
                    "iterations_used": c.model.iterations_used,
                    "model": c.model.to_jsonable(),
                    "profile": c.profile.to_jsonable(),
                })
            else:
                entry["failure"] = c.failure
            per_k.append(entry)
        return {
            "chosen_k": self.chosen_k,
            "rho": self.rho,
            "lambda": self.lam,
            "per_k": per_k,
            "provenance": self.provenance,
        }


def select_k(data: Dataset, family: Family, k_max: int, rho: float, lam: float,
             em_config: EmConfig = EmConfig(),
             estimator: DivergenceEstimator | None = None,
             seed: int | None = None, z_mode: str = "sample",
             z_replicates: int = 1,
             candidates: list | None = None) -> SelectionResult:
    """Pick the K minimizing the penalized loss at a fixed tolerance rho.

    Ties go to the smaller K.  Pass ``candidates`` to reuse fits from a
    previous call (e.g. when scanning several rho on one dataset).
    """
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    if candidates is None:
        candidates = fit_candidates(data, family, k_max, em_config, estimator,
                                    seed=seed, z_mode=z_mode, z_replicates=z_replicates)
    usable = [c for c in candidates if c.ok]
    if not usable:
        details = "; ".join(f"k={c.k}: {c.failure}" for c in candidates)
        raise DegenerateFitError(k_max, f"every candidate failed ({details})")
    losses = [penalized_loss(c.profile, rho, lam) for c in usable]
    best = min(range(len(usable)), key=lambda i: (losses[i], usable[i].k))
    prov = {
        "seed": (seed if seed is not None else em_config.seed),
        "estimator": getattr(estimator, "tag", "<reused>") if estimator else "<reused>",
        "em_digest": em_config.digest(),
        "family": family.kind,
        "dataset_name": data.name,
        "dataset_n": data.n,
        "dataset_dim": data.dim,
        "z_mode": z_mode,
        "z_replicates": z_replicates,
        "version": __version_tag__,
    }
    return SelectionResult(chosen_k=usable[best].k, rho=float(rho), lam=float(lam),
                           candidates=candidates, provenance=prov)


@dataclass
class StableRegion:
    """Result of the stable-interval rule over a family of loss curves.

    ``regions`` is the full argmin partition of [0, rho_max] as (k, lo, hi)
    triples; ``confident`` is False when no region met the width threshold
    and the widest one was returned instead.
    """

    k: int
    interval: tuple[float, float]
    confident: bool
    regions: list
    rho_max: float
    width_fraction: float

    def to_jsonable(self) -> dict:
        return {
            "k": self.k,
            "interval": list(self.interval),
            "confident": self.confident,
            "rho_max": self.rho_max,
            "width_fraction": self.width_fraction,
            "regions": [{"k": k, "rho_lo": lo, "rho_hi": hi} for (k, lo, hi) in self.regions],
        }


def default_rho_max(curves: list[LossCurve]) -> float:
    """1.5 times the largest finite divergence across all curves."""
    top = 0.0
    for c in curves:
        if not c.infinite and c.breakpoints.size:
            top = max(top, float(c.breakpoints[-1]))
    return 1.5 * top if top > 0 else 1.0


def argmin_partition(curves: list[LossCurve], rho_max: float) -> list:
    """Maximal intervals of [0, rho_max] on which one K is the loss argmin.

    Exact: cut points are curve breakpoints plus pairwise intersections of
    the linear pieces; each refined cell is won by the curve with the
    smallest value at its midpoint (smaller K on ties).
    """
    finite = [c for c in curves if not c.infinite]
    if not finite:
        raise NumericalError("every candidate's loss curve is infinite")
    if rho_max <= 0:
        raise ConfigError("rho_max must be positive")
    cuts = {0.0, float(rho_max)}
    for c in finite:
        for b in c.breakpoints:
            if 0.0 < b < rho_max:
                cuts.add(float(b))
    base = sorted(cuts)
    refined = set(base)
    for lo, hi in zip(base[:-1], base[1:]):
        mid = 0.5 * (lo + hi)
        lines = []
        for c in finite:
            seg = int(np.searchsorted(c.breakpoints, mid, side="right"))
            lines.append((c.slopes[seg], c.intercepts[seg]))
        for i in range(len(lines)):
            s1, i1 = lines[i]
            for j in range(i + 1, len(lines)):
                s2, i2 = lines[j]
                if s1 != s2:
                    r = (i2 - i1) / (s1 - s2)
                    if lo < r < hi:
                        refined.add(float(r))
    edges = sorted(refined)
    regions = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        values = [(c.value(mid), c.k) for c in finite]
        win = min(values)[1]
        if regions and regions[-1][0] == win:
            regions[-1] = (win, regions[-1][1], hi)
        else:
            regions.append((win, lo, hi))
    return regions


def stable_region_select(curves: list[LossCurve], rho_max: float | None = None,
                         width_fraction: float = 0.2) -> StableRegion:
    """Choose K by the first wide stable interval of the argmin partition.

    Scanning rho upward, the first maximal interval whose width is at least
    ``width_fraction * rho_max`` wins; if none qualifies the widest
    interval is returned with ``confident=False``.  Larger rho intervals
    correspond to coarser structure, so the first wide one is the smallest
    tolerance at which a single K is stably preferred.
    """
    if not curves:
        raise ConfigError("no loss curves given")
    if not 0 < width_fraction <= 1:
        raise ConfigError("width_fraction must lie in (0, 1]")
    if rho_max is None:
        rho_max = default_rho_max(curves)
    regions = argmin_partition(curves, rho_max)
    threshold = width_fraction * rho_max
    chosen = None
    confident = True
    for k, lo, hi in regions:
        if hi - lo >= threshold:
            chosen = (k, lo, hi)
            break
    if chosen is None:
        confident = False
        chosen = max(regions, key=lambda r: (r[2] - r[1], -r[0]))
    return StableRegion(k=chosen[0], interval=(chosen[1], chosen[2]),
                        confident=confident, regions=regions,
                        rho_max=float(rho_max), width_fraction=float(width_fraction))
