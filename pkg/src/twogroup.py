"""
Two-group model and lfdr estimation.

    f(z) = (1 − π) f0(z) + π f1(z),      lfdr(z) = (1 − π) f0(z) / f(z)

Three ways to obtain the lfdr statistic live here:

  • lfdr_oracle        – the generating TwoGroupModel is known
  • lfdr_from_mixture  – a Gaussian mixture fitted by EM (sklearn; largest component
                         is the null), plugged into lfdr_oracle
  • lfdr_empirical     – an empirical null N(δ0, σ0²) with proportion pi0
                         over a mixture or kernel estimate of f

plus lfdr_conservative, the "π̂ = 0" variant that forces the null
proportion to one over the theoretical N(0, 1) null.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp
from scipy.stats import norm
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture

from config import settings
from src.density import bw_silverman, kde_evaluate, kde_mode
from src.errors import DomainError, EstimationError

logger = logging.getLogger(__name__)

DensityMethod = Literal["mixture", "kernel"]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    sd: float
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise DomainError(f"component parameters must be finite; got {self}")
        if self.sd <= 0.0:
            raise DomainError(f"component sd must be positive; got {self.sd}")
        if not (0.0 <= self.weight <= 1.0 + 1e-12):
            raise DomainError(f"component weight must lie in [0, 1]; got {self.weight}")

    def logpdf(self, z: np.ndarray) -> np.ndarray:
        return norm.logpdf(z, loc=self.mean, scale=self.sd)

    def pdf(self, z: np.ndarray) -> np.ndarray:
        return norm.pdf(z, loc=self.mean, scale=self.sd)


STANDARD_NULL = GaussianComponent(0.0, 1.0)


@dataclass(frozen=True)
class TwoGroupModel:
    """π is the non-null proportion; alternatives carry weights summing to 1."""

    pi: float
    null: GaussianComponent = STANDARD_NULL
    alternatives: tuple[GaussianComponent, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.pi < 1.0):
            raise DomainError(f"pi must lie in [0, 1); got {self.pi}")
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        if self.pi > 0.0:
            if not self.alternatives:
                raise DomainError("pi > 0 requires at least one alternative component")
            total = math.fsum(c.weight for c in self.alternatives)
            if abs(total - 1.0) > 1e-9:
                raise DomainError(f"alternative weights must sum to 1; got {total}")

    @classmethod
    def gaussian_shift(cls, pi: float, mu: float) -> "TwoGroupModel":
        """N(0,1) null against a single N(μ, 1) alternative."""
        alts = (GaussianComponent(mu, 1.0, 1.0),) if pi > 0.0 else ()
        return cls(pi=pi, null=STANDARD_NULL, alternatives=alts)

    def log_null_term(self, z: np.ndarray) -> np.ndarray:
        """log{(1 − π) f0(z)}"""
        return math.log1p(-self.pi) + self.null.logpdf(z)

    def log_density(self, z: np.ndarray) -> np.ndarray:
        """log f(z)"""
        z = np.asarray(z, dtype=float)
        terms = [self.log_null_term(z)]
        if self.pi > 0.0:
            log_pi = math.log(self.pi)
            for comp in self.alternatives:
                if comp.weight > 0.0:
                    terms.append(log_pi + math.log(comp.weight) + comp.logpdf(z))
        return logsumexp(np.vstack(terms), axis=0)

    def density(self, z: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(z))


@dataclass(frozen=True)
class LfdrVector:
    """Per-hypothesis lfdr values and their stable ascending rank."""

    values: np.ndarray
    rank: np.ndarray
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray,
                    flagged: np.ndarray | None = None) -> "LfdrVector":
        vals = np.asarray(values, dtype=float).reshape(-1)
        if vals.size and not np.all(np.isfinite(vals)):
            raise DomainError("lfdr values must be finite")
        vals = np.clip(vals, 0.0, 1.0)
        rank = np.argsort(vals, kind="stable")
        flags = np.asarray(flagged if flagged is not None else [], dtype=int)
        for arr in (vals, rank, flags):
            arr.setflags(write=False)
        return cls(values=vals, rank=rank, flagged=flags)

    def __len__(self) -> int:
        return int(self.values.size)

    def sorted_values(self) -> np.ndarray:
        return self.values[self.rank]

    def positions(self) -> np.ndarray:
        """1-based position of each hypothesis in the lfdr order."""
        pos = np.empty(self.values.size, dtype=int)
        pos[self.rank] = np.arange(1, self.values.size + 1)
        return pos


@dataclass(frozen=True)
class EmpiricalNull:
    delta0: float
    sigma0: float
    pi0: float

    def __post_init__(self):
        if not self.sigma0 > 0.0:
            raise DomainError(f"sigma0 must be positive; got {self.sigma0}")
        if not (0.0 < self.pi0 <= 1.0):
            raise DomainError(f"pi0 must lie in (0, 1]; got {self.pi0}")

    @property
    def component(self) -> GaussianComponent:
        return GaussianComponent(self.delta0, self.sigma0)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------
def as_z(z: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(z, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr))
        raise DomainError(f"z-values must be finite; first bad index {int(bad[0])}")
    return arr


# ---------------------------------------------------------------------------
# Oracle lfdr and p-values
# ---------------------------------------------------------------------------
def lfdr_oracle(z: Sequence[float] | np.ndarray, model: TwoGroupModel) -> LfdrVector:
    """(1 − π) f0(z) / f(z), evaluated in log space."""
    z = as_z(z)
    if model.pi == 0.0:
        return LfdrVector.from_values(np.ones(z.size))
    values = np.exp(model.log_null_term(z) - model.log_density(z))
    return LfdrVector.from_values(values)


def pvalue_from_z(z: Sequence[float] | np.ndarray,
                  null: GaussianComponent = STANDARD_NULL) -> np.ndarray:
    """Two-sided p-values 2·Φ(−|z − δ0| / σ0), floored at the smallest positive double."""
    z = as_z(z)
    p = 2.0 * norm.sf(np.abs(z - null.mean) / null.sd)
    return np.clip(p, np.finfo(float).tiny, 1.0)


# ---------------------------------------------------------------------------
# Gaussian mixture EM
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class _Components:
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray


def _fit_g(z: np.ndarray, G: int, rng: np.random.Generator) -> tuple[GaussianMixture, float] | None:
    """
    Best of up to EM_RESTARTS EM runs by log-likelihood.  The first starts
    from quantile-split means; the rest from sklearn's seeded k-means.
    A run with a component narrower than EM_MIN_SD is discarded.
    """
    X = z.reshape(-1, 1)
    edges = np.quantile(z, np.linspace(0.0, 1.0, G + 1))
    quantile_starts = (0.5 * (edges[:-1] + edges[1:])).reshape(-1, 1)
    best, best_score = None, -np.inf
    for attempt in range(settings.EM_RESTARTS):
        gmm = GaussianMixture(
            n_components=G,
            covariance_type="spherical",
            tol=settings.EM_TOL,
            max_iter=settings.EM_MAX_ITER,
            reg_covar=settings.EM_REG_COVAR,
            means_init=quantile_starts if attempt == 0 else None,
            random_state=int(rng.integers(2**31 - 1)),
        )
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                gmm.fit(X)
        except ValueError as exc:
            logger.warning("EM failed (G=%d, attempt %d): %s", G, attempt, exc)
            continue
        if np.any(np.sqrt(gmm.covariances_) < settings.EM_MIN_SD):
            logger.warning("EM collapsed a component (G=%d, attempt %d)", G, attempt)
            continue
        if not gmm.converged_:
            logger.debug("EM hit max_iter (G=%d, attempt %d)", G, attempt)
        score = float(gmm.score(X))
        if score > best_score:
            best, best_score = gmm, score
    if best is None:
        return None
    return best, float(best.bic(X))


def _merge_close(parts: _Components, sep: float) -> _Components:
    """Moment-match components whose means sit closer than `sep` times the wider sd."""
    w, mu, sd = list(parts.weights), list(parts.means), list(parts.sds)
    while len(w) > 1:
        best, pair = None, None
        for a in range(len(w)):
            for b in range(a + 1, len(w)):
                gap = abs(mu[a] - mu[b]) / max(sd[a], sd[b])
                if gap < sep and (best is None or gap < best):
                    best, pair = gap, (a, b)
        if pair is None:
            break
        a, b = pair
        wt = w[a] + w[b]
        m = (w[a] * mu[a] + w[b] * mu[b]) / wt
        second = (w[a] * (sd[a] ** 2 + mu[a] ** 2) + w[b] * (sd[b] ** 2 + mu[b] ** 2)) / wt
        w[a], mu[a], sd[a] = wt, m, math.sqrt(max(second - m * m, settings.EM_MIN_SD ** 2))
        del w[b], mu[b], sd[b]
    return _Components(np.array(w), np.array(mu), np.array(sd))


def fit_mixture_em(z: Sequence[float] | np.ndarray,
                   components: Sequence[int] | None = None,
                   seed: int | np.random.Generator | None = 0,
                   merge_sep: float | None = None) -> TwoGroupModel:
    """
    Fit Gaussian mixtures for each candidate G, keep the BIC winner, and read
    it as a two-group model: the heaviest component is the null (ties go to
    the mean nearest the data median), the rest form the alternative.

    merge_sep > 0 first moment-merges components whose means lie within
    that many sds of each other; the default (MIXTURE_MERGE_SEP = 0) keeps
    the fitted components as they are.
    """
    z = as_z(z)
    if z.size < settings.EM_MIN_POINTS:
        raise DomainError(f"mixture fitting needs at least {settings.EM_MIN_POINTS} z-values; got {z.size}")
    components = tuple(components or settings.EM_CANDIDATES)
    if not components or any(g not in (2, 3, 4) for g in components):
        raise DomainError(f"candidate component counts must come from {{2, 3, 4}}; got {components}")
    merge_sep = settings.MIXTURE_MERGE_SEP if merge_sep is None else merge_sep
    rng = np.random.default_rng(seed)

    best, best_bic = None, np.inf
    for G in components:
        fitted = _fit_g(z, G, rng)
        if fitted is None:
            continue
        gmm, bic = fitted
        logger.debug("G=%d bic=%.3f", G, bic)
        if bic < best_bic:
            best, best_bic = gmm, bic
    if best is None:
        raise EstimationError(f"EM degenerated for every G in {components} after "
                              f"{settings.EM_RESTARTS} restarts each")

    parts = _Components(best.weights_, best.means_[:, 0], np.sqrt(best.covariances_))
    if merge_sep > 0.0:
        parts = _merge_close(parts, merge_sep)
    weights, means, sds = parts.weights, parts.means, parts.sds
    median = float(np.median(z))
    order = sorted(range(weights.size), key=lambda g: (-round(weights[g], 12), abs(means[g] - median)))
    null_idx = order[0]
    pi = float(1.0 - weights[null_idx])
    if pi <= 1e-12:
        return TwoGroupModel(pi=0.0, null=GaussianComponent(float(means[null_idx]), float(sds[null_idx])))
    alts = tuple(
        GaussianComponent(float(means[g]), float(sds[g]), float(weights[g] / pi))
        for g in range(weights.size) if g != null_idx
    )
    # renormalise against rounding so the weights sum to 1 within 1e-9
    total = math.fsum(c.weight for c in alts)
    alts = tuple(GaussianComponent(c.mean, c.sd, c.weight / total) for c in alts)
    return TwoGroupModel(pi=pi, null=GaussianComponent(float(means[null_idx]), float(sds[null_idx])),
                         alternatives=alts)


def lfdr_from_mixture(z: Sequence[float] | np.ndarray,
                      seed: int | np.random.Generator | None = 0) -> tuple[LfdrVector, TwoGroupModel]:
    """Data-driven lfdr: fit the mixture, then evaluate the fitted two-group model."""
    model = fit_mixture_em(z, seed=seed)
    return lfdr_oracle(z, model), model


# ---------------------------------------------------------------------------
# Empirical null
# ---------------------------------------------------------------------------
def _central_window(z: np.ndarray, central_fraction: float) -> tuple[float, float]:
    mode = kde_mode(z)
    half = float(np.quantile(np.abs(z - mode), central_fraction))
    return mode - half, mode + half


def _fit_null_mle(z: np.ndarray, lo: float, hi: float) -> EmpiricalNull:
    inside = z[(z >= lo) & (z <= hi)]
    n, n0 = z.size, inside.size
    centre = 0.5 * (lo + hi)
    frac = n0 / n
    # start from the sd that would put the observed share of a normal in the window
    start_sd = max((hi - lo) / (2.0 * norm.ppf(0.5 + 0.5 * min(frac, 0.999))), 1e-3)

    def unpack(params):
        d, log_s, logit_p = params
        return d, math.exp(log_s), 1.0 / (1.0 + math.exp(-logit_p))

    def neg_loglik(params):
        d, s, p = unpack(params)
        mass = norm.cdf((hi - d) / s) - norm.cdf((lo - d) / s)
        cp = p * mass
        if not (0.0 < cp < 1.0):
            return np.inf
        val = n0 * math.log(cp) + (n - n0) * math.log1p(-cp)
        zv = (inside - d) / s
        val += -0.5 * float(np.dot(zv, zv)) - n0 * math.log(s) - n0 * math.log(mass)
        return -val

    res = minimize(neg_loglik, np.array([centre, math.log(start_sd), 3.0]), method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000})
    if not np.isfinite(res.fun):
        raise EstimationError(f"empirical-null likelihood did not converge: {res.message}")
    d, s, p = unpack(res.x)
    return EmpiricalNull(delta0=float(d), sigma0=float(s), pi0=float(min(p, 1.0)))


def _fit_null_central_matching(z: np.ndarray, lo: float, hi: float) -> EmpiricalNull:
    """Quadratic fit to log bin counts inside the central window."""
    n_bins = max(10, int(np.sqrt(np.sum((z >= lo) & (z <= hi)))))
    counts, edges = np.histogram(z, bins=n_bins, range=(lo, hi))
    mids = 0.5 * (edges[:-1] + edges[1:])
    keep = counts > 0
    if keep.sum() < 3:
        raise EstimationError("too few occupied bins for central matching")
    c2, c1, c0 = np.polyfit(mids[keep], np.log(counts[keep]), deg=2, w=np.sqrt(counts[keep]))
    if c2 >= 0.0:
        raise EstimationError("central log-density is not concave; central matching failed")
    var = -1.0 / (2.0 * c2)
    delta = c1 * var
    width = edges[1] - edges[0]
    log_pi0 = c0 + delta ** 2 / (2.0 * var) + 0.5 * math.log(2.0 * math.pi * var) - math.log(z.size * width)
    return EmpiricalNull(delta0=float(delta), sigma0=float(math.sqrt(var)), pi0=float(min(math.exp(log_pi0), 1.0)))


def fit_empirical_null(z: Sequence[float] | np.ndarray,
                       central_fraction: float | None = None,
                       method: Literal["mle", "cm"] = "mle") -> EmpiricalNull:
    """
    Estimate (δ0, σ0, pi0) from the z-values in the central window: the
    interval around the density mode holding `central_fraction` of the data.
    """
    z = as_z(z)
    central_fraction = settings.CENTRAL_FRACTION if central_fraction is None else central_fraction
    if z.size < settings.EMPNULL_MIN_POINTS:
        raise EstimationError(f"empirical null needs at least {settings.EMPNULL_MIN_POINTS} z-values; got {z.size}")
    if not (0.2 < central_fraction <= 0.9):
        raise DomainError(f"central_fraction must lie in (0.2, 0.9]; got {central_fraction}")

    lo, hi = _central_window(z, central_fraction)
    n0 = int(np.sum((z >= lo) & (z <= hi)))
    if n0 < settings.EMPNULL_MIN_WINDOW:
        raise EstimationError(f"only {n0} z-values in the central window [{lo:.3f}, {hi:.3f}]")

    if method == "mle":
        fitted = _fit_null_mle(z, lo, hi)
    elif method == "cm":
        fitted = _fit_null_central_matching(z, lo, hi)
    else:
        raise DomainError(f"unknown empirical-null method {method!r}")
    logger.debug("empirical null (%s): delta0=%.4f sigma0=%.4f pi0=%.4f",
                 method, fitted.delta0, fitted.sigma0, fitted.pi0)
    return fitted


# ---------------------------------------------------------------------------
# Data-driven lfdr
# ---------------------------------------------------------------------------
def _marginal_density(z: np.ndarray, density_method: DensityMethod,
                      seed: int | np.random.Generator | None) -> np.ndarray:
    if density_method == "kernel":
        return kde_evaluate(z, bw=bw_silverman(z))
    if density_method == "mixture":
        return fit_mixture_em(z, seed=seed).density(z)
    raise DomainError(f"unknown density method {density_method!r}")


def _ratio_lfdr(numerator: np.ndarray, denominator: np.ndarray) -> LfdrVector:
    zero = denominator <= 0.0
    values = np.ones(numerator.size)
    ok = ~zero
    values[ok] = numerator[ok] / denominator[ok]
    flagged = np.flatnonzero(zero)
    if flagged.size:
        logger.warning("marginal density vanished at %d z-values; lfdr set to 1", flagged.size)
    return LfdrVector.from_values(values, flagged=flagged)


def lfdr_empirical(z: Sequence[float] | np.ndarray, null: EmpiricalNull,
                   density_method: DensityMethod = "kernel",
                   seed: int | np.random.Generator | None = 0) -> LfdrVector:
    """pi0 · f0(z) / f̂(z) with f0 = N(δ0, σ0²), clamped to [0, 1]."""
    z = as_z(z)
    f_hat = _marginal_density(z, density_method, seed)
    return _ratio_lfdr(null.pi0 * null.component.pdf(z), f_hat)


def lfdr_conservative(z: Sequence[float] | np.ndarray,
                      density_method: DensityMethod = "kernel",
                      seed: int | np.random.Generator | None = 0) -> LfdrVector:
    """min(1, f0(z) / f̂(z)) under the theoretical null with pi0 forced to 1."""
    return lfdr_empirical(z, EmpiricalNull(0.0, 1.0, 1.0), density_method, seed)
