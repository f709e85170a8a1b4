"""
Posterior oracles under dependence.

  • enumerate_posterior – exact P(θ | z) over all 2^m configurations for a
                          block/equicorrelated Gaussian model (small m only)
  • exchangeable_lfdr   – exact P(θ_i = 0 | z) for the one-factor model
                          Z_i = μθ_i + √ρ W + √(1 − ρ) ζ_i, integrating the
                          shared factor W by adaptive Gauss–Hermite quadrature

Both work in log space with max subtraction; nothing here is stochastic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, logsumexp, xlogy
from scipy.stats import norm

from config import settings
from src.errors import CapacityError, DomainError
from src.pbd import exceedance_floor
from src.twogroup import LfdrVector, TwoGroupModel, as_z, lfdr_oracle

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DependenceModel:
    """
    Gaussian z-values with alternative mean mu and equicorrelation rho.

    blocks, when given, partition the indices into independent equicorrelated
    blocks; inflation adds inflation·diag(θ) to the covariance.
    """

    mu: float
    rho: float
    pi: float
    blocks: tuple[tuple[int, ...], ...] | None = None
    inflation: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite; got {self.mu}")
        if not (0.0 <= self.rho < 1.0):
            raise DomainError(f"rho must lie in [0, 1); got {self.rho}")
        if not (0.0 <= self.pi < 1.0):
            raise DomainError(f"pi must lie in [0, 1); got {self.pi}")
        if self.inflation < 0.0:
            raise DomainError(f"inflation must be non-negative; got {self.inflation}")
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(tuple(int(i) for i in b) for b in self.blocks))

    @classmethod
    def two_blocks(cls, m: int, mu: float, rho: float, pi: float,
                   inflation: float = 0.0) -> "DependenceModel":
        """Indices split into two equal halves (the first gets the extra one when m is odd)."""
        half = (m + 1) // 2
        return cls(mu=mu, rho=rho, pi=pi, inflation=inflation,
                   blocks=(tuple(range(half)), tuple(range(half, m))))

    def block_labels(self, m: int) -> np.ndarray:
        if self.blocks is None:
            return np.zeros(m, dtype=int)
        labels = np.full(m, -1, dtype=int)
        for b, members in enumerate(self.blocks):
            for i in members:
                if not (0 <= i < m) or labels[i] >= 0:
                    raise DomainError(f"blocks must partition range({m}); index {i} misplaced")
                labels[i] = b
        if np.any(labels < 0):
            raise DomainError(f"blocks must partition range({m}); missing {np.flatnonzero(labels < 0).tolist()}")
        return labels

    def covariance(self, m: int) -> np.ndarray:
        """Null covariance: unit variances, rho within a block, zero across blocks."""
        labels = self.block_labels(m)
        same = labels[:, None] == labels[None, :]
        cov = np.where(same, self.rho, 0.0)
        np.fill_diagonal(cov, 1.0)
        return cov


# ---------------------------------------------------------------------------
# Exhaustive enumeration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PosteriorEnumeration:
    configs: np.ndarray   # (2^m, m) of 0/1, row c holds the bits of c
    probs: np.ndarray     # P(θ = configs[c] | z)
    lfdr: LfdrVector      # marginal P(θ_i = 0 | z)

    def exact_tail(self, selection: Sequence[int], gamma: float) -> float:
        """P(Σ_{i∈S} (1 − θ_i) > γ|S| | z)"""
        sel = np.asarray(selection, dtype=int)
        if sel.size == 0:
            return 0.0
        false_count = sel.size - self.configs[:, sel].sum(axis=1)
        floor_t = exceedance_floor(gamma, sel.size)
        return math.fsum(self.probs[false_count > floor_t])


def _all_configs(m: int) -> np.ndarray:
    codes = np.arange(2 ** m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int8)


def _log_likelihoods(z: np.ndarray, configs: np.ndarray, model: DependenceModel) -> np.ndarray:
    """log N(z; μθ, Σ + inflation·diag(θ)) up to a constant shared by every θ."""
    m = z.size
    base = model.covariance(m)
    diffs = z[None, :] - model.mu * configs
    try:
        if model.inflation == 0.0:
            chol = np.linalg.cholesky(base)
            resid = np.linalg.solve(chol, diffs.T)
            return -0.5 * np.sum(resid * resid, axis=0)
        covs = np.broadcast_to(base, (configs.shape[0], m, m)).copy()
        idx = np.arange(m)
        covs[:, idx, idx] += model.inflation * configs
        chol = np.linalg.cholesky(covs)
        resid = np.linalg.solve(chol, diffs[:, :, None])[:, :, 0]
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        return -0.5 * (np.sum(resid * resid, axis=1) + logdet)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"covariance is not positive definite: {exc}") from exc


def enumerate_posterior(z: Sequence[float] | np.ndarray, model: DependenceModel) -> PosteriorEnumeration:
    z = as_z(z)
    m = z.size
    if m > settings.ENUM_MAX_M:
        raise CapacityError(f"enumeration supports at most {settings.ENUM_MAX_M} hypotheses; got {m}")

    configs = _all_configs(m)
    n_alt = configs.sum(axis=1)
    log_prior = xlogy(n_alt, model.pi) + xlogy(m - n_alt, 1.0 - model.pi)
    log_post = _log_likelihoods(z, configs, model) + log_prior

    weights = np.exp(log_post - np.max(log_post))
    probs = weights / math.fsum(weights)
    marginal_null = (1 - configs).T.astype(float) @ probs
    return PosteriorEnumeration(configs=configs, probs=probs, lfdr=LfdrVector.from_values(marginal_null))


# ---------------------------------------------------------------------------
# Exchangeable model by quadrature
# ---------------------------------------------------------------------------
def _factor_terms(z: np.ndarray, w: np.ndarray, model: DependenceModel) -> tuple[np.ndarray, np.ndarray]:
    """log{(1−π) f(z_i | θ_i=0, w)} and log{π f(z_i | θ_i=1, w)} on a (len(w), m) grid."""
    shift = math.sqrt(model.rho) * np.asarray(w, dtype=float)[:, None]
    scale = math.sqrt(1.0 - model.rho)
    log_a = math.log1p(-model.pi) + norm.logpdf(z[None, :], loc=shift, scale=scale)
    log_b = math.log(model.pi) + norm.logpdf(z[None, :], loc=model.mu + shift, scale=scale)
    return log_a, log_b


def _log_factor_posterior(z: np.ndarray, w: np.ndarray, model: DependenceModel) -> np.ndarray:
    log_a, log_b = _factor_terms(z, w, model)
    return np.sum(np.logaddexp(log_a, log_b), axis=1) + norm.logpdf(w)


def _factor_mode(z: np.ndarray, model: DependenceModel) -> tuple[float, float]:
    """Posterior mode of W and the Laplace scale at it."""
    def neg(w: float) -> float:
        return -float(_log_factor_posterior(z, np.array([w]), model)[0])

    res = minimize_scalar(neg, bounds=(-50.0, 50.0), method="bounded", options={"xatol": 1e-10})
    mode = float(res.x)
    h = 1e-4
    curv = (neg(mode + h) - 2.0 * neg(mode) + neg(mode - h)) / (h * h)
    scale = 1.0 / math.sqrt(curv) if curv > 0.0 and math.isfinite(curv) else 1.0
    return mode, scale


def _gh_lfdr(z: np.ndarray, model: DependenceModel, mode: float, scale: float, n: int) -> np.ndarray:
    x, wts = np.polynomial.hermite.hermgauss(n)
    w = mode + math.sqrt(2.0) * scale * x
    with np.errstate(divide="ignore"):
        log_wts = np.log(wts) + x * x
    log_a, log_b = _factor_terms(z, w, model)
    log_node = log_wts + np.sum(np.logaddexp(log_a, log_b), axis=1) + norm.logpdf(w)
    node_post = np.exp(log_node - logsumexp(log_node))
    return node_post @ expit(log_a - log_b)


def exchangeable_lfdr(z: Sequence[float] | np.ndarray, model: DependenceModel) -> LfdrVector:
    """
    P(θ_i = 0 | z) when the z-values share one Gaussian factor.

    Given W the coordinates are independent, so the posterior null probability
    is the W-posterior average of the per-coordinate lfdr.  Node counts double
    from GH_NODES until two successive answers agree within GH_TOL.
    """
    z = as_z(z)
    if model.blocks is not None or model.inflation != 0.0:
        raise DomainError("exchangeable_lfdr needs a single equicorrelated block without inflation")
    if model.rho == 0.0 or model.pi == 0.0:
        return lfdr_oracle(z, TwoGroupModel.gaussian_shift(model.pi, model.mu))

    mode, scale = _factor_mode(z, model)
    n = settings.GH_NODES
    current = _gh_lfdr(z, model, mode, scale, n)
    while n < settings.GH_MAX_NODES:
        n *= 2
        refined = _gh_lfdr(z, model, mode, scale, n)
        gap = float(np.max(np.abs(refined - current))) if z.size else 0.0
        current = refined
        logger.debug("Gauss-Hermite %d nodes: max change %.3e", n, gap)
        if gap <= settings.GH_TOL:
            break
    else:
        logger.warning("Gauss-Hermite did not settle within %d nodes", settings.GH_MAX_NODES)
    return LfdrVector.from_values(current)
