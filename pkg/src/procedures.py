"""
FDX decision rules and the comparators they are measured against.

Procedure 1 scans every prefix of the lfdr ranking; Procedure 2 narrows the
search with two cheap necessary conditions before running the same exact
Poisson-binomial test on what is left.  Both return a RejectionResult and
must agree on every input.

Comparators:

  • bh               – Benjamini–Hochberg step-up (FDR)
  • sc_adaptive      – running mean of the sorted lfdr (adaptive z, FDR)
  • lehmann_romano   – step-down FDP control
  • guo_romano       – step-down FDP control with binomial critical values
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import binom

from config import settings
from src.errors import DomainError, EquivalenceError
from src.pbd import (
    as_rational,
    entropy_prefilter_threshold,
    geometric_means,
    pbd_tail_gt,
    prefix_tails_gt,
)
from src.twogroup import LfdrVector

logger = logging.getLogger(__name__)

SeedLike = int | np.random.Generator | None


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FdxLevel:
    """P(FDP > gamma) <= alpha."""

    gamma: float
    alpha: float

    def __post_init__(self):
        for name in ("gamma", "alpha"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise DomainError(f"{name} must lie strictly inside (0, 1); got {value}")

    @property
    def mean_bound(self) -> float:
        """α + γ(1 − α): the largest mean lfdr any passing prefix can have."""
        return self.alpha + self.gamma * (1.0 - self.alpha)


@dataclass(frozen=True)
class RandomizedExtra:
    probability: float
    rejected: bool


@dataclass(frozen=True)
class RejectionResult:
    """
    n_safe is the largest n whose n smallest lfdr are all at or below
    ε′(n) = entropy_prefilter_threshold(level, n).  Such a prefix passes
    the exact test by the Chernoff bound, so K ≥ n_safe.  Diagnostic only.
    """

    k_final: int
    rejected: np.ndarray
    k1: int
    k2: int
    tail_at_k: float
    n_safe: int = 0
    randomized_extra: RandomizedExtra | None = None

    @property
    def n_rejected(self) -> int:
        return int(self.rejected.size)


def _frozen(idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx, dtype=int)
    idx.setflags(write=False)
    return idx


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------
def _largest_passing(passes: np.ndarray) -> int:
    """max{k : passes[k-1]}, 0 when nothing passes."""
    hits = np.flatnonzero(passes)
    return int(hits[-1]) + 1 if hits.size else 0


def exceedance_floors(gamma: float, ks: np.ndarray) -> np.ndarray:
    """⌊γk⌋ for every k in ks, exact in rational arithmetic."""
    q = as_rational(gamma)
    a, b = q.numerator, q.denominator
    return np.array([(a * int(k)) // b for k in ks], dtype=np.int64)


def _randomize_extra(sorted_p: np.ndarray, k: int, tail_k: float, level: FdxLevel,
                     seed: SeedLike) -> RandomizedExtra | None:
    """Coin for hypothesis K+1: (α − tail_K) / (tail_{K+1} − tail_K)."""
    if k >= sorted_p.size:
        return None
    tail_next = pbd_tail_gt(sorted_p[: k + 1], as_rational(level.gamma) * (k + 1))
    gap = tail_next - tail_k
    if gap <= 0.0:
        logger.debug("randomization skipped: tail does not grow at K+1=%d", k + 1)
        return None
    prob = min(max((level.alpha - tail_k) / gap, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    return RandomizedExtra(probability=float(prob), rejected=bool(rng.random() < prob))


def _finish(lfdr: LfdrVector, level: FdxLevel, k: int, k1: int, k2: int, tail_k: float,
            n_safe: int, randomize: bool, seed: SeedLike) -> RejectionResult:
    extra = None
    n_rej = k
    if randomize:
        extra = _randomize_extra(lfdr.sorted_values(), k, tail_k, level, seed)
        if extra is not None and extra.rejected:
            n_rej = k + 1
    return RejectionResult(
        k_final=k,
        rejected=_frozen(lfdr.rank[:n_rej]),
        k1=k1,
        k2=k2,
        tail_at_k=float(tail_k),
        n_safe=n_safe,
        randomized_extra=extra,
    )


# ---------------------------------------------------------------------------
# FDX procedures
# ---------------------------------------------------------------------------
def procedure1(lfdr: LfdrVector, level: FdxLevel, randomize: bool = False,
               seed: SeedLike = None) -> RejectionResult:
    """
    K = max{k : P(PBD(p^(k)) > γk) ≤ α} over every prefix of the ranking.

    No shortcuts: the exact tail is evaluated at all m prefixes, O(m²).
    """
    m = len(lfdr)
    tails = prefix_tails_gt(lfdr.sorted_values(), level.gamma)
    k = _largest_passing(tails <= level.alpha)
    tail_k = float(tails[k - 1]) if k else 0.0
    return _finish(lfdr, level, k, m, m, tail_k, 0, randomize, seed)


def procedure2(lfdr: LfdrVector, level: FdxLevel, randomize: bool = False,
               seed: SeedLike = None) -> RejectionResult:
    """
    Same K as procedure1, found through three nested stages:

    1. K1: largest k whose running mean of sorted lfdr is ≤ α + γ(1 − α)
    2. K2: largest k ≤ K1 whose Binomial(k, geometric mean) tail is ≤ α
    3. K : largest k ≤ K2 whose exact PBD tail is ≤ α
    """
    p = lfdr.sorted_values()
    m = p.size
    if m == 0:
        return _finish(lfdr, level, 0, 0, 0, 0.0, 0, randomize, seed)

    # Step 2. running means; a passing prefix must satisfy this
    ks = np.arange(1, m + 1)
    means = np.cumsum(p) / ks
    k1 = _largest_passing(means <= level.mean_bound + settings.PBD_SUM_TOL)

    # Step 3. Binomial at the geometric mean is stochastically smaller than the PBD
    k2 = 0
    if k1:
        ks1 = ks[:k1]
        floors = exceedance_floors(level.gamma, ks1)
        gm = geometric_means(p[:k1])
        btail = np.where(floors >= ks1, 0.0, binom.sf(floors, ks1, gm))
        k2 = _largest_passing(btail <= level.alpha + settings.PBD_SUM_TOL)

    # Step 4. exact tails over the surviving prefix
    k, tail_k = 0, 0.0
    if k2:
        tails = prefix_tails_gt(p[:k2], level.gamma)
        k = _largest_passing(tails <= level.alpha)
        tail_k = float(tails[k - 1]) if k else 0.0

    # largest n whose n smallest lfdr all sit under the Chernoff level for n
    n_safe = 0
    if k2:
        n_safe = _largest_passing(p[:k2] <= entropy_prefilter_threshold(level, ks[:k2]))
    logger.debug("procedure2 funnel m=%d K1=%d K2=%d K=%d n_safe=%d", m, k1, k2, k, n_safe)
    return _finish(lfdr, level, k, k1, k2, tail_k, n_safe, randomize, seed)


def check_equivalence(first: RejectionResult, second: RejectionResult) -> None:
    """Raise EquivalenceError unless both results reject the same hypotheses."""
    if first.k_final != second.k_final or not np.array_equal(
            np.sort(first.rejected), np.sort(second.rejected)):
        raise EquivalenceError(
            f"procedures disagree: K={first.k_final} vs K={second.k_final}"
        )


# ---------------------------------------------------------------------------
# Comparators
# ---------------------------------------------------------------------------
def _as_pvalues(p: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0 or arr.max() > 1.0):
        raise DomainError("p-values must lie in (0, 1]")
    return arr


def _as_fdr_level(alpha_fdr: float) -> float:
    if not (0.0 < alpha_fdr < 1.0):
        raise DomainError(f"alpha_fdr must lie in (0, 1); got {alpha_fdr}")
    return float(alpha_fdr)


def _step_down(p: np.ndarray, critical: np.ndarray) -> np.ndarray:
    """Reject along ascending p while p_(i) ≤ c_i; stop at the first failure."""
    order = np.argsort(p, kind="stable")
    fails = np.flatnonzero(p[order] > critical)
    k = int(fails[0]) if fails.size else p.size
    return _frozen(order[:k])


def bh(p: Sequence[float] | np.ndarray, alpha_fdr: float) -> np.ndarray:
    """Benjamini–Hochberg step-up at level alpha_fdr."""
    p = _as_pvalues(p)
    alpha_fdr = _as_fdr_level(alpha_fdr)
    m = p.size
    order = np.argsort(p, kind="stable")
    ks = np.arange(1, m + 1)
    k = _largest_passing(p[order] <= ks * alpha_fdr / m)
    return _frozen(order[:k])


def sc_adaptive(lfdr: LfdrVector, alpha_fdr: float) -> np.ndarray:
    """Largest prefix of the lfdr ranking whose mean lfdr is ≤ alpha_fdr."""
    alpha_fdr = _as_fdr_level(alpha_fdr)
    p = lfdr.sorted_values()
    means = np.cumsum(p) / np.arange(1, p.size + 1)
    k = _largest_passing(means <= alpha_fdr)
    return _frozen(lfdr.rank[:k])


def lehmann_romano_constants(m: int, level: FdxLevel) -> np.ndarray:
    """α_i = (⌊γi⌋ + 1)α / (m + ⌊γi⌋ + 1 − i)"""
    i = np.arange(1, m + 1)
    r = exceedance_floors(level.gamma, i) + 1
    return r * level.alpha / (m + r - i)


def lehmann_romano(p: Sequence[float] | np.ndarray, level: FdxLevel) -> np.ndarray:
    p = _as_pvalues(p)
    return _step_down(p, lehmann_romano_constants(p.size, level))


@lru_cache(maxsize=64)
def _guo_romano_cached(m: int, gamma: float, alpha: float) -> tuple[float, ...]:
    i = np.arange(1, m + 1)
    r = exceedance_floors(gamma, i) + 1
    n = m - i + r
    lo = np.zeros(m)
    hi = np.ones(m)
    # P(Bin(n, u) ≥ r) is increasing in u; keep lo on the feasible side
    while m and np.max(hi - lo) > settings.BISECT_TOL:
        mid = 0.5 * (lo + hi)
        ok = binom.sf(r - 1, n, mid) <= alpha
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return tuple(lo.tolist())


def guo_romano_constants(m: int, level: FdxLevel) -> np.ndarray:
    """c_i = sup{u : P(Binomial(m − i + r_i, u) ≥ r_i) ≤ α}, r_i = ⌊γi⌋ + 1."""
    if m < 0:
        raise DomainError(f"m must be non-negative; got {m}")
    return np.array(_guo_romano_cached(m, level.gamma, level.alpha))


def guo_romano(p: Sequence[float] | np.ndarray, level: FdxLevel) -> np.ndarray:
    p = _as_pvalues(p)
    return _step_down(p, guo_romano_constants(p.size, level))


