"""
Exact Poisson-binomial kernel.

The number of false discoveries among a rejected set is, conditionally on the
data, a sum of independent Bernoulli(lfdr_i) variables.  Everything the FDX
procedures need from that distribution lives here:

  • pbd_pmf            – full pmf by sequential convolution (compensated)
  • pbd_tail_gt        – P(X > t) with strict, exact integer-count semantics
  • prefix_tails_gt    – P(X_k > γk) for every prefix k in one O(n²) sweep
  • binomial_tail_gt   – the Binomial comparator used by the Step-3 shortcut
  • entropy_prefilter_threshold – Chernoff/relative-entropy safe lfdr level

All functions are pure; nothing here holds state.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import TYPE_CHECKING, Iterator, Sequence

import numpy as np
from scipy.stats import binom

from config import settings
from src.errors import DomainError

if TYPE_CHECKING:
    from src.procedures import FdxLevel

# Leaves of the divide-and-conquer tree are convolved sequentially.
_DC_LEAF = 256


# ---------------------------------------------------------------------------
# Input handling
# ---------------------------------------------------------------------------
def as_probs(p: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a success-probability vector and return it as float64."""
    probs = np.asarray(p, dtype=float).reshape(-1)
    if probs.size and (not np.all(np.isfinite(probs))
                       or probs.min() < 0.0 or probs.max() > 1.0):
        bad = probs[~((probs >= 0.0) & (probs <= 1.0))]
        raise DomainError(f"success probabilities must lie in [0, 1]; got {bad[:3].tolist()}")
    return probs


def as_rational(x: float | int | Fraction) -> Fraction:
    """
    Exact rational for a threshold or tolerance.

    Floats are read through their shortest round-trip decimal, so 0.3 means
    3/10 and γ·k lands exactly on an integer when the decimal product does.
    """
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def exceedance_floor(gamma: float | Fraction, k: int) -> int:
    """⌊γk⌋ computed exactly; X > γk  ⇔  X ≥ ⌊γk⌋ + 1."""
    return math.floor(as_rational(gamma) * k)


def _threshold_floor(threshold: float | Fraction) -> int:
    t = as_rational(threshold)
    if t < 0:
        raise DomainError(f"threshold must be non-negative; got {threshold}")
    return math.floor(t)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------
def _two_sum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Error-free transformation: a + b == s + err exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _sweep(probs: np.ndarray) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """
    Fold the trials in one at a time, in index order.

    Yields (k, hi, lo) after the k-th trial; the pmf of the first k trials is
    hi[:k+1] + lo[:k+1], lo carrying the rounding error of every addition.
    The arrays are reused between steps.
    """
    n = probs.size
    hi = np.zeros(n + 1)
    lo = np.zeros(n + 1)
    hi[0] = 1.0
    for i, q in enumerate(probs):
        # counts 0..i are live; the new trial opens count i + 1
        stay = hi[: i + 2] * (1.0 - q)
        move = np.zeros(i + 2)
        move[1:] = hi[: i + 1] * q
        s, err = _two_sum(stay, move)

        lo_next = lo[: i + 2] * (1.0 - q)
        lo_next[1:] += lo[: i + 1] * q

        hi[: i + 2] = s
        lo[: i + 2] = lo_next + err
        np.clip(hi[: i + 2], 0.0, 1.0, out=hi[: i + 2])
        yield i + 1, hi, lo


def _convolve_sequential(probs: np.ndarray) -> np.ndarray:
    if probs.size == 0:
        return np.ones(1)
    for _, hi, lo in _sweep(probs):
        pass
    return np.clip(hi + lo, 0.0, 1.0)


def _convolve_pairwise(probs: np.ndarray) -> np.ndarray:
    if probs.size <= _DC_LEAF:
        return _convolve_sequential(probs)
    mid = probs.size // 2
    left = _convolve_pairwise(probs[:mid])
    right = _convolve_pairwise(probs[mid:])
    return np.clip(np.convolve(left, right), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Public kernel
# ---------------------------------------------------------------------------
def pbd_pmf(p: Sequence[float] | np.ndarray) -> np.ndarray:
    """
    Probability mass function of a sum of independent Bernoulli(p_i).

    Returns an array of length k + 1 indexed by the count j.  The empty
    vector gives the point mass at 0.
    """
    probs = as_probs(p)
    if probs.size > settings.PBD_DC_CUTOFF:
        return _convolve_pairwise(probs)
    return _convolve_sequential(probs)


def tail_from_pmf(mass: np.ndarray, floor_t: int) -> float:
    """P(X ≥ floor_t + 1) from an already computed pmf."""
    start = floor_t + 1
    if start >= mass.size:
        return 0.0
    return math.fsum(mass[start:])


def pbd_tail_gt(p: Sequence[float] | np.ndarray, threshold: float | Fraction) -> float:
    """P(X > threshold), the strict inequality evaluated on integer counts."""
    floor_t = _threshold_floor(threshold)
    return tail_from_pmf(pbd_pmf(p), floor_t)


def prefix_tails_gt(p: Sequence[float] | np.ndarray, gamma: float | Fraction) -> np.ndarray:
    """
    tails[k - 1] = P(PBD(p_1..p_k) > γk) for k = 1..n.

    One sequential sweep that reads the tail off the pmf after each trial is
    folded in; this is the full scan that Procedure 1 performs.
    """
    probs = as_probs(p)
    gamma_q = as_rational(gamma)
    tails = np.zeros(probs.size)
    for k, hi, lo in _sweep(probs):
        start = math.floor(gamma_q * k) + 1
        if start <= k:
            tails[k - 1] = np.sum(hi[start: k + 1]) + np.sum(lo[start: k + 1])
    return np.clip(tails, 0.0, 1.0)


def binomial_tail_gt(k: int, q: float, threshold: float | Fraction) -> float:
    """P(Binomial(k, q) > threshold) with the same count semantics as pbd_tail_gt."""
    if k < 0:
        raise DomainError(f"trial count must be non-negative; got {k}")
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"success probability must lie in [0, 1]; got {q}")
    floor_t = _threshold_floor(threshold)
    if floor_t >= k:
        return 0.0
    return float(binom.sf(floor_t, k, q))


def geometric_means(sorted_probs: np.ndarray) -> np.ndarray:
    """
    Running geometric means (∏_{i≤k} p_i)^{1/k}, computed in log space.

    Once a zero enters the prefix every later mean is zero.
    """
    probs = as_probs(sorted_probs)
    out = np.zeros(probs.size)
    zeros = np.flatnonzero(probs == 0.0)
    first_zero = int(zeros[0]) if zeros.size else probs.size
    if first_zero == 0:
        return out
    k = np.arange(1, first_zero + 1)
    out[:first_zero] = np.exp(np.cumsum(np.log(probs[:first_zero])) / k)
    return out


# ---------------------------------------------------------------------------
# Relative-entropy pre-filter
# ---------------------------------------------------------------------------
def relative_entropy(gamma: float, eps: float | np.ndarray) -> float | np.ndarray:
    """H(γ, ε) between a γ-coin and an ε-coin; +∞ at ε = 0."""
    eps = np.asarray(eps, dtype=float)
    with np.errstate(divide="ignore"):
        h = (gamma * np.log(gamma / eps)
             + (1.0 - gamma) * np.log((1.0 - gamma) / (1.0 - eps)))
    return float(h) if h.ndim == 0 else h


def entropy_prefilter_threshold(level: "FdxLevel", k: int | np.ndarray = 1) -> float | np.ndarray:
    """
    Largest ε′ ∈ (0, γ) with exp{−k·H(γ, ε′)} ≤ α, for one k or an array of them.

    Any k hypotheses whose lfdr are all ≤ ε′(k) can be rejected together:
    P(PBD > γk) ≤ P(Bin(k, ε′) ≥ γk) ≤ exp(−kH) ≤ α.
    Bisection runs on log ε′, so tiny roots are resolved to 1e-10 relative.
    """
    gamma, alpha = level.gamma, level.alpha
    if not (0.0 < gamma < 1.0) or not (0.0 < alpha < 1.0):
        raise DomainError(f"gamma and alpha must lie in (0, 1); got ({gamma}, {alpha})")
    ks = np.asarray(k, dtype=float)
    if ks.size and np.min(ks) < 1:
        raise DomainError(f"k must be at least 1; got {k}")

    target = math.log(1.0 / alpha) / ks
    log_gamma = math.log(gamma)
    hi = np.full(ks.shape, log_gamma)
    # H ≥ γ(ln γ − u) + (1−γ)ln(1−γ) gives a bracket where H exceeds the target
    lo = log_gamma - (target + 1.0 - (1.0 - gamma) * math.log1p(-gamma)) / gamma
    while ks.size and np.max(hi - lo) > settings.BISECT_TOL:
        mid = 0.5 * (lo + hi)
        above = relative_entropy(gamma, np.exp(mid)) >= target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    eps = np.exp(lo)
    return float(eps) if eps.ndim == 0 else eps
