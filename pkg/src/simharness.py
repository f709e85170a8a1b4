"""
Simulation harness: data generators, per-trial metrics and the experiment
runners behind the simulate command.

Design constraints:
- Every replication r draws from SeedSequence([master_seed, r]) only, so the
  report does not depend on how joblib schedules the work.
- All procedures in one replication see the same dataset.
- A replication in which any estimator fails is dropped for every procedure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import settings
from src.errors import DomainError, EstimationError
from src.oracle import DependenceModel, enumerate_posterior, exchangeable_lfdr
from src.procedures import (
    FdxLevel,
    bh,
    guo_romano,
    lehmann_romano,
    procedure1,
    procedure2,
    sc_adaptive,
)
from src.twogroup import (
    GaussianComponent,
    LfdrVector,
    TwoGroupModel,
    fit_empirical_null,
    lfdr_conservative,
    lfdr_empirical,
    lfdr_from_mixture,
    lfdr_oracle,
    pvalue_from_z,
)

logger = logging.getLogger(__name__)

Scenario = Literal["iid", "equicorr", "hierarchical"]
SeedLike = int | np.random.Generator | np.random.SeedSequence | None

HIERARCHICAL_PI = 0.1
HIERARCHICAL_SHIFT = 0.25
HIERARCHICAL_MU0 = 0.1


# ---------------------------------------------------------------------------
# Datasets and metrics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SimulatedDataset:
    z: np.ndarray
    theta: np.ndarray
    scenario: Scenario
    seed: int | None = None
    mu0: float = 0.0

    def __post_init__(self):
        if self.z.shape != self.theta.shape:
            raise DomainError("z and theta must have equal length")

    @property
    def m(self) -> int:
        return int(self.z.size)


@dataclass(frozen=True)
class TrialMetrics:
    fdp: float
    exceeded: bool
    tp: int
    rejections: int
    non_null: int = 0


def compute_metrics(rejected: Sequence[int] | np.ndarray, theta: np.ndarray,
                    gamma: float, non_null: int | None = None) -> TrialMetrics:
    """FDP = false / max(R, 1); exceeded = FDP > γ."""
    idx = np.asarray(rejected, dtype=int)
    theta = np.asarray(theta)
    if idx.size and (idx.min() < 0 or idx.max() >= theta.size):
        raise DomainError("rejected indices out of range")
    tp = int(theta[idx].sum()) if idx.size else 0
    n_rej = int(idx.size)
    fdp = (n_rej - tp) / max(n_rej, 1)
    return TrialMetrics(
        fdp=fdp,
        exceeded=bool(fdp > gamma),
        tp=tp,
        rejections=n_rej,
        non_null=int(theta.sum()) if non_null is None else non_null,
    )


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _seed_tag(seed: SeedLike) -> int | None:
    return seed if isinstance(seed, int) else None


def gen_iid(m: int, pi: float, mu: float, seed: SeedLike = None) -> SimulatedDataset:
    """θ_i ~ Bernoulli(π), z_i | θ_i ~ N(μθ_i, 1)."""
    _check_size(m, pi)
    rng = _rng(seed)
    theta = (rng.random(m) < pi).astype(np.int8)
    z = rng.standard_normal(m) + mu * theta
    return SimulatedDataset(z=z, theta=theta, scenario="iid", seed=_seed_tag(seed))


def gen_equicorr(m: int, pi: float, mu: float, rho: float, seed: SeedLike = None) -> SimulatedDataset:
    """z_i = μθ_i + √ρ W + √(1 − ρ) ζ_i with one shared W per dataset."""
    _check_size(m, pi)
    if not (0.0 <= rho < 1.0):
        raise DomainError(f"rho must lie in [0, 1); got {rho}")
    rng = _rng(seed)
    theta = (rng.random(m) < pi).astype(np.int8)
    w = rng.standard_normal()
    zeta = rng.standard_normal(m)
    z = mu * theta + math.sqrt(rho) * w + math.sqrt(1.0 - rho) * zeta
    return SimulatedDataset(z=z, theta=theta, scenario="equicorr", seed=_seed_tag(seed))


def gen_hierarchical(m: int, seed: SeedLike = None) -> SimulatedDataset:
    """
    Nulls share a random location μ0 ~ U[−0.1, 0.1]; one in ten hypotheses is
    non-null, half of them N(0.25, 1) and half N(−0.25, 1).
    """
    _check_size(m, HIERARCHICAL_PI)
    rng = _rng(seed)
    mu0 = float(rng.uniform(-HIERARCHICAL_MU0, HIERARCHICAL_MU0))
    theta = (rng.random(m) < HIERARCHICAL_PI).astype(np.int8)
    sign = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    means = np.where(theta == 1, sign * HIERARCHICAL_SHIFT, mu0)
    z = means + rng.standard_normal(m)
    return SimulatedDataset(z=z, theta=theta, scenario="hierarchical", seed=_seed_tag(seed), mu0=mu0)


def _check_size(m: int, pi: float) -> None:
    if m < 1:
        raise DomainError(f"m must be at least 1; got {m}")
    if not (0.0 <= pi <= 1.0):
        raise DomainError(f"pi must lie in [0, 1]; got {pi}")


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------
class ScenarioConfig(BaseModel):
    """One simulation design; validated once, then shared read-only by every replication."""

    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    kind: Scenario = "iid"
    m: int = Field(5000, ge=1)
    pi: float = Field(0.2, ge=0.0, le=1.0)
    mu: float = -2.0
    rho: float = Field(0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _oracle_needs_pi_below_one(self) -> "ScenarioConfig":
        if self.kind != "hierarchical" and self.pi >= 1.0:
            raise ValueError("pi must be below 1 for the two-group oracle")
        return self

    def generate(self, seed: SeedLike) -> SimulatedDataset:
        if self.kind == "iid":
            return gen_iid(self.m, self.pi, self.mu, seed)
        if self.kind == "equicorr":
            return gen_equicorr(self.m, self.pi, self.mu, self.rho, seed)
        return gen_hierarchical(self.m, seed)

    def oracle_lfdr(self, data: SimulatedDataset) -> LfdrVector:
        """The posterior null probability under the generating model."""
        if self.kind == "hierarchical":
            model = TwoGroupModel(
                pi=HIERARCHICAL_PI,
                null=GaussianComponent(data.mu0, 1.0),
                alternatives=(GaussianComponent(HIERARCHICAL_SHIFT, 1.0, 0.5),
                              GaussianComponent(-HIERARCHICAL_SHIFT, 1.0, 0.5)),
            )
            return lfdr_oracle(data.z, model)
        if self.kind == "equicorr" and self.rho > 0.0:
            return exchangeable_lfdr(data.z, DependenceModel(mu=self.mu, rho=self.rho, pi=self.pi))
        return lfdr_oracle(data.z, TwoGroupModel.gaussian_shift(self.pi, self.mu))


# ---------------------------------------------------------------------------
# Procedure registry
# ---------------------------------------------------------------------------
class TrialContext:
    """Per-replication cache so procedures sharing an lfdr estimate fit it once."""

    def __init__(self, scenario: ScenarioConfig, data: SimulatedDataset,
                 level: FdxLevel, alpha_fdr: float, fit_seed: np.random.SeedSequence):
        self.scenario = scenario
        self.data = data
        self.level = level
        self.alpha_fdr = alpha_fdr
        self.fit_seed = fit_seed

    @cached_property
    def oracle_lfdr(self) -> LfdrVector:
        return self.scenario.oracle_lfdr(self.data)

    @cached_property
    def pvalues(self) -> np.ndarray:
        return pvalue_from_z(self.data.z)

    @cached_property
    def recentered_pvalues(self) -> np.ndarray:
        centre = float(np.mean(self.data.z))
        return pvalue_from_z(self.data.z, GaussianComponent(centre, 1.0))

    @cached_property
    def mixture_lfdr(self) -> LfdrVector:
        return lfdr_from_mixture(self.data.z, seed=np.random.default_rng(self.fit_seed))[0]

    @cached_property
    def conservative_lfdr(self) -> LfdrVector:
        return lfdr_conservative(self.data.z)

    @cached_property
    def empnull_lfdr(self) -> LfdrVector:
        return lfdr_empirical(self.data.z, fit_empirical_null(self.data.z))


ProcedureFn = Callable[[TrialContext], np.ndarray]

PROCEDURES: dict[str, ProcedureFn] = {
    "proc2_oracle":  lambda c: procedure2(c.oracle_lfdr, c.level).rejected,
    "proc1_oracle":  lambda c: procedure1(c.oracle_lfdr, c.level).rejected,
    "proc2_lfdr":    lambda c: procedure2(c.mixture_lfdr, c.level).rejected,
    "proc2_pi0":     lambda c: procedure2(c.conservative_lfdr, c.level).rejected,
    "proc2_empnull": lambda c: procedure2(c.empnull_lfdr, c.level).rejected,
    "sc":            lambda c: sc_adaptive(c.mixture_lfdr, c.alpha_fdr),
    "sc_oracle":     lambda c: sc_adaptive(c.oracle_lfdr, c.alpha_fdr),
    "bh":            lambda c: bh(c.pvalues, c.alpha_fdr),
    "gr":            lambda c: guo_romano(c.pvalues, c.level),
    "lr":            lambda c: lehmann_romano(c.pvalues, c.level),
    "gr_recentered": lambda c: guo_romano(c.recentered_pvalues, c.level),
}


def _check_procedures(procedures: Sequence[str]) -> tuple[str, ...]:
    names = tuple(procedures)
    if not names:
        raise DomainError("at least one procedure is required")
    unknown = [p for p in names if p not in PROCEDURES]
    if unknown:
        raise DomainError(f"unknown procedures {unknown}; choose from {sorted(PROCEDURES)}")
    return names


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ProcedureSummary:
    procedure: str
    fdx: float
    fdx_se: float
    fdr: float
    fdr_se: float
    power: float
    power_se: float
    reps: int
    exclusions: int
    valid: bool


@dataclass(frozen=True)
class ExperimentReport:
    scenario: ScenarioConfig
    level: FdxLevel
    alpha_fdr: float
    reps: int
    master_seed: int
    exclusions: int
    valid: bool
    summaries: tuple[ProcedureSummary, ...] = field(default_factory=tuple)

    def summary(self, procedure: str) -> ProcedureSummary:
        for s in self.summaries:
            if s.procedure == procedure:
                return s
        raise KeyError(procedure)


def child_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), *map(int, path)])


def _run_trial(scenario: ScenarioConfig, procedures: tuple[str, ...], level: FdxLevel,
               alpha_fdr: float, master_seed: int, r: int) -> tuple[int, dict[str, TrialMetrics] | None]:
    data_seed, fit_seed = child_seed(master_seed, r).spawn(2)
    data = scenario.generate(np.random.default_rng(data_seed))
    ctx = TrialContext(scenario, data, level, alpha_fdr, fit_seed)
    non_null = int(data.theta.sum())
    try:
        out = {name: compute_metrics(PROCEDURES[name](ctx), data.theta, level.gamma, non_null)
               for name in procedures}
    except (EstimationError, DomainError) as exc:
        logger.warning("replication %d excluded: %s", r, exc)
        return r, None
    return r, out


def _mean_and_se(values: list[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var / n)


def _power_and_se(tp: list[float], nn: list[float]) -> tuple[float, float]:
    """Ratio of means with a delta-method standard error; 0 when no non-nulls exist."""
    n = len(tp)
    mean_nn = math.fsum(nn) / n if n else 0.0
    if mean_nn == 0.0:
        return 0.0, 0.0
    power = math.fsum(tp) / n / mean_nn
    resid = [t - power * k for t, k in zip(tp, nn)]
    _, se = _mean_and_se(resid)
    return power, se / mean_nn


def summarise(name: str, trials: list[TrialMetrics], reps: int, exclusions: int,
              valid: bool) -> ProcedureSummary:
    fdx, fdx_se = _mean_and_se([float(t.exceeded) for t in trials])
    fdr, fdr_se = _mean_and_se([t.fdp for t in trials])
    power, power_se = _power_and_se([float(t.tp) for t in trials], [float(t.non_null) for t in trials])
    return ProcedureSummary(name, fdx, fdx_se, fdr, fdr_se, power, power_se, reps, exclusions, valid)


def run_experiment(scenario: ScenarioConfig, procedures: Sequence[str], level: FdxLevel,
                   reps: int, master_seed: int, threads: int | None = None,
                   alpha_fdr: float | None = None) -> ExperimentReport:
    """Run `reps` replications of `scenario` and aggregate every procedure's metrics."""
    if reps < 1:
        raise DomainError(f"reps must be at least 1; got {reps}")
    names = _check_procedures(procedures)
    alpha_fdr = level.alpha if alpha_fdr is None else alpha_fdr
    n_jobs = threads or settings.THREADS

    logger.info("running %s: %d reps of %s on %d threads", scenario.name, reps, ",".join(names), n_jobs)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_trial)(scenario, names, level, alpha_fdr, master_seed, r) for r in range(reps)
    )
    results = sorted(results, key=lambda item: item[0])

    kept = [metrics for _, metrics in results if metrics is not None]
    exclusions = reps - len(kept)
    valid = exclusions <= settings.MAX_EXCLUSION_RATE * reps
    if not valid:
        logger.warning("%s: %d of %d replications excluded; run marked invalid", scenario.name, exclusions, reps)

    summaries = tuple(
        summarise(name, [metrics[name] for metrics in kept], reps, exclusions, valid) for name in names
    )
    return ExperimentReport(scenario=scenario, level=level, alpha_fdr=alpha_fdr, reps=reps,
                            master_seed=master_seed, exclusions=exclusions, valid=valid,
                            summaries=summaries)


# ---------------------------------------------------------------------------
# Block-dependence counterexample
# ---------------------------------------------------------------------------
COUNTEREXAMPLE_M = 10
COUNTEREXAMPLE_PI = 0.3
COUNTEREXAMPLE_MU = -1.5
COUNTEREXAMPLE_GAMMA = 0.5
COUNTEREXAMPLE_INFLATION = 0.01


@dataclass(frozen=True)
class CounterexampleRow:
    rho: float
    runs: int
    contradictions: int
    percent: float
    mean_tail_gap: float


def _counterexample_run(model: DependenceModel, seed: np.random.SeedSequence) -> tuple[bool, float]:
    """One draw: does picking the best hypothesis per block beat the global top two?"""
    m = COUNTEREXAMPLE_M
    rng = np.random.default_rng(seed)
    theta = (rng.random(m) < model.pi).astype(np.int8)
    cov = model.covariance(m) + model.inflation * np.diag(theta)
    z = model.mu * theta + np.linalg.cholesky(cov) @ rng.standard_normal(m)

    post = enumerate_posterior(z, model)
    top_two = post.lfdr.rank[:2]
    labels = model.block_labels(m)
    per_block = [int(np.flatnonzero(labels == b)[np.argmin(post.lfdr.values[labels == b])])
                 for b in range(len(model.blocks))]

    tail_top = post.exact_tail(top_two, COUNTEREXAMPLE_GAMMA)
    tail_block = post.exact_tail(per_block, COUNTEREXAMPLE_GAMMA)
    if tail_block < tail_top:
        return True, (tail_top - tail_block) / tail_top
    return False, 0.0


def counterexample_experiment(rhos: Sequence[float], reps: int, seed: int,
                              threads: int | None = None) -> list[CounterexampleRow]:
    """Percentage of draws where block-wise selection has a strictly lower exact tail."""
    if reps < 1:
        raise DomainError(f"reps must be at least 1; got {reps}")
    models = [DependenceModel.two_blocks(COUNTEREXAMPLE_M, COUNTEREXAMPLE_MU, rho, COUNTEREXAMPLE_PI,
                                         inflation=COUNTEREXAMPLE_INFLATION) for rho in rhos]
    rows = []
    for j, model in enumerate(models):
        outcomes = Parallel(n_jobs=threads or settings.THREADS)(
            delayed(_counterexample_run)(model, child_seed(seed, j, r)) for r in range(reps)
        )
        gaps = [gap for hit, gap in outcomes if hit]
        rows.append(CounterexampleRow(
            rho=float(model.rho),
            runs=reps,
            contradictions=len(gaps),
            percent=100.0 * len(gaps) / reps,
            mean_tail_gap=math.fsum(gaps) / len(gaps) if gaps else 0.0,
        ))
        logger.info("rho=%.2f: %d/%d contradictions", model.rho, len(gaps), reps)
    return rows
