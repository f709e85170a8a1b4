"""
Command-line front end.

    fdx test      – lfdr + FDX (or comparator) decisions for a file of z-values
    fdx simulate  – run a named or custom simulation design
    fdx bench     – time Procedure 1 against Procedure 2 on one generated dataset

Exit codes: 0 success, 2 bad input, 3 estimation failure, 4 the two
procedures disagreed.
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
import time
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import settings
from config.presets import COUNTEREXAMPLE_PRESETS, INDEPENDENT_PROCEDURES, PRESET_NAMES, PRESETS
from src.errors import (
    EXIT_OK,
    DomainError,
    EquivalenceError,
    FdxError,
    InputFormatError,
    exit_code_for,
)
from src.procedures import (
    FdxLevel,
    RejectionResult,
    bh,
    check_equivalence,
    guo_romano,
    lehmann_romano,
    procedure1,
    procedure2,
    sc_adaptive,
)
from src.reporting import write_counterexample, write_hypothesis_csv, write_json, write_report
from src.simharness import (
    PROCEDURES,
    ScenarioConfig,
    compute_metrics,
    counterexample_experiment,
    gen_iid,
    run_experiment,
)
from src.twogroup import (
    TwoGroupModel,
    fit_empirical_null,
    lfdr_conservative,
    lfdr_empirical,
    lfdr_oracle,
    pvalue_from_z,
)

logger = logging.getLogger(__name__)

FDX_METHODS = ("proc2", "proc1")
METHODS = ("proc2", "proc1", "bh", "sc", "lr", "gr")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------
class RunConfig(BaseModel):
    """Resolved options of one CLI invocation; echoed verbatim into JSON outputs."""

    model_config = ConfigDict(frozen=True)

    command: Literal["test", "simulate", "bench"]
    input: str | None = None
    null_mode: Literal["theoretical", "empirical", "oracle"] = "theoretical"
    method: Literal["proc2", "proc1", "bh", "sc", "lr", "gr"] = "proc2"
    gamma: float = Field(0.1, gt=0.0, lt=1.0)
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    alpha_fdr: float | None = Field(None, gt=0.0, lt=1.0)
    pi: float | None = Field(None, ge=0.0, lt=1.0)
    mu: float | None = None
    density: Literal["mixture", "kernel"] = "kernel"
    central_fraction: float = Field(settings.CENTRAL_FRACTION, gt=0.2, le=0.9)
    empnull_method: Literal["mle", "cm"] = "mle"
    randomize: bool = False
    seed: int = 0
    preset: str = "custom"
    scenario: Literal["iid", "equicorr", "hierarchical"] = "iid"
    m: int | None = Field(None, ge=1)
    rho: float = Field(0.0, ge=0.0, lt=1.0)
    procedures: tuple[str, ...] | None = None
    reps: int | None = Field(None, ge=1)
    threads: int = Field(settings.THREADS, ge=1)
    out_csv: str | None = None
    out_json: str | None = None

    @model_validator(mode="after")
    def _per_command(self) -> "RunConfig":
        if self.command == "test" and not self.input:
            raise ValueError("test needs --input")
        if self.null_mode == "oracle" and (self.pi is None or self.mu is None):
            raise ValueError("--null oracle needs --pi and --mu")
        if self.preset not in PRESET_NAMES:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {PRESET_NAMES}")
        return self

    @property
    def level(self) -> FdxLevel:
        return FdxLevel(self.gamma, self.alpha)

    @property
    def fdr_level(self) -> float:
        return self.alpha if self.alpha_fdr is None else self.alpha_fdr


# ---------------------------------------------------------------------------
# Input
# ---------------------------------------------------------------------------
# plain decimal or scientific notation; no underscores, inf or nan
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_z_file(path: str | Path) -> np.ndarray:
    """
    One z-value per line; blank lines skipped; an optional non-numeric
    header on the first non-blank line.  Anything else is an error naming
    the line, including bytes that are not UTF-8.
    """
    values: list[float] = []
    seen_content = False
    raw_lines = Path(path).read_bytes().splitlines()
    for line_number, raw in enumerate(raw_lines, start=1):
        try:
            token = raw.decode("utf-8-sig" if line_number == 1 else "utf-8").strip()
        except UnicodeDecodeError as exc:
            raise InputFormatError(line_number, f"not valid UTF-8 ({exc.reason})") from exc
        if not token:
            continue
        if not _NUMBER.fullmatch(token):
            if not seen_content and not _looks_numeric(token):
                seen_content = True
                continue
            raise InputFormatError(line_number, f"not a number: {token[:40]!r}")
        seen_content = True
        value = float(token)
        if not math.isfinite(value):
            raise InputFormatError(line_number, f"z-value must be finite: {token[:40]!r}")
        values.append(value)
    if not values:
        raise DomainError(f"{path}: no z-values found")
    return np.asarray(values, dtype=float)


# ---------------------------------------------------------------------------
# fdx test
# ---------------------------------------------------------------------------
def _lfdr_for(z: np.ndarray, config: RunConfig):
    """(lfdr, p-values, null description) for the configured null mode."""
    if config.null_mode == "oracle":
        model = TwoGroupModel.gaussian_shift(config.pi, config.mu)
        return lfdr_oracle(z, model), pvalue_from_z(z), {"mode": "oracle", "pi": config.pi, "mu": config.mu}
    if config.null_mode == "empirical":
        null = fit_empirical_null(z, config.central_fraction, config.empnull_method)
        lfdr = lfdr_empirical(z, null, config.density, seed=config.seed)
        params = {"mode": "empirical", "delta0": null.delta0, "sigma0": null.sigma0, "pi0": null.pi0,
                  "method": config.empnull_method, "flagged": lfdr.flagged}
        return lfdr, pvalue_from_z(z, null.component), params
    lfdr = lfdr_conservative(z, config.density, seed=config.seed)
    return lfdr, pvalue_from_z(z), {"mode": "theoretical", "delta0": 0.0, "sigma0": 1.0, "pi0": 1.0,
                                    "flagged": lfdr.flagged}


def cmd_test(config: RunConfig) -> int:
    z = read_z_file(config.input)
    lfdr, pvalues, null_params = _lfdr_for(z, config)

    result: RejectionResult | None = None
    if config.method == "proc2":
        result = procedure2(lfdr, config.level, config.randomize, config.seed)
    elif config.method == "proc1":
        result = procedure1(lfdr, config.level, config.randomize, config.seed)

    if result is not None:
        rejected = result.rejected
        summary = {"K": result.k_final, "k1": result.k1, "k2": result.k2,
                   "tail_at_k": result.tail_at_k, "n_safe": result.n_safe,
                   "randomized_extra": result.randomized_extra}
    else:
        rejected = {
            "bh": lambda: bh(pvalues, config.fdr_level),
            "sc": lambda: sc_adaptive(lfdr, config.fdr_level),
            "lr": lambda: lehmann_romano(pvalues, config.level),
            "gr": lambda: guo_romano(pvalues, config.level),
        }[config.method]()
        summary = {"K": int(rejected.size), "k1": None, "k2": None, "tail_at_k": None,
                   "n_safe": None, "randomized_extra": None}

    if config.out_csv:
        write_hypothesis_csv(config.out_csv, z, pvalues, lfdr, rejected)
    payload = {"m": int(z.size), **summary, "null": null_params, "config": config}
    if config.out_json:
        write_json(config.out_json, payload)
    print(f"✅ Success: {config.method} rejected {rejected.size} of {z.size} hypotheses", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fdx simulate
# ---------------------------------------------------------------------------
def _custom_design(config: RunConfig) -> dict:
    scenario = {"name": f"custom_{config.scenario}", "kind": config.scenario,
                "m": config.m or (settings.HIERARCHICAL_M if config.scenario == "hierarchical" else 5000),
                "rho": config.rho}
    if config.pi is not None:
        scenario["pi"] = config.pi
    if config.mu is not None:
        scenario["mu"] = config.mu
    return {"scenarios": [scenario], "procedures": list(config.procedures or INDEPENDENT_PROCEDURES),
            "gamma": config.gamma, "alpha": config.alpha, "alpha_fdr": config.fdr_level,
            "reps": settings.DEFAULT_REPS}


def cmd_simulate(config: RunConfig) -> int:
    if config.preset in COUNTEREXAMPLE_PRESETS:
        design = PRESETS[config.preset]
        reps = config.reps or design["reps"]
        rows = counterexample_experiment(design["rhos"], reps, config.seed, config.threads)
        write_counterexample(rows, config.out_csv, config.out_json,
                             {"preset": config.preset, "design": design, "run": config})
        print(f"✅ Success: counterexample over {len(rows)} rho values", file=sys.stderr)
        return EXIT_OK

    design = _custom_design(config) if config.preset == "custom" else PRESETS[config.preset]
    procedures = list(config.procedures or design["procedures"])
    unknown = [p for p in procedures if p not in PROCEDURES]
    if unknown:
        raise DomainError(f"unknown procedures {unknown}; choose from {sorted(PROCEDURES)}")
    level = FdxLevel(design["gamma"], design["alpha"])
    reps = config.reps or design["reps"]

    try:
        scenarios = [ScenarioConfig(**s) for s in design["scenarios"]]
    except ValidationError as exc:
        raise DomainError(f"invalid scenario: {exc}") from exc

    reports = [
        run_experiment(s, procedures, level, reps, config.seed, config.threads, design["alpha_fdr"])
        for s in scenarios
    ]
    write_report(reports, config.out_csv, config.out_json,
                 {"preset": config.preset, "design": design, "run": config})
    invalid = [r.scenario.name for r in reports if not r.valid]
    if invalid:
        logger.warning("runs marked invalid: %s", ", ".join(invalid))
    print(f"✅ Success: {len(reports)} scenario(s) x {len(procedures)} procedure(s), {reps} reps",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fdx bench
# ---------------------------------------------------------------------------
def cmd_bench(config: RunConfig) -> int:
    m = config.m or settings.BENCH_M
    level = FdxLevel(settings.BENCH_GAMMA, settings.BENCH_ALPHA)
    data = gen_iid(m, settings.BENCH_PI, settings.BENCH_MU, config.seed)
    lfdr = lfdr_oracle(data.z, TwoGroupModel.gaussian_shift(settings.BENCH_PI, settings.BENCH_MU))

    start = time.perf_counter()
    full = procedure1(lfdr, level)
    proc1_seconds = time.perf_counter() - start
    start = time.perf_counter()
    fast = procedure2(lfdr, level)
    proc2_seconds = time.perf_counter() - start

    try:
        check_equivalence(full, fast)
        identical = True
    except EquivalenceError:
        identical = False

    payload = {
        "m": m, "seed": config.seed,
        "k1": fast.k1, "k2": fast.k2, "k": fast.k_final,
        "proc1_seconds": proc1_seconds, "proc2_seconds": proc2_seconds,
        "speedup": proc1_seconds / proc2_seconds if proc2_seconds > 0 else None,
        "identical": identical,
        "fdp": compute_metrics(fast.rejected, data.theta, level.gamma).fdp,
    }
    if config.out_json:
        write_json(config.out_json, payload)
    else:
        print(f"K1={fast.k1} K2={fast.k2} K={fast.k_final} "
              f"proc1={proc1_seconds:.3f}s proc2={proc2_seconds:.3f}s")
    if not identical:
        raise EquivalenceError(f"procedure 1 rejected {full.k_final}, procedure 2 rejected {fast.k_final}")
    print(f"✅ Success: identical rejections, speedup {payload['speedup'] or float('nan'):.1f}x",
          file=sys.stderr)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "bench": cmd_bench}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdx", description="FDX control by lfdr ranking")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (default: FDX_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    test = sub.add_parser("test", help="apply a procedure to a file of z-values")
    test.add_argument("--input", required=True, help="one z-value per line, optional header")
    test.add_argument("--gamma", type=float, default=0.1)
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--alpha-fdr", type=float, help="level for bh / sc (default: --alpha)")
    test.add_argument("--method", choices=METHODS, default="proc2")
    test.add_argument("--null", dest="null_mode", choices=["theoretical", "empirical", "oracle"],
                      default="theoretical")
    test.add_argument("--pi", type=float, help="non-null proportion for --null oracle")
    test.add_argument("--mu", type=float, help="alternative mean for --null oracle")
    test.add_argument("--density", choices=["mixture", "kernel"], default="kernel")
    test.add_argument("--central-fraction", type=float, default=settings.CENTRAL_FRACTION)
    test.add_argument("--empnull-method", choices=["mle", "cm"], default="mle")
    test.add_argument("--randomize", action="store_true", help="randomize the decision on hypothesis K+1")
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--out-csv")
    test.add_argument("--out-json")

    sim = sub.add_parser("simulate", help="run a simulation design")
    sim.add_argument("--preset", choices=PRESET_NAMES, default="custom")
    sim.add_argument("--scenario", choices=["iid", "equicorr", "hierarchical"], default="iid")
    sim.add_argument("--m", type=int)
    sim.add_argument("--pi", type=float)
    sim.add_argument("--mu", type=float)
    sim.add_argument("--rho", type=float, default=0.0)
    sim.add_argument("--gamma", type=float, default=0.05)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--alpha-fdr", type=float)
    sim.add_argument("--procedures", help=f"comma-separated subset of {','.join(sorted(PROCEDURES))}")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=settings.THREADS)
    sim.add_argument("--out-csv")
    sim.add_argument("--out-json")

    bench = sub.add_parser("bench", help="time Procedure 1 against Procedure 2")
    bench.add_argument("--m", type=int)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out-json")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    options = {k: v for k, v in vars(args).items() if k != "log_level" and v is not None}
    if isinstance(options.get("procedures"), str):
        options["procedures"] = tuple(p.strip() for p in options["procedures"].split(",") if p.strip())
    try:
        return RunConfig(**options)
    except ValidationError as exc:
        raise DomainError(f"invalid options: {exc.errors()[0]['msg']}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        config = config_from_args(args)
        return COMMANDS[config.command](config)
    except (FdxError, OSError) as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
