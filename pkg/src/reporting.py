"""CSV and JSON writers for the test, simulate and bench commands."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.simharness import CounterexampleRow, ExperimentReport
from src.twogroup import LfdrVector

FLOAT_FORMAT = "%.17g"

REPORT_COLUMNS = [
    "scenario", "procedure", "fdx", "fdx_se", "fdr", "fdr_se",
    "power", "power_se", "reps", "exclusions", "valid",
]
COUNTEREXAMPLE_COLUMNS = ["rho", "runs", "contradictions", "percent", "mean_tail_gap"]


def to_jsonable(obj: Any) -> Any:
    """Recursively convert dataclasses, pydantic models and numpy values to JSON types."""
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: str | Path, payload: Any) -> None:
    text = json.dumps(to_jsonable(payload), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _write_frame(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


# ---------------------------------------------------------------------------
# Per-hypothesis output
# ---------------------------------------------------------------------------
def hypothesis_frame(z: np.ndarray, pvalues: np.ndarray, lfdr: LfdrVector,
                     rejected: np.ndarray) -> pd.DataFrame:
    flags = np.zeros(z.size, dtype=int)
    flags[np.asarray(rejected, dtype=int)] = 1
    return pd.DataFrame({
        "index": np.arange(z.size),
        "z": z,
        "pvalue": pvalues,
        "lfdr": lfdr.values,
        "rank": lfdr.positions(),
        "rejected": flags,
    })


def write_hypothesis_csv(path: str | Path, z: np.ndarray, pvalues: np.ndarray,
                         lfdr: LfdrVector, rejected: np.ndarray) -> pd.DataFrame:
    frame = hypothesis_frame(z, pvalues, lfdr, rejected)
    _write_frame(frame, path)
    return frame


# ---------------------------------------------------------------------------
# Simulation output
# ---------------------------------------------------------------------------
def report_frame(reports: Iterable[ExperimentReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for s in report.summaries:
            row = {"scenario": report.scenario.name}
            row.update(dataclasses.asdict(s))
            rows.append(row)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_report(reports: list[ExperimentReport], csv_path: str | Path | None,
                 json_path: str | Path | None, config: Any) -> pd.DataFrame:
    frame = report_frame(reports)
    if csv_path:
        _write_frame(frame, csv_path)
    if json_path:
        write_json(json_path, {"rows": frame.to_dict(orient="records"), "config": config})
    return frame


def counterexample_frame(rows: Iterable[CounterexampleRow]) -> pd.DataFrame:
    return pd.DataFrame([dataclasses.asdict(r) for r in rows], columns=COUNTEREXAMPLE_COLUMNS)


def write_counterexample(rows: list[CounterexampleRow], csv_path: str | Path | None,
                         json_path: str | Path | None, config: Any) -> pd.DataFrame:
    frame = counterexample_frame(rows)
    if csv_path:
        _write_frame(frame, csv_path)
    if json_path:
        write_json(json_path, {"rows": frame.to_dict(orient="records"), "config": config})
    return frame
