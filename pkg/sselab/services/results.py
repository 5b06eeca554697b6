"""
CSV and run-manifest output
Numbers are written with 17 significant digits so doubles round-trip exactly
"""

import csv
import subprocess
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import structlog
from pydantic import BaseModel, Field

from sselab import __version__
from sselab.numerics.observables import ObservableSeries
from sselab.services.montecarlo import StrongErrorTable

logger = structlog.get_logger(__name__)

STRONG_ERROR_HEADER = ("k", "rms_error", "std_err")
TRACE_HEADER = ("time", "mean", "std_err", "theory")
SCALAR_HEADER = ("t", "exact", "sexp", "mp", "bem", "em", "mp_exact")
MASS_DEFECT_HEADER = ("k", "defect", "std_err")


class RunManifest(BaseModel):
    """Everything needed to re-create a run"""

    version: str = __version__
    git_describe: str
    master_seed: int
    config: Dict[str, Any]
    started_at: str
    wall_clock_seconds: float = 0.0
    outputs: List[str] = Field(default_factory=list)
    performance: Dict[str, Any] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)


def format_number(value: float) -> str:
    return format(float(value), ".17g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    logger.debug("Wrote CSV", path=str(path))
    return path


def write_strong_error_csv(table: StrongErrorTable, path: Path) -> Path:
    return _write_rows(path, STRONG_ERROR_HEADER,
                       zip(table.step_sizes, table.rms_errors, table.std_errs))


def write_trace_csv(series: ObservableSeries, path: Path) -> Path:
    return _write_rows(path, TRACE_HEADER,
                       zip(series.times, series.values, series.std_errs, series.theory))


def write_scalar_csv(table: Dict[str, List[float]], path: Path) -> Path:
    return _write_rows(path, SCALAR_HEADER, zip(*(table[column] for column in SCALAR_HEADER)))


def write_mass_defect_csv(rows: Sequence[Sequence[float]], path: Path) -> Path:
    return _write_rows(path, MASS_DEFECT_HEADER, rows)


def git_describe() -> str:
    try:
        result = subprocess.run(["git", "describe", "--always", "--dirty"],
                                capture_output=True, text=True, timeout=5,
                                cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError) as e:
        logger.debug("git describe unavailable", error=str(e))
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    path = directory / "manifest.json"
    directory.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path
