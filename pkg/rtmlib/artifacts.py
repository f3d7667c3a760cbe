"""Files written by the command-line harness. CSV_SCHEMA.md describes the columns."""

import dataclasses
import datetime
import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Optional, Union

import numpy as np
import pandas as pd

from rtmlib.config import RunConfig
from rtmlib.errors import MalformedDataError
from rtmlib.forward1d import ForwardBatch, Grid1D, LogPermField
from rtmlib.serializers import record_serializer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRUTH_CSV: Final = "truth.csv"
TRUTH_INVERSION_CSV: Final = "truth_inversion.csv"
OBSERVATIONS_CSV: Final = "observations.csv"
SIGNALS_CSV: Final = "signals.csv"
SUMMARIES_CSV: Final = "summaries.csv"
METRICS_CSV: Final = "metrics.csv"
TEMPER_TRACE_CSV: Final = "temper_trace.csv"
MUTATION_REPORTS_CSV: Final = "mutation_reports.csv"
COST_JSON: Final = "cost.json"
MANIFEST_JSON: Final = "manifest.json"
ENSEMBLE_DIR: Final = "ensembles"
SWEEP_METRICS_CSV: Final = "sweep_metrics.csv"
SWEEP_FAILURES_CSV: Final = "sweep_failures.csv"

# Enough digits to read back every float exactly.
FLOAT_FORMAT: Final = "%.17g"


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("wrote %s", path)
    return path


def read_frame(path: PathLike, required: Iterable[str] = ()) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MalformedDataError(f"{path}: missing columns {missing}")
    return frame


def field_to_frame(field: LogPermField) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "cell": np.arange(field.grid.num_cells),
            "x": field.grid.cell_centers,
            "u": field.values,
        }
    )


def write_field(path: PathLike, field: LogPermField) -> Path:
    return write_frame(path, field_to_frame(field))


def read_field(path: PathLike, grid: Grid1D) -> LogPermField:
    frame = read_frame(path, required=("u",))
    if len(frame) != grid.num_cells:
        raise MalformedDataError(
            f"{path}: expected {grid.num_cells} cells, got {len(frame)}"
        )
    if "cell" in frame.columns:
        frame = frame.sort_values("cell")
    return LogPermField(grid, frame["u"].to_numpy(dtype=float))


def signals_to_frame(signals: ForwardBatch, row: int = 0) -> pd.DataFrame:
    """Noise-free outputs of one field: n, t_n, front, p_1..p_M."""
    frame = pd.DataFrame(
        {
            "n": np.arange(1, signals.times.size + 1),
            "t_n": signals.times,
            "front": signals.fronts[row],
        }
    )
    for m in range(signals.pressures.shape[2]):
        frame[f"p_{m + 1}"] = signals.pressures[row, :, m]
    return frame


def ensemble_path(run_dir: PathLike, n: int) -> Path:
    return Path(run_dir) / ENSEMBLE_DIR / f"ensemble_n{n:02d}.npz"


def save_ensemble(
    path: PathLike, fields: np.ndarray, coeffs: Optional[np.ndarray] = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"fields": np.asarray(fields)}
    if coeffs is not None:
        arrays["coeffs"] = np.asarray(coeffs)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_ensemble(path: PathLike) -> np.ndarray:
    """The (J, S) field values of a snapshot."""
    try:
        with np.load(path) as data:
            fields = np.array(data["fields"])
    except (OSError, KeyError, ValueError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
    if fields.ndim != 2:
        raise MalformedDataError(f"{path}: expected a 2D array of fields")
    return fields


@dataclass(frozen=True)
class CostReport:
    algorithm: str
    ensemble_size: int
    # 1 for REnKA
    mcmc_steps: int
    tempering_steps: tuple[int, ...]
    cost_ratios: tuple[float, ...]
    stage_costs: tuple[float, ...]
    total_cost: float
    forward_evaluations: tuple[int, ...]
    repeat: int = 0


@dataclass(frozen=True)
class RunManifest:
    command: str
    version: str
    config: RunConfig
    config_sha256: str
    # "prior:<seed>" or the path of the truth file
    truth_source: str
    files: tuple[str, ...] = ()
    forward_evaluations: tuple[int, ...] = ()
    # Excluded from digest().
    created_at: str = ""

    def digest(self) -> str:
        return _MANIFEST_SERIALIZER.digest(dataclasses.replace(self, created_at=""))


_MANIFEST_SERIALIZER: Final = record_serializer(RunManifest)
_COST_SERIALIZER: Final = record_serializer(CostReport)


def now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path: PathLike, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_MANIFEST_SERIALIZER.to_json_code(manifest, readable=True) + "\n")
    logger.info("wrote %s", path)
    return path


def read_manifest(path: PathLike) -> RunManifest:
    try:
        return _MANIFEST_SERIALIZER.from_json_code(Path(path).read_text())
    except (OSError, json.JSONDecodeError, ValueError) as e:
        raise MalformedDataError(f"{path}: {e}") from e


def write_costs(path: PathLike, reports: Sequence[CostReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [_COST_SERIALIZER.to_json(r, readable=True) for r in reports]
    path.write_text(json.dumps(payload, indent=2) + "\n")
    logger.info("wrote %s", path)
    return path


def read_costs(path: PathLike) -> list[CostReport]:
    try:
        payload = json.loads(Path(path).read_text())
        return [_COST_SERIALIZER.from_json(item) for item in payload]
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
