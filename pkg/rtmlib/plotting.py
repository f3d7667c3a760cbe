"""Figures read back from the CSV files of a run or a sweep directory."""

import enum
import logging
from pathlib import Path
from typing import Final, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from rtmlib import artifacts  # noqa: E402
from rtmlib.errors import MalformedDataError  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DPI: Final = 180

METRIC_LABELS: Final = {
    "truth_error": "relative error to truth",
    "moving_domain_error": "relative error on filled region",
    "variance_ratio": "posterior / prior variance",
    "tempering_steps": "tempering steps",
    "cumulative_cost": "cumulative cost",
}


class PlotKind(enum.Enum):
    BANDS = "bands"
    METRICS = "metrics"
    SWEEP = "sweep"


def plot_bands(run_dir: PathLike, out_path: PathLike, n: Optional[int] = None) -> Path:
    """Mean and 2-98 / 25-75 percentile bands of μ_n against the truth."""
    run_dir = Path(run_dir)
    summaries = artifacts.read_frame(
        run_dir / artifacts.SUMMARIES_CSV, required=("n", "x", "statistic", "value")
    )
    if n is None:
        n = int(summaries["n"].max())
    selected = summaries[summaries["n"] == n]
    if selected.empty:
        raise MalformedDataError(f"{run_dir}: no summary for n={n}")
    wide = selected.pivot(index="x", columns="statistic", values="value").sort_index()
    for column in ("mean", "p0.02", "p0.25", "p0.75", "p0.98"):
        if column not in wide.columns:
            raise MalformedDataError(f"{run_dir}: summary lacks {column}")
    x = wide.index.to_numpy()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(x, wide["p0.02"], wide["p0.98"], alpha=0.2, label="2-98%")
    ax.fill_between(x, wide["p0.25"], wide["p0.75"], alpha=0.4, label="25-75%")
    ax.plot(x, wide["mean"], label="mean")
    truth_path = run_dir / artifacts.TRUTH_INVERSION_CSV
    if truth_path.exists():
        truth = artifacts.read_frame(truth_path, required=("x", "u"))
        ax.plot(truth["x"], truth["u"], "k--", label="truth")
    ax.set_xlabel("x")
    ax.set_ylabel("log-permeability")
    ax.set_title(f"n = {n}")
    ax.legend()
    return _save(fig, out_path)


def plot_metrics(run_dir: PathLike, out_path: PathLike) -> Path:
    """Metrics against the observation index, averaged over repeats."""
    metrics = artifacts.read_frame(
        Path(run_dir) / artifacts.METRICS_CSV, required=("n", *METRIC_LABELS)
    )
    means = metrics.groupby("n")[list(METRIC_LABELS)].mean()
    count = len(METRIC_LABELS)
    fig, axes = plt.subplots(1, count, figsize=(4 * count, 3.5))
    for ax, (column, label) in zip(axes, METRIC_LABELS.items()):
        ax.plot(means.index, means[column], marker="o")
        ax.set_xlabel("n")
        ax.set_title(label)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_sweep(sweep_dir: PathLike, out_path: PathLike) -> Path:
    """Metrics at the last observation time against the swept value."""
    table = artifacts.read_frame(
        Path(sweep_dir) / artifacts.SWEEP_METRICS_CSV,
        required=("axis", "value", "include_front", "n"),
    )
    last = table[table["n"] == table["n"].max()]
    axis = str(last["axis"].iloc[0])
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    columns = ("truth_error", "moving_domain_error", "variance_ratio")
    for ax, column in zip(axes, columns):
        for front, group in last.groupby("include_front"):
            group = group.sort_values("value")
            ax.errorbar(
                group["value"],
                group[f"{column}_mean"],
                yerr=group[f"{column}_std"].fillna(0.0),
                marker="o",
                capsize=3,
                label=f"front {'on' if _truthy(front) else 'off'}",
            )
        ax.set_xlabel(axis)
        ax.set_title(METRIC_LABELS[column])
        if axis in ("noise", "ensemble_size"):
            ax.set_xscale("log")
        ax.legend()
    fig.tight_layout()
    return _save(fig, out_path)


def _truthy(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)


def _save(fig, out_path: PathLike) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out_path, dpi=DPI)
    finally:
        plt.close(fig)
    logger.info("wrote %s", out_path)
    return out_path


def plot(kind: PlotKind, source_dir: PathLike, out_path: PathLike) -> Path:
    if kind is PlotKind.BANDS:
        return plot_bands(source_dir, out_path)
    if kind is PlotKind.METRICS:
        return plot_metrics(source_dir, out_path)
    return plot_sweep(source_dir, out_path)

