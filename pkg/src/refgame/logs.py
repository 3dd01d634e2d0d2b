"""Run logging: per-epoch CSV metric logs, JSON summaries and plot-data
export for training-curve figures.

The CSV columns are deterministic functions of (config, seed), so two runs
of the same config produce byte-identical files; per-epoch wall times are
recorded in the JSON summary instead, which is the one artifact allowed to
differ between identical runs.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig, config_echo
from .metrics import MetricsReport

CSV_COLUMNS = (
    "epoch",
    "train_loss",
    "comm_rate_top1",
    "comm_rate_top5",
    "target_class_in_top5",
    "target_class_mean_rank",
    "message_length_mean",
    "message_length_std",
    "rotation_accuracy",
    "seed",
)


@dataclass(frozen=True)
class EpochRow:
    """One epoch of training: loss plus the evaluation metrics after it."""

    epoch: int
    train_loss: float
    comm_rate_top1: float
    comm_rate_top5: float
    target_class_in_top5: float
    target_class_mean_rank: float
    message_length_mean: float
    message_length_std: float
    rotation_accuracy: float | None
    wall_time: float
    seed: int


@dataclass(frozen=True)
class RunLog:
    rows: tuple[EpochRow, ...]
    seed: int

    def __init__(self, rows, seed: int):
        rows = tuple(rows)
        epochs = [r.epoch for r in rows]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("epochs must be strictly increasing")
        for r in rows:
            for name in ("comm_rate_top1", "comm_rate_top5"):
                v = getattr(r, name)
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name}={v} outside [0, 1]")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "seed", seed)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def runlog_csv_text(log: RunLog) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in log.rows:
        lines.append(",".join(_fmt(getattr(row, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_metrics_log(log: RunLog, path, summary: MetricsReport,
                      config: ExperimentConfig) -> tuple[Path, Path]:
    """CSV of per-epoch rows plus a sibling JSON summary.

    The JSON carries the final report, the config echo and the per-epoch
    wall times. Both files are written atomically. Returns the two paths.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        _atomic_write(path, runlog_csv_text(log))
    except OSError as e:
        raise OSError(f"failed writing metrics log {path}: {e}") from e
    summary_path = path.with_suffix(".json")
    payload = {
        "seed": log.seed,
        "config": config_echo(config),
        "final_report": summary.to_dict(),
        "wall_times": [row.wall_time for row in log.rows],
    }
    try:
        _atomic_write(summary_path, json.dumps(payload, indent=2) + "\n")
    except OSError as e:
        raise OSError(f"failed writing summary {summary_path}: {e}") from e
    return path, summary_path


def parse_runlog_csv(path) -> RunLog:
    """Read back a CSV written by write_metrics_log (wall times as 0)."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln]
    header = tuple(lines[0].split(","))
    if header != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {header}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        vals = dict(zip(CSV_COLUMNS, parts))
        rows.append(EpochRow(
            epoch=int(vals["epoch"]),
            train_loss=float(vals["train_loss"]),
            comm_rate_top1=float(vals["comm_rate_top1"]),
            comm_rate_top5=float(vals["comm_rate_top5"]),
            target_class_in_top5=float(vals["target_class_in_top5"]),
            target_class_mean_rank=float(vals["target_class_mean_rank"]),
            message_length_mean=float(vals["message_length_mean"]),
            message_length_std=float(vals["message_length_std"]),
            rotation_accuracy=(float(vals["rotation_accuracy"])
                               if vals["rotation_accuracy"] else None),
            wall_time=0.0,
            seed=int(vals["seed"]),
        ))
    return RunLog(rows=rows, seed=rows[0].seed if rows else 0)


PLOT_SERIES = (
    ("train_loss", "train_loss"),
    ("comm_rate_top1", "comm_rate_top1"),
    ("target_class_in_top5", "target_class_in_top5"),
    ("target_class_mean_rank", "target_class_mean_rank"),
)


def emit_plot_data(logs: list[RunLog], out_dir) -> list[Path]:
    """Per-metric series files (epoch, value, run_id) for external plotting.

    One file per curve of the four training-dynamics panels: loss, top-1
    communication rate, target-class count in the top 5 and target-class
    mean rank. Values are copied losslessly from the logs.
    """
    if not logs:
        raise ValueError("at least one run log is required")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for column, stem in PLOT_SERIES:
        lines = ["epoch,value,run_id"]
        for run_id, log in enumerate(logs):
            for row in log.rows:
                lines.append(f"{row.epoch},{_fmt(getattr(row, column))},{run_id}")
        path = out_dir / f"{stem}.csv"
        _atomic_write(path, "\n".join(lines) + "\n")
        paths.append(path)
    return paths
