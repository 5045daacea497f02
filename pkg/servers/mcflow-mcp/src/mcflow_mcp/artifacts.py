"""CSV and report writers.

Every table has a header row and a fixed column order. Floats are written
with 17 significant digits so reruns with the same config and seed
produce byte-identical files.
"""

import csv
import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .diagnostics import MonitoredQuantity
from .graph import compute_quantities
from .solver import SolutionTrajectory

logger = logging.getLogger(__name__)

QUANTITY_COLUMNS = ("t", "value", "tag", "pole", "s", "p", "q")
KERNEL_SWEEP_COLUMNS = ("x", "y", "z", "t", "s", "value", "quantity")
SUMMARY_COLUMNS = (
    "p",
    "q",
    "eps0",
    "alpha0",
    "threshold",
    "fitted_norm_slope",
    "closed_form_exponent",
    "asymptotic_exponent",
    "growth_exponent",
    "growth_source",
)


def fmt(value: Any) -> str:
    """Cell text: 17 significant digits for floats, str() otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])
    return path


def write_snapshots(directory: Path, traj: SolutionTrajectory) -> Path:
    """snapshots/u_00000.csv (x[, y], u, v, h) per snapshot plus trajectory.csv."""
    grid = traj.domain.grid
    axes = ("x",) if grid.dim == 1 else ("x", "y")
    points = grid.points()
    index_rows = []
    for k, u in enumerate(traj):
        q = compute_quantities(u)
        v = q.active("v")
        h = q.active("h")
        name = f"snapshots/u_{k:05d}.csv"
        rows = (
            (*points[i], u.values[i], v[i], h[i]) for i in range(grid.n_active)
        )
        write_csv(directory / name, (*axes, "u", "v", "h"), rows)
        index_rows.append((k, u.t, name, u.sup_abs(), float(np.max(v))))
    return write_csv(
        directory / "trajectory.csv",
        ("index", "t", "file", "sup_u", "sup_v"),
        index_rows,
    )


def write_quantity(path: Path, quantity: MonitoredQuantity) -> Path:
    meta = quantity.metadata
    rows = (
        (t, value, quantity.tag.value, meta.get("pole"), meta.get("s"), meta.get("p"), meta.get("q"))
        for t, value in zip(quantity.times, quantity.values)
    )
    return write_csv(path, QUANTITY_COLUMNS, rows)


def write_kernel_sweep(path: Path, rows: Iterable[dict[str, Any]]) -> Path:
    return write_csv(
        path,
        KERNEL_SWEEP_COLUMNS,
        ([row.get(column) for column in KERNEL_SWEEP_COLUMNS] for row in rows),
    )


def write_summary(path: Path, rows: Iterable[dict[str, Any]]) -> Path:
    return write_csv(path, SUMMARY_COLUMNS, ([row.get(c) for c in SUMMARY_COLUMNS] for row in rows))


def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


# =============================================================================
# Report
# =============================================================================


@dataclass(frozen=True)
class CriterionResult:
    """One PASS/FAIL line of a report."""

    criterion: int
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        pairs = " ".join(f"{key}={fmt(value).replace(' ', ',')}" for key, value in self.details.items())
        return f"{status} {self.criterion} {self.name}" + (f" {pairs}" if pairs else "")


def write_report(path: Path, results: Sequence[CriterionResult], errors: Sequence[str] = ()) -> Path:
    """report.txt: one line per check, then ERROR lines for recorded failures."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [result.line() for result in results]
    lines.extend(f"ERROR {message}" for message in errors)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    logger.info(f"Report written to {path}")
    return path
