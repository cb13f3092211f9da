"""
CSV storage for lab outputs
"""
import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from cli.utils.exceptions import StorageError
from services.base import FieldKind
from services.carleman.hum import HumIteration
from services.geometry.fields import Field
from services.geometry.grid import Grid2D
from services.solver.state import Trajectory
from services.strategy.manifest import RunManifest

logger = logging.getLogger(__name__)


@dataclass
class FieldRow:
    """One cell of a field"""
    i: int
    j: int
    x: float
    y: float
    value: float
    value2: Optional[float] = None


@dataclass
class SeriesRow:
    """One sample of a time series"""
    t: float
    value: float


@dataclass
class HumIterationRow:
    """One conjugate gradient iteration of the HUM solve"""
    iteration: int
    residual: float
    dual_cost: float
    terminal_norm: float


@dataclass
class TraceRow:
    """Interface values on one face at one output time"""
    t: float
    face: int
    y: float
    u: float
    v: float
    theta: float
    navier: float
    robin: float


@dataclass
class RateRow:
    """Sweep norm or fitted slope"""
    epsilon: Optional[float]
    quantity: str
    value: Optional[float]
    note: str = ""


def _headers(model) -> List[str]:
    return [f.name for f in fields(model)]


class CSVStorage:
    """CSV files named <step>_<quantity>.csv under one output directory"""

    def __init__(self, data_dir: str = "data"):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def path(self, step: str, quantity: str) -> Path:
        return self.data_dir / f"{step}_{quantity}.csv"

    def _read_csv(self, file_path: Path) -> List[Dict[str, Any]]:
        """Read data from CSV file"""
        try:
            data = []
            if file_path.exists():
                with open(file_path, 'r', newline='', encoding='utf-8') as f:
                    reader = csv.DictReader(f)
                    data = list(reader)
            return data
        except Exception as e:
            raise StorageError(f"Failed to read CSV file {file_path}: {e}")

    def _write_csv(self, file_path: Path, data: List[Dict[str, Any]], headers: List[str]) -> Path:
        """Write data to CSV file"""
        try:
            with open(file_path, 'w', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=headers, extrasaction="ignore")
                writer.writeheader()
                writer.writerows(data)
        except Exception as e:
            raise StorageError(f"Failed to write CSV file {file_path}: {e}")
        name = file_path.name
        if name not in self.files:
            self.files.append(name)
        logger.debug(f"Wrote {len(data)} rows | {file_path}")
        return file_path

    def _append_csv(self, file_path: Path, data: Dict[str, Any], headers: List[str]) -> None:
        """Append one row, writing the header first for a new file"""
        try:
            new_file = not file_path.exists()
            with open(file_path, 'a', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=headers, extrasaction="ignore")
                if new_file:
                    writer.writeheader()
                writer.writerow(data)
        except Exception as e:
            raise StorageError(f"Failed to append to CSV file {file_path}: {e}")
        if file_path.name not in self.files:
            self.files.append(file_path.name)

    def read_rows(self, step: str, quantity: str) -> List[Dict[str, Any]]:
        return self._read_csv(self.path(step, quantity))

    def write_rows(self, step: str, quantity: str, rows: Sequence[Dict[str, Any]],
                   headers: Optional[List[str]] = None) -> Path:
        """Generic table; headers default to the keys of the first row"""
        if headers is None:
            if not rows:
                raise StorageError(f"No rows and no headers for {step}_{quantity}")
            headers = list(rows[0])
        return self._write_csv(self.path(step, quantity), list(rows), headers)

    # Fields
    def write_array(self, step: str, quantity: str, grid: Grid2D, values: np.ndarray,
                    values2: Optional[np.ndarray] = None) -> Path:
        """Cell-centered array (or pair of arrays) as one row per cell

        Arrays covering only the first columns of the box (the physical cells)
        are accepted.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] > grid.nx or values.shape[1] != grid.ny:
            raise StorageError(f"Array {values.shape} is not cell-centered on a {grid.nx}x{grid.ny} grid")
        x, y = grid.coordinates("cell")
        rows = []
        for (i, j), value in np.ndenumerate(values):
            row = FieldRow(i, j, float(x[i, j]), float(y[i, j]), float(value))
            if values2 is not None:
                row.value2 = float(values2[i, j])
            rows.append(asdict(row))
        headers = _headers(FieldRow)
        if values2 is None:
            headers.remove("value2")
        return self._write_csv(self.path(step, quantity), rows, headers)

    def write_field(self, step: str, quantity: str, field: Field) -> Path:
        if field.kind == FieldKind.SCALAR:
            return self.write_array(step, quantity, field.grid, field.values)
        u, v = field.cell_vectors()
        return self.write_array(step, quantity, field.grid, u, v)

    def write_trajectory(self, step: str, trajectory: Trajectory, write_fields: bool = True) -> List[Path]:
        """Norm timeline, energy ledger and (optionally) the final velocity and temperature"""
        written = [self.write_series(step, "norms", trajectory.times, trajectory.norms())]
        if trajectory.ledger:
            written.append(self.write_rows(step, "energy", [asdict(row) for row in trajectory.ledger]))
        if write_fields:
            final = trajectory.final
            written.append(self.write_field(step, "u", final.u))
            written.append(self.write_field(step, "theta", final.theta))
        return written

    # Time series
    def write_series(self, step: str, quantity: str, times: Iterable[float], values: Iterable[float]) -> Path:
        rows = [asdict(SeriesRow(float(t), float(v))) for t, v in zip(times, values)]
        return self._write_csv(self.path(step, quantity), rows, _headers(SeriesRow))

    def write_hum_iterations(self, step: str, iterations: Sequence[HumIteration]) -> Path:
        rows = [
            asdict(HumIterationRow(it.iteration, it.residual, it.dual_cost, it.terminal_norm))
            for it in iterations
        ]
        return self._write_csv(self.path(step, "iterations"), rows, _headers(HumIterationRow))

    def write_traces(self, step: str, rows: Sequence[Dict[str, Any]]) -> Path:
        """Interface traces, one row per face and output time"""
        records = [asdict(TraceRow(**{k: row[k] for k in _headers(TraceRow)})) for row in rows]
        return self._write_csv(self.path(step, "traces"), records, _headers(TraceRow))

    def write_rates(self, step: str, rows: Sequence[Dict[str, Any]]) -> Path:
        records = [asdict(RateRow(row.get("epsilon"), row["quantity"], row.get("value"), row.get("note", "")))
                   for row in rows]
        return self._write_csv(self.path(step, "rates"), records, _headers(RateRow))

    def append_rate(self, step: str, row: RateRow) -> None:
        self._append_csv(self.path(step, "rates"), asdict(row), _headers(RateRow))

    # Manifest
    def write_manifest(self, manifest: RunManifest, name: str = "manifest.json") -> Path:
        """Manifest with the file inventory of this storage"""
        manifest.files = sorted(set(manifest.files) | set(self.files))
        try:
            path = manifest.write(self.data_dir / name)
        except Exception as e:
            raise StorageError(f"Failed to write manifest {self.data_dir / name}: {e}")
        logger.info(f"✅ Manifest written | {path} | files={len(manifest.files)}")
        return path
