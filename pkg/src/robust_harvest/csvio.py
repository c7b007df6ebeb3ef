"""CSV ingestion and round-trip-exact CSV/JSON emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .calibration import CompetitionSample, WeightSeries
from .errors import ValidationError
from .hjb import PolicyGrid, ValueGrid
from .policy import Trajectory
from .robust import DistortedDensity

SERIES_HEADER = ("day", "avg_weight_g")
SAMPLE_HEADER = ("weight_g",)
GRID_HEADER = ("t_day", "n", "value")
POLICY_HEADER = ("t_day", "n", "q")
TRAJECTORY_HEADER = ("t_day", "n", "q", "omega_g")
DENSITY_HEADER = ("t_day", "wmax_g", "density_per_g")


def fmt(x: float) -> str:
    """17 significant digits: enough to recover every double exactly."""
    return "%.17g" % x


def _read_rows(path, header: Sequence[str]) -> list[list[str]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path}: empty file")
    got = tuple(c.strip() for c in rows[0])
    if got != tuple(header):
        raise ValidationError(f"{path}: unexpected header {','.join(got)!r}; expected {','.join(header)!r}")
    return rows[1:]


def _floats(rows, path, width):
    out = []
    for k, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValidationError(f"{path}: row {k} has {len(row)} fields, expected {width}")
        try:
            out.append([float(c) for c in row])
        except ValueError:
            raise ValidationError(f"{path}: row {k} is not numeric: {row}") from None
    return np.array(out, dtype=float).reshape(-1, width)


def load_weight_series(path) -> WeightSeries:
    """``day,avg_weight_g`` rows; days count from May 1. Row numbers in errors are 1-based data rows."""
    data = _floats(_read_rows(path, SERIES_HEADER), path, 2)
    if len(data) < 3:
        raise ValidationError(f"{path}: need at least 3 rows, got {len(data)}")
    bad = np.flatnonzero(np.diff(data[:, 0]) <= 0)
    if bad.size:
        raise ValidationError(f"{path}: days not strictly increasing at row {bad[0] + 2}")
    bad = np.flatnonzero(~(data[:, 1] > 0))
    if bad.size:
        raise ValidationError(f"{path}: nonpositive weight at row {bad[0] + 1}")
    return WeightSeries(tuple(data[:, 0]), tuple(data[:, 1]))


def load_competition_sample(path, day: float) -> CompetitionSample:
    data = _floats(_read_rows(path, SAMPLE_HEADER), path, 1)[:, 0]
    if data.size == 0:
        raise ValidationError(f"{path}: no weights")
    bad = np.flatnonzero(~(data > 0))
    if bad.size:
        raise ValidationError(f"{path}: nonpositive weight at row {bad[0] + 1}")
    if data.size < 2:
        raise ValidationError(f"{path}: need at least 2 weights")
    if not day > 0:
        raise ValidationError("competition day must be positive")
    return CompetitionSample(float(day), tuple(data))


def _write(path, header, rows: Iterable[str]) -> Path:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for line in rows:
                fh.write(line)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from None
    return path


def _grid_rows(times, ns, values):
    n_txt = [fmt(n) for n in ns]
    for i, t in enumerate(times):
        t_txt = fmt(t)
        row = values[i]
        yield "".join(f"{t_txt},{n_txt[j]},{fmt(row[j])}\n" for j in range(len(ns)))


def write_grid_csv(grid: ValueGrid | PolicyGrid, path, t_stride: int = 1) -> Path:
    """Long format, ``i`` then ``j`` ascending. ``t_stride`` keeps every k-th time row (plus the last)."""
    if isinstance(grid, PolicyGrid):
        header, value, data = POLICY_HEADER, grid.value, grid.q
    else:
        header, value, data = GRID_HEADER, grid, grid.values
    rows = _time_rows(value.grid.i_t, t_stride)
    return _write(path, header, _grid_rows(value.times[rows], value.ns, data[rows]))


def _time_rows(i_t: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValidationError("t_stride must be at least 1")
    rows = np.arange(0, i_t + 1, stride)
    return rows if rows[-1] == i_t else np.append(rows, i_t)


def write_array_csv(times, ns, values, path, header=GRID_HEADER, t_stride: int = 1) -> Path:
    rows = _time_rows(len(times) - 1, t_stride)
    return _write(path, header, _grid_rows(np.asarray(times)[rows], ns, np.asarray(values)[rows]))


def read_grid_csv(path, header=GRID_HEADER):
    """Inverse of :func:`write_grid_csv`: ``(times, ns, values)``."""
    data = _floats(_read_rows(path, header), path, 3)
    times = np.unique(data[:, 0])
    ns = data[: np.count_nonzero(data[:, 0] == data[0, 0]), 1]
    if len(times) * len(ns) != len(data):
        raise ValidationError(f"{path}: rows do not form a full grid")
    return times, ns, data[:, 2].reshape(len(times), len(ns))


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    rows = (f"{fmt(t)},{fmt(n)},{fmt(q)},{fmt(o)}\n" for t, n, q, o in zip(traj.t, traj.n, traj.q, traj.omega))
    return _write(path, TRAJECTORY_HEADER, rows)


def write_density_csv(densities: Sequence[DistortedDensity], times: Sequence[float], path) -> Path:
    """One block per requested solver time, nodes ascending."""
    def rows():
        for t, d in zip(times, densities):
            t_txt = fmt(t)
            for w, p in zip(d.nodes, d.density):
                yield f"{t_txt},{fmt(w)},{fmt(p)}\n"
    return _write(path, DENSITY_HEADER, rows())


def write_rows_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Small summary tables; floats get the same 17-digit formatting."""
    def cell(v):
        return fmt(v) if isinstance(v, (float, np.floating)) else str(v)

    def lines():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in rows:
            writer.writerow([cell(v) for v in row])
            yield buf.getvalue()
            buf.seek(0)
            buf.truncate()
    return _write(path, header, lines())


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance record written next to every set of outputs."""

    command: str
    version: str
    config: str | None = None
    scheme: str | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = file_digest(path)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        try:
            path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot write {path}: {exc}") from None
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
