"""Uniform frame grids and named feature tracks.

Every per-frame quantity in the pipeline (prosody, spectral coefficients,
emotion descriptors, marker displacements, region activeness, binary labels)
travels as a :class:`FeatureTrack`: a read-only ``n_frames x n_columns``
float matrix bound to a :class:`FrameGrid`. Missing values (marker dropouts,
propagated gaps) are NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MalformedRowError, NonMonotoneTimeError


@dataclass(frozen=True)
class FrameGrid:
    """Uniform timestamp lattice: timestamp(i) = start_s + i / rate_hz."""

    rate_hz: float
    start_s: float
    n_frames: int

    def __post_init__(self) -> None:
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.n_frames < 0:
            raise ValueError(f"n_frames must be >= 0, got {self.n_frames}")

    def timestamp(self, i: int) -> float:
        return self.start_s + i / self.rate_hz

    def timestamps(self) -> np.ndarray:
        return self.start_s + np.arange(self.n_frames) / self.rate_hz

    @property
    def end_s(self) -> float:
        """Timestamp of the last frame (== start_s for a single frame)."""
        if self.n_frames == 0:
            return self.start_s
        return self.timestamp(self.n_frames - 1)

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.rate_hz


def grid_over_span(rate_hz: float, start_s: float, end_s: float) -> FrameGrid:
    """Largest grid at `rate_hz` starting at `start_s` with no frame past `end_s`."""
    if end_s < start_s:
        return FrameGrid(rate_hz, start_s, 0)
    n = int(math.floor((end_s - start_s) * rate_hz)) + 1
    return FrameGrid(rate_hz, start_s, n)


@dataclass(frozen=True)
class FeatureTrack:
    """Named columns of per-frame values on a shared grid. NaN marks dropout."""

    grid: FrameGrid
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate column names: {cols}")
        vals = np.array(self.values, dtype=np.float64, order="C")
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.grid.n_frames, len(cols)):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"{self.grid.n_frames} frames x {len(cols)} columns"
            )
        if np.isinf(vals).any():
            raise ValueError("feature values must be finite or NaN")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_frames(self) -> int:
        return self.grid.n_frames

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column {name!r}; have {self.columns}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def select(self, names: list[str] | tuple[str, ...]) -> "FeatureTrack":
        idx = [self.column_index(n) for n in names]
        return FeatureTrack(self.grid, tuple(names), self.values[:, idx])

    def with_values(self, values: np.ndarray) -> "FeatureTrack":
        return FeatureTrack(self.grid, self.columns, values)


def concat_columns(*tracks: FeatureTrack) -> FeatureTrack:
    """Stack tracks column-wise; all tracks must share one grid exactly."""
    first = tracks[0]
    for t in tracks[1:]:
        if t.grid != first.grid:
            raise ValueError(f"grids differ: {t.grid} vs {first.grid}")
    names = tuple(n for t in tracks for n in t.columns)
    values = np.hstack([t.values for t in tracks])
    return FeatureTrack(first.grid, names, values)


def format_value(x: float) -> str:
    """Shortest round-trip decimal for CSV cells; NaN becomes an empty cell."""
    if math.isnan(x):
        return ""
    return repr(float(x))


def _parse_cell(cell: str, path: str, line_no: int) -> float:
    if cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise MalformedRowError(
            f"{path}:{line_no}: cannot parse {cell!r} as a number"
        ) from None


def parse_rate_comment(line: str, path: str) -> float:
    prefix = "# rate_hz="
    if not line.startswith(prefix):
        raise MalformedRowError(f"{path}: expected leading '{prefix}<float>' comment")
    try:
        rate = float(line[len(prefix):].strip())
    except ValueError:
        raise MalformedRowError(f"{path}: bad rate in {line!r}") from None
    if rate <= 0:
        raise MalformedRowError(f"{path}: rate_hz must be positive, got {rate}")
    return rate


def write_feature_csv(track: FeatureTrack, path) -> None:
    """Write `# rate_hz=` comment, `time_s,<col>,...` header, one row per frame."""
    times = track.grid.timestamps()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# rate_hz={track.grid.rate_hz!r}\n")
        fh.write(",".join(("time_s",) + track.columns) + "\n")
        for i in range(track.n_frames):
            cells = [format_value(times[i])]
            cells.extend(format_value(v) for v in track.values[i])
            fh.write(",".join(cells) + "\n")


def read_feature_csv(path) -> FeatureTrack:
    """Load a feature CSV written by :func:`write_feature_csv`."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 2:
        raise MalformedRowError(f"{path}: expected rate comment and header")
    rate = parse_rate_comment(lines[0], path)
    header = lines[1].split(",")
    if not header or header[0] != "time_s":
        raise MalformedRowError(f"{path}: header must start with time_s")
    columns = tuple(header[1:])
    rows = []
    times = []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise MalformedRowError(
                f"{path}:{line_no}: expected {len(header)} cells, got {len(cells)}"
            )
        times.append(_parse_cell(cells[0], path, line_no))
        rows.append([_parse_cell(c, path, line_no) for c in cells[1:]])
    if not rows:
        raise MalformedRowError(f"{path}: no data rows")
    t = np.asarray(times)
    if np.isnan(t).any() or (np.diff(t) <= 0).any():
        raise NonMonotoneTimeError(f"{path}: time_s must be strictly increasing")
    grid = FrameGrid(rate_hz=rate, start_s=float(t[0]), n_frames=len(rows))
    return FeatureTrack(grid, columns, np.asarray(rows))
