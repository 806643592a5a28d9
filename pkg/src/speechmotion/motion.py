"""Marker kinematics: region segmentation, displacement magnitudes, activeness.

Input marker trajectories are assumed head-stabilized; no rigid-motion
compensation happens here. Head markers are kept as their own region so head
movement is quantified like any other region.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import TooFewFramesError, TooFewValuesError, UnknownMarkerInMapError
from .frames import FeatureTrack, FrameGrid, format_value

if TYPE_CHECKING:
    from .timeline import SessionTable

DEFAULT_MAX_ABS_MM = 2000.0

REGION_ORDER = (
    "head",
    "eyebrows",
    "mouth",
    "upper_face",
    "middle_face",
    "lower_face",
    "total_face",
    "hands",
)

_UPPER_FACE = (
    "FH1", "FH2", "FH3",
    "LBM0", "LBM1", "LBM2", "LBM3",
    "RBM0", "RBM1", "RBM2", "RBM3",
    "LBRO1", "LBRO2", "LBRO3", "LBRO4",
    "RBRO1", "RBRO2", "RBRO3", "RBRO4",
    "LLID", "RRID",
)
_MIDDLE_FACE = (
    "LC2", "LC3", "LC4", "LC5", "LC6", "LC7", "LC8",
    "RC2", "RC3", "RC4", "RC5", "RC6", "RC7", "RC8",
    "MNOSE", "TNOSE", "LNSTRL", "RNSTRL",
)
_LOWER_FACE = (
    "MOU1", "MOU2", "MOU3", "MOU4", "MOU5", "MOU6", "MOU7", "MOU8",
    "CH1", "CH2", "CH3",
    "LC1", "RC1",
)
_EYEBROWS = (
    "LBM0", "LBM1", "LBM2", "LBM3",
    "RBM0", "RBM1", "RBM2", "RBM3",
    "LBRO1", "LBRO2", "LBRO3", "LBRO4",
    "RBRO1", "RBRO2", "RBRO3", "RBRO4",
)
_MOUTH = ("MOU1", "MOU2", "MOU3", "MOU4", "MOU5", "MOU6", "MOU7", "MOU8")
_HEAD = ("LHD", "RHD")
_HANDS = ("RH1", "RH2", "RH3", "LH1", "LH2", "LH3")


@dataclass(frozen=True)
class MarkerTrack:
    """3D marker trajectories in millimeters; NaN coordinates mark dropouts."""

    grid: FrameGrid
    markers: tuple[str, ...]
    positions: np.ndarray
    max_abs_mm: float = DEFAULT_MAX_ABS_MM

    def __post_init__(self) -> None:
        markers = tuple(self.markers)
        object.__setattr__(self, "markers", markers)
        if len(set(markers)) != len(markers):
            raise ValueError(f"duplicate marker names: {markers}")
        pos = np.array(self.positions, dtype=np.float64, order="C")
        expected = (self.grid.n_frames, len(markers), 3)
        if pos.shape != expected:
            raise ValueError(f"positions shape {pos.shape}, expected {expected}")
        finite = pos[np.isfinite(pos)]
        if finite.size and np.abs(finite).max() > self.max_abs_mm:
            raise ValueError(
                f"coordinate magnitude {np.abs(finite).max():.1f} mm exceeds "
                f"plausibility bound {self.max_abs_mm} mm"
            )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_frames(self) -> int:
        return self.grid.n_frames

    def marker_index(self, name: str) -> int:
        try:
            return self.markers.index(name)
        except ValueError:
            raise KeyError(f"no marker {name!r}") from None


@dataclass(frozen=True)
class RegionMap:
    """Region name -> marker identifiers, with the structural region invariants."""

    regions: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        regions = {k: tuple(v) for k, v in self.regions.items()}
        object.__setattr__(self, "regions", regions)
        missing = [r for r in REGION_ORDER if r not in regions]
        if missing:
            raise ValueError(f"region map missing required regions: {missing}")
        upper = set(regions["upper_face"])
        middle = set(regions["middle_face"])
        lower = set(regions["lower_face"])
        if set(regions["total_face"]) != upper | middle | lower:
            raise ValueError("total_face must equal upper | middle | lower face")
        if not set(regions["eyebrows"]) <= upper:
            raise ValueError("eyebrows must be a subset of upper_face")
        if not set(regions["mouth"]) <= lower:
            raise ValueError("mouth must be a subset of lower_face")

    def __getitem__(self, region: str) -> tuple[str, ...]:
        return self.regions[region]

    def names(self) -> tuple[str, ...]:
        ordered = [r for r in REGION_ORDER if r in self.regions]
        extra = [r for r in self.regions if r not in REGION_ORDER]
        return tuple(ordered + extra)

    def all_markers(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for region in self.names():
            for m in self.regions[region]:
                seen.setdefault(m)
        return tuple(seen)

    def to_json(self, path) -> None:
        doc = {r: list(self.regions[r]) for r in self.names()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=False)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RegionMap":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls({k: tuple(v) for k, v in doc.items()})


def default_region_map() -> RegionMap:
    """Facial/hand segmentation used for the dyadic motion-capture profile."""
    return RegionMap(
        {
            "head": _HEAD,
            "eyebrows": _EYEBROWS,
            "mouth": _MOUTH,
            "upper_face": _UPPER_FACE,
            "middle_face": _MIDDLE_FACE,
            "lower_face": _LOWER_FACE,
            "total_face": _UPPER_FACE + _MIDDLE_FACE + _LOWER_FACE,
            "hands": _HANDS,
        }
    )


def displacement_magnitudes(markers: MarkerTrack) -> FeatureTrack:
    """Framewise 3D displacement magnitude per marker, mm per native frame.

    Frame 0 is defined as 0 so the output shares the marker grid. A dropout
    at frame k makes both difference endpoints unusable, so frames k and k+1
    are dropouts in the output.
    """
    if markers.n_frames < 2:
        raise TooFewFramesError(
            f"need >= 2 frames to difference, got {markers.n_frames}"
        )
    pos = markers.positions
    diffs = pos[1:] - pos[:-1]
    mags = np.sqrt(np.sum(diffs * diffs, axis=2))
    first = np.where(np.isfinite(pos[0]).all(axis=1), 0.0, np.nan)
    values = np.vstack([first[None, :], mags])
    return FeatureTrack(markers.grid, markers.markers, values)


def region_activeness(
    displacements: FeatureTrack, region_map: "RegionMap | dict[str, tuple[str, ...]]"
) -> FeatureTrack:
    """Per-frame mean displacement over each region's non-dropout markers.

    Accepts the validated facial RegionMap or any plain region -> markers
    mapping (synthetic sessions use the latter).
    """
    if isinstance(region_map, RegionMap):
        items = {r: region_map[r] for r in region_map.names()}
    else:
        items = {r: tuple(ms) for r, ms in region_map.items()}
    available = set(displacements.columns)
    for region, markers in items.items():
        unknown = [m for m in markers if m not in available]
        if unknown:
            raise UnknownMarkerInMapError(
                f"region {region!r} references markers absent from the "
                f"displacement track: {unknown}"
            )
    names = tuple(items)
    out = np.empty((displacements.n_frames, len(names)))
    for j, region in enumerate(names):
        idx = [displacements.column_index(m) for m in items[region]]
        block = displacements.values[:, idx]
        counts = np.isfinite(block).sum(axis=1)
        sums = np.nansum(block, axis=1)
        out[:, j] = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return FeatureTrack(displacements.grid, names, out)


def sem_of(values: np.ndarray) -> float:
    """Standard error of the mean with the n-1 denominator; NaN when n < 2."""
    n = len(values)
    if n < 2:
        return math.nan
    return float(np.std(values, ddof=1) / math.sqrt(n))


@dataclass(frozen=True)
class SummaryCell:
    """Mean activeness of one region within one emotion x condition stratum."""

    region: str
    emotion: str
    condition: str
    mean: float
    sem: float
    n_frames: int
    low_support: bool


def condition_summaries(
    activeness: FeatureTrack,
    table: "SessionTable",
    min_frames: int = 30,
) -> list[SummaryCell]:
    """Per-region mean/SEM of activeness by emotion category and speech condition.

    Only frames where the target speaker is speaking contribute. Strata are
    the four emotion categories crossed with overlap vs non-overlap speech.
    Cells with fewer than `min_frames` frames are flagged low-support; empty
    cells are reported with NaN statistics.
    """
    from .ingest import CATEGORY_NAMES  # local import to avoid a module cycle

    if activeness.grid != table.grid:
        raise ValueError("activeness must be aligned on the session grid")
    speaking = table.column("labels", "speaking") == 1.0
    overlap = table.column("labels", "overlap") == 1.0
    category = table.column("emotion", "category")

    cells: list[SummaryCell] = []
    for region in activeness.columns:
        series = activeness.column(region)
        for code, emotion in enumerate(CATEGORY_NAMES):
            emo_mask = speaking & (category == float(code))
            for condition, cond_mask in (
                ("overlap", emo_mask & overlap),
                ("non_overlap", emo_mask & ~overlap),
            ):
                vals = series[cond_mask]
                vals = vals[np.isfinite(vals)]
                n = len(vals)
                mean = float(np.mean(vals)) if n else math.nan
                cells.append(
                    SummaryCell(
                        region=region,
                        emotion=emotion,
                        condition=condition,
                        mean=mean,
                        sem=sem_of(vals),
                        n_frames=n,
                        low_support=n < min_frames,
                    )
                )
    return cells


SUMMARY_HEADER = "region,emotion,condition,mean,sem,n_frames,low_support"


def write_summary_csv(cells: list[SummaryCell], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for c in cells:
            fh.write(
                f"{c.region},{c.emotion},{c.condition},{format_value(c.mean)},"
                f"{format_value(c.sem)},{c.n_frames},{int(c.low_support)}\n"
            )


def read_summary_csv(path) -> list[SummaryCell]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != SUMMARY_HEADER:
        raise TooFewValuesError(f"{path}: not a condition-summary CSV")
    cells = []
    for line in lines[1:]:
        region, emotion, condition, mean, sem, n, low = line.split(",")
        cells.append(
            SummaryCell(
                region=region,
                emotion=emotion,
                condition=condition,
                mean=float(mean) if mean else math.nan,
                sem=float(sem) if sem else math.nan,
                n_frames=int(n),
                low_support=bool(int(low)),
            )
        )
    return cells
