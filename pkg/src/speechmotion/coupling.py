"""Affine minimum-mean-square-error mapping from speech features to motion.

The estimator is the closed-form affine map minimizing mean squared error:
A = C_yx (C_xx + eps * tr(C_xx)/d * I)^-1 and b = mu_y - A mu_x, fitted on
pairwise-complete frames. Alignment quality is scored with Pearson's r
between predicted and actual motion, per region, optionally restricted by
speech condition and affective bin.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSplitWarning,
    DegenerateInputError,
    FeatureNameMismatchError,
    GridMismatchError,
    InsufficientFramesError,
    TooFewPairsError,
)
from .frames import FeatureTrack, format_value
from .motion import sem_of
from .speech_features import PC_COLUMNS, PROSODY_COLUMNS, temporal_derivatives
from .timeline import SessionTable

FEATURE_SETS = ("prosody", "mfcc", "arousal", "valence", "all")
CONDITIONS = ("all", "overlap", "non_overlap")
AFFECT_BINS = ("all", "high", "low")


@dataclass(frozen=True)
class AffineMap:
    """Fitted affine estimator: y_hat = a @ x + b."""

    a: np.ndarray
    b: np.ndarray
    feature_names: tuple[str, ...]
    target_names: tuple[str, ...]
    n_frames: int
    ridge_eps: float
    fold_id: int | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.shape != (len(self.target_names), len(self.feature_names)):
            raise ValueError(f"a has shape {a.shape}, expected (d_y, d_x)")
        if b.shape != (len(self.target_names),):
            raise ValueError("b must have one entry per target")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "target_names", tuple(self.target_names))

    def to_json(self, path) -> None:
        doc = {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "feature_names": list(self.feature_names),
            "target_names": list(self.target_names),
            "n_frames": self.n_frames,
            "ridge_eps": self.ridge_eps,
            "fold_id": self.fold_id,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "AffineMap":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            a=np.asarray(doc["a"]),
            b=np.asarray(doc["b"]),
            feature_names=tuple(doc["feature_names"]),
            target_names=tuple(doc["target_names"]),
            n_frames=doc["n_frames"],
            ridge_eps=doc["ridge_eps"],
            fold_id=doc["fold_id"],
        )


def _fit_arrays(
    x: np.ndarray, y: np.ndarray, ridge_eps: float
) -> tuple[np.ndarray, np.ndarray, int]:
    valid = np.isfinite(x).all(axis=1) & np.isfinite(y).all(axis=1)
    xv = x[valid]
    yv = y[valid]
    n, d_x = xv.shape
    if n <= d_x + 1:
        raise InsufficientFramesError(
            f"{n} complete frames cannot identify {d_x} inputs plus offsets"
        )
    mu_x = xv.mean(axis=0)
    mu_y = yv.mean(axis=0)
    xc = xv - mu_x
    yc = yv - mu_y
    c_xx = xc.T @ xc / n
    c_yx = yc.T @ xc / n
    trace = float(np.trace(c_xx))
    if ridge_eps > 0.0:
        c_reg = c_xx + (ridge_eps * trace / d_x) * np.eye(d_x)
    else:
        eigvals = np.linalg.eigvalsh(c_xx)
        if trace <= 0.0 or eigvals[0] <= eigvals[-1] * 1e-12:
            raise DegenerateInputError(
                "input covariance is singular and ridge is disabled "
                "(a constant feature column?)"
            )
        c_reg = c_xx
    a = np.linalg.solve(c_reg, c_yx.T).T
    b = mu_y - a @ mu_x
    return a, b, n


def fit_ammse(
    x: FeatureTrack, y: FeatureTrack, ridge_eps: float = 1e-8
) -> AffineMap:
    """Fit the affine MMSE estimator from x columns to y columns.

    Frames with a dropout in either side are excluded pairwise. The ridge
    term eps * tr(C_xx)/d_x keeps near-singular covariances invertible;
    pass ridge_eps=0 for ordinary least squares.
    """
    if x.grid != y.grid:
        raise GridMismatchError("x and y must share one frame grid")
    a, b, n = _fit_arrays(x.values, y.values, ridge_eps)
    return AffineMap(
        a=a,
        b=b,
        feature_names=x.columns,
        target_names=y.columns,
        n_frames=n,
        ridge_eps=ridge_eps,
    )


def predict(mapping: AffineMap, x: FeatureTrack) -> FeatureTrack:
    """Apply the affine map per frame; dropout in any input column propagates."""
    if x.columns != mapping.feature_names:
        raise FeatureNameMismatchError(
            f"track columns {x.columns} != fitted features {mapping.feature_names}"
        )
    out = x.values @ mapping.a.T + mapping.b
    out[np.isnan(x.values).any(axis=1)] = np.nan
    return FeatureTrack(x.grid, mapping.target_names, out)


def pearson_r(y, y_hat) -> float:
    """Sample Pearson correlation over pairwise-complete values.

    Returns NaN when either side has zero variance (the undefined marker).
    """
    a = np.asarray(y, dtype=np.float64).ravel()
    b = np.asarray(y_hat, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("sequences must have equal length")
    valid = np.isfinite(a) & np.isfinite(b)
    a = a[valid]
    b = b[valid]
    if len(a) < 3:
        raise TooFewPairsError(f"need >= 3 paired values, got {len(a)}")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac) * float(bc @ bc))
    if denom == 0.0:
        return math.nan
    return float(ac @ bc) / denom


def bin_affect(
    emotion: FeatureTrack,
    dimension: str,
    policy: str = "median_split",
    speaking: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Partition speaking frames into high/low masks on one affect dimension.

    median_split uses the median of the dimension over speaking frames (ties
    go low, so all-equal values leave the high bin empty with a warning);
    zero_threshold sends positive values high.
    """
    values = emotion.column(dimension)
    if speaking is None:
        speaking = np.ones(len(values), dtype=bool)
    else:
        speaking = np.asarray(speaking, dtype=bool)
    mask = speaking & np.isfinite(values)
    if policy == "median_split":
        if not mask.any():
            return np.zeros_like(mask), np.zeros_like(mask)
        threshold = float(np.median(values[mask]))
        high = mask & (values > threshold)
        low = mask & (values <= threshold)
        if mask.any() and not high.any():
            warnings.warn(
                f"all {dimension} values equal; every frame assigned low",
                DegenerateSplitWarning,
                stacklevel=2,
            )
    elif policy == "zero_threshold":
        high = mask & (values > 0.0)
        low = mask & (values <= 0.0)
    else:
        raise ValueError(f"unknown binning policy {policy!r}")
    return high, low


def feature_set_track(
    table: SessionTable, feature_set: str, affect_derivatives: bool = True
) -> FeatureTrack:
    """Resolve a named feature set to its columns within a session table."""
    try:
        if feature_set == "prosody":
            return table.block("speech").select(PROSODY_COLUMNS)
        if feature_set == "mfcc":
            return table.block("speech").select(PC_COLUMNS)
    except KeyError as exc:
        raise FeatureNameMismatchError(
            f"feature set {feature_set!r} needs the standard speech columns "
            f"({exc.args[0]}); sessions with custom speech features should use "
            f"feature set 'all'"
        ) from None
    if feature_set == "all":
        return table.block("speech")
    if feature_set in ("arousal", "valence"):
        base = table.block("emotion").select([feature_set])
        return temporal_derivatives(base) if affect_derivatives else base
    raise ValueError(f"unknown feature set {feature_set!r}; expected {FEATURE_SETS}")


@dataclass(frozen=True)
class MappingEvaluation:
    """Per-session mapping quality: Pearson r per target column."""

    feature_set: str
    protocol: str
    condition: str
    affect_bin: str
    bin_dimension: str | None
    per_target: dict[str, float]
    n_frames: int

    @property
    def r(self) -> float:
        vals = [v for v in self.per_target.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan


def _selection_mask(
    table: SessionTable,
    condition: str,
    affect_bin: str,
    dimension: str | None,
    bin_policy: str,
) -> np.ndarray:
    speaking = table.column("labels", "speaking") == 1.0
    mask = speaking.copy()
    if condition == "overlap":
        mask &= table.column("labels", "overlap") == 1.0
    elif condition == "non_overlap":
        mask &= table.column("labels", "overlap") == 0.0
    elif condition != "all":
        raise ValueError(f"unknown condition {condition!r}; expected {CONDITIONS}")
    if affect_bin != "all":
        if affect_bin not in ("high", "low"):
            raise ValueError(f"unknown affect bin {affect_bin!r}")
        if dimension is None:
            raise ValueError("affect binning requires a dimension")
        high, low = bin_affect(
            table.block("emotion"), dimension, policy=bin_policy, speaking=speaking
        )
        mask &= high if affect_bin == "high" else low
    return mask


def evaluate_mapping(
    table: SessionTable,
    feature_set: str,
    region: str | None = None,
    protocol: str = "k_fold",
    n_folds: int = 5,
    condition: str = "all",
    affect_bin: str = "all",
    affect_dimension: str | None = None,
    bin_policy: str = "median_split",
    ridge_eps: float = 1e-8,
    affect_derivatives: bool = True,
) -> MappingEvaluation:
    """Fit and score the speech-to-motion map for one session.

    Frames are restricted to speaking = 1, then filtered by condition and
    affect bin before fitting. Under k_fold, folds are contiguous temporal
    blocks and r is computed over the concatenated held-out predictions;
    under in_sample, the map is fitted and scored on the same frames.
    `region=None` scores every activeness column of the joint fit.
    """
    if protocol not in ("k_fold", "in_sample"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if affect_bin != "all" and affect_dimension is None:
        affect_dimension = feature_set if feature_set in ("arousal", "valence") else "arousal"

    x_track = feature_set_track(table, feature_set, affect_derivatives)
    activeness = table.block("activeness")
    targets = activeness.columns if region is None else (region,)
    y_all = activeness.select(list(targets))

    mask = _selection_mask(table, condition, affect_bin, affect_dimension, bin_policy)
    idx = np.flatnonzero(mask)
    x = x_track.values[idx]
    y = y_all.values[idx]

    if protocol == "in_sample":
        a, b, _ = _fit_arrays(x, y, ridge_eps)
        y_hat = x @ a.T + b
        label = "in_sample"
    else:
        if len(idx) < n_folds:
            raise InsufficientFramesError(
                f"{len(idx)} selected frames cannot form {n_folds} folds"
            )
        folds = np.array_split(np.arange(len(idx)), n_folds)
        y_hat = np.full_like(y, np.nan)
        for fold in folds:
            train = np.setdiff1d(np.arange(len(idx)), fold, assume_unique=True)
            a, b, _ = _fit_arrays(x[train], y[train], ridge_eps)
            y_hat[fold] = x[fold] @ a.T + b
        y_hat[np.isnan(x).any(axis=1)] = np.nan
        label = f"k_fold({n_folds})"

    per_target = {}
    for j, name in enumerate(targets):
        try:
            per_target[name] = pearson_r(y[:, j], y_hat[:, j])
        except TooFewPairsError:
            per_target[name] = math.nan
    return MappingEvaluation(
        feature_set=feature_set,
        protocol=label,
        condition=condition,
        affect_bin=affect_bin,
        bin_dimension=affect_dimension if affect_bin != "all" else None,
        per_target=per_target,
        n_frames=len(idx),
    )


@dataclass(frozen=True)
class CouplingCell:
    """One report row: mean r over dyads for a region/feature/condition/bin."""

    region: str
    feature_set: str
    condition: str
    affect_bin: str
    bin_dimension: str
    mean_r: float
    sem_r: float
    n_dyads: int
    n_frames: int


def coupling_report(
    tables: dict[str, SessionTable],
    feature_sets: tuple[str, ...] = ("prosody", "mfcc", "arousal", "valence"),
    conditions: tuple[str, ...] = CONDITIONS,
    include_affect_bins: bool = True,
    protocol: str = "k_fold",
    n_folds: int = 5,
    ridge_eps: float = 1e-8,
    bin_policy: str = "median_split",
    affect_derivatives: bool = True,
) -> list[CouplingCell]:
    """Mean/SEM of per-dyad r for every region and analysis cell.

    Affect bins are evaluated only for the arousal/valence feature sets, on
    their own dimension. Sessions whose frames cannot support a cell are
    skipped; the row records how many dyads contributed.
    """
    cells: list[CouplingCell] = []
    for feature_set in feature_sets:
        bins: tuple[str, ...] = ("all",)
        if include_affect_bins and feature_set in ("arousal", "valence"):
            bins = AFFECT_BINS
        for condition in conditions:
            for affect_bin in bins:
                per_region: dict[str, list[float]] = {}
                frame_total = 0
                for table in tables.values():
                    try:
                        ev = evaluate_mapping(
                            table,
                            feature_set,
                            region=None,
                            protocol=protocol,
                            n_folds=n_folds,
                            condition=condition,
                            affect_bin=affect_bin,
                            bin_policy=bin_policy,
                            ridge_eps=ridge_eps,
                            affect_derivatives=affect_derivatives,
                        )
                    except InsufficientFramesError:
                        continue
                    frame_total += ev.n_frames
                    for reg, r in ev.per_target.items():
                        if not math.isnan(r):
                            per_region.setdefault(reg, []).append(r)
                regions = sorted(per_region) if per_region else []
                for reg in regions:
                    rs = np.asarray(per_region[reg])
                    cells.append(
                        CouplingCell(
                            region=reg,
                            feature_set=feature_set,
                            condition=condition,
                            affect_bin=affect_bin,
                            bin_dimension=(
                                feature_set if affect_bin != "all" else ""
                            ),
                            mean_r=float(rs.mean()),
                            sem_r=sem_of(rs),
                            n_dyads=len(rs),
                            n_frames=frame_total,
                        )
                    )
    return cells


COUPLING_HEADER = (
    "region,feature_set,condition,affect_bin,bin_dimension,mean_r,sem_r,n_dyads,n_frames"
)


def write_coupling_csv(cells: list[CouplingCell], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(COUPLING_HEADER + "\n")
        for c in cells:
            fh.write(
                f"{c.region},{c.feature_set},{c.condition},{c.affect_bin},"
                f"{c.bin_dimension},{format_value(c.mean_r)},{format_value(c.sem_r)},"
                f"{c.n_dyads},{c.n_frames}\n"
            )


def read_coupling_csv(path) -> list[CouplingCell]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != COUPLING_HEADER:
        raise ValueError(f"{path}: not a coupling report CSV")
    cells = []
    for line in lines[1:]:
        region, fs, cond, ab, dim, mean_r, sem_r, n_dyads, n_frames = line.split(",")
        cells.append(
            CouplingCell(
                region=region,
                feature_set=fs,
                condition=cond,
                affect_bin=ab,
                bin_dimension=dim,
                mean_r=float(mean_r) if mean_r else math.nan,
                sem_r=float(sem_r) if sem_r else math.nan,
                n_dyads=int(n_dyads),
                n_frames=int(n_frames),
            )
        )
    return cells
