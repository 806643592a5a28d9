"""Loaders for raw session inputs: audio, markers, transcripts, emotion tracks.

All loaders are pure functions of their file contents and return immutable
values, so sessions can be ingested concurrently. Dropouts are preserved as
NaN and never interpolated here.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ChannelOutOfRangeError,
    CorruptHeaderError,
    EmptyAudioError,
    InconsistentMarkerSetError,
    InvertedIntervalError,
    MalformedRowError,
    NonMonotoneTimeError,
    SameSpeakerOverlapError,
    TrimExceedsDurationError,
    UnknownCategoryError,
    UnsupportedFormatError,
    ValueOutOfRangeError,
)
from .frames import (
    FeatureTrack,
    FrameGrid,
    format_value,
    parse_rate_comment,
)
from .motion import MarkerTrack

CHANNEL_LEFT = "left"
CHANNEL_RIGHT = "right"

# Category codes are stable across the pipeline: the CSV stores names, the
# numeric track stores the code.
CATEGORY_NAMES = ("Neutral", "Happy", "Sad", "Angry")
CATEGORY_CODES = {name: float(i) for i, name in enumerate(CATEGORY_NAMES)}

EMOTION_COLUMNS = ("arousal", "valence", "category")


@dataclass(frozen=True)
class AudioClip:
    """Normalized waveform in [-1, 1]; 1-D mono or (n, channels) multichannel."""

    samples: np.ndarray
    sample_rate_hz: int
    start_s: float = 0.0

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        samples = np.array(self.samples, dtype=np.float64, order="C")
        if samples.ndim not in (1, 2):
            raise ValueError("samples must be 1-D mono or 2-D (n, channels)")
        if not np.isfinite(samples).all():
            raise ValueError("samples must be finite")
        if samples.size and np.abs(samples).max() > 1.0:
            raise ValueError("samples must lie in [-1, 1] after normalization")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


def _read_chunks(data: bytes, path: str) -> dict[bytes, bytes]:
    if len(data) < 12:
        raise CorruptHeaderError(f"{path}: file too short for a RIFF header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeaderError(f"{path}: not a RIFF/WAVE file")
    chunks: dict[bytes, bytes] = {}
    offset = 12
    while offset + 8 <= len(data):
        cid = data[offset:offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body = data[offset + 8:offset + 8 + size]
        if len(body) < size:
            raise CorruptHeaderError(f"{path}: truncated {cid!r} chunk")
        chunks.setdefault(cid, body)
        offset += 8 + size + (size & 1)  # chunks are word-aligned
    return chunks


def _decode_pcm(body: bytes, fmt_code: int, bits: int, path: str) -> np.ndarray:
    if fmt_code == 3:
        if bits != 32:
            raise UnsupportedFormatError(f"{path}: float WAV must be 32-bit")
        x = np.frombuffer(body, dtype="<f4").astype(np.float64)
        return np.clip(x, -1.0, 1.0)
    if fmt_code != 1:
        raise UnsupportedFormatError(
            f"{path}: unsupported WAV format code {fmt_code} (PCM required)"
        )
    if bits == 8:
        x = np.frombuffer(body, dtype=np.uint8).astype(np.float64)
        return (x - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        raw = np.frombuffer(body, dtype=np.uint8)
        raw = raw[: (len(raw) // 3) * 3].reshape(-1, 3).astype(np.int64)
        val = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        val = (val ^ 0x800000) - 0x800000
        return val.astype(np.float64) / 8388608.0
    if bits == 32:
        return np.frombuffer(body, dtype="<i4").astype(np.float64) / 2147483648.0
    raise UnsupportedFormatError(f"{path}: unsupported bit depth {bits}")


def load_wav(path) -> AudioClip:
    """Load a little-endian RIFF/WAVE file with integer or 32-bit-float PCM.

    Integer samples are scaled by 2^(bits-1) (so 16-bit 32767 maps to
    32767/32768). Multichannel files keep their channels; use
    :func:`select_channel` to isolate one.
    """
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    chunks = _read_chunks(data, path)
    if b"fmt " not in chunks:
        raise CorruptHeaderError(f"{path}: missing fmt chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise CorruptHeaderError(f"{path}: fmt chunk too short")
    fmt_code, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if fmt_code not in (1, 3):
        raise UnsupportedFormatError(
            f"{path}: unsupported WAV format code {fmt_code} (PCM required)"
        )
    if n_channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: expected 1-2 channels, got {n_channels}")
    if b"data" not in chunks:
        raise CorruptHeaderError(f"{path}: missing data chunk")
    flat = _decode_pcm(chunks[b"data"], fmt_code, bits, path)
    n_frames = flat.shape[0] // n_channels
    if n_frames == 0:
        raise EmptyAudioError(f"{path}: no audio frames")
    samples = flat[: n_frames * n_channels]
    if n_channels > 1:
        samples = samples.reshape(n_frames, n_channels)
    return AudioClip(samples=samples, sample_rate_hz=int(sample_rate))


def write_wav(path, clip: AudioClip, bits: int = 16) -> None:
    """Write a clip as integer PCM (16-bit little-endian)."""
    if bits != 16:
        raise UnsupportedFormatError("only 16-bit output is supported")
    samples = clip.samples
    if samples.ndim == 1:
        samples = samples[:, None]
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    body = ints.reshape(-1).tobytes()
    n_channels = samples.shape[1]
    byte_rate = clip.sample_rate_hz * n_channels * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, n_channels, clip.sample_rate_hz, byte_rate, n_channels * 2, 16
    )
    header += b"data" + struct.pack("<I", len(body))
    with open(path, "wb") as fh:
        fh.write(header + body)


def select_channel(clip: AudioClip, channel: str) -> AudioClip:
    """Return the requested channel as a mono clip, sample values untouched."""
    channel = channel.lower()
    if channel not in (CHANNEL_LEFT, CHANNEL_RIGHT):
        raise ChannelOutOfRangeError(f"channel must be left or right, got {channel!r}")
    index = 0 if channel == CHANNEL_LEFT else 1
    if clip.samples.ndim == 1:
        if index == 0:
            return clip
        raise ChannelOutOfRangeError("mono clip has no right channel")
    if index >= clip.n_channels:
        raise ChannelOutOfRangeError(
            f"clip has {clip.n_channels} channels, cannot take channel {index}"
        )
    return AudioClip(
        samples=clip.samples[:, index],
        sample_rate_hz=clip.sample_rate_hz,
        start_s=clip.start_s,
    )


def trim_head(clip: AudioClip, seconds: float = 4.0) -> AudioClip:
    """Drop the first `seconds` of audio and advance the start timestamp."""
    if seconds < 0:
        raise ValueError("trim seconds must be >= 0")
    if seconds == 0:
        return clip
    if seconds >= clip.duration_s:
        raise TrimExceedsDurationError(
            f"cannot trim {seconds} s from a {clip.duration_s:.3f} s clip"
        )
    n = int(round(seconds * clip.sample_rate_hz))
    return AudioClip(
        samples=clip.samples[n:],
        sample_rate_hz=clip.sample_rate_hz,
        start_s=clip.start_s + seconds,
    )


@dataclass(frozen=True)
class Interval:
    start_s: float
    end_s: float
    speaker: str


@dataclass(frozen=True)
class SpeechIntervals:
    """Sorted speaking intervals; same-speaker overlap is rejected as corrupt."""

    entries: tuple[Interval, ...]

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        for e in entries:
            if not e.start_s < e.end_s:
                raise InvertedIntervalError(
                    f"interval [{e.start_s}, {e.end_s}) for {e.speaker!r} is inverted"
                )
        starts = [e.start_s for e in entries]
        if starts != sorted(starts):
            raise ValueError("entries must be sorted by start time")
        last_end: dict[str, float] = {}
        for e in entries:
            if e.speaker in last_end and e.start_s < last_end[e.speaker]:
                raise SameSpeakerOverlapError(
                    f"speaker {e.speaker!r} overlaps itself at {e.start_s} s"
                )
            last_end[e.speaker] = max(last_end.get(e.speaker, -math.inf), e.end_s)

    def speakers(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.speaker)
        return tuple(seen)

    def for_speaker(self, speaker: str) -> tuple[Interval, ...]:
        return tuple(e for e in self.entries if e.speaker == speaker)


def load_transcript_intervals(path) -> SpeechIntervals:
    """Parse whitespace-separated `start_s end_s speaker_id` lines."""
    path = str(path)
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise MalformedRowError(
                    f"{path}:{line_no}: expected 'start end speaker', got {text!r}"
                )
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError:
                raise MalformedRowError(
                    f"{path}:{line_no}: cannot parse interval bounds"
                ) from None
            entries.append(Interval(start, end, parts[2]))
    entries.sort(key=lambda e: (e.start_s, e.end_s, e.speaker))
    return SpeechIntervals(tuple(entries))


def write_transcript_intervals(intervals: SpeechIntervals, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in intervals.entries:
            fh.write(f"{format_value(e.start_s)} {format_value(e.end_s)} {e.speaker}\n")


def load_emotion_frames(path) -> FeatureTrack:
    """Load an externally computed frame-level emotion CSV.

    Expected layout: `# rate_hz=<float>` comment, then
    `time_s,arousal,valence,category,confidence`. Arousal and valence must lie
    in [-1, 1]; category must be one of the four classes. Timestamps are
    stored as declared by the file (whether they mark window starts or centers
    is up to the producer). Confidence is validated but not carried forward.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 3:
        raise MalformedRowError(f"{path}: expected comment, header and data")
    rate = parse_rate_comment(lines[0], path)
    header = lines[1].split(",")
    expected = ["time_s", "arousal", "valence", "category", "confidence"]
    if header != expected:
        raise MalformedRowError(f"{path}: header must be {','.join(expected)}")
    times, rows = [], []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise MalformedRowError(f"{path}:{line_no}: expected 5 cells")
        try:
            t = float(cells[0])
            arousal = float(cells[1])
            valence = float(cells[2])
            confidence = float(cells[4])
        except ValueError:
            raise MalformedRowError(f"{path}:{line_no}: non-numeric cell") from None
        for name, value in (("arousal", arousal), ("valence", valence)):
            if not -1.0 <= value <= 1.0:
                raise ValueOutOfRangeError(
                    f"{path}:{line_no}: {name} {value} outside [-1, 1]"
                )
        if not 0.0 <= confidence <= 1.0:
            raise ValueOutOfRangeError(
                f"{path}:{line_no}: confidence {confidence} outside [0, 1]"
            )
        if cells[3] not in CATEGORY_CODES:
            raise UnknownCategoryError(
                f"{path}:{line_no}: unknown category {cells[3]!r}; "
                f"expected one of {CATEGORY_NAMES}"
            )
        times.append(t)
        rows.append([arousal, valence, CATEGORY_CODES[cells[3]]])
    if not rows:
        raise MalformedRowError(f"{path}: no data rows")
    t = np.asarray(times)
    if (np.diff(t) <= 0).any():
        raise NonMonotoneTimeError(f"{path}: time_s must be strictly increasing")
    grid = FrameGrid(rate_hz=rate, start_s=float(t[0]), n_frames=len(rows))
    return FeatureTrack(grid, EMOTION_COLUMNS, np.asarray(rows))


def write_emotion_csv(track: FeatureTrack, path, confidence: float = 1.0) -> None:
    """Write an emotion track back to the adapter CSV format."""
    if track.columns != EMOTION_COLUMNS:
        raise ValueError(f"expected columns {EMOTION_COLUMNS}, got {track.columns}")
    times = track.grid.timestamps()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# rate_hz={track.grid.rate_hz!r}\n")
        fh.write("time_s,arousal,valence,category,confidence\n")
        for i in range(track.n_frames):
            code = int(track.values[i, 2])
            fh.write(
                f"{format_value(times[i])},{format_value(track.values[i, 0])},"
                f"{format_value(track.values[i, 1])},{CATEGORY_NAMES[code]},"
                f"{format_value(confidence)}\n"
            )


def _marker_names_from_header(header: list[str], path: str) -> list[str]:
    if not header or header[0] != "time_s":
        raise MalformedRowError(f"{path}: header must start with time_s")
    coords = header[1:]
    if len(coords) % 3 != 0:
        raise InconsistentMarkerSetError(
            f"{path}: coordinate columns must come in _x,_y,_z triples"
        )
    names = []
    for k in range(0, len(coords), 3):
        triple = coords[k:k + 3]
        suffixes = [c.rsplit("_", 1)[-1] for c in triple]
        bases = {c.rsplit("_", 1)[0] for c in triple}
        if suffixes != ["x", "y", "z"] or len(bases) != 1:
            raise InconsistentMarkerSetError(
                f"{path}: expected <marker>_x,<marker>_y,<marker>_z, got {triple}"
            )
        names.append(triple[0].rsplit("_", 1)[0])
    if len(set(names)) != len(names):
        raise InconsistentMarkerSetError(f"{path}: duplicate marker names")
    return names


def load_markers(path, max_abs_mm: float = 2000.0) -> MarkerTrack:
    """Load a marker-trajectory CSV; empty cells become NaN dropouts."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 3:
        raise MalformedRowError(f"{path}: expected comment, header and data")
    rate = parse_rate_comment(lines[0], path)
    header = lines[1].split(",")
    names = _marker_names_from_header(header, path)
    n_cells = len(header)
    times, rows = [], []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != n_cells:
            raise MalformedRowError(
                f"{path}:{line_no}: expected {n_cells} cells, got {len(cells)}"
            )
        try:
            times.append(float(cells[0]))
        except ValueError:
            raise MalformedRowError(f"{path}:{line_no}: bad time cell") from None
        row = []
        for cell in cells[1:]:
            if cell == "":
                row.append(math.nan)
            else:
                try:
                    row.append(float(cell))
                except ValueError:
                    raise MalformedRowError(
                        f"{path}:{line_no}: cannot parse {cell!r}"
                    ) from None
        rows.append(row)
    if not rows:
        raise MalformedRowError(f"{path}: no data rows")
    t = np.asarray(times)
    if (np.diff(t) <= 0).any():
        raise NonMonotoneTimeError(f"{path}: time_s must be strictly increasing")
    grid = FrameGrid(rate_hz=rate, start_s=float(t[0]), n_frames=len(rows))
    positions = np.asarray(rows).reshape(len(rows), len(names), 3)
    return MarkerTrack(grid, tuple(names), positions, max_abs_mm=max_abs_mm)


def write_marker_csv(markers: MarkerTrack, path) -> None:
    """Write a marker track in the CSV format accepted by :func:`load_markers`."""
    times = markers.grid.timestamps()
    header = ["time_s"]
    for m in markers.markers:
        header.extend((f"{m}_x", f"{m}_y", f"{m}_z"))
    flat = markers.positions.reshape(markers.n_frames, -1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# rate_hz={markers.grid.rate_hz!r}\n")
        fh.write(",".join(header) + "\n")
        for i in range(markers.n_frames):
            cells = [format_value(times[i])]
            cells.extend(format_value(v) for v in flat[i])
            fh.write(",".join(cells) + "\n")
