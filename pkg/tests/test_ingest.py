import math
import struct

import numpy as np
import pytest

from speechmotion.errors import (
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
from speechmotion.ingest import (
    AudioClip,
    Interval,
    SpeechIntervals,
    load_emotion_frames,
    load_markers,
    load_transcript_intervals,
    load_wav,
    select_channel,
    trim_head,
    write_marker_csv,
    write_wav,
)


def wav_bytes(frames: bytes, fmt_code=1, channels=1, sr=16000, bits=16) -> bytes:
    """Hand-assembled RIFF/WAVE bytes, independent of the package's writer."""
    fmt = struct.pack(
        "<HHIIHH", fmt_code, channels, sr, sr * channels * bits // 8,
        channels * bits // 8, bits,
    )
    body = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(frames)) + frames
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def write(tmp_path, name, data: bytes):
    p = tmp_path / name
    p.write_bytes(data)
    return p


class TestLoadWav:
    def test_silence_16bit(self, tmp_path):
        p = write(tmp_path, "s.wav", wav_bytes(b"\x00\x00" * 16000))
        clip = load_wav(p)
        assert clip.n_samples == 16000
        assert clip.sample_rate_hz == 16000
        assert clip.n_channels == 1
        assert np.all(clip.samples == 0.0)

    def test_fullscale_16bit_scaling(self, tmp_path):
        # integer-scaling oracle: value / 2^(bits-1)
        p = write(tmp_path, "f.wav", wav_bytes(struct.pack("<h", 32767) * 10))
        clip = load_wav(p)
        assert np.allclose(clip.samples, 32767 / 32768, atol=0)

    def test_negative_fullscale(self, tmp_path):
        p = write(tmp_path, "n.wav", wav_bytes(struct.pack("<h", -32768) * 4))
        assert np.all(load_wav(p).samples == -1.0)

    def test_stereo_channels_preserved(self, tmp_path):
        frames = struct.pack("<4h", 100, -200, 300, -400)  # L,R interleaved
        p = write(tmp_path, "st.wav", wav_bytes(frames, channels=2))
        clip = load_wav(p)
        assert clip.n_channels == 2
        assert clip.samples.shape == (2, 2)
        assert np.allclose(clip.samples[:, 0] * 32768, [100, 300])
        assert np.allclose(clip.samples[:, 1] * 32768, [-200, -400])

    def test_8bit_unsigned(self, tmp_path):
        p = write(tmp_path, "b8.wav", wav_bytes(bytes([128, 192, 64]), bits=8))
        clip = load_wav(p)
        assert np.allclose(clip.samples, [0.0, 0.5, -0.5])

    def test_24bit_scaling(self, tmp_path):
        val = 1 << 22  # 0.5 at 24-bit full scale 2^23
        frames = struct.pack("<I", val)[:3] + struct.pack("<i", -(1 << 23) & 0xFFFFFF)[:3]
        p = write(tmp_path, "b24.wav", wav_bytes(frames, bits=24))
        clip = load_wav(p)
        assert np.allclose(clip.samples, [0.5, -1.0])

    def test_float32_passthrough(self, tmp_path):
        frames = struct.pack("<3f", 0.25, -0.5, 1.0)
        p = write(tmp_path, "f32.wav", wav_bytes(frames, fmt_code=3, bits=32))
        assert np.allclose(load_wav(p).samples, [0.25, -0.5, 1.0])

    def test_non_pcm_rejected(self, tmp_path):
        p = write(tmp_path, "ulaw.wav", wav_bytes(b"\x00\x00", fmt_code=7))
        with pytest.raises(UnsupportedFormatError):
            load_wav(p)

    def test_corrupt_magic(self, tmp_path):
        p = write(tmp_path, "bad.wav", b"RIFX" + b"\x00" * 40)
        with pytest.raises(CorruptHeaderError):
            load_wav(p)

    def test_truncated_data_chunk(self, tmp_path):
        data = wav_bytes(b"\x00\x00" * 8)
        p = write(tmp_path, "tr.wav", data[:-4])
        with pytest.raises(CorruptHeaderError):
            load_wav(p)

    def test_empty_audio(self, tmp_path):
        p = write(tmp_path, "e.wav", wav_bytes(b""))
        with pytest.raises(EmptyAudioError):
            load_wav(p)

    def test_writer_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        x = np.round(rng.uniform(-0.9, 0.9, 200) * 32768) / 32768
        write_wav(tmp_path / "rt.wav", AudioClip(x, 8000))
        back = load_wav(tmp_path / "rt.wav")
        assert back.sample_rate_hz == 8000
        assert np.allclose(back.samples, x, atol=0)


class TestSelectChannel:
    def test_right_isolates_ramp(self):
        ramp = np.linspace(-0.5, 0.5, 50)
        clip = AudioClip(np.column_stack([np.zeros(50), ramp]), 8000)
        right = select_channel(clip, "right")
        assert right.n_channels == 1
        assert np.array_equal(right.samples, ramp)

    def test_mono_left_identity(self):
        clip = AudioClip(np.linspace(0, 0.1, 10), 8000)
        assert select_channel(clip, "left") is clip

    def test_left_bit_exact(self):
        # sample-compare oracle: stereo sine L / cosine R
        t = np.arange(400) / 8000.0
        sine, cosine = 0.7 * np.sin(2 * np.pi * 100 * t), 0.7 * np.cos(2 * np.pi * 100 * t)
        clip = AudioClip(np.column_stack([sine, cosine]), 8000)
        assert np.array_equal(select_channel(clip, "left").samples, sine)
        assert np.array_equal(select_channel(clip, "right").samples, cosine)

    def test_right_on_mono_rejected(self):
        with pytest.raises(ChannelOutOfRangeError):
            select_channel(AudioClip(np.zeros(8), 8000), "right")

    def test_unknown_channel_name(self):
        with pytest.raises(ChannelOutOfRangeError):
            select_channel(AudioClip(np.zeros(8), 8000), "center")


class TestTrimHead:
    def test_four_second_default(self):
        clip = AudioClip(np.zeros(10 * 8000), 8000)
        out = trim_head(clip)
        assert out.duration_s == pytest.approx(6.0)
        assert out.start_s == pytest.approx(4.0)

    def test_zero_identity(self):
        clip = AudioClip(np.zeros(100), 8000)
        assert trim_head(clip, 0.0) is clip

    def test_trim_exceeds_duration(self):
        with pytest.raises(TrimExceedsDurationError):
            trim_head(AudioClip(np.zeros(3 * 8000), 8000), 4.0)

    def test_commutes_with_select_channel(self):
        rng = np.random.default_rng(11)
        stereo = rng.uniform(-1, 1, (8000, 2))
        clip = AudioClip(stereo, 8000)
        a = trim_head(select_channel(clip, "right"), 0.25)
        b = select_channel(trim_head(clip, 0.25), "right")
        assert np.array_equal(a.samples, b.samples)
        assert a.start_s == b.start_s


MARKER_CSV = """# rate_hz=120.0
time_s,M1_x,M1_y,M1_z
0.0,1.0,2.0,3.0
0.008333333333333333,1.5,2.0,3.0
"""


class TestLoadMarkers:
    def test_minimal_file(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(MARKER_CSV)
        track = load_markers(p)
        assert track.markers == ("M1",)
        assert track.n_frames == 2
        assert track.positions[1, 0, 0] == 1.5

    def test_blank_cell_is_dropout(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(MARKER_CSV.replace("1.5,2.0", ",2.0"))
        track = load_markers(p)
        assert math.isnan(track.positions[1, 0, 0])
        assert track.positions[1, 0, 1] == 2.0

    def test_row_count_oracle(self, tmp_path):
        # 120 rows at 120 Hz span 1.0 s within one frame period
        rows = [f"{i/120.0!r},0.0,0.0,0.0" for i in range(120)]
        p = tmp_path / "m.csv"
        p.write_text("# rate_hz=120.0\ntime_s,M1_x,M1_y,M1_z\n" + "\n".join(rows) + "\n")
        track = load_markers(p)
        assert track.n_frames == 120
        assert abs(track.grid.duration_s - 1.0) <= 1.0 / 120.0

    def test_inconsistent_marker_set(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("# rate_hz=120.0\ntime_s,M1_x,M1_y\n0.0,1,2\n")
        with pytest.raises(InconsistentMarkerSetError):
            load_markers(p)

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(MARKER_CSV.replace("1.5", "abc"))
        with pytest.raises(MalformedRowError):
            load_markers(p)

    def test_non_monotone_time(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(MARKER_CSV.replace("0.008333333333333333", "0.0"))
        with pytest.raises(NonMonotoneTimeError):
            load_markers(p)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        pos = rng.uniform(-100, 100, (40, 3, 3))
        pos[rng.uniform(size=pos.shape) < 0.1] = np.nan
        from speechmotion.frames import FrameGrid
        from speechmotion.motion import MarkerTrack

        track = MarkerTrack(FrameGrid(120.0, 0.0, 40), ("A", "B", "C"), pos)
        write_marker_csv(track, tmp_path / "rt.csv")
        back = load_markers(tmp_path / "rt.csv")
        assert back.markers == track.markers
        assert back.grid == track.grid
        finite = np.isfinite(pos)
        assert np.array_equal(np.isfinite(back.positions), finite)
        assert np.array_equal(back.positions[finite], pos[finite])


class TestTranscript:
    def test_single_line(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0.0 2.0 F\n")
        iv = load_transcript_intervals(p)
        assert iv.entries == (Interval(0.0, 2.0, "F"),)

    def test_cross_speaker_overlap_preserved(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2 F\n1 3 M\n")
        iv = load_transcript_intervals(p)
        assert len(iv.entries) == 2
        assert iv.entries[0].speaker == "F"
        assert iv.entries[1].start_s == 1.0

    def test_comments_and_sorting(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("# header\n3 4 F  # trailing\n0 1 M\n")
        iv = load_transcript_intervals(p)
        assert [e.speaker for e in iv.entries] == ["M", "F"]

    def test_inverted_interval(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("2 1 F\n")
        with pytest.raises(InvertedIntervalError):
            load_transcript_intervals(p)

    def test_same_speaker_overlap(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2 F\n1 3 F\n")
        with pytest.raises(SameSpeakerOverlapError):
            load_transcript_intervals(p)

    def test_same_speaker_touching_ok(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2 F\n2 3 F\n")
        assert len(load_transcript_intervals(p).entries) == 2

    def test_validator_idempotent(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2 F\n1 3 M\n2.5 4 F\n")
        iv = load_transcript_intervals(p)
        again = SpeechIntervals(iv.entries)  # re-validating sorted output passes
        assert again.entries == iv.entries

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2\n")
        with pytest.raises(MalformedRowError):
            load_transcript_intervals(p)


EMOTION_CSV = """# rate_hz=10.0
time_s,arousal,valence,category,confidence
0.0,0.5,-0.2,Happy,0.9
0.1,0.4,-0.1,Sad,0.8
"""


class TestEmotion:
    def test_verbatim_storage(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(EMOTION_CSV)
        track = load_emotion_frames(p)
        assert track.columns == ("arousal", "valence", "category")
        assert track.column("arousal")[0] == 0.5
        assert track.column("valence")[0] == -0.2
        assert track.column("category")[0] == 1.0  # Happy
        assert track.column("category")[1] == 2.0  # Sad

    def test_out_of_range_arousal(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(EMOTION_CSV.replace("0.5", "1.3"))
        with pytest.raises(ValueOutOfRangeError):
            load_emotion_frames(p)

    def test_unknown_category(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(EMOTION_CSV.replace("Happy", "Bored"))
        with pytest.raises(UnknownCategoryError):
            load_emotion_frames(p)

    def test_row_count_oracle(self, tmp_path):
        rows = "\n".join(f"{i/10.0!r},0.0,0.0,Neutral,1.0" for i in range(10))
        p = tmp_path / "e.csv"
        p.write_text("# rate_hz=10.0\ntime_s,arousal,valence,category,confidence\n" + rows + "\n")
        track = load_emotion_frames(p)
        assert track.n_frames == 10
        assert track.grid.duration_s == pytest.approx(1.0)


class TestAudioClipInvariants:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([1.5]), 8000)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([np.nan]), 8000)

    def test_duration(self):
        clip = AudioClip(np.zeros(4000), 8000)
        assert clip.duration_s == 0.5
