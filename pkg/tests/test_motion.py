import math

import numpy as np
import pytest

from speechmotion.errors import TooFewFramesError, UnknownMarkerInMapError
from speechmotion.frames import FeatureTrack, FrameGrid
from speechmotion.ingest import Interval, SpeechIntervals
from speechmotion.motion import (
    MarkerTrack,
    RegionMap,
    condition_summaries,
    default_region_map,
    displacement_magnitudes,
    read_summary_csv,
    region_activeness,
    write_summary_csv,
)
from speechmotion.timeline import SessionTable, rasterize_intervals


def marker_track(positions, markers=None, rate=120.0):
    positions = np.asarray(positions, dtype=float)
    n, m, _ = positions.shape
    markers = markers or tuple(f"M{i}" for i in range(m))
    return MarkerTrack(FrameGrid(rate, 0.0, n), tuple(markers), positions)


class TestDisplacement:
    def test_static_marker_zero(self):
        track = marker_track(np.tile([[1.0, 2.0, 3.0]], (10, 1, 1)))
        out = displacement_magnitudes(track)
        assert np.all(out.values == 0.0)

    def test_norm_oracle(self):
        # marker moving (1,2,2) mm per frame -> magnitude exactly 3
        steps = np.tile([[1.0, 2.0, 2.0]], (8, 1))
        pos = np.cumsum(np.vstack([[0.0, 0.0, 0.0], steps]), axis=0)[:, None, :]
        out = displacement_magnitudes(marker_track(pos))
        assert out.values[0, 0] == 0.0
        assert np.allclose(out.values[1:, 0], 3.0, atol=1e-12)

    def test_dropout_propagates_to_two_frames(self):
        pos = np.zeros((6, 1, 3))
        pos[3, 0, 1] = np.nan
        out = displacement_magnitudes(marker_track(pos)).column("M0")
        assert np.isnan(out[3]) and np.isnan(out[4])
        assert np.isfinite(out[[0, 1, 2, 5]]).all()

    def test_too_few_frames(self):
        with pytest.raises(TooFewFramesError):
            displacement_magnitudes(marker_track(np.zeros((1, 1, 3))))

    def test_constant_offset_invariance(self):
        rng = np.random.default_rng(0)
        pos = rng.uniform(-50, 50, (20, 2, 3))
        a = displacement_magnitudes(marker_track(pos)).values
        b = displacement_magnitudes(marker_track(pos + 17.0)).values
        assert np.allclose(a, b, atol=1e-9)

    def test_drift_adds_norm_to_static_marker(self):
        drift = np.array([0.6, 0.0, 0.8])  # |d| = 1
        pos = np.cumsum(np.tile(drift, (12, 1)), axis=0)[:, None, :]
        out = displacement_magnitudes(marker_track(pos))
        assert np.allclose(out.values[1:], 1.0, atol=1e-12)

    def test_spatial_scaling_linear(self):
        rng = np.random.default_rng(1)
        pos = rng.uniform(-10, 10, (15, 2, 3))
        a = displacement_magnitudes(marker_track(pos)).values
        b = displacement_magnitudes(marker_track(2.5 * pos)).values
        assert np.allclose(b, 2.5 * a, atol=1e-9)


class TestRegionActiveness:
    def displacement_fixture(self):
        g = FrameGrid(120.0, 0.0, 4)
        vals = np.array(
            [[1.0, 3.0, 5.0], [2.0, 4.0, 6.0], [np.nan, 4.0, 6.0], [np.nan, np.nan, np.nan]]
        )
        return FeatureTrack(g, ("A", "B", "C"), vals)

    def test_region_mean(self):
        out = region_activeness(self.displacement_fixture(), {"pair": ("A", "B")})
        assert out.column("pair")[0] == 2.0

    def test_dropout_aware_mean(self):
        out = region_activeness(self.displacement_fixture(), {"pair": ("A", "B")})
        assert out.column("pair")[2] == 4.0  # only B contributes
        assert math.isnan(out.column("pair")[3])

    def test_singleton_equals_marker(self):
        disp = self.displacement_fixture()
        out = region_activeness(disp, {"only_b": ("B",)})
        b = disp.column("B")
        finite = np.isfinite(b)
        assert np.array_equal(out.column("only_b")[finite], b[finite])

    def test_total_face_weighted_mean_oracle(self):
        # reconstruct the pooled mean from subregion means and counts
        rng = np.random.default_rng(2)
        g = FrameGrid(120.0, 0.0, 30)
        markers = tuple(f"m{i}" for i in range(9))
        disp = FeatureTrack(g, markers, rng.uniform(0, 2, (30, 9)))
        regions = {
            "upper": markers[:2],
            "middle": markers[2:5],
            "lower": markers[5:],
            "total": markers,
        }
        out = region_activeness(disp, regions)
        pooled = (
            2 * out.column("upper") + 3 * out.column("middle") + 4 * out.column("lower")
        ) / 9.0
        assert np.allclose(out.column("total"), pooled, atol=1e-12)

    def test_unknown_marker(self):
        with pytest.raises(UnknownMarkerInMapError):
            region_activeness(self.displacement_fixture(), {"bad": ("A", "ZZ")})


class TestDefaultRegionMap:
    def test_required_regions_and_sizes(self):
        rmap = default_region_map()
        assert len(rmap["upper_face"]) == 21
        assert len(rmap["middle_face"]) == 18
        assert len(rmap["lower_face"]) == 13
        assert len(rmap["total_face"]) == 52
        assert len(rmap["eyebrows"]) == 16
        assert len(rmap["mouth"]) == 8
        assert rmap["head"] == ("LHD", "RHD")
        assert len(rmap["hands"]) == 6

    def test_structural_invariants_enforced(self):
        rmap = default_region_map()
        broken = dict(rmap.regions)
        broken["total_face"] = broken["total_face"][:-1]
        with pytest.raises(ValueError):
            RegionMap(broken)
        broken = dict(rmap.regions)
        broken["eyebrows"] = broken["eyebrows"] + ("MOU1",)
        with pytest.raises(ValueError):
            RegionMap(broken)

    def test_json_round_trip(self, tmp_path):
        rmap = default_region_map()
        rmap.to_json(tmp_path / "map.json")
        back = RegionMap.from_json(tmp_path / "map.json")
        assert back.regions == rmap.regions


def make_table(activeness_value=None, n=100, rate=10.0):
    """Session table with known labels/categories for summary tests."""
    g = FrameGrid(rate, 0.0, n)
    rng = np.random.default_rng(3)
    act = activeness_value if activeness_value is not None else rng.uniform(0, 2, n)
    activeness = FeatureTrack(g, ("regionA",), np.asarray(act, dtype=float))
    # speaking on [0, 6), overlap on [2, 4)
    intervals = SpeechIntervals(
        (Interval(0.0, 6.0, "F"), Interval(2.0, 4.0, "M"))
    )
    labels = rasterize_intervals(intervals, "F", g)
    category = np.zeros(n)  # all Neutral
    emotion = FeatureTrack(
        g,
        ("arousal", "valence", "category"),
        np.column_stack([np.zeros(n), np.zeros(n), category]),
    )
    table = SessionTable(g, {"emotion": emotion, "activeness": activeness, "labels": labels})
    return table, activeness


class TestConditionSummaries:
    def test_constant_mean_sem(self):
        table, act = make_table(activeness_value=np.full(100, 1.5))
        cells = condition_summaries(act, table, min_frames=5)
        filled = [c for c in cells if c.n_frames > 0]
        assert filled
        for c in filled:
            assert c.mean == pytest.approx(1.5)
            assert c.sem == pytest.approx(0.0)

    def test_hand_computed_sem(self):
        # cell of two frames with values 1 and 3: mean 2, SEM sd/sqrt(2) = 1
        vals = np.zeros(100)
        vals[0], vals[1] = 1.0, 3.0
        table, act = make_table(activeness_value=vals)
        # restrict to the two-frame non-overlap window [0, 0.2)
        g = table.grid
        intervals = SpeechIntervals((Interval(0.0, 0.2, "F"),))
        labels = rasterize_intervals(intervals, "F", g)
        table2 = SessionTable(
            g, {"emotion": table.block("emotion"), "activeness": act, "labels": labels}
        )
        cells = condition_summaries(act, table2)
        cell = next(
            c for c in cells if c.emotion == "Neutral" and c.condition == "non_overlap"
        )
        assert cell.n_frames == 2
        assert cell.mean == pytest.approx(2.0)
        assert cell.sem == pytest.approx(1.0)
        assert cell.low_support  # 2 < 30

    def test_non_speaking_frames_excluded(self):
        table, act = make_table()
        cells = condition_summaries(act, table)
        # speaking covers [0,6) at 10 Hz = 60 frames; lose none to dropout
        assert sum(c.n_frames for c in cells) == 60

    def test_overlap_vs_non_overlap_split(self):
        table, act = make_table()
        cells = {
            (c.condition): c
            for c in condition_summaries(act, table)
            if c.emotion == "Neutral"
        }
        assert cells["overlap"].n_frames == 20  # [2,4) at 10 Hz
        assert cells["non_overlap"].n_frames == 40

    def test_empty_cells_reported(self):
        table, act = make_table()
        cells = condition_summaries(act, table)
        angry = [c for c in cells if c.emotion == "Angry"]
        assert angry and all(c.n_frames == 0 and math.isnan(c.mean) for c in angry)

    def test_csv_round_trip(self, tmp_path):
        table, act = make_table()
        cells = condition_summaries(act, table)
        write_summary_csv(cells, tmp_path / "s.csv")
        back = read_summary_csv(tmp_path / "s.csv")
        assert len(back) == len(cells)
        for a, b in zip(cells, back):
            assert (a.region, a.emotion, a.condition, a.n_frames) == (
                b.region,
                b.emotion,
                b.condition,
                b.n_frames,
            )
            if not math.isnan(a.mean):
                assert a.mean == b.mean


def test_marker_track_plausibility_bound():
    pos = np.zeros((2, 1, 3))
    pos[1, 0, 0] = 5000.0
    with pytest.raises(ValueError):
        marker_track(pos)
