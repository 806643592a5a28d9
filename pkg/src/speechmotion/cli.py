"""Batch command-line front end.

Subcommands mirror the pipeline stages: `features` (audio -> 18-column
speech features), `align` (all modalities -> one session table), `activeness`
(markers -> region activeness + condition summaries), `map` (AMMSE fits and
the coupling report), `stats` (repeated-measures ANOVA), `synth` (generate a
verification session) and `report` (heatmap grids, SVGs and reference
comparison tables). Every command is deterministic for identical inputs.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from . import coupling as coupling_mod
from . import ingest, motion, report, speech_features, stats, synth, timeline
from .errors import MissingUpstreamOutputError, PipelineError, ValidationError
from .frames import FeatureTrack, FrameGrid, read_feature_csv, write_feature_csv

DEFAULT_PARAMS = {
    "target_rate_hz": 60.24,
    "trim_head_s": 4.0,
    "pca_components": 12,
    "pca_scope": "session",
    "ridge_eps": 1e-8,
    "protocol": "k_fold",
    "n_folds": 5,
    "bin_policy": "median_split",
    "affect_derivatives": True,
    "min_cell_frames": 30,
    "anova_unit": "session",
    "segment_s": 10.0,
    "sphericity_correction": False,
    "drop_incomplete_subjects": True,
    "feature_sets": ["prosody", "mfcc", "arousal", "valence"],
    "f0_min_hz": 50.0,
    "f0_max_hz": 500.0,
}

# Conventions for the IEMOCAP-style dyadic corpus: the left-positioned
# speaker sits on the front-left channel in session 1 and front-right in
# sessions 2-5; recordings start with ~4 s of non-task behavior.
BUILTIN_PROFILES = {
    "iemocap": {
        "channel_by_session": {"1": "left", "2": "right", "3": "right", "4": "right", "5": "right"},
        "trim_head_s": 4.0,
        "target_rate_hz": 60.24,
        "region_map": "default",
    }
}


class Config:
    """Validated session configuration plus resolved stage parameters."""

    def __init__(self, doc: dict, base_dir: Path, out_dir: Path | None = None):
        self.base_dir = base_dir
        profiles = {**BUILTIN_PROFILES, **doc.get("profiles", {})}
        profile_name = doc.get("profile")
        self.profile = profiles.get(profile_name, {}) if profile_name else {}
        if profile_name and profile_name not in profiles:
            raise ValidationError(f"unknown profile {profile_name!r}")
        self.params = {**DEFAULT_PARAMS}
        for key in ("trim_head_s", "target_rate_hz"):
            if key in self.profile:
                self.params[key] = self.profile[key]
        self.params.update(doc.get("params", {}))
        self.sessions = doc.get("sessions", [])
        for s in self.sessions:
            if "id" not in s:
                raise ValidationError("every session needs an 'id'")
        self.out_dir = Path(out_dir) if out_dir else base_dir / doc.get("out_dir", "out")

    @classmethod
    def load(cls, path: str, out_dir: str | None = None) -> "Config":
        p = Path(path)
        if not p.exists():
            raise MissingUpstreamOutputError(f"config file not found: {p}")
        with open(p, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(doc, p.parent.resolve(), Path(out_dir) if out_dir else None)

    def path(self, session: dict, key: str) -> Path:
        if key not in session:
            raise MissingUpstreamOutputError(
                f"session {session['id']!r} has no {key!r} input"
            )
        p = self.base_dir / session[key]
        if not p.exists():
            raise MissingUpstreamOutputError(f"input file not found: {p}")
        return p

    def session_dir(self, session: dict) -> Path:
        d = self.out_dir / session["id"]
        d.mkdir(parents=True, exist_ok=True)
        return d

    def channel_for(self, session: dict) -> str:
        if "channel" in session:
            return session["channel"]
        by_session = self.profile.get("channel_by_session", {})
        return by_session.get(str(session.get("session_index", "")), "left")

    def region_map_for(self, session: dict):
        ref = session.get("region_map", self.profile.get("region_map", "default"))
        if ref == "default":
            return motion.default_region_map()
        path = self.base_dir / ref
        if not path.exists():
            raise MissingUpstreamOutputError(f"region map not found: {path}")
        try:
            return motion.RegionMap.from_json(path)
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}") from exc


def _spectral_track(clip):
    return speech_features.temporal_derivatives(speech_features.mfcc(clip))


def _load_clip(config: Config, session: dict):
    clip = ingest.load_wav(config.path(session, "audio"))
    clip = ingest.select_channel(clip, config.channel_for(session))
    trim = config.params["trim_head_s"]
    if trim > 0:
        clip = ingest.trim_head(clip, trim)
    return clip


def _features_one(config: Config, session: dict, pca_model=None) -> Path:
    clip = _load_clip(config, session)
    grid = speech_features.feature_grid(clip)
    prosody = speech_features.prosody_features(
        clip, grid, fmin=config.params["f0_min_hz"], fmax=config.params["f0_max_hz"]
    )
    spectral = speech_features.temporal_derivatives(speech_features.mfcc(clip, grid))
    if pca_model is None:
        pca_model = speech_features.fit_pca(spectral, k=config.params["pca_components"])
    reduced = speech_features.apply_pca(pca_model, spectral)
    track = speech_features.assemble_speech_features(reduced, prosody)
    out = config.session_dir(session)
    write_feature_csv(track, out / "features.csv")
    pca_model.to_json(out / "pca_model.json")
    return out / "features.csv"


def cmd_features(config: Config, jobs: int = 1) -> None:
    sessions = [s for s in config.sessions if "audio" in s]
    if config.params["pca_scope"] == "corpus":
        spectral_tracks = [_spectral_track(_load_clip(config, s)) for s in sessions]
        model = speech_features.fit_pca_pooled(
            spectral_tracks, k=config.params["pca_components"]
        )
        for s in sessions:
            _features_one(config, s, pca_model=model)
    elif jobs > 1 and len(sessions) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda s: _features_one(config, s), sessions))
    else:
        for s in sessions:
            _features_one(config, s)
    for s in sessions:
        print(f"features: wrote {config.session_dir(s) / 'features.csv'}")


def _speech_track_for(config: Config, session: dict):
    if "speech_features" in session:
        return read_feature_csv(config.path(session, "speech_features"))
    candidate = config.out_dir / session["id"] / "features.csv"
    if not candidate.exists():
        raise MissingUpstreamOutputError(
            f"no speech features for session {session['id']!r}: run `features` "
            f"first or set 'speech_features' (looked at {candidate})"
        )
    return read_feature_csv(candidate)


def _native_activeness(config: Config, session: dict):
    markers = ingest.load_markers(config.path(session, "markers"))
    displacements = motion.displacement_magnitudes(markers)
    return motion.region_activeness(displacements, config.region_map_for(session))


def _align_one(config: Config, session: dict) -> Path:
    speech = _speech_track_for(config, session)
    emotion = ingest.load_emotion_frames(config.path(session, "emotion"))
    activeness = _native_activeness(config, session)
    intervals = ingest.load_transcript_intervals(config.path(session, "transcript"))
    table = timeline.align_session(
        speech,
        emotion,
        activeness,
        intervals,
        target_speaker=session.get("speaker", "F"),
        target_rate_hz=config.params["target_rate_hz"],
    )
    out = config.session_dir(session)
    provenance = {
        "speech_rate_hz": speech.grid.rate_hz,
        "emotion_rate_hz": emotion.grid.rate_hz,
        "activeness_rate_hz": activeness.grid.rate_hz,
        "speech_rule": "decimate_alternate+linear"
        if (
            abs(speech.grid.rate_hz - 120.0) <= 0.12
            and speech.grid.rate_hz / config.params["target_rate_hz"] >= 1.8
        )
        else "linear",
        "emotion_rule": "linear+nearest_category",
        "activeness_rule": "linear",
        "target_speaker": session.get("speaker", "F"),
    }
    timeline.write_session_csv(
        table, out / "aligned.csv", out / "aligned.meta.json", provenance
    )
    return out / "aligned.csv"


def cmd_align(config: Config, jobs: int = 1) -> None:
    if jobs > 1 and len(config.sessions) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda s: _align_one(config, s), config.sessions))
    else:
        for s in config.sessions:
            _align_one(config, s)
    for s in config.sessions:
        print(f"align: wrote {config.session_dir(s) / 'aligned.csv'}")


def _read_table(config: Config, session: dict) -> timeline.SessionTable:
    out = config.out_dir / session["id"]
    csv_path = out / "aligned.csv"
    meta_path = out / "aligned.meta.json"
    if not csv_path.exists() or not meta_path.exists():
        raise MissingUpstreamOutputError(
            f"aligned table missing for session {session['id']!r}; run `align` "
            f"first (looked at {csv_path})"
        )
    return timeline.read_session_csv(csv_path, meta_path)


def cmd_activeness(config: Config, jobs: int = 1) -> None:
    for session in config.sessions:
        activeness = _native_activeness(config, session)
        out = config.session_dir(session)
        write_feature_csv(activeness, out / "activeness.csv")
        table = _read_table(config, session)
        cells = motion.condition_summaries(
            table.block("activeness"), table, min_frames=config.params["min_cell_frames"]
        )
        motion.write_summary_csv(cells, out / "summaries.csv")
        print(f"activeness: wrote {out / 'activeness.csv'} and summaries.csv")


def cmd_map(config: Config, jobs: int = 1) -> None:
    tables = {s["id"]: _read_table(config, s) for s in config.sessions}
    params = config.params
    cells = coupling_mod.coupling_report(
        tables,
        feature_sets=tuple(params["feature_sets"]),
        protocol=params["protocol"],
        n_folds=params["n_folds"],
        ridge_eps=params["ridge_eps"],
        bin_policy=params["bin_policy"],
        affect_derivatives=params["affect_derivatives"],
    )
    coupling_mod.write_coupling_csv(cells, config.out_dir / "coupling_report.csv")
    meta = {
        "protocol": params["protocol"]
        if params["protocol"] == "in_sample"
        else f"k_fold({params['n_folds']})",
        "ridge_eps": params["ridge_eps"],
        "target": "region_mean_activeness",
        "pooled_dyads": False,
        "bin_policy": params["bin_policy"],
        "affect_derivatives": params["affect_derivatives"],
        "n_sessions": len(tables),
    }
    with open(config.out_dir / "coupling_report.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    for sid, table in tables.items():
        out = config.out_dir / sid
        idx = np.flatnonzero(table.column("labels", "speaking") == 1.0)
        y = table.block("activeness")
        for fs in params["feature_sets"]:
            x = coupling_mod.feature_set_track(table, fs, params["affect_derivatives"])
            fitted = coupling_mod.fit_ammse(
                _mask_track(x, idx), _mask_track(y, idx), ridge_eps=params["ridge_eps"]
            )
            fitted.to_json(out / f"affine_{fs}.json")
    print(f"map: wrote {config.out_dir / 'coupling_report.csv'}")


def _mask_track(track, idx):
    grid = FrameGrid(rate_hz=track.grid.rate_hz, start_s=0.0, n_frames=len(idx))
    return FeatureTrack(grid, track.columns, track.values[idx])


def cmd_stats(config: Config, jobs: int = 1) -> None:
    params = config.params
    results: dict[str, stats.AnovaResult] = {}
    if params["anova_unit"] == "segment":
        rows_by_region: dict[str, list] = {}
        for session in config.sessions:
            table = _read_table(config, session)
            for region in table.block("activeness").columns:
                rows_by_region.setdefault(region, []).extend(
                    stats.segment_design_rows(
                        table, region, session["id"], segment_s=params["segment_s"]
                    )
                )
        for region, rows in rows_by_region.items():
            try:
                design = stats.RmDesign.from_rows(
                    rows, drop_incomplete=params["drop_incomplete_subjects"]
                )
                results[region] = stats.rm_anova_two_way(
                    design, sphericity_correction=params["sphericity_correction"]
                )
            except PipelineError as exc:
                raise type(exc)(f"region {region!r}: {exc}") from exc
    else:
        session_cells = {}
        for session in config.sessions:
            path = config.out_dir / session["id"] / "summaries.csv"
            if not path.exists():
                raise MissingUpstreamOutputError(
                    f"summaries missing for session {session['id']!r}; run "
                    f"`activeness` first (looked at {path})"
                )
            session_cells[session["id"]] = motion.read_summary_csv(path)
        regions = [c.region for c in next(iter(session_cells.values()))]
        for region in dict.fromkeys(regions):
            try:
                design = stats.design_from_summaries(
                    session_cells, region, drop_incomplete=params["drop_incomplete_subjects"]
                )
                results[region] = stats.rm_anova_two_way(
                    design, sphericity_correction=params["sphericity_correction"]
                )
            except PipelineError as exc:
                raise type(exc)(f"region {region!r}: {exc}") from exc
    stats.write_anova_csv(results, config.out_dir / "anova.csv")
    print(f"stats: wrote {config.out_dir / 'anova.csv'}")


def cmd_synth(spec_path: str, out_dir: str, seed_override: int | None = None) -> None:
    p = Path(spec_path)
    if not p.exists():
        raise MissingUpstreamOutputError(f"spec file not found: {p}")
    with open(p, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if seed_override is not None:
        doc["seed"] = seed_override
    emit_tone = bool(doc.pop("emit_tone_wav", False))
    try:
        if "regions" in doc:
            regions = {
                name: synth.RegionCoupling(
                    weights=np.asarray(rc["weights"], dtype=float),
                    offset=rc["offset"],
                    noise_sigma=rc.get("noise_sigma", 0.0),
                )
                for name, rc in doc.pop("regions").items()
            }
            spec = synth.SynthSpec(regions=regions, **doc)
        else:
            spec = synth.default_spec(**doc)
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"{p}: bad synthesis spec: {exc}") from exc
    synth.write_session_dir(spec, out_dir, emit_tone_wav=emit_tone)
    print(f"synth: wrote session to {out_dir}")


def cmd_report(config: Config, jobs: int = 1) -> None:
    out = config.out_dir / "report"
    out.mkdir(parents=True, exist_ok=True)

    session_cells = {}
    for session in config.sessions:
        path = config.out_dir / session["id"] / "summaries.csv"
        if path.exists():
            session_cells[session["id"]] = motion.read_summary_csv(path)
    coupling_path = config.out_dir / "coupling_report.csv"
    coupling_cells = (
        coupling_mod.read_coupling_csv(coupling_path) if coupling_path.exists() else None
    )
    if not session_cells and coupling_cells is None:
        raise MissingUpstreamOutputError(
            f"nothing to report: no summaries under {config.out_dir} and no "
            f"{coupling_path}"
        )

    if session_cells:
        grid = report.activeness_grid(session_cells)
        report.write_grid_csv(grid, out / "activeness_grid.csv")
        report.render_svg(grid, out / "activeness_grid.svg")
    if coupling_cells:
        grid = report.coupling_grid(
            coupling_cells, feature_sets=tuple(config.params["feature_sets"])
        )
        report.write_grid_csv(grid, out / "coupling_grid.csv")
        report.render_svg(grid, out / "coupling_grid.svg")

    anova_path = config.out_dir / "anova.csv"
    anova_results = stats.read_anova_csv(anova_path) if anova_path.exists() else None
    protocol = (
        config.params["protocol"]
        if config.params["protocol"] == "in_sample"
        else f"k_fold({config.params['n_folds']})"
    )
    rows = report.reference_comparison_rows(coupling_cells, anova_results, protocol)
    report.write_comparison_csv(rows, out / "reference_comparison.csv")
    print(f"report: wrote grids and comparison tables to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechmotion",
        description="Speech-to-motion coupling analysis pipeline.",
    )
    parser.add_argument("--config", help="session config JSON")
    parser.add_argument("--out-dir", help="override the config's output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sessions")
    parser.add_argument("--seed", type=int, default=None, help="seed override (synth)")
    parser.add_argument(
        "--error-json",
        action="store_true",
        help="emit machine-readable error JSON on stderr",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("features", "align", "activeness", "map", "stats", "report"):
        sub.add_parser(name)
    synth_p = sub.add_parser("synth")
    synth_p.add_argument("spec", help="synthesis spec JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            out_dir = args.out_dir or "synth_session"
            cmd_synth(args.spec, out_dir, seed_override=args.seed)
            return 0
        if not args.config:
            raise ValidationError(f"`{args.command}` requires --config")
        config = Config.load(args.config, out_dir=args.out_dir)
        config.out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "features": cmd_features,
            "align": cmd_align,
            "activeness": cmd_activeness,
            "map": cmd_map,
            "stats": cmd_stats,
            "report": cmd_report,
        }[args.command]
        handler(config, jobs=args.jobs)
        return 0
    except PipelineError as exc:
        if args.error_json:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            print(json.dumps(payload), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
