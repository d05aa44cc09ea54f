"""
Command-line interface.

Machine-readable JSON goes to standard output, human-readable tables and
error messages to standard error. Exit codes: 0 success, 1 internal error,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import barpointer, dataio, evaluation, features, losses, postproc, pulse, synth
from .model import TALAS, BeatList, FrameGrid, get_tala, targets_from_beats
from .observation import ObservationModel

JOBS_ENV = "TALATRACK_JOBS"
DEFAULT_SEED = 42


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _jobs(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise InputError("--jobs must be at least 1")
        return value
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"{JOBS_ENV}={env!r} is not an integer") from None
        if n < 1:
            raise InputError(f"{JOBS_ENV} must be at least 1")
        return n
    return os.cpu_count() or 1


def _map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    return p


def _output(path) -> Path:
    p = Path(path)
    dataio.ensure_parent(p)
    return p


def _tala(name: str):
    try:
        return get_tala(name)
    except KeyError as exc:
        raise InputError(exc.args[0]) from None


# subcommands ---------------------------------------------------------------

def cmd_features(args) -> int:
    src = _require_file(args.audio)
    try:
        samples, sr = features.read_wav(src)
    except ValueError as exc:
        raise InputError(f"cannot read {src} as WAV: {exc}") from None
    nov = features.novelty_from_samples(samples, sr, frame_rate=args.fps, window_size=args.window,
                                        gamma=args.gamma, normalize=args.normalize)
    dataio.write_novelty(nov, _output(args.out))
    _emit({"num_frames": nov.grid.num_frames, "duration_sec": nov.grid.duration_sec,
           "frame_rate_hz": nov.grid.frame_rate_hz, "output": str(args.out)})
    return 0


def cmd_track(args) -> int:
    tala = _tala(args.tala)
    if not 0 < args.min_tempo <= args.max_tempo:
        raise InputError(f"invalid tempo range {args.min_tempo}-{args.max_tempo} BPM")
    nov = dataio.read_novelty(_require_file(args.novelty))
    info = {"decoder": args.decoder, "tala": tala.name, "tempo_range": [args.min_tempo, args.max_tempo]}
    if args.decoder == "ellis":
        tg = pulse.fourier_tempogram(nov, np.arange(args.min_tempo, args.max_tempo + 1.0))
        tempo = float(np.median(tg.bpm_axis[np.argmax(tg.magnitudes, axis=1)])) if len(nov.values) else 0.0
        beats = pulse.ellis_dp_beats(nov, tempo, args.ellis_lambda) if tempo else BeatList()
        downs = BeatList()
        info["target_bpm"] = tempo
    else:
        if args.model:
            model = ObservationModel.load(_require_file(args.model))
        else:
            model = synth.synthetic_observation_model(tala, nov.grid.frame_rate_hz)
        space = barpointer.build_state_space(tala, (args.min_tempo, args.max_tempo),
                                             nov.grid.frame_rate_hz, model.num_patterns)
        if args.decoder == "viterbi":
            path = barpointer.viterbi_decode(space, model, nov)
        else:
            path = barpointer.particle_filter_decode(space, model, nov, args.particles, args.seed)
            info.update(seed=args.seed, particles=args.particles)
        beats, downs = barpointer.states_to_meter(path, space, nov.grid)
    dataio.write_beats(beats, _output(args.beats))
    dataio.write_beats(downs, _output(args.downbeats))
    info.update(num_beats=len(beats), num_downbeats=len(downs))
    _emit(info)
    return 0


def _postproc_config(args) -> postproc.PostprocConfig:
    base = postproc.cmr_informed_config() if args.preset == "cmr" else postproc.default_config()
    return postproc.PostprocConfig(
        beats_per_bar=tuple(args.beats_per_bar) if args.beats_per_bar else base.beats_per_bar,
        min_tempo_bpm=base.min_tempo_bpm if args.min_tempo is None else args.min_tempo,
        max_tempo_bpm=base.max_tempo_bpm if args.max_tempo is None else args.max_tempo,
        frame_rate=base.frame_rate,
        transition_lambda=base.transition_lambda if args.transition_lambda is None else args.transition_lambda,
    )


def cmd_postprocess(args) -> int:
    act = dataio.read_activations(_require_file(args.activations))
    if act.grid.num_frames == 0:
        raise InputError(f"{args.activations}: no activation frames")
    cfg = _postproc_config(args)
    cfg = postproc.PostprocConfig(cfg.beats_per_bar, cfg.min_tempo_bpm, cfg.max_tempo_bpm,
                                  act.grid.frame_rate_hz, cfg.transition_lambda)
    beats, downs = postproc.postprocess_joint(act, cfg)
    dataio.write_beats(beats, _output(args.beats))
    dataio.write_beats(downs, _output(args.downbeats))
    _emit({"preset": args.preset, "beats_per_bar": list(cfg.beats_per_bar),
           "min_tempo_bpm": cfg.min_tempo_bpm, "max_tempo_bpm": cfg.max_tempo_bpm,
           "frame_rate": cfg.frame_rate, "transition_lambda": cfg.transition_lambda,
           "num_beats": len(beats), "num_downbeats": len(downs)})
    return 0


def _format_table(report: evaluation.EvalReport) -> str:
    cols = evaluation.REPORT_KEYS
    lines = ["group".ljust(14) + " ".join(c.rjust(12) for c in cols)]
    for name, m in report.by_tala.items():
        lines.append(name.ljust(14) + " ".join(f"{m[c]:12.4f}" for c in cols))
    lines.append("overall".ljust(14) + " ".join(f"{report.overall[c]:12.4f}" for c in cols))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    manifest = dataio.read_manifest(_require_file(args.manifest))
    pred_dir = Path(args.predictions)
    if not pred_dir.is_dir():
        raise InputError(f"no such directory: {pred_dir}")
    cfg = evaluation.EvalConfig(args.tolerance, args.phase_tolerance, args.min_segment)
    present, missing = [], []
    for e in manifest.entries:
        b, d = pred_dir / f"{e.track_id}.beats.txt", pred_dir / f"{e.track_id}.downbeats.txt"
        (present if b.is_file() and d.is_file() else missing).append((e, b, d))
    if not present:
        raise InputError("no manifest track has predictions in " + str(pred_dir))

    def score(item):
        e, b, d = item
        ann = dataio.read_annotations(manifest.resolve(e.annotation_path), e.tala)
        return evaluation.evaluate_track(ann, dataio.read_beats(b), dataio.read_beats(d), e.track_id, cfg)

    rows = _map(score, present, _jobs(args.jobs))
    report = evaluation.aggregate(rows, args.group_by, [e.track_id for e, _, _ in missing], cfg)
    dataio.write_report(report, _output(args.out), _output(args.csv) if args.csv else None)
    print(_format_table(report), file=sys.stderr)
    _emit({"tracks": len(rows), "missing": list(report.missing), "overall": report.overall,
           "by_tala": report.by_tala, "report": str(args.out)})
    return 0


def cmd_stats(args) -> int:
    manifest = dataio.read_manifest(_require_file(args.manifest))
    stats = dataio.dataset_stats(manifest)
    if args.out:
        with open(_output(args.out), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.tempo_csv:
        dataio.write_tempo_table(stats, _output(args.tempo_csv))
    for name, row in stats["per_tala"].items():
        print(f"{name:14s} pieces={row['pieces']:4d} duration={row['total_duration_sec'] / 3600:7.2f} h",
              file=sys.stderr)
    _emit({k: stats[k] for k in ("pieces", "per_tala", "total_duration_sec", "median_duration_sec",
                                 "annotations", "samas", "errors")})
    return 0


def cmd_split(args) -> int:
    manifest = dataio.read_manifest(_require_file(args.manifest))
    plan = dataio.stratified_split(manifest, args.seed, args.val_fraction, args.fold_seed)
    dataio.write_split_plan(plan, _output(args.out))
    _emit({"seed": plan.seed, "fold_seed": plan.fold_seed,
           "folds": {k: len(v) for k, v in plan.folds.items()},
           "train": {k: len(v) for k, v in plan.train.items()},
           "validation": {k: len(v) for k, v in plan.validation.items()}})
    return 0


def cmd_synth(args) -> int:
    tala = _tala(args.tala)
    spec = synth.SynthSpec(tala, args.tempo, args.duration, timing_jitter_std_sec=args.jitter,
                           spike_width_frames=args.spike_width, noise_floor=args.noise, seed=args.seed)
    grid = FrameGrid(args.fps, int(round(args.duration * args.fps)))
    ann = synth.generate_annotations(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"{tala.name}_{args.tempo:g}bpm_s{args.seed}"
    paths = {"annotations": out / f"{stem}.csv", "novelty": out / f"{stem}.novelty.tsv",
             "activations": out / f"{stem}.activations.tsv"}
    dataio.write_annotations(ann, paths["annotations"])
    dataio.write_novelty(synth.generate_novelty(spec, grid, ann), paths["novelty"])
    dataio.write_activations(synth.generate_activations(spec, grid, off_phase=args.off_phase, annotations=ann),
                             paths["activations"])
    _emit({"events": len(ann), "samas": len(ann.sama_times), "num_frames": grid.num_frames,
           **{k: str(v) for k, v in paths.items()}})
    return 0


def cmd_score_activations(args) -> int:
    tala = _tala(args.tala)
    ann = dataio.read_annotations(_require_file(args.annotations), tala)
    act = dataio.read_activations(_require_file(args.activations))
    keep = ann.times < act.grid.duration_sec
    beat_t = targets_from_beats(ann.times[keep], act.grid)
    down_t = targets_from_beats(ann.sama_times[ann.sama_times < act.grid.duration_sec], act.grid)
    cfg = losses.LossConfig(positive_weight=args.positive_weight)
    if args.loss == "bce":
        beat_loss = losses.bce_loss(beat_t, act.beat)[0]
        down_loss = losses.bce_loss(down_t, act.downbeat)[0]
    else:
        beat_loss = losses.shift_tolerant_bce(beat_t, act.beat, cfg)[0]
        down_loss = losses.shift_tolerant_bce(down_t, act.downbeat, cfg)[0]
    _emit({"loss": args.loss, "beat_loss": beat_loss, "downbeat_loss": down_loss,
           "combined_loss": beat_loss + down_loss, "num_frames": act.grid.num_frames,
           "dropped_events": int((~keep).sum())})
    return 0


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="talatrack", description="Beat and sama tracking for Carnatic talas.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("features", help="spectral-flux novelty from a WAV file")
    s.add_argument("audio")
    s.add_argument("out")
    s.add_argument("--fps", type=float, default=100.0)
    s.add_argument("--window", type=int, default=2048)
    s.add_argument("--gamma", type=float, default=100.0)
    s.add_argument("--normalize", choices=("max", "mean-subtract-clip"), default="max")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("track", help="beats and samas from a novelty curve")
    s.add_argument("novelty")
    s.add_argument("--tala", required=True, help=f"one of {', '.join(sorted(TALAS))}")
    s.add_argument("--min-tempo", type=float, default=55.0)
    s.add_argument("--max-tempo", type=float, default=230.0)
    s.add_argument("--decoder", choices=("viterbi", "pf", "ellis"), default="viterbi")
    s.add_argument("--model", help="observation model JSON (default: fitted on synthetic tracks)")
    s.add_argument("--particles", type=int, default=2000)
    s.add_argument("--ellis-lambda", type=float, default=100.0)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--beats", required=True)
    s.add_argument("--downbeats", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("postprocess", help="beats and downbeats from activation curves")
    s.add_argument("activations")
    s.add_argument("--preset", choices=("cmr", "default"), default="cmr")
    s.add_argument("--beats-per-bar", type=int, nargs="+")
    s.add_argument("--min-tempo", type=float)
    s.add_argument("--max-tempo", type=float)
    s.add_argument("--transition-lambda", type=float)
    s.add_argument("--beats", required=True)
    s.add_argument("--downbeats", required=True)
    s.set_defaults(func=cmd_postprocess)

    s = sub.add_parser("evaluate", help="score predictions against a manifest")
    s.add_argument("manifest")
    s.add_argument("predictions", help="directory with <track_id>.beats.txt and <track_id>.downbeats.txt")
    s.add_argument("--out", required=True, help="report JSON")
    s.add_argument("--csv", help="per-track CSV table")
    s.add_argument("--group-by", choices=("tala", "overall"), default="tala")
    s.add_argument("--tolerance", type=float, default=evaluation.F_TOLERANCE)
    s.add_argument("--phase-tolerance", type=float, default=evaluation.PHASE_TOLERANCE)
    s.add_argument("--min-segment", type=int, default=evaluation.MIN_SEGMENT)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", help="dataset summary")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.add_argument("--tempo-csv")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("split", help="stratified two-fold split")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--fold-seed", type=int, default=0)
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("synth", help="write a synthetic track")
    s.add_argument("--tala", required=True)
    s.add_argument("--tempo", type=float, default=120.0)
    s.add_argument("--duration", type=float, default=30.0)
    s.add_argument("--jitter", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--spike-width", type=int, default=1)
    s.add_argument("--fps", type=float, default=100.0)
    s.add_argument("--off-phase", action="store_true")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--name")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("score-activations", help="training losses of activation curves")
    s.add_argument("annotations")
    s.add_argument("activations")
    s.add_argument("--tala", required=True)
    s.add_argument("--loss", choices=("bce", "shift-tolerant"), default="bce")
    s.add_argument("--positive-weight", type=float, default=1.0)
    s.set_defaults(func=cmd_score_activations)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"talatrack {args.command}: error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort handler maps to exit code 1
        print(f"talatrack {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
