"""
File formats, dataset manifests, stratified splits and interleaved ordering.

Formats
-------
annotations
    UTF-8 CSV without header, one ``time_sec,cycle_position`` row per event,
    times written with 6 decimals.
activations
    UTF-8 TSV. First line ``# frame_rate_hz: <float>``, then one
    ``beat<TAB>downbeat`` row per frame with 6 decimals. Commas are accepted
    as separators on read.
novelty
    Same header as activations, one value per row.
beats
    One time in seconds per line, 3 decimals.
manifest
    JSON object ``{"version": 1, "entries": [...]}``; each entry has
    ``track_id``, ``tala``, ``annotation_path`` and optionally
    ``audio_path`` and ``activation_path``. Relative paths are resolved
    against the manifest's directory.
split plan, report
    JSON with ``"version": 1``; reports also have a CSV table.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .evaluation import REPORT_KEYS, EvalConfig, EvalReport, TrackRecord
from .model import (TALAS, ActivationPair, AnnotationSequence, BeatList, FrameGrid, NoveltySignal,
                    TalaSpec, get_tala)
from .pulse import cycle_duration_stats, median_tempo_bpm

SCHEMA_VERSION = 1
_HEADER = "# frame_rate_hz:"


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _fmt_rate(fps: float) -> str:
    return f"{float(fps):.17g}"


# annotations ---------------------------------------------------------------

def read_annotations(path, tala: TalaSpec | str) -> AnnotationSequence:
    """
    Parse an annotation CSV.

    Blank lines are skipped. Raises :class:`FormatError` naming the line of
    the first malformed row, out-of-order time or broken cycle count.
    """
    tala = get_tala(tala) if isinstance(tala, str) else tala
    B = tala.beats_per_cycle
    times, positions = [], []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            t, p = float(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: expected 'time_sec,cycle_position', got {line!r}") from None
        if not math.isfinite(t) or t < 0:
            raise FormatError(f"{path}:{lineno}: time must be finite and non-negative")
        if not 1 <= p <= B:
            raise FormatError(f"{path}:{lineno}: cycle position {p} outside 1..{B}")
        if times and t <= times[-1]:
            raise FormatError(f"{path}:{lineno}: time {t} is not after {times[-1]} (non-monotonic)")
        if positions and p != positions[-1] % B + 1:
            raise FormatError(f"{path}:{lineno}: cycle position {p} does not follow {positions[-1]}")
        times.append(t)
        positions.append(p)
    return AnnotationSequence(times, positions, tala)


def write_annotations(ann: AnnotationSequence, path) -> None:
    _write_text(path, "".join(f"{t:.6f},{p}\n" for t, p in ann.events))


def convert_annotation_table(src, dst, tala: TalaSpec | str, time_column: int = 0, position_column: int = 1,
                             delimiter: str = ",", skip_rows: int = 0) -> AnnotationSequence:
    """
    Convert a foreign annotation table into the annotation CSV format.

    The caller names the columns holding the time and the cycle position;
    other columns are ignored.
    """
    tala = get_tala(tala) if isinstance(tala, str) else tala
    times, positions = [], []
    with open(src, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if lineno <= skip_rows or not any(c.strip() for c in row):
                continue
            try:
                times.append(float(row[time_column]))
                positions.append(int(float(row[position_column])))
            except (IndexError, ValueError):
                raise FormatError(f"{src}:{lineno}: cannot read columns {time_column},{position_column}") from None
    ann = AnnotationSequence(times, positions, tala)
    write_annotations(ann, dst)
    return ann


# per-frame curves ----------------------------------------------------------

def _read_frame_table(path, ncols: int) -> tuple[float, np.ndarray]:
    lines = _read_lines(path)
    if not lines or not lines[0].startswith(_HEADER):
        raise FormatError(f"{path}:1: missing '{_HEADER} <float>' header")
    try:
        fps = float(lines[0][len(_HEADER):])
    except ValueError:
        raise FormatError(f"{path}:1: cannot parse frame rate from {lines[0]!r}") from None
    if not fps > 0:
        raise FormatError(f"{path}:1: frame rate must be positive")
    rows = []
    for frame, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        parts = line.replace(",", "\t").split("\t")
        try:
            if len(parts) != ncols:
                raise ValueError
            rows.append([float(x) for x in parts])
        except ValueError:
            raise FormatError(f"{path}:{frame + 2}: frame {frame}: expected {ncols} numeric column(s)") from None
    return fps, np.array(rows, dtype=float).reshape(-1, ncols)


def read_activations(path) -> ActivationPair:
    fps, table = _read_frame_table(path, 2)
    for col, name in enumerate(("beat", "downbeat")):
        bad = np.flatnonzero(~((table[:, col] >= 0) & (table[:, col] <= 1)))
        if len(bad):
            raise FormatError(f"{path}: {name} activation {table[bad[0], col]} outside [0, 1] at frame {bad[0]}")
    return ActivationPair(FrameGrid(fps, len(table)), table[:, 0], table[:, 1])


def write_activations(act: ActivationPair, path) -> None:
    body = "".join(f"{b:.6f}\t{d:.6f}\n" for b, d in zip(act.beat, act.downbeat))
    _write_text(path, f"{_HEADER} {_fmt_rate(act.grid.frame_rate_hz)}\n{body}")


def read_novelty(path) -> NoveltySignal:
    fps, table = _read_frame_table(path, 1)
    bad = np.flatnonzero(~(table[:, 0] >= 0))
    if len(bad):
        raise FormatError(f"{path}: negative novelty {table[bad[0], 0]} at frame {bad[0]}")
    return NoveltySignal(FrameGrid(fps, len(table)), table[:, 0])


def write_novelty(nov: NoveltySignal, path) -> None:
    body = "".join(f"{v:.6f}\n" for v in nov.values)
    _write_text(path, f"{_HEADER} {_fmt_rate(nov.grid.frame_rate_hz)}\n{body}")


def read_beats(path) -> BeatList:
    times = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            times.append(float(line))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: expected a time in seconds, got {line!r}") from None
    try:
        return BeatList(times)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_beats(beats: BeatList, path) -> None:
    _write_text(path, "".join(f"{t:.3f}\n" for t in beats.times))


# manifest ------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    track_id: str
    tala: str
    annotation_path: str
    audio_path: str | None = None
    activation_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    root: str = field(default=".", compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        for e in entries:
            if e.track_id in seen:
                raise ValueError(f"duplicate track_id {e.track_id!r}")
            seen.add(e.track_id)
            if e.tala not in TALAS:
                raise ValueError(f"track {e.track_id!r}: unknown tala {e.tala!r}; "
                                 f"registered: {', '.join(sorted(TALAS))}")

    def __len__(self):
        return len(self.entries)

    def resolve(self, relpath: str | None) -> Path | None:
        if relpath is None:
            return None
        p = Path(relpath)
        return p if p.is_absolute() else Path(self.root) / p

    def by_tala(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for e in self.entries:
            groups.setdefault(e.tala, []).append(e.track_id)
        return {k: groups[k] for k in sorted(groups)}

    def get(self, track_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.track_id == track_id:
                return e
        raise KeyError(track_id)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {"version": SCHEMA_VERSION,
            "entries": [{k: v for k, v in asdict(e).items() if v is not None} for e in manifest.entries]}


def write_manifest(manifest: DatasetManifest, path) -> None:
    _write_text(path, json.dumps(manifest_to_dict(manifest), indent=2) + "\n")


def read_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("version") != SCHEMA_VERSION:
        raise FormatError(f"{path}: expected a manifest object with \"version\": {SCHEMA_VERSION}")
    entries = []
    for i, raw in enumerate(doc.get("entries", [])):
        try:
            entries.append(ManifestEntry(**raw))
        except TypeError as exc:
            raise FormatError(f"{path}: entry {i}: {exc}") from None
    return DatasetManifest(entries, root=str(Path(path).parent))


# splits --------------------------------------------------------------------

def _largest_remainder(quotas: Mapping[str, float], total: int) -> dict[str, int]:
    """Integer allocation summing to ``total``; remainder ties go by key order."""
    base = {k: int(math.floor(q)) for k, q in quotas.items()}
    left = total - sum(base.values())
    order = sorted(quotas, key=lambda k: (-(quotas[k] - base[k]), k))
    for k in order[:left]:
        base[k] += 1
    return base


@dataclass(frozen=True)
class SplitPlan:
    """
    Two folds plus, for each fold, a train/validation split of its tracks.

    ``folds`` maps ``"fold1"``/``"fold2"`` to sorted track ids;
    ``train``/``validation`` map the same keys to the split of that fold.
    """

    seed: int
    fold_seed: int
    val_fraction: float
    folds: dict
    train: dict
    validation: dict

    def fold_of(self, track_id: str) -> str:
        for name, ids in self.folds.items():
            if track_id in ids:
                return name
        raise KeyError(track_id)

    def to_dict(self) -> dict:
        return {"version": SCHEMA_VERSION, "seed": self.seed, "fold_seed": self.fold_seed,
                "val_fraction": self.val_fraction, "folds": self.folds,
                "train": self.train, "validation": self.validation}

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitPlan":
        if doc.get("version") != SCHEMA_VERSION:
            raise FormatError("unsupported split plan version")
        return cls(int(doc["seed"]), int(doc["fold_seed"]), float(doc["val_fraction"]),
                   doc["folds"], doc["train"], doc["validation"])


def _stratified_pick(groups: Mapping[str, list[str]], fraction: float, rng: np.random.Generator
                     ) -> tuple[list[str], list[str]]:
    total = sum(len(v) for v in groups.values())
    counts = _largest_remainder({k: len(v) * fraction for k, v in groups.items()},
                                int(math.floor(total * fraction + 0.5)))
    picked, rest = [], []
    for name in sorted(groups):
        ids = sorted(groups[name])
        perm = rng.permutation(len(ids))
        chosen = {ids[i] for i in perm[:counts[name]]}
        picked += [t for t in ids if t in chosen]
        rest += [t for t in ids if t not in chosen]
    return sorted(picked), sorted(rest)


def stratified_split(manifest: DatasetManifest, seed: int = 42, val_fraction: float = 0.2,
                     fold_seed: int = 0) -> SplitPlan:
    """
    Two-fold split preserving the tala distribution, then a stratified
    train/validation split inside each fold.

    The folds depend only on ``fold_seed`` so that runs with different
    ``seed`` values share the same predetermined folds; ``seed`` drives the
    train/validation draw. Per-tala counts use the largest-remainder method.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    groups = manifest.by_tala()
    for name, ids in groups.items():
        if len(ids) < 2:
            raise ValueError(f"tala {name!r} has {len(ids)} track; at least 2 are needed to split")
    fold1, fold2 = _stratified_pick(groups, 0.5, np.random.Generator(np.random.PCG64(fold_seed)))
    folds = {"fold1": fold1, "fold2": fold2}
    tala_of = {e.track_id: e.tala for e in manifest.entries}
    rng = np.random.Generator(np.random.PCG64(seed))
    train, validation = {}, {}
    for name, ids in folds.items():
        sub: dict[str, list[str]] = {}
        for t in ids:
            sub.setdefault(tala_of[t], []).append(t)
        validation[name], train[name] = _stratified_pick(sub, val_fraction, rng)
    return SplitPlan(int(seed), int(fold_seed), float(val_fraction), folds, train, validation)


def write_split_plan(plan: SplitPlan, path) -> None:
    _write_text(path, json.dumps(plan.to_dict(), indent=2) + "\n")


def read_split_plan(path) -> SplitPlan:
    with open(path, encoding="utf-8") as fh:
        return SplitPlan.from_dict(json.load(fh))


def interleave_order(groups: Mapping[str, Sequence[str]], seed: int | None = None) -> list[str]:
    """
    Spread every group evenly over one ordered list.

    Item ``i`` of a group of size ``n`` sits at position ``(i + 0.5) / n``;
    items are sorted by position, equal positions by group name. With a
    ``seed`` each group is shuffled first, otherwise its order is kept.

    In every prefix a group's count differs from its proportional share by
    at most ``1/2 + share * (groups - 2) / 2``: within one for up to three
    groups, and up to 1.5 with many small groups next to a large one.
    """
    rng = None if seed is None else np.random.Generator(np.random.PCG64(seed))
    keyed = []
    for name in sorted(groups):
        items = list(groups[name])
        if not items:
            raise ValueError(f"group {name!r} is empty")
        if rng is not None:
            items = [items[i] for i in rng.permutation(len(items))]
        n = len(items)
        keyed += [(Fraction(2 * i + 1, 2 * n), name, i, item) for i, item in enumerate(items)]
    return [k[3] for k in sorted(keyed, key=lambda k: k[:3])]


# statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class TrackStats:
    track_id: str
    tala: str
    duration_sec: float
    num_annotations: int
    num_samas: int
    median_bpm: float | None
    min_cycle: float | None
    max_cycle: float | None
    median_cycle: float | None


def _track_duration(manifest: DatasetManifest, entry: ManifestEntry, ann: AnnotationSequence) -> float:
    audio = manifest.resolve(entry.audio_path)
    if audio is not None and audio.exists():
        from scipy.io import wavfile
        sr, data = wavfile.read(audio, mmap=True)
        return len(data) / float(sr)
    return float(ann.times[-1]) if len(ann) else 0.0


def dataset_stats(manifest: DatasetManifest) -> dict:
    """
    Per-tala and per-track summary of a manifest.

    Track duration is the audio length when the audio file exists, else the
    last annotation time. Unreadable tracks are listed under ``errors``.
    """
    tracks, errors = [], []
    for e in manifest.entries:
        try:
            ann = read_annotations(manifest.resolve(e.annotation_path), e.tala)
            duration = _track_duration(manifest, e, ann)
        except (OSError, ValueError) as exc:
            errors.append({"track_id": e.track_id, "error": str(exc)})
            continue
        bpm = median_tempo_bpm(ann.times) if len(ann) >= 2 else None
        cyc = cycle_duration_stats(ann) if len(ann.sama_times) >= 2 else (None, None, None)
        tracks.append(TrackStats(e.track_id, e.tala, duration, len(ann), len(ann.sama_times), bpm, *cyc))
    per_tala = {}
    for name in sorted({e.tala for e in manifest.entries}):
        rows = [t for t in tracks if t.tala == name]
        per_tala[name] = {
            "pieces": sum(1 for e in manifest.entries if e.tala == name),
            "total_duration_sec": math.fsum(t.duration_sec for t in rows),
            "annotations": sum(t.num_annotations for t in rows),
            "samas": sum(t.num_samas for t in rows),
        }
    durations = [t.duration_sec for t in tracks]
    return {
        "pieces": len(manifest),
        "per_tala": per_tala,
        "total_duration_sec": math.fsum(durations),
        "median_duration_sec": float(np.median(durations)) if durations else None,
        "annotations": sum(t.num_annotations for t in tracks),
        "samas": sum(t.num_samas for t in tracks),
        "tracks": [asdict(t) for t in tracks],
        "errors": errors,
    }


TEMPO_TABLE_COLUMNS = ("track_id", "tala", "median_bpm", "min_cycle", "max_cycle", "median_cycle")


def write_tempo_table(stats: dict, path) -> None:
    """Per-track tempo and cycle-duration table for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TEMPO_TABLE_COLUMNS)
    for t in stats["tracks"]:
        w.writerow(["" if t[c] is None else (repr(float(t[c])) if isinstance(t[c], float) else t[c])
                    for c in TEMPO_TABLE_COLUMNS])
    _write_text(path, buf.getvalue())


# reports -------------------------------------------------------------------

def report_to_dict(report: EvalReport) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "config": asdict(report.config),
        "overall": {k: report.overall[k] for k in REPORT_KEYS},
        "by_tala": {name: {k: m[k] for k in REPORT_KEYS} for name, m in sorted(report.by_tala.items())},
        "tracks": [r.row() for r in report.tracks],
        "missing": list(report.missing),
    }


def report_from_dict(doc: dict) -> EvalReport:
    if doc.get("version") != SCHEMA_VERSION:
        raise FormatError("unsupported report version")
    rows = tuple(TrackRecord(r["track_id"], r["tala"], {k: float(r[k]) for k in REPORT_KEYS})
                 for r in doc["tracks"])
    return EvalReport(rows, {k: float(doc["overall"][k]) for k in REPORT_KEYS},
                      {n: {k: float(m[k]) for k in REPORT_KEYS} for n, m in doc["by_tala"].items()},
                      tuple(doc.get("missing", ())), EvalConfig(**doc["config"]))


def write_report(report: EvalReport, json_path, csv_path=None) -> None:
    """Write the report as JSON and, optionally, a per-track CSV table."""
    _write_text(json_path, json.dumps(report_to_dict(report), indent=2) + "\n")
    if csv_path is not None:
        _write_text(csv_path, report_csv(report))


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("track_id", "tala") + REPORT_KEYS)
    for r in report.tracks:
        row = r.row()
        w.writerow([row["track_id"], row["tala"]] + [repr(row[k]) for k in REPORT_KEYS])
    return buf.getvalue()


def read_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


def read_report_csv(path) -> list[TrackRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [TrackRecord(r["track_id"], r["tala"], {k: float(r[k]) for k in REPORT_KEYS})
                for r in csv.DictReader(fh)]


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
