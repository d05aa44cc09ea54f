"""
Beat and downbeat evaluation: tolerance-window F-measure and the
continuity-based CML/AML family.

Conventions
-----------
- Tolerance windows are closed: an event exactly ``tolerance`` away matches.
- Continuity scores divide by the number of predictions.
- The first prediction, or one whose matching reference has no predecessor,
  has no preceding pair to check; its continuity condition is checked on the
  following pair instead. A lone prediction is judged on its window alone.
- Continuous segments shorter than ``min_segment`` beats do not count
  towards CML_c/AML_c (CML_t/AML_t count every correct beat).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import AnnotationSequence, BeatList, annotations_to_beats_and_downbeats

F_TOLERANCE = 0.07
PHASE_TOLERANCE = 0.175
MIN_SEGMENT = 3
METRIC_NAMES = ("f", "cml_c", "cml_t", "aml_c", "aml_t")
REPORT_KEYS = tuple(f"{level}_{m}" for level in ("beat", "downbeat") for m in METRIC_NAMES)

# absorbs decimal representation error at closed window edges
_EDGE = 1e-9


def _times(x) -> np.ndarray:
    if isinstance(x, BeatList):
        return x.times
    return np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=float)


@dataclass(frozen=True)
class MatchResult:
    n_tp: int
    n_fp: int
    n_fn: int
    pairs: tuple[tuple[int, int], ...] = field(default=(), repr=False)


def match_events(refs, preds, tolerance_sec: float = F_TOLERANCE) -> MatchResult:
    """
    Greedy chronological one-to-one matching.

    Predictions are visited in time order; each takes the nearest still
    unmatched reference within ``tolerance_sec`` (earlier reference on ties).
    ``pairs`` holds ``(ref_index, pred_index)``.
    """
    if tolerance_sec < 0:
        raise ValueError("tolerance must be non-negative")
    r, p = _times(refs), _times(preds)
    used = np.zeros(len(r), dtype=bool)
    pairs = []
    for j, t in enumerate(p):
        lo = np.searchsorted(r, t - tolerance_sec - _EDGE, side="left")
        hi = np.searchsorted(r, t + tolerance_sec + _EDGE, side="right")
        best, best_d = -1, np.inf
        for i in range(lo, hi):
            d = abs(r[i] - t)
            if not used[i] and d <= tolerance_sec + _EDGE and d < best_d:
                best, best_d = i, d
        if best >= 0:
            used[best] = True
            pairs.append((best, j))
    tp = len(pairs)
    return MatchResult(tp, len(p) - tp, len(r) - tp, tuple(pairs))


def f_measure(refs, preds, tolerance_sec: float = F_TOLERANCE) -> tuple[float, float, float]:
    """Precision, recall and F-measure at a fixed tolerance window."""
    r, p = _times(refs), _times(preds)
    if len(r) == 0 and len(p) == 0:
        return 1.0, 1.0, 1.0
    if len(r) == 0 or len(p) == 0:
        return 0.0, 0.0, 0.0
    m = match_events(r, p, tolerance_sec)
    precision = m.n_tp / len(p)
    recall = m.n_tp / len(r)
    if m.n_tp == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def metrical_variants(refs) -> list[tuple[str, np.ndarray]]:
    """
    Reference grids accepted at allowed metrical levels.

    Returns ``identity``, ``off_phase`` (midpoints), ``double`` (refs and
    midpoints interleaved), ``half_even`` (every other ref from the first)
    and ``half_odd`` (every other ref from the second).
    """
    r = _times(refs)
    if len(r) < 2:
        return [("identity", r.copy())]
    mid = (r[:-1] + r[1:]) / 2
    double = np.empty(2 * len(r) - 1)
    double[0::2] = r
    double[1::2] = mid
    return [
        ("identity", r.copy()),
        ("off_phase", mid),
        ("double", double),
        ("half_even", r[0::2].copy()),
        ("half_odd", r[1::2].copy()),
    ]


def _correct_predictions(r: np.ndarray, p: np.ndarray, tol: float) -> np.ndarray:
    """Boolean mask of predictions meeting both continuity conditions."""
    ibi = np.diff(r)
    local = np.concatenate(([ibi[0]], ibi))
    # nearest reference per prediction, earlier one on ties
    idx = np.clip(np.searchsorted(r, p), 1, len(r) - 1)
    left_closer = (p - r[idx - 1]) <= (r[idx] - p)
    j = np.where(left_closer, idx - 1, idx)

    def in_window(pi: int, rj: int) -> bool:
        return abs(p[pi] - r[rj]) <= tol * local[rj] + _EDGE

    def consistent(pa: int, pb: int, ra: int, rb: int) -> bool:
        ref_ibi = r[rb] - r[ra]
        return in_window(pa, ra) and abs((p[pb] - p[pa]) - ref_ibi) <= tol * ref_ibi + _EDGE

    n = len(p)
    ok = np.zeros(n, dtype=bool)
    for i in range(n):
        ji = j[i]
        if not in_window(i, ji):
            continue
        if i > 0 and ji > 0:
            ok[i] = consistent(i - 1, i, ji - 1, ji)
        elif i + 1 < n and ji + 1 < len(r):
            ok[i] = in_window(i + 1, ji + 1) and consistent(i, i + 1, ji, ji + 1)
        else:
            ok[i] = n == 1
    return ok


def _longest_run(mask: np.ndarray) -> int:
    best = cur = 0
    for v in mask:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return best


def _cml(r: np.ndarray, p: np.ndarray, tol: float, min_segment: int) -> tuple[float, float]:
    if len(r) < 2 or len(p) == 0:
        return 0.0, 0.0
    ok = _correct_predictions(r, p, tol)
    run = _longest_run(ok)
    if run < min_segment:
        run = 0
    return run / len(p), ok.sum() / len(p)


def continuity_metrics(refs, preds, phase_tolerance: float = PHASE_TOLERANCE,
                       min_segment: int = MIN_SEGMENT) -> tuple[float, float, float, float]:
    """
    Return ``(cml_c, cml_t, aml_c, aml_t)``.

    A prediction is correct when it lies within ``phase_tolerance`` times the
    local reference IBI of its nearest reference, and the neighbouring
    prediction also lies in the window of the neighbouring reference with a
    matching inter-beat interval. AML values take the best score over
    :func:`metrical_variants`.
    """
    if not 0 < phase_tolerance < 0.5:
        raise ValueError("phase_tolerance must lie in (0, 0.5)")
    r, p = _times(refs), _times(preds)
    if len(r) == 0 or len(p) == 0:
        return 0.0, 0.0, 0.0, 0.0
    cml_c, cml_t = _cml(r, p, phase_tolerance, min_segment)
    aml_c, aml_t = cml_c, cml_t
    for _, v in metrical_variants(r)[1:]:
        c, t = _cml(v, p, phase_tolerance, min_segment)
        aml_c, aml_t = max(aml_c, c), max(aml_t, t)
    return float(cml_c), float(cml_t), float(aml_c), float(aml_t)


@dataclass(frozen=True)
class EvalConfig:
    f_tolerance: float = F_TOLERANCE
    phase_tolerance: float = PHASE_TOLERANCE
    min_segment: int = MIN_SEGMENT
    downbeat_aml: bool = True


def _level_metrics(refs, preds, cfg: EvalConfig, variants: bool = True) -> dict[str, float]:
    _, _, f = f_measure(refs, preds, cfg.f_tolerance)
    cml_c, cml_t, aml_c, aml_t = continuity_metrics(refs, preds, cfg.phase_tolerance, cfg.min_segment)
    if not variants:
        aml_c, aml_t = cml_c, cml_t
    return {"f": f, "cml_c": cml_c, "cml_t": cml_t, "aml_c": aml_c, "aml_t": aml_t}


@dataclass(frozen=True)
class TrackRecord:
    track_id: str
    tala: str
    metrics: dict

    def row(self) -> dict:
        return {"track_id": self.track_id, "tala": self.tala,
                **{k: float(self.metrics[k]) for k in REPORT_KEYS}}


def evaluate_track(ref_ann: AnnotationSequence, pred_beats, pred_downbeats,
                   track_id: str = "", config: EvalConfig = EvalConfig()) -> TrackRecord:
    """Score beats and downbeats of one track independently."""
    ref_beats, ref_downs = annotations_to_beats_and_downbeats(ref_ann)
    beat = _level_metrics(ref_beats, pred_beats, config)
    down = _level_metrics(ref_downs, pred_downbeats, config, variants=config.downbeat_aml)
    metrics = {f"beat_{k}": v for k, v in beat.items()}
    metrics.update({f"downbeat_{k}": v for k, v in down.items()})
    return TrackRecord(track_id, ref_ann.tala.name, metrics)


@dataclass(frozen=True)
class EvalReport:
    """Per-track rows plus arithmetic-mean aggregates, overall and per tala."""

    tracks: tuple
    overall: dict
    by_tala: dict
    missing: tuple = ()
    config: EvalConfig = EvalConfig()


def _mean_rows(rows: Sequence[TrackRecord]) -> dict:
    # math.fsum keeps the reduction independent of row order
    return {k: math.fsum(r.metrics[k] for r in rows) / len(rows) for k in REPORT_KEYS}


def aggregate(rows: Iterable[TrackRecord], group_by: str = "tala", missing: Sequence[str] = (),
              config: EvalConfig = EvalConfig()) -> EvalReport:
    """
    Mean of every metric over all tracks and, with ``group_by="tala"``, per tala.

    Rows are ordered by tala and track id; ``missing`` lists tracks that had
    no predictions.
    """
    rows = sorted(rows, key=lambda r: (r.tala, r.track_id))
    if not rows:
        raise ValueError("cannot aggregate an empty set of track records")
    if group_by not in ("overall", "tala"):
        raise ValueError(f"group_by must be 'overall' or 'tala', got {group_by!r}")
    by_tala = {}
    if group_by == "tala":
        for name in sorted({r.tala for r in rows}):
            by_tala[name] = _mean_rows([r for r in rows if r.tala == name])
    return EvalReport(tuple(rows), _mean_rows(rows), by_tala, tuple(sorted(missing)), config)
