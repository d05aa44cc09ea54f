"""
Joint beat/downbeat post-processing of activation curves with a bar-aware
hidden Markov model.

For every candidate bar length ``B`` and every beat period ``I`` (in frames)
the model holds a ring of ``B * I`` states ``(beat, offset)``; the offset
advances one frame at a time and a new beat starts when it wraps. At each
beat start the period may move to ``I - 1`` or ``I + 1``. All bar lengths
are decoded jointly in one Viterbi pass, so the meter is chosen by the best
path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _hmm
from .model import ActivationPair, BeatList, FrameGrid

EMISSION_FLOOR = 1e-5


@dataclass(frozen=True)
class PostprocConfig:
    beats_per_bar: tuple = (3, 4)
    min_tempo_bpm: float = 55.0
    max_tempo_bpm: float = 205.0
    frame_rate: float = 100.0
    transition_lambda: float = 100.0

    def __post_init__(self):
        bpb = tuple(int(b) for b in self.beats_per_bar)
        if not bpb or any(b < 2 for b in bpb):
            raise ValueError("beats_per_bar must be non-empty with every entry >= 2")
        object.__setattr__(self, "beats_per_bar", bpb)
        if not 0 < self.min_tempo_bpm < self.max_tempo_bpm:
            raise ValueError(f"invalid tempo range {self.min_tempo_bpm}-{self.max_tempo_bpm} BPM")
        if not self.frame_rate > 0 or not self.transition_lambda > 0:
            raise ValueError("frame_rate and transition_lambda must be positive")

    @property
    def interval_range(self) -> tuple[int, int]:
        """Shortest and longest beat period in frames."""
        lo = int(np.floor(60.0 * self.frame_rate / self.max_tempo_bpm + 0.5))
        hi = int(np.floor(60.0 * self.frame_rate / self.min_tempo_bpm + 0.5))
        return max(lo, 1), hi


def default_config() -> PostprocConfig:
    """Bars of 3 or 4 beats at 55-205 BPM, the usual library defaults."""
    return PostprocConfig()


def cmr_informed_config() -> PostprocConfig:
    """Bars of 3, 5, 7 or 8 beats (the four common talas) at 55-230 BPM."""
    return PostprocConfig(beats_per_bar=(3, 5, 7, 8), min_tempo_bpm=55.0, max_tempo_bpm=230.0)


def sum_head_combine(beat_logits, downbeat_logits, frame_rate_hz: float = 100.0) -> ActivationPair:
    """
    Activations from separate beat and downbeat logits.

    The beat probability is ``sigmoid(beat + downbeat)``, so a confident
    downbeat always counts as a beat.
    """
    b = np.asarray(beat_logits, dtype=float)
    d = np.asarray(downbeat_logits, dtype=float)
    if b.shape != d.shape:
        raise ValueError(f"length mismatch: {b.shape} vs {d.shape}")
    return ActivationPair(FrameGrid(frame_rate_hz, len(b)), expit(b + d), expit(d))


@dataclass(frozen=True, eq=False)
class _JointSpace:
    meter: np.ndarray
    interval: np.ndarray
    beat: np.ndarray
    offset: np.ndarray
    trans: _hmm.RingTransitions = field(repr=False)
    emit_class: np.ndarray = field(repr=False)


_SPACES: dict = {}


def _joint_space(cfg: PostprocConfig) -> _JointSpace:
    key = (cfg.beats_per_bar, cfg.interval_range, cfg.transition_lambda)
    if key in _SPACES:
        return _SPACES[key]
    lo, hi = cfg.interval_range
    intervals = np.arange(lo, hi + 1)
    meters, ivs, beats, offs = [], [], [], []
    ring_start = {}
    base = 0
    # ascending bar length so that ties favour fewer beats per bar
    for B in sorted(set(cfg.beats_per_bar)):
        for I in intervals:
            ring_start[B, I] = base
            meters.append(np.full(B * I, B))
            ivs.append(np.full(B * I, I))
            beats.append(np.repeat(np.arange(B), I))
            offs.append(np.tile(np.arange(I), B))
            base += B * I
    meter, interval = np.concatenate(meters), np.concatenate(ivs)
    beat, offset = np.concatenate(beats), np.concatenate(offs)
    pred = np.arange(base) - 1
    pred[offset == 0] = -1

    # normalized weights over the reachable neighbouring periods
    moves = {}
    for I in intervals:
        nb = [J for J in (I - 1, I, I + 1) if lo <= J <= hi]
        w = np.exp(-cfg.transition_lambda * np.abs(np.log(np.array(nb) / I)))
        moves[I] = list(zip(nb, np.log(w / w.sum())))
    src, dst, logp = [], [], []
    for B in sorted(set(cfg.beats_per_bar)):
        for I in intervals:
            for b in range(B):
                last = ring_start[B, I] + b * I + I - 1
                for J, lp in moves[I]:
                    src.append(last)
                    dst.append(ring_start[B, J] + ((b + 1) % B) * J)
                    logp.append(lp)
    trans = _hmm.RingTransitions.build(pred, src, dst, logp)
    # columns: 0 bar start, 1 other beat start, 2 inside a beat
    emit_class = np.where(offset == 0, np.where(beat == 0, 0, 1), 2)
    space = _JointSpace(meter, interval, beat, offset, trans, emit_class)
    _SPACES.clear()
    _SPACES[key] = space
    return space


def _emissions(act: ActivationPair) -> np.ndarray:
    b = np.maximum(act.beat, EMISSION_FLOOR)
    d = np.maximum(act.downbeat, EMISSION_FLOOR)
    off = np.maximum(1.0 - act.beat, EMISSION_FLOOR)
    return np.log(np.column_stack((d, b, off)))


def decode_joint(act: ActivationPair, cfg: PostprocConfig) -> tuple[np.ndarray, dict]:
    """
    Viterbi path through the joint space and the per-state arrays.

    Returns ``(path, arrays)`` where ``arrays`` maps ``meter``, ``interval``,
    ``beat`` and ``offset`` to per-state values. The path is empty when the
    activations are shorter than the longest beat period.
    """
    space = _joint_space(cfg)
    arrays = {"meter": space.meter, "interval": space.interval, "beat": space.beat, "offset": space.offset}
    if act.grid.num_frames < cfg.interval_range[1]:
        return np.zeros(0, dtype=np.int64), arrays
    path, _ = _hmm.viterbi(space.trans, space.emit_class, _emissions(act))
    return path, arrays


def postprocess_joint(act: ActivationPair, cfg: PostprocConfig | None = None) -> tuple[BeatList, BeatList]:
    """
    Beat and downbeat times from activation curves.

    Beats are the frames where the decoded path starts a beat; downbeats
    are those that start a bar. Activations shorter than the slowest beat
    period yield empty lists.
    """
    cfg = cmr_informed_config() if cfg is None else cfg
    if abs(act.grid.frame_rate_hz - cfg.frame_rate) > 1e-9:
        raise ValueError(f"activations at {act.grid.frame_rate_hz} fps, config expects {cfg.frame_rate}")
    path, arr = decode_joint(act, cfg)
    if len(path) == 0:
        return BeatList(), BeatList()
    starts = arr["offset"][path] == 0
    frames = np.flatnonzero(starts)
    downs = frames[arr["beat"][path[frames]] == 0]
    fps = act.grid.frame_rate_hz
    return BeatList(frames / fps), BeatList(downs / fps)


def selected_meter(act: ActivationPair, cfg: PostprocConfig) -> int | None:
    """Bar length chosen by the decoder (``None`` for too-short input)."""
    path, arr = decode_joint(act, cfg)
    if len(path) == 0:
        return None
    return int(np.bincount(arr["meter"][path]).argmax())
