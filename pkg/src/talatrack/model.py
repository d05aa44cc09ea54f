"""
Core value types shared by every module: the frame grid, tala presets,
annotation sequences and per-frame salience curves.

All times are in seconds and all frame indices refer to a :class:`FrameGrid`.
Instances are immutable; array fields are stored as read-only float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_FPS = 100.0


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameGrid:
    """Frame coordinate system: ``num_frames`` frames at ``frame_rate_hz``."""

    frame_rate_hz: float = DEFAULT_FPS
    num_frames: int = 0

    def __post_init__(self):
        if not self.frame_rate_hz > 0:
            raise ValueError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if int(self.num_frames) != self.num_frames or self.num_frames < 0:
            raise ValueError(f"num_frames must be a non-negative integer, got {self.num_frames}")
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))
        object.__setattr__(self, "num_frames", int(self.num_frames))

    @property
    def duration_sec(self) -> float:
        return self.num_frames / self.frame_rate_hz

    @classmethod
    def for_duration(cls, duration_sec: float, frame_rate_hz: float = DEFAULT_FPS) -> "FrameGrid":
        """Smallest grid whose last frame lies at or after ``duration_sec``."""
        return cls(frame_rate_hz, int(np.ceil(duration_sec * frame_rate_hz - 1e-9)) + 1)

    def times(self) -> np.ndarray:
        return np.arange(self.num_frames) / self.frame_rate_hz


@dataclass(frozen=True)
class TalaSpec:
    name: str
    beats_per_cycle: int

    def __post_init__(self):
        if int(self.beats_per_cycle) != self.beats_per_cycle or self.beats_per_cycle < 1:
            raise ValueError(f"beats_per_cycle must be a positive integer, got {self.beats_per_cycle}")
        object.__setattr__(self, "beats_per_cycle", int(self.beats_per_cycle))


ADI = TalaSpec("adi", 8)
RUPAKA = TalaSpec("rupaka", 3)
MISRA_CHAPU = TalaSpec("misra_chapu", 7)
KHANDA_CHAPU = TalaSpec("khanda_chapu", 5)

#: registered talas, keyed by name
TALAS = {t.name: t for t in (ADI, RUPAKA, MISRA_CHAPU, KHANDA_CHAPU)}


def get_tala(name: str) -> TalaSpec:
    try:
        return TALAS[name]
    except KeyError:
        raise KeyError(f"unknown tala {name!r}; registered: {', '.join(sorted(TALAS))}") from None


@dataclass(frozen=True)
class AnnotationSequence:
    """
    Time-stamped metrical markers.

    Each event is ``(time_sec, cycle_position)`` with ``cycle_position`` in
    ``1..B``; position 1 is the sama (downbeat). Consecutive events advance
    the position by one, wrapping from B back to 1.
    """

    times: np.ndarray
    positions: np.ndarray
    tala: TalaSpec

    def __init__(self, times: Iterable[float], positions: Iterable[int], tala: TalaSpec):
        t = _frozen(list(times))
        p = _frozen(list(positions), dtype=np.int64)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "tala", tala)
        self._validate()

    @classmethod
    def from_events(cls, events: Sequence[tuple[float, int]], tala: TalaSpec) -> "AnnotationSequence":
        return cls([e[0] for e in events], [e[1] for e in events], tala)

    def _validate(self):
        B = self.tala.beats_per_cycle
        if len(self.times) != len(self.positions):
            raise ValueError("times and positions differ in length")
        if len(self.times) == 0:
            return
        if np.any(self.times < 0) or not np.all(np.isfinite(self.times)):
            raise ValueError("annotation times must be finite and non-negative")
        if np.any((self.positions < 1) | (self.positions > B)):
            bad = int(np.flatnonzero((self.positions < 1) | (self.positions > B))[0])
            raise ValueError(f"event {bad}: cycle position {self.positions[bad]} outside 1..{B}")
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            bad = int(np.flatnonzero(dt <= 0)[0]) + 1
            raise ValueError(f"event {bad}: time {self.times[bad]} is not after {self.times[bad - 1]}")
        expected = self.positions[:-1] % B + 1
        if np.any(self.positions[1:] != expected):
            bad = int(np.flatnonzero(self.positions[1:] != expected)[0]) + 1
            raise ValueError(f"event {bad}: cycle position {self.positions[bad]} does not follow "
                             f"{self.positions[bad - 1]} (B={B})")

    def __len__(self):
        return len(self.times)

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(p)) for t, p in zip(self.times, self.positions)]

    @property
    def sama_times(self) -> np.ndarray:
        return self.times[self.positions == 1]

    def shifted(self, offset_sec: float) -> "AnnotationSequence":
        return AnnotationSequence(self.times + offset_sec, self.positions, self.tala)


@dataclass(frozen=True)
class BeatList:
    """Strictly increasing event times in seconds."""

    times: np.ndarray

    def __init__(self, times: Iterable[float] = ()):
        t = _frozen(list(times) if not isinstance(times, np.ndarray) else times)
        if np.any(np.diff(t) <= 0):
            raise ValueError("beat times must be strictly increasing")
        if np.any(t < 0):
            raise ValueError("beat times must be non-negative")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times.tolist())


@dataclass(frozen=True)
class NoveltySignal:
    """Non-negative per-frame salience curve on ``grid``."""

    grid: FrameGrid
    values: np.ndarray = field(repr=False)

    def __init__(self, grid: FrameGrid, values):
        v = _frozen(values)
        if len(v) != grid.num_frames:
            raise ValueError(f"expected {grid.num_frames} values, got {len(v)}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("novelty values must be finite and non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values, frame_rate_hz: float = DEFAULT_FPS) -> "NoveltySignal":
        values = np.asarray(values, dtype=float)
        return cls(FrameGrid(frame_rate_hz, len(values)), values)


@dataclass(frozen=True)
class ActivationPair:
    """Beat and downbeat probability curves on a shared grid."""

    grid: FrameGrid
    beat: np.ndarray = field(repr=False)
    downbeat: np.ndarray = field(repr=False)

    def __init__(self, grid: FrameGrid, beat, downbeat):
        b, d = _frozen(beat), _frozen(downbeat)
        if len(b) != grid.num_frames or len(d) != grid.num_frames:
            raise ValueError(f"expected {grid.num_frames} frames, got beat={len(b)} downbeat={len(d)}")
        for name, arr in (("beat", b), ("downbeat", d)):
            bad = np.flatnonzero(~((arr >= 0) & (arr <= 1)))
            if len(bad):
                raise ValueError(f"{name} activation {arr[bad[0]]} outside [0, 1] at frame {bad[0]}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "beat", b)
        object.__setattr__(self, "downbeat", d)


def time_to_frame(t: float, grid: FrameGrid) -> int:
    """Nearest frame index (halves round up), clamped to the grid."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    # the 1e-9 guards decimal inputs such as 0.505 whose product lands just below .5
    idx = int(np.floor(t * grid.frame_rate_hz + 0.5 + 1e-9))
    return min(max(idx, 0), max(grid.num_frames - 1, 0))


def times_to_frames(times, grid: FrameGrid) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    idx = np.floor(t * grid.frame_rate_hz + 0.5 + 1e-9).astype(np.int64)
    return np.clip(idx, 0, max(grid.num_frames - 1, 0))


def frame_to_time(i: int, grid: FrameGrid) -> float:
    return i / grid.frame_rate_hz


def annotations_to_beats_and_downbeats(ann: AnnotationSequence) -> tuple[BeatList, BeatList]:
    return BeatList(ann.times), BeatList(ann.sama_times)


def targets_from_beats(beats: BeatList | Sequence[float], grid: FrameGrid) -> np.ndarray:
    """Binary per-frame target vector with a 1 at the frame of every beat."""
    times = np.asarray(beats.times if isinstance(beats, BeatList) else beats, dtype=float)
    targets = np.zeros(grid.num_frames)
    if len(times) == 0:
        return targets
    late = times[times >= grid.duration_sec]
    if len(late):
        raise ValueError(f"beat at {late[0]} s lies beyond the grid duration {grid.duration_sec} s")
    targets[times_to_frames(times, grid)] = 1.0
    return targets
