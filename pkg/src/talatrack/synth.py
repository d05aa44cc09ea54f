"""
Synthetic tala ground truth.

Generates seeded annotation sequences together with matching novelty
curves and beat/downbeat activation curves. Randomness comes from
``numpy.random.Generator(PCG64(seed))`` so outputs are bit-reproducible
across platforms for a given numpy major version.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import (ActivationPair, AnnotationSequence, FrameGrid, NoveltySignal,
                    TalaSpec, times_to_frames)


@dataclass(frozen=True)
class SynthSpec:
    """
    Parameters for one synthetic track.

    ``accent_profile`` holds one amplitude per beat position (index 0 is the
    sama). When omitted, the sama gets 1.0 and every other beat 0.6.
    """

    tala: TalaSpec
    tempo_bpm: float = 120.0
    duration_sec: float = 30.0
    accent_profile: Sequence[float] | None = None
    timing_jitter_std_sec: float = 0.0
    spike_width_frames: int = 1
    noise_floor: float = 0.0
    seed: int = 0
    start_sec: float = 0.0

    def __post_init__(self):
        B = self.tala.beats_per_cycle
        if self.accent_profile is None:
            object.__setattr__(self, "accent_profile", (1.0,) + (0.6,) * (B - 1))
        acc = tuple(float(a) for a in self.accent_profile)
        if len(acc) != B:
            raise ValueError(f"accent_profile needs {B} entries, got {len(acc)}")
        if any(not 0 < a <= 1 for a in acc):
            raise ValueError("accent amplitudes must lie in (0, 1]")
        if acc[0] < max(acc):
            raise ValueError("the sama accent must be at least as strong as every other beat")
        object.__setattr__(self, "accent_profile", acc)
        if self.tempo_bpm <= 0:
            raise ValueError("tempo_bpm must be positive")
        if self.timing_jitter_std_sec < 0 or self.timing_jitter_std_sec >= 0.5 * self.ibi:
            raise ValueError("jitter std must be non-negative and below half the IBI")
        if self.spike_width_frames < 1:
            raise ValueError("spike_width_frames must be positive")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be non-negative")

    @property
    def ibi(self) -> float:
        return 60.0 / self.tempo_bpm

    @property
    def cycle_sec(self) -> float:
        return self.ibi * self.tala.beats_per_cycle


def _rng(spec: SynthSpec, stream: int) -> np.random.Generator:
    # independent streams per generator so novelty noise never perturbs jitter
    return np.random.Generator(np.random.PCG64([spec.seed, stream]))


def generate_annotations(spec: SynthSpec) -> AnnotationSequence:
    """Isochronous beats at the requested tempo with seeded Gaussian jitter."""
    if spec.duration_sec - spec.start_sec < spec.cycle_sec - 1e-9:
        raise ValueError("duration must cover at least one full cycle")
    n = int(np.ceil((spec.duration_sec - spec.start_sec) / spec.ibi - 1e-9))
    grid = spec.start_sec + np.arange(n) * spec.ibi
    rng = _rng(spec, 0)
    sigma = spec.timing_jitter_std_sec
    times = grid.copy()
    if sigma > 0:
        times = grid + rng.normal(0.0, sigma, size=len(grid))
        # redraw offending beats until order and non-negativity hold
        for _ in range(1000):
            bad = np.zeros(len(times), dtype=bool)
            bad[1:] |= np.diff(times) <= 0
            bad |= times < 0
            if not bad.any():
                break
            times[bad] = grid[bad] + rng.normal(0.0, sigma, size=int(bad.sum()))
        else:  # pragma: no cover - needs sigma near IBI/2
            raise RuntimeError("could not draw an ordered jittered beat sequence")
    positions = np.arange(len(times)) % spec.tala.beats_per_cycle + 1
    return AnnotationSequence(times, positions, spec.tala)


def _spike_train(frames, amplitudes, width: int, num_frames: int) -> np.ndarray:
    half = width // 2
    out = np.zeros(num_frames)
    for d in range(-half, half + 1):
        shape = 1.0 - abs(d) / (half + 1)
        idx = np.asarray(frames) + d
        ok = (idx >= 0) & (idx < num_frames)
        np.maximum.at(out, idx[ok], shape * np.asarray(amplitudes)[ok])
    return out


def generate_novelty(spec: SynthSpec, grid: FrameGrid,
                     annotations: AnnotationSequence | None = None) -> NoveltySignal:
    """Triangular spikes at beat frames scaled by the accent profile, plus uniform noise."""
    ann = generate_annotations(spec) if annotations is None else annotations
    frames = times_to_frames(ann.times, grid)
    amps = np.asarray(spec.accent_profile)[ann.positions - 1]
    values = _spike_train(frames, amps, spec.spike_width_frames, grid.num_frames)
    if spec.noise_floor > 0:
        values += _rng(spec, 1).uniform(0.0, spec.noise_floor, size=grid.num_frames)
    return NoveltySignal(grid, values)


def generate_activations(spec: SynthSpec, grid: FrameGrid, off_phase: bool = False,
                         annotations: AnnotationSequence | None = None,
                         peak: float = 1.0) -> ActivationPair:
    """
    Beat/downbeat probability curves derived from the annotations.

    With ``off_phase`` every spike (beat and sama alike) is displaced by half
    an IBI, modelling percussion played consistently on the off-beat.
    Values are clipped to [0, 1] after adding the noise floor.
    """
    ann = generate_annotations(spec) if annotations is None else annotations
    beat_t = ann.times
    sama_t = ann.sama_times
    if off_phase:
        beat_t = beat_t + spec.ibi / 2
        sama_t = sama_t + spec.ibi / 2
        beat_t = beat_t[beat_t < grid.duration_sec]
        sama_t = sama_t[sama_t < grid.duration_sec]
    width = spec.spike_width_frames
    beat = _spike_train(times_to_frames(beat_t, grid), np.full(len(beat_t), peak), width, grid.num_frames)
    down = _spike_train(times_to_frames(sama_t, grid), np.full(len(sama_t), peak), width, grid.num_frames)
    if spec.noise_floor > 0:
        rng = _rng(spec, 2)
        beat = beat + rng.uniform(0.0, spec.noise_floor, size=grid.num_frames)
        down = down + rng.uniform(0.0, spec.noise_floor, size=grid.num_frames)
    return ActivationPair(grid, np.clip(beat, 0.0, 1.0), np.clip(down, 0.0, 1.0))


def synth_track(spec: SynthSpec, frame_rate_hz: float = 100.0):
    """Annotations, novelty and activations for one spec on a covering grid."""
    grid = FrameGrid(frame_rate_hz, int(round(spec.duration_sec * frame_rate_hz)))
    ann = generate_annotations(spec)
    return ann, generate_novelty(spec, grid, ann), generate_activations(spec, grid, annotations=ann)


def synthetic_observation_model(tala: TalaSpec, frame_rate_hz: float = 100.0,
                                tempi: Sequence[float] = (60.0, 90.0, 120.0, 150.0, 180.0),
                                duration_sec: float = 60.0, seed: int = 1000):
    """
    Observation model fitted on synthetic novelty curves of ``tala``.

    One 60 s track per tempo with 5 ms timing jitter, a 0.05 noise floor and
    3-frame spikes; track ``i`` uses seed ``seed + i``. This is the fallback
    model when no trained model is available.
    """
    from .observation import fit_observation_model

    training = []
    for i, tempo in enumerate(tempi):
        spec = SynthSpec(tala, tempo, duration_sec, timing_jitter_std_sec=0.005, noise_floor=0.05,
                         spike_width_frames=3, seed=seed + i)
        ann, nov, _ = synth_track(spec, frame_rate_hz)
        training.append((nov, ann))
    return fit_observation_model(training, tala)
