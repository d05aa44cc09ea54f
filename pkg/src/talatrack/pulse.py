"""
Periodicity analysis of novelty curves: Fourier tempogram, predominant local
pulse (PLP) and dynamic-programming beat tracking, plus tempo and cycle
statistics from beat or sama times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .model import AnnotationSequence, BeatList, FrameGrid, NoveltySignal

DEFAULT_BPM_AXIS = np.arange(30.0, 301.0)


@dataclass(frozen=True, eq=False)
class Tempogram:
    """
    Complex tempogram split into magnitude and phase, ``[frame, tempo]``.

    ``window`` is the analysis window; its centre sits at the frame the
    column belongs to.
    """

    grid: FrameGrid
    bpm_axis: np.ndarray
    magnitudes: np.ndarray
    phases: np.ndarray
    window: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.bpm_axis, dtype=float)
        if len(axis) == 0 or np.any(np.diff(axis) <= 0) or np.any(axis <= 0):
            raise ValueError("bpm_axis must be non-empty, positive and strictly increasing")
        object.__setattr__(self, "bpm_axis", axis)


def _hann(n: int) -> np.ndarray:
    return np.hanning(n + 2)[1:-1] if n > 1 else np.ones(1)


def fourier_tempogram(nov: NoveltySignal, bpm_axis=DEFAULT_BPM_AXIS, window_sec: float = 4.0,
                      remove_mean: bool = True) -> Tempogram:
    """
    Short-time Fourier coefficients of a novelty curve at tempo frequencies.

    Entry ``(n, j)`` is ``sum_m x[m] w[m - n] exp(-2 pi i f_j m / fps)`` with
    ``f_j = bpm_axis[j] / 60`` Hz and ``w`` a Hann window of ``window_sec``
    centered on frame ``n`` (the signal is zero outside its frames). With
    ``remove_mean`` the global mean is subtracted first.
    """
    axis = np.asarray(bpm_axis, dtype=float)
    fps = nov.grid.frame_rate_hz
    if len(axis) == 0:
        raise ValueError("empty bpm axis")
    if window_sec * axis.min() / 60.0 < 2.0 - 1e-9:
        raise ValueError(f"window of {window_sec} s covers fewer than two periods at {axis.min()} BPM")
    half = int(round(window_sec * fps / 2))
    win = _hann(2 * half + 1)
    x = nov.values - nov.values.mean() if remove_mean and len(nov.values) else nov.values
    K = len(x)
    m = np.arange(K)
    omega = 2 * np.pi * axis / 60.0 / fps
    if K == 0:
        empty = np.zeros((0, len(axis)))
        return Tempogram(nov.grid, axis, empty, empty.copy(), win)
    mod = x[None, :] * np.exp(-1j * omega[:, None] * m[None, :])
    # symmetric window: correlation equals convolution
    coef = fftconvolve(mod, win[None, :], mode="same", axes=1).T
    mag = np.abs(coef)
    # FFT round-off on an all-zero input must not leave a phase behind
    mag[mag < 1e-12 * max(1.0, np.abs(x).sum())] = 0.0
    return Tempogram(nov.grid, axis, mag, np.where(mag > 0, np.angle(coef), 0.0), win)


def plp_curve(tg: Tempogram, nov_grid: FrameGrid | None = None) -> NoveltySignal:
    """
    Predominant local pulse curve.

    At every tempogram frame the strongest tempo defines a windowed unit
    cosine ``w[m - n] cos(omega m + phase)``, aligned with the novelty
    peaks; the cosines of all frames are summed and negative values are
    clipped. Frames without any periodic energy contribute nothing.
    """
    grid = tg.grid if nov_grid is None else nov_grid
    if nov_grid is not None and nov_grid.num_frames != tg.grid.num_frames:
        raise ValueError("tempogram and novelty grids differ in length")
    K = grid.num_frames
    out = np.zeros(K)
    if K == 0 or tg.magnitudes.size == 0:
        return NoveltySignal(grid, out)
    best = np.argmax(tg.magnitudes, axis=1)
    frames = np.arange(K)
    active = tg.magnitudes[frames, best] > 0
    omega = 2 * np.pi * tg.bpm_axis[best] / 60.0 / grid.frame_rate_hz
    phase = tg.phases[frames, best]
    half = len(tg.window) // 2
    src = frames[active]
    for d in range(-half, half + 1):
        m = src + d
        ok = (m >= 0) & (m < K)
        n = src[ok]
        np.add.at(out, m[ok], tg.window[d + half] * np.cos(omega[n] * m[ok] + phase[n]))
    return NoveltySignal(grid, np.maximum(out, 0.0))


def ellis_dp_beats(nov: NoveltySignal, target_bpm: float, lam: float = 100.0) -> BeatList:
    """
    Globally optimal beat sequence under a target tempo.

    Maximizes ``sum nov[b_i] - lam * sum log(d_i / period) ** 2`` over beat
    frames whose spacings ``d_i`` lie in ``[period / 2, 2 * period]``. A
    sequence must start before ``period / 2`` (the first frame whose search
    window is empty) and ends at the best-scoring frame among the last
    ``period`` frames. Equal scores resolve to the earlier frame.
    """
    if not 10 < target_bpm < 600:
        raise ValueError(f"target tempo {target_bpm} outside (10, 600) BPM")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    fps = nov.grid.frame_rate_hz
    period = 60.0 * fps / target_bpm
    x = nov.values
    K = len(x)
    lo, hi = int(np.ceil(period / 2)), int(np.floor(2 * period))
    if K < period or K <= lo:
        return BeatList()
    gaps = np.arange(lo, hi + 1)
    penalty = -lam * np.log(gaps / period) ** 2
    score = np.array(x, dtype=float)
    back = np.full(K, -1, dtype=np.int64)
    for t in range(lo, K):
        first = max(0, t - hi)
        cand = score[first:t - lo + 1] + penalty[::-1][hi - (t - first):]
        j = int(np.argmax(cand))
        score[t] = x[t] + cand[j]
        back[t] = first + j
    tail = max(0, K - int(round(period)))
    t = tail + int(np.argmax(score[tail:]))
    beats = []
    while t >= 0:
        beats.append(t)
        t = back[t]
    return BeatList(np.array(beats[::-1]) / fps)


def median_tempo_bpm(beats: BeatList | np.ndarray) -> float:
    """Median of ``60 / IBI`` over consecutive beats."""
    t = beats.times if isinstance(beats, BeatList) else np.asarray(beats, dtype=float)
    if len(t) < 2:
        raise ValueError(f"need at least 2 beats, got {len(t)}")
    return float(np.median(60.0 / np.diff(t)))


def cycle_duration_stats(ann: AnnotationSequence) -> tuple[float, float, float]:
    """``(min, max, median)`` of the intervals between consecutive samas, in seconds."""
    samas = ann.sama_times
    if len(samas) < 2:
        raise ValueError(f"need at least 2 sama events, got {len(samas)}")
    d = np.diff(samas)
    return float(d.min()), float(d.max()), float(np.median(d))
