"""
Short-time spectra and spectral-flux novelty curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.ndimage import uniform_filter1d
from scipy.signal import get_window

from .model import AnnotationSequence, FrameGrid, NoveltySignal


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Magnitude spectrogram, ``magnitudes[frame, bin]``."""

    grid: FrameGrid
    magnitudes: np.ndarray

    def __post_init__(self):
        m = np.array(self.magnitudes, dtype=float)
        if m.ndim != 2 or m.shape[0] != self.grid.num_frames:
            raise ValueError(f"magnitudes must have {self.grid.num_frames} rows, got shape {m.shape}")
        if np.any(m < 0):
            raise ValueError("magnitudes must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "magnitudes", m)

    @property
    def num_bins(self) -> int:
        return self.magnitudes.shape[1]


def read_wav(path) -> tuple[np.ndarray, int]:
    """
    Read a PCM WAV file as mono floats in [-1, 1].

    Integer formats are scaled by their full-scale value; channels are
    averaged.
    """
    sr, data = wavfile.read(path)
    if data.dtype.kind == "i":
        x = data.astype(float) / float(-np.iinfo(data.dtype).min)
    elif data.dtype.kind == "u":
        info = np.iinfo(data.dtype)
        x = (data.astype(float) - (info.max + 1) / 2) / ((info.max + 1) / 2)
    else:
        x = data.astype(float)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return x, int(sr)


def stft_magnitude(samples, sample_rate: float, window_size: int = 2048, hop: int | None = None) -> Spectrogram:
    """
    Magnitude STFT with a periodic Hann window.

    Frame ``t`` covers samples ``[t * hop, t * hop + window_size)``; samples
    past the end are zero. There are ``ceil(len(samples) / hop)`` frames and
    ``window_size // 2 + 1`` bins.

    Parameters
    ----------
    hop : int, optional
        Defaults to ``round(sample_rate / 100)``, i.e. a 100 Hz frame rate.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) == 0:
        raise ValueError("no samples")
    if hop is None:
        hop = int(round(sample_rate / 100.0))
    if hop < 1:
        raise ValueError(f"hop must be at least 1, got {hop}")
    if window_size < hop:
        raise ValueError(f"window_size {window_size} is shorter than hop {hop}")
    n_frames = -(-len(x) // hop)
    padded = np.zeros((n_frames - 1) * hop + window_size)
    padded[:len(x)] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_size)[::hop]
    win = get_window("hann", window_size, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * win, axis=1))
    return Spectrogram(FrameGrid(sample_rate / hop, n_frames), mags)


def log_compress(spec: Spectrogram, gamma: float = 1.0) -> Spectrogram:
    """``log(1 + gamma * |X|)``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return Spectrogram(spec.grid, np.log1p(gamma * spec.magnitudes))


def spectral_flux(spec: Spectrogram) -> NoveltySignal:
    """
    Half-wave rectified frame-to-frame magnitude increase, summed over bins.

    Frame 0 is compared against silence.
    """
    m = spec.magnitudes
    if m.shape[0] == 0:
        raise ValueError("spectrogram has no frames")
    diff = np.diff(m, axis=0, prepend=np.zeros((1, m.shape[1])))
    return NoveltySignal(spec.grid, np.maximum(diff, 0.0).sum(axis=1))


def normalize_novelty(nov: NoveltySignal, mode: str = "max", window_sec: float = 1.0) -> NoveltySignal:
    """
    Normalize a novelty curve.

    ``"max"`` divides by the maximum (an all-zero curve is returned as is).
    ``"mean-subtract-clip"`` subtracts a centered moving average of
    ``window_sec`` and clips negative values to zero.
    """
    v = nov.values
    if len(v) == 0:
        raise ValueError("empty novelty signal")
    if mode == "max":
        peak = v.max()
        out = v / peak if peak > 0 else v.copy()
    elif mode == "mean-subtract-clip":
        size = max(1, int(round(window_sec * nov.grid.frame_rate_hz)))
        out = np.maximum(v - uniform_filter1d(v, size, mode="nearest"), 0.0)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return NoveltySignal(nov.grid, out)


def novelty_from_samples(samples, sample_rate: float, frame_rate: float = 100.0, window_size: int = 2048,
                         gamma: float = 100.0, normalize: str = "max") -> NoveltySignal:
    """Log-compressed spectral flux at ``frame_rate``, normalized with ``normalize``."""
    hop = int(round(sample_rate / frame_rate))
    window_size = max(window_size, hop)
    nov = spectral_flux(log_compress(stft_magnitude(samples, sample_rate, window_size, hop), gamma))
    return normalize_novelty(nov, normalize)


def average_cycle_pattern(nov: NoveltySignal, ann: AnnotationSequence, bins_per_cycle: int) -> np.ndarray:
    """
    Mean novelty over all complete sama-to-sama cycles.

    Each cycle is sampled by linear interpolation at ``bins_per_cycle``
    equally spaced phases ``0, 1/bins, ...`` before averaging, so cycles of
    different length contribute equally.
    """
    if bins_per_cycle < 1:
        raise ValueError("bins_per_cycle must be positive")
    samas = ann.sama_times
    if len(samas) < 2:
        raise ValueError(f"need at least 2 sama events, got {len(samas)}")
    t = nov.grid.times()
    phase = np.arange(bins_per_cycle) / bins_per_cycle
    rows = [np.interp(a + phase * (b - a), t, nov.values) for a, b in zip(samas[:-1], samas[1:])]
    return np.mean(rows, axis=0)
