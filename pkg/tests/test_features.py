import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.io import wavfile

from talatrack.features import (Spectrogram, average_cycle_pattern, log_compress, normalize_novelty,
                                novelty_from_samples, read_wav, spectral_flux, stft_magnitude)
from talatrack.model import RUPAKA, AnnotationSequence, FrameGrid, NoveltySignal
from talatrack.synth import SynthSpec, generate_annotations, generate_novelty


def direct_dft(frame):
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    m = np.arange(n)[None, :]
    return np.abs((frame[None, :] * np.exp(-2j * np.pi * k * m / n)).sum(axis=1))


def hann(n):
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def spec_of(m, fps=100.0):
    m = np.asarray(m, dtype=float)
    return Spectrogram(FrameGrid(fps, m.shape[0]), m)


# --- stft ---------------------------------------------------------------

def test_silence_gives_zero_spectrum():
    spec = stft_magnitude(np.zeros(4096), 44100, 1024, 441)
    assert spec.num_bins == 513
    assert spec.grid.num_frames == 10
    assert np.all(spec.magnitudes == 0)


def test_impulse_spectrum_is_flat_at_first_window_value():
    x = np.zeros(64)
    x[0] = 1.0
    spec = stft_magnitude(x, 800, window_size=8, hop=8)
    np.testing.assert_allclose(spec.magnitudes[0], np.full(5, hann(8)[0]), atol=1e-12)
    np.testing.assert_allclose(spec.magnitudes[0], direct_dft(x[:8] * hann(8)), atol=1e-12)


def test_sinusoid_matches_direct_dft_and_peaks_at_its_bin():
    sr, n = 8000, 256
    t = np.arange(4000) / sr
    x = np.sin(2 * np.pi * (20 * sr / n) * t)
    spec = stft_magnitude(x, sr, window_size=n, hop=80)
    frame = 7
    seg = x[frame * 80:frame * 80 + n]
    np.testing.assert_allclose(spec.magnitudes[frame], direct_dft(seg * hann(n)), atol=1e-9)
    assert int(np.argmax(spec.magnitudes[frame])) == 20


def test_tail_frames_are_zero_padded():
    x = np.ones(100)
    spec = stft_magnitude(x, 1000, window_size=16, hop=10)
    assert spec.grid.num_frames == 10
    last = np.zeros(16)
    last[:10] = 1.0
    np.testing.assert_allclose(spec.magnitudes[-1], direct_dft(last * hann(16)), atol=1e-12)


def test_default_hop_gives_hundred_hz_grid():
    spec = stft_magnitude(np.zeros(44100), 44100)
    assert spec.grid.frame_rate_hz == pytest.approx(100.0, rel=1e-3)
    assert spec.grid.num_frames == 100


@pytest.mark.parametrize("args", [(np.zeros(0), 100, 8, 4), (np.zeros(10), 100, 8, 0), (np.zeros(10), 100, 4, 8)])
def test_stft_rejects_bad_input(args):
    with pytest.raises(ValueError):
        stft_magnitude(*args)


def test_spectrogram_rejects_negative_magnitudes():
    with pytest.raises(ValueError):
        spec_of([[1.0, -0.1]])


# --- log compression ----------------------------------------------------

def test_log_compress_examples():
    out = log_compress(spec_of([[0.0, np.e - 1]]), gamma=1.0)
    np.testing.assert_allclose(out.magnitudes, [[0.0, 1.0]])
    assert log_compress(spec_of([[0.0]]), gamma=50.0).magnitudes[0, 0] == 0.0
    with pytest.raises(ValueError):
        log_compress(spec_of([[1.0]]), gamma=0.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_log_compress_is_monotone(a, b, gamma):
    out = log_compress(spec_of([[a, b]]), gamma).magnitudes[0]
    if a < b:
        assert out[0] <= out[1]
    assert (out >= 0).all()


# --- spectral flux ------------------------------------------------------

def test_constant_spectrogram_has_flux_only_at_frame_zero():
    flux = spectral_flux(spec_of(np.full((6, 3), 2.0))).values
    np.testing.assert_allclose(flux, [6.0, 0, 0, 0, 0, 0])


def test_single_loud_frame_gives_single_spike():
    m = np.zeros((20, 4))
    m[10] = [1.0, 2.0, 0.5, 0.5]
    flux = spectral_flux(spec_of(m)).values
    assert flux[10] == pytest.approx(4.0)
    assert np.count_nonzero(flux) == 1


def test_flux_matches_brute_force(rng):
    m = rng.random((5, 4))
    expected = []
    for n in range(5):
        prev = m[n - 1] if n else np.zeros(4)
        expected.append(sum(max(0.0, m[n, k] - prev[k]) for k in range(4)))
    np.testing.assert_allclose(spectral_flux(spec_of(m)).values, expected)


@given(arrays(float, (6, 5), elements=st.floats(0, 10)), st.floats(0, 5))
def test_flux_ignores_constant_offset(m, c):
    a = spectral_flux(spec_of(m)).values
    b = spectral_flux(spec_of(m + c)).values
    assert len(a) == 6 and (a >= 0).all()
    np.testing.assert_allclose(a[1:], b[1:], atol=1e-9)


# --- normalization ------------------------------------------------------

def test_normalize_examples():
    nov = NoveltySignal.from_values([0.0, 2.0, 4.0])
    np.testing.assert_allclose(normalize_novelty(nov).values, [0, 0.5, 1.0])
    assert np.all(normalize_novelty(NoveltySignal.from_values(np.zeros(5))).values == 0)
    flat = normalize_novelty(NoveltySignal.from_values(np.full(300, 0.7)), "mean-subtract-clip")
    np.testing.assert_allclose(flat.values[50:-50], 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        normalize_novelty(nov, "zscore")


@given(arrays(float, st.integers(1, 400), elements=st.floats(0, 100)))
def test_normalized_novelty_stays_in_range(v):
    out = normalize_novelty(NoveltySignal.from_values(v)).values
    assert out.min() >= 0 and out.max() <= 1
    assert (normalize_novelty(NoveltySignal.from_values(v), "mean-subtract-clip").values >= 0).all()


# --- audio to novelty ---------------------------------------------------

def test_clicks_produce_novelty_peaks():
    sr = 16000
    x = np.zeros(sr * 3)
    clicks = [0.5, 1.0, 1.5, 2.0, 2.5]
    for c in clicks:
        i = int(c * sr)
        x[i:i + 200] = np.random.default_rng(0).standard_normal(200) * 0.5
    nov = novelty_from_samples(x, sr)
    assert nov.grid.frame_rate_hz == 100.0
    assert nov.values.max() == pytest.approx(1.0)
    top = np.sort(np.argsort(nov.values)[-5:])
    # frames start at t * hop, so a click is seen by windows that begin up to 2048 samples earlier
    click_frames = np.array(clicks) * 100
    assert np.all((top <= click_frames) & (top >= click_frames - 2048 / 160))


def test_read_wav_scales_and_downmixes(tmp_path):
    data = np.array([[16384, -16384], [32767, 32767]], dtype=np.int16)
    path = tmp_path / "a.wav"
    wavfile.write(path, 8000, data)
    x, sr = read_wav(path)
    assert sr == 8000
    np.testing.assert_allclose(x, [0.0, 32767 / 32768])
    buf = io.BytesIO()
    wavfile.write(buf, 8000, np.array([0.25, -0.5], dtype=np.float32))
    buf.seek(0)
    np.testing.assert_allclose(read_wav(buf)[0], [0.25, -0.5])


# --- cycle pattern ------------------------------------------------------

def test_cycle_pattern_of_constant_novelty():
    ann = AnnotationSequence([0, 1, 2, 3, 4, 5, 6], [1, 2, 3, 1, 2, 3, 1], RUPAKA)
    nov = NoveltySignal.from_values(np.ones(700))
    np.testing.assert_allclose(average_cycle_pattern(nov, ann, 16), 1.0)


def test_single_cycle_is_resampled():
    ann = AnnotationSequence([0.0, 0.4, 0.8, 1.2], [1, 2, 3, 1], RUPAKA)
    v = np.arange(200, dtype=float) ** 2
    nov = NoveltySignal.from_values(v)
    pat = average_cycle_pattern(nov, ann, 8)
    np.testing.assert_allclose(pat, np.interp(np.arange(8) * 1.2 / 8 * 100, np.arange(200), v))


def test_cycle_pattern_peaks_at_beat_bins():
    spec = SynthSpec(RUPAKA, 120, 15.0, accent_profile=(1.0, 0.6, 0.6))
    ann = generate_annotations(spec)
    nov = generate_novelty(spec, FrameGrid(100.0, 1500))
    pat = average_cycle_pattern(nov, ann, 12)
    assert set(np.argsort(pat)[-3:]) == {0, 4, 8}
    assert pat[0] > pat[4]


@given(st.integers(2, 6), st.integers(30, 90))
def test_periodic_novelty_pattern_equals_one_period(cycles, period):
    one = np.random.default_rng(period).random(period)
    nov = NoveltySignal.from_values(np.concatenate([np.tile(one, cycles), one[:1]]))
    t = np.arange(cycles * 3 + 1) * period / 300
    ann = AnnotationSequence(t, np.tile([1, 2, 3], cycles + 1)[:len(t)], RUPAKA)
    bins = 10
    expected = np.interp(np.arange(bins) * period / bins, np.arange(period + 1), np.append(one, one[0]))
    np.testing.assert_allclose(average_cycle_pattern(nov, ann, bins), expected, atol=1e-9)


def test_cycle_pattern_needs_two_samas():
    ann = AnnotationSequence([0.0, 0.5], [1, 2], RUPAKA)
    with pytest.raises(ValueError):
        average_cycle_pattern(NoveltySignal.from_values(np.ones(100)), ann, 4)
