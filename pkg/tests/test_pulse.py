import functools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from talatrack.model import ADI, RUPAKA, AnnotationSequence, BeatList, FrameGrid, NoveltySignal
from talatrack.pulse import (Tempogram, cycle_duration_stats, ellis_dp_beats, fourier_tempogram,
                             median_tempo_bpm, plp_curve)
from talatrack.synth import SynthSpec, generate_annotations, generate_novelty


def synth_novelty(bpm, duration, width=3):
    spec = SynthSpec(RUPAKA, bpm, duration, spike_width_frames=width)
    grid = FrameGrid.for_duration(duration)
    return generate_novelty(spec, grid), generate_annotations(spec)


def local_maxima(v):
    return np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1


# --- tempogram ----------------------------------------------------------

def test_tempogram_prefers_true_tempo():
    nov, _ = synth_novelty(120, 20.0)
    tg = fourier_tempogram(nov, [60.0, 120.0, 240.0])
    centre = tg.magnitudes[200:-200]
    assert np.all(np.argmax(centre, axis=1) == 1)


def test_tempogram_matches_direct_correlation(rng):
    x = rng.random(700)
    nov = NoveltySignal.from_values(x)
    axis = np.array([45.0, 97.0, 180.0])
    tg = fourier_tempogram(nov, axis, window_sec=3.0)
    half = len(tg.window) // 2
    xm = x - x.mean()
    for n in (0, 151, 350, 699):
        m = np.arange(max(0, n - half), min(700, n + half + 1))
        w = tg.window[m - n + half]
        for j, bpm in enumerate(axis):
            c = np.sum(xm[m] * w * np.exp(-2j * np.pi * bpm / 60 / 100 * m))
            assert tg.magnitudes[n, j] == pytest.approx(abs(c), abs=1e-9)
            if abs(c) > 1e-6:
                assert np.exp(1j * tg.phases[n, j]) == pytest.approx(c / abs(c), abs=1e-7)


def test_tempogram_window_is_hann_of_requested_length():
    tg = fourier_tempogram(NoveltySignal.from_values(np.zeros(10)), window_sec=4.0)
    assert len(tg.window) == 401
    assert tg.window[200] == pytest.approx(1.0) and tg.window[0] > 0


def test_zero_and_constant_novelty_have_no_periodic_energy():
    for v in (np.zeros(600), np.full(600, 0.3)):
        tg = fourier_tempogram(NoveltySignal.from_values(v), [60.0, 90.0, 150.0])
        assert np.all(tg.magnitudes == 0) and np.all(tg.phases == 0)


@given(arrays(float, 300, elements=st.floats(0, 1)), st.floats(0, 5))
def test_mean_removal_makes_offset_irrelevant(v, c):
    axis = [60.0, 100.0, 200.0]
    a = fourier_tempogram(NoveltySignal.from_values(v), axis).magnitudes
    b = fourier_tempogram(NoveltySignal.from_values(v + c), axis).magnitudes
    # FFT round-off grows with the input level
    np.testing.assert_allclose(a, b, atol=1e-9 * max(1.0, np.abs(v).sum() + 300 * abs(c)))
    assert (a >= 0).all()


def test_tempogram_rejects_short_window_and_bad_axis():
    nov = NoveltySignal.from_values(np.zeros(100))
    with pytest.raises(ValueError):
        fourier_tempogram(nov, [30.0, 60.0], window_sec=3.0)
    with pytest.raises(ValueError):
        fourier_tempogram(nov, [])
    with pytest.raises(ValueError):
        Tempogram(nov.grid, [120.0, 60.0], np.zeros((100, 2)), np.zeros((100, 2)), np.ones(1))


# --- PLP ----------------------------------------------------------------

def test_plp_peaks_on_beats():
    nov, ann = synth_novelty(120, 20.0)
    plp = plp_curve(fourier_tempogram(nov), nov.grid).values
    peaks = local_maxima(plp)
    peaks = peaks[(peaks > 100) & (peaks < 1900)]
    beats = np.round(ann.times * 100).astype(int)
    beats = beats[(beats > 100) & (beats < 1900)]
    assert len(peaks) == len(beats)
    assert np.all(np.abs(peaks - beats) <= 1)


def test_plp_of_silence_is_zero():
    nov = NoveltySignal.from_values(np.zeros(500))
    assert np.all(plp_curve(fourier_tempogram(nov)).values == 0)


def test_plp_follows_a_tempo_change():
    a, _ = synth_novelty(100, 10.0)
    b, _ = synth_novelty(150, 10.0)
    nov = NoveltySignal.from_values(np.concatenate([a.values[:1000], b.values[:1000]]))
    plp = plp_curve(fourier_tempogram(nov)).values
    peaks = local_maxima(plp) / 100
    first = np.diff(peaks[(peaks >= 2.5) & (peaks <= 7.5)])
    second = np.diff(peaks[(peaks >= 12.5) & (peaks <= 17.5)])
    assert np.all(np.abs(first - 0.6) <= 0.02)
    assert np.all(np.abs(second - 0.4) <= 0.02)


@given(arrays(float, st.integers(50, 400), elements=st.floats(0, 1)))
def test_plp_is_non_negative(v):
    nov = NoveltySignal.from_values(v)
    out = plp_curve(fourier_tempogram(nov, [60.0, 120.0]), nov.grid).values
    assert len(out) == len(v) and (out >= 0).all()


def test_plp_rejects_mismatched_grid():
    nov = NoveltySignal.from_values(np.zeros(300))
    with pytest.raises(ValueError):
        plp_curve(fourier_tempogram(nov), FrameGrid(100.0, 301))


# --- dynamic-programming beats ------------------------------------------

def brute_force_beats(x, period, lam):
    """Best admissible sequence by exhaustive search over successors, memoized backwards."""
    K = len(x)
    lo, hi = int(np.ceil(period / 2)), int(np.floor(2 * period))
    tail = K - int(round(period))

    @functools.lru_cache(maxsize=None)
    def best_from(t):
        options = [(0.0, ())] if t >= tail else []
        for g in range(lo, min(hi, K - 1 - t) + 1):
            rest, seq = best_from(t + g)
            options.append((rest - lam * np.log(g / period) ** 2, (t + g,) + seq))
        if not options:
            return -np.inf, ()
        score, seq = max(options, key=lambda o: o[0])
        return x[t] + score, seq

    (score, rest), start = max(((best_from(s), s) for s in range(min(lo, K))), key=lambda o: o[0][0])
    return score, [start, *rest]


def dp_score(frames, x, period, lam):
    gaps = np.diff(frames)
    return x[frames].sum() - lam * np.sum(np.log(gaps / period) ** 2)


@pytest.mark.parametrize("seed", range(6))
def test_dp_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    x = rng.random(120)
    period = 6.0
    lam = float(rng.choice([0.5, 2.0, 10.0]))
    # a ten-frame grid keeps the period short enough to search exhaustively
    nov = NoveltySignal(FrameGrid(10.0, 120), x)
    got = np.round(ellis_dp_beats(nov, 100.0, lam).times * 10).astype(int)
    score, frames = brute_force_beats(x, period, lam)
    assert dp_score(got, x, period, lam) == pytest.approx(score, abs=1e-9)
    assert got.tolist() == frames


def test_dp_recovers_impulse_train():
    spec = SynthSpec(RUPAKA, 120, 2.0)
    ann = generate_annotations(spec)
    nov = generate_novelty(spec, FrameGrid(100.0, 200))
    beats = ellis_dp_beats(nov, 120.0)
    np.testing.assert_allclose(beats.times, ann.times)
    assert brute_force_beats(nov.values, 50.0, 100.0)[1] == [0, 50, 100, 150]


def test_dp_on_silence_is_isochronous():
    nov = NoveltySignal(FrameGrid(10.0, 50), np.zeros(50))
    frames = np.round(ellis_dp_beats(nov, 100.0).times * 10).astype(int)
    assert len(frames) >= 7
    assert np.all(np.abs(np.diff(frames) - 6) <= 1)
    assert dp_score(frames, np.zeros(50), 6.0, 100.0) == pytest.approx(brute_force_beats(np.zeros(50), 6.0, 100.0)[0])


def test_dp_short_input_is_empty():
    assert len(ellis_dp_beats(NoveltySignal.from_values(np.ones(20)), 120.0)) == 0
    assert len(ellis_dp_beats(NoveltySignal.from_values(np.ones(49)), 120.0)) == 0
    with pytest.raises(ValueError):
        ellis_dp_beats(NoveltySignal.from_values(np.ones(100)), 700.0)
    with pytest.raises(ValueError):
        ellis_dp_beats(NoveltySignal.from_values(np.ones(100)), 120.0, lam=0)


@given(arrays(float, st.integers(60, 300), elements=st.floats(0, 1)), st.floats(60, 200))
def test_dp_intervals_stay_in_window(v, bpm):
    beats = ellis_dp_beats(NoveltySignal.from_values(v), bpm).times
    period = 60.0 / bpm
    d = np.diff(beats)
    assert np.all(d > 0)
    assert np.all(d >= period / 2 - 1e-9) and np.all(d <= 2 * period + 1e-9)


# --- tempo and cycle statistics -----------------------------------------

def test_median_tempo_examples():
    assert median_tempo_bpm(BeatList(np.arange(10) * 0.5)) == pytest.approx(120)
    assert median_tempo_bpm(np.cumsum([0, 0.5, 0.5, 1.0])) == pytest.approx(120)
    assert median_tempo_bpm(np.array([0.0, 0.4, 1.0])) == pytest.approx(125)
    with pytest.raises(ValueError):
        median_tempo_bpm(BeatList([1.0]))


@given(st.lists(st.floats(0.2, 2.0), min_size=1, max_size=20), st.floats(-100, 100))
def test_median_tempo_ignores_translation(ibis, shift):
    t = np.cumsum([0.0] + ibis) + 200
    assert median_tempo_bpm(t + shift) == pytest.approx(median_tempo_bpm(t), rel=1e-9)


def test_cycle_duration_examples():
    def samas(times):
        # fill each cycle with its two inner beats
        t = [a + k * (b - a) / 3 for a, b in zip(times[:-1], times[1:]) for k in range(3)] + [times[-1]]
        return AnnotationSequence(t, [1, 2, 3] * (len(times) - 1) + [1], RUPAKA)

    # the median adi cycle duration reported for the dataset
    assert cycle_duration_stats(samas([0, 5.4, 10.8])) == pytest.approx((5.4, 5.4, 5.4))
    assert cycle_duration_stats(samas([0, 2, 5])) == pytest.approx((2, 3, 2.5))
    assert cycle_duration_stats(samas([0, 1.8])) == pytest.approx((1.8, 1.8, 1.8))
    with pytest.raises(ValueError):
        cycle_duration_stats(AnnotationSequence([0.0, 0.5], [1, 2], ADI))
