import itertools

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.optimize import linear_sum_assignment

from talatrack.evaluation import (EvalConfig, aggregate, continuity_metrics, evaluate_track, f_measure,
                                  match_events, metrical_variants)
from talatrack.model import ADI, RUPAKA, AnnotationSequence, BeatList
from talatrack.synth import SynthSpec, generate_annotations

sorted_times = st.lists(st.floats(0, 20, allow_nan=False), max_size=8, unique=True).map(sorted)


def optimal_tp(refs, preds, tol):
    if not refs or not preds:
        return 0
    hit = np.abs(np.subtract.outer(refs, preds)) <= tol + 1e-9
    rows, cols = linear_sum_assignment(-hit.astype(float))
    return int(hit[rows, cols].sum())


# --- matching and F-measure ---------------------------------------------

def test_matching_examples():
    r = [1.0, 2.0, 3.0, 4.0]
    assert match_events(r, r).n_tp == 4
    m = match_events(r, [1.0, 2.5])
    assert (m.n_tp, m.n_fp, m.n_fn) == (1, 1, 3)
    assert optimal_tp(r, [1.0, 2.5], 0.07) == 1
    assert match_events([1.0], [1.07]).n_tp == 1


def test_matching_is_one_to_one():
    m = match_events([1.0], [0.98, 1.0, 1.02])
    assert m.n_tp == 1 and m.pairs == ((0, 0),)
    # earlier prediction takes the nearest free reference
    m = match_events([1.0, 1.1], [1.05, 1.06])
    assert m.pairs == ((0, 0), (1, 1))


@given(sorted_times, sorted_times, st.floats(0, 0.5))
def test_matching_counts_and_optimality(refs, preds, tol):
    m = match_events(refs, preds, tol)
    assert m.n_tp + m.n_fp == len(preds) and m.n_tp + m.n_fn == len(refs)
    assert len({i for i, _ in m.pairs}) == m.n_tp == len({j for _, j in m.pairs})
    assert m.n_tp <= optimal_tp(refs, preds, tol)


def test_greedy_never_beats_optimal_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        refs = np.sort(rng.uniform(0, 3, rng.integers(0, 9)))
        preds = np.sort(rng.uniform(0, 3, rng.integers(0, 9)))
        assert match_events(refs, preds, 0.2).n_tp <= optimal_tp(list(refs), list(preds), 0.2)


def test_f_measure_examples():
    r = [1.0, 2.0, 3.0, 4.0]
    assert f_measure(r, r) == (1.0, 1.0, 1.0)
    assert f_measure(r, [1.0, 2.5]) == pytest.approx((0.5, 0.25, 1 / 3))
    assert f_measure([], []) == (1.0, 1.0, 1.0)
    assert f_measure(r, [])[2] == 0.0 and f_measure([], r)[2] == 0.0


def test_window_edges():
    refs = np.arange(20) * 0.5
    assert f_measure(refs, refs + 0.071)[2] == 0.0
    assert f_measure(refs, refs + 0.069)[2] == 1.0
    with pytest.raises(ValueError):
        match_events(refs, refs, -0.1)


@given(sorted_times, sorted_times)
def test_precision_and_recall_swap(refs, preds):
    assume(refs and preds)
    p1, r1, f1 = f_measure(refs, preds)
    p2, r2, f2 = f_measure(preds, refs)
    assert p1 == pytest.approx(r2) and r1 == pytest.approx(p2)


# --- metrical variants --------------------------------------------------

def test_variant_examples():
    v = dict(metrical_variants([0.0, 1.0, 2.0, 3.0]))
    assert v["identity"].tolist() == [0, 1, 2, 3]
    assert v["off_phase"].tolist() == [0.5, 1.5, 2.5]
    assert v["double"].tolist() == [0, 0.5, 1, 1.5, 2, 2.5, 3]
    assert v["half_even"].tolist() == [0, 2]
    assert v["half_odd"].tolist() == [1, 3]
    assert [n for n, _ in metrical_variants([1.0])] == ["identity"]


# --- continuity ---------------------------------------------------------

def reference_correct(refs, preds, tol):
    """Straightforward restatement of the continuity conditions."""
    refs, preds = list(refs), list(preds)
    ibi = [refs[1] - refs[0]] + [b - a for a, b in zip(refs, refs[1:])]
    nearest = [min(range(len(refs)), key=lambda j: (abs(p - refs[j]), j)) for p in preds]

    def inside(i, j):
        return abs(preds[i] - refs[j]) <= tol * ibi[j] + 1e-9

    def pair_ok(a, b, ja, jb):
        d = refs[jb] - refs[ja]
        return inside(a, ja) and abs((preds[b] - preds[a]) - d) <= tol * d + 1e-9

    out = []
    for i, j in enumerate(nearest):
        if not inside(i, j):
            out.append(False)
        elif i > 0 and j > 0:
            out.append(pair_ok(i - 1, i, j - 1, j))
        elif i + 1 < len(preds) and j + 1 < len(refs):
            out.append(inside(i + 1, j + 1) and pair_ok(i, i + 1, j, j + 1))
        else:
            out.append(len(preds) == 1)
    return out


def reference_cml(refs, preds, tol=0.175, min_segment=3):
    if len(refs) < 2:
        return 0.0, 0.0
    ok = reference_correct(refs, preds, tol)
    runs = [len(list(g)) for v, g in itertools.groupby(ok) if v]
    longest = max(runs, default=0)
    return (longest if longest >= min_segment else 0) / len(preds), sum(ok) / len(preds)


def test_perfect_predictions():
    refs = np.arange(30) * 0.5
    assert continuity_metrics(refs, refs) == (1.0, 1.0, 1.0, 1.0)


def test_half_tempo_counts_only_as_allowed_level():
    refs = np.arange(40) * 0.5
    cml_c, cml_t, aml_c, aml_t = continuity_metrics(refs, refs[0::2])
    assert cml_t == 0.0 and aml_t == 1.0


def test_broken_second_half():
    refs = np.arange(20, dtype=float)
    preds = refs.copy()
    preds[10:] += 0.4
    cml_c, cml_t, _, _ = continuity_metrics(refs, preds)
    assert (cml_c, cml_t) == (0.5, 0.5)
    assert reference_cml(refs, preds) == (0.5, 0.5)


def test_short_runs_do_not_count_as_segments():
    refs = np.arange(20, dtype=float)
    preds = refs + np.tile([0, 0, 0.4, 0.4], 5)
    cml_c, cml_t, _, _ = continuity_metrics(refs, preds)
    assert cml_c == 0.0 and cml_t > 0
    assert continuity_metrics(refs, preds, min_segment=1)[0] > 0


@given(st.lists(st.floats(0.3, 0.7), min_size=2, max_size=25), st.lists(st.floats(-0.15, 0.15), max_size=25),
       st.integers(0, 3))
def test_continuity_matches_reference(ibis, noise, drop):
    refs = np.cumsum([0.0] + ibis)
    preds = refs[drop:] + np.resize(np.array(noise or [0.0]), len(refs) - drop)
    preds = np.sort(preds)
    assume(len(preds) > 0 and np.all(np.diff(preds) > 0))
    got = continuity_metrics(refs, preds)
    assert got[:2] == pytest.approx(reference_cml(refs, preds))
    aml = [reference_cml(v, preds) for _, v in metrical_variants(refs)]
    assert got[2] == pytest.approx(max(a[0] for a in aml))
    assert got[3] == pytest.approx(max(a[1] for a in aml))


@given(sorted_times, sorted_times, st.floats(-10, 10))
def test_continuity_orderings_and_translation(refs, preds, shift):
    assume(len(refs) >= 2 and len(preds) >= 1 and np.all(np.diff(refs) > 1e-3))
    cml_c, cml_t, aml_c, aml_t = continuity_metrics(refs, preds)
    assert cml_c <= cml_t <= aml_t and cml_c <= aml_c <= aml_t
    assert all(0 <= v <= 1 for v in (cml_c, cml_t, aml_c, aml_t))
    moved = continuity_metrics(np.array(refs) + 50 + shift, np.array(preds) + 50 + shift)
    assert moved == pytest.approx((cml_c, cml_t, aml_c, aml_t))
    assert f_measure(np.array(refs) + 50 + shift, np.array(preds) + 50 + shift)[2] == \
        pytest.approx(f_measure(refs, preds)[2])


def test_continuity_degenerate_inputs():
    assert continuity_metrics([], [1.0]) == (0, 0, 0, 0)
    assert continuity_metrics([1.0, 2.0], []) == (0, 0, 0, 0)
    with pytest.raises(ValueError):
        continuity_metrics([1.0, 2.0], [1.0], phase_tolerance=0.5)


# --- per-track scoring and aggregation ----------------------------------

def test_track_scores():
    ann = generate_annotations(SynthSpec(RUPAKA, 120, 20.0))
    rec = evaluate_track(ann, ann.times, ann.sama_times, "t1")
    assert all(v == 1.0 for v in rec.metrics.values())
    rec = evaluate_track(ann, ann.times, [], "t1")
    assert rec.metrics["beat_f"] == 1.0 and rec.metrics["downbeat_f"] == 0.0
    rec = evaluate_track(ann, BeatList(ann.times + 0.25), ann.sama_times)
    assert rec.metrics["beat_f"] < 0.2 and rec.metrics["beat_aml_t"] > 0.9


def test_downbeat_variants_can_be_disabled():
    ann = generate_annotations(SynthSpec(RUPAKA, 120, 30.0))
    downs = ann.sama_times[0::2]
    on = evaluate_track(ann, ann.times, downs)
    off = evaluate_track(ann, ann.times, downs, config=EvalConfig(downbeat_aml=False))
    assert on.metrics["downbeat_aml_t"] == 1.0
    assert off.metrics["downbeat_aml_t"] == off.metrics["downbeat_cml_t"] == 0.0


def record(track, tala, f):
    ann = AnnotationSequence([0.0, 0.5, 1.0, 1.5], [1, 2, 3, 1], RUPAKA) if tala == "rupaka" else \
        AnnotationSequence(np.arange(9) * 0.5, [1, 2, 3, 4, 5, 6, 7, 8, 1], ADI)
    rec = evaluate_track(ann, ann.times, ann.sama_times, track)
    rec.metrics["beat_f"] = f
    return rec


def test_aggregate_examples():
    one = record("a", "rupaka", 0.7)
    rep = aggregate([one])
    assert rep.overall == one.metrics and rep.by_tala["rupaka"] == one.metrics
    rep = aggregate([record("a", "rupaka", 0.4), record("b", "rupaka", 0.6)])
    assert rep.overall["beat_f"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([one], group_by="year")
    assert aggregate([one], group_by="overall").by_tala == {}


@given(st.permutations(range(6)))
def test_aggregate_ignores_row_order(order):
    rows = [record(f"t{i}", "rupaka" if i % 2 else "adi", 0.1 * i + 0.05) for i in range(6)]
    base = aggregate(rows)
    shuffled = aggregate([rows[i] for i in order])
    assert shuffled.overall == base.overall and shuffled.by_tala == base.by_tala
    assert [r.track_id for r in shuffled.tracks] == [r.track_id for r in base.tracks]
    assert list(base.by_tala) == ["adi", "rupaka"]
