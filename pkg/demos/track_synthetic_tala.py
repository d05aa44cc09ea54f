"""
Track beats and samas on a synthetic rupaka performance.

Builds a 60 s novelty curve with timing jitter and a noise floor, decodes it
with the bar-pointer model (Viterbi and particle filter) and with the
tala-agnostic dynamic-programming tracker, then scores all three.

Run: python3 demos/track_synthetic_tala.py
"""

import time

import numpy as np

from talatrack.barpointer import build_state_space, particle_filter_decode, states_to_meter, viterbi_decode
from talatrack.evaluation import evaluate_track
from talatrack.model import RUPAKA, BeatList
from talatrack.pulse import ellis_dp_beats, fourier_tempogram
from talatrack.synth import SynthSpec, synth_track, synthetic_observation_model

spec = SynthSpec(RUPAKA, tempo_bpm=132, duration_sec=60.0, timing_jitter_std_sec=0.005,
                 noise_floor=0.05, spike_width_frames=3, seed=2024)
ann, nov, _ = synth_track(spec)
print(f"{len(ann.times)} beats, {len(ann.sama_times)} samas at {spec.tempo_bpm} BPM")

model = synthetic_observation_model(RUPAKA)
space = build_state_space(RUPAKA)
print(f"state space: {space.num_states} states over {space.num_tempi} tempi")

results = {}
t0 = time.perf_counter()
results["viterbi"] = states_to_meter(viterbi_decode(space, model, nov), space, nov.grid)
t1 = time.perf_counter()
results["particle filter"] = states_to_meter(particle_filter_decode(space, model, nov, 2000, seed=1),
                                             space, nov.grid)
t2 = time.perf_counter()
print(f"viterbi {t1 - t0:.2f} s, particle filter {t2 - t1:.2f} s")

# the dynamic-programming tracker needs a global tempo: take the median of the per-frame tempogram peaks
tg = fourier_tempogram(nov, np.arange(55.0, 231.0))
bpm = float(np.median(tg.bpm_axis[np.argmax(tg.magnitudes, axis=1)]))
results["dynamic programming"] = (ellis_dp_beats(nov, bpm), BeatList())
print(f"tempogram estimate: {bpm:.1f} BPM")

for name, (b, d) in results.items():
    m = evaluate_track(ann, b.times, d.times, name).metrics
    print(f"{name:>20}: beat F {m['beat_f']:.3f}  CML_t {m['beat_cml_t']:.3f}  downbeat F {m['downbeat_f']:.3f}")
