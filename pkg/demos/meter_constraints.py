"""
How the joint beat/downbeat post-processor depends on its meter constraints.

Three experiments on synthetic network activations:

1. With the informed preset (3, 5, 7 or 8 beats per cycle) every tala is
   decoded with its own cycle length.
2. Allowing only one wrong cycle length leaves the beats intact but
   mis-places the downbeats, so a low downbeat score can come from the
   decoder's constraints rather than the activations.
3. Activations displaced by half a beat (an edupu start) score zero beat F
   yet score close to 1 under the allowed-metrical-level continuity metric.

Run: python3 demos/meter_constraints.py
"""

import numpy as np

from talatrack.evaluation import evaluate_track
from talatrack.model import TALAS, FrameGrid
from talatrack.postproc import PostprocConfig, cmr_informed_config, postprocess_joint, selected_meter
from talatrack.synth import SynthSpec, generate_activations, generate_annotations

grid = FrameGrid(100.0, 3000)


def activations(tala, bpm, off_phase=False, seed=0):
    spec = SynthSpec(tala, bpm, 30.0, timing_jitter_std_sec=0.005, noise_floor=0.05, seed=seed)
    ann = generate_annotations(spec)
    return spec, ann, generate_activations(spec, grid, off_phase=off_phase, annotations=ann)


print("1. meter selection with the informed preset")
cfg = cmr_informed_config()
for name, tala in TALAS.items():
    _, ann, act = activations(tala, 100)
    beats, downs = postprocess_joint(act, cfg)
    m = evaluate_track(ann, beats.times, downs.times).metrics
    print(f"   {name:>13}: selected {selected_meter(act, cfg)} beats/cycle "
          f"(true {tala.beats_per_cycle}), beat F {m['beat_f']:.3f}, downbeat F {m['downbeat_f']:.3f}")

print("2. rupaka decoded with a single, wrong cycle length")
spec, ann, act = activations(TALAS["rupaka"], 100)
for B in (3, 5, 7, 8):
    beats, downs = postprocess_joint(act, PostprocConfig(beats_per_bar=(B,), max_tempo_bpm=230))
    m = evaluate_track(ann, beats.times, downs.times).metrics
    spacing = np.median(np.diff(downs.times)) / spec.ibi
    print(f"   B={B}: beat F {m['beat_f']:.3f}, downbeat F {m['downbeat_f']:.3f}, "
          f"downbeats every {spacing:.1f} beats")

print("3. activations shifted by half a beat")
for name, tala in TALAS.items():
    _, ann, act = activations(tala, 100, off_phase=True)
    beats, downs = postprocess_joint(act, cfg)
    m = evaluate_track(ann, beats.times, downs.times).metrics
    print(f"   {name:>13}: beat F {m['beat_f']:.3f}, CML_t {m['beat_cml_t']:.3f}, AML_t {m['beat_aml_t']:.3f}")
