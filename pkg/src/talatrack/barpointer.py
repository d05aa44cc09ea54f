"""
Bar-pointer dynamic Bayesian network for meter tracking.

The hidden state is a pointer ``(position, tempo, pattern)`` that advances
one position per frame through a tala cycle and wraps at the sama. Each
tempo owns a ring with one position per frame of a full cycle at that
tempo, so neighbouring tempi differ by exactly one frame of cycle length.
Tempo and rhythmic pattern may change only when the pointer wraps.

States are flattened tempo-major, then position, then pattern:
``index = offset[tempo] + position * R + pattern``. Tempo index 0 is the
slowest tempo (longest ring).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _hmm
from .model import BeatList, FrameGrid, NoveltySignal, TalaSpec
from .observation import ObservationModel

P_TEMPO = 0.02
P_PATTERN = 0.0


class BarPointerState(NamedTuple):
    position: int
    tempo: int
    pattern: int = 0


@dataclass(frozen=True, eq=False)
class BarPointerStateSpace:
    tala: TalaSpec
    min_bpm: float
    max_bpm: float
    frame_rate: float
    num_patterns: int
    positions: np.ndarray = field(repr=False)
    p_tempo: float = P_TEMPO
    p_pattern: float = P_PATTERN

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        offsets = np.concatenate(([0], np.cumsum(pos * self.num_patterns)))
        offsets.setflags(write=False)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_cache", {})

    # geometry -------------------------------------------------------------
    @property
    def num_tempi(self) -> int:
        return len(self.positions)

    @property
    def num_states(self) -> int:
        return int(self._offsets[-1])

    def bpm(self, tempo: int) -> float:
        return self.frame_rate * 60.0 * self.tala.beats_per_cycle / self.positions[tempo]

    def index(self, state: BarPointerState) -> int:
        self.validate(state)
        return int(self._offsets[state.tempo] + state.position * self.num_patterns + state.pattern)

    def state(self, index: int) -> BarPointerState:
        if not 0 <= index < self.num_states:
            raise IndexError(f"state index {index} outside 0..{self.num_states - 1}")
        t = int(np.searchsorted(self._offsets, index, side="right") - 1)
        rem = int(index - self._offsets[t])
        return BarPointerState(rem // self.num_patterns, t, rem % self.num_patterns)

    def validate(self, state: BarPointerState) -> None:
        position, tempo, pattern = state
        if not 0 <= tempo < self.num_tempi:
            raise ValueError(f"tempo index {tempo} outside 0..{self.num_tempi - 1}")
        if not 0 <= position < self.positions[tempo]:
            raise ValueError(f"position {position} outside ring of {self.positions[tempo]}")
        if not 0 <= pattern < self.num_patterns:
            raise ValueError(f"pattern {pattern} outside 0..{self.num_patterns - 1}")

    def arrays(self) -> dict:
        """Per-state ``tempo``, ``position`` and ``pattern`` arrays (cached)."""
        if "arrays" not in self._cache:
            R = self.num_patterns
            tempo = np.repeat(np.arange(self.num_tempi), self.positions * R)
            local = np.arange(self.num_states) - self._offsets[tempo]
            self._cache["arrays"] = {"tempo": tempo, "position": local // R, "pattern": local % R}
        return self._cache["arrays"]

    # transitions -----------------------------------------------------------
    def _wrap_targets(self, tempo: int, pattern: int) -> list[tuple[int, int, float]]:
        moves = {tempo: 1.0 - self.p_tempo}
        for t in (tempo - 1, tempo + 1):
            tt = t if 0 <= t < self.num_tempi else tempo
            moves[tt] = moves.get(tt, 0.0) + self.p_tempo / 2
        R = self.num_patterns
        if R == 1:
            pats = {pattern: 1.0}
        else:
            pats = {r: (1.0 - self.p_pattern if r == pattern else self.p_pattern / (R - 1)) for r in range(R)}
        return [(t, r, pt * pr) for t, pt in sorted(moves.items()) for r, pr in sorted(pats.items())
                if pt * pr > 0]

    def transition_step(self, state: BarPointerState) -> list[tuple[BarPointerState, float]]:
        """Successors of ``state`` with their log-probabilities."""
        self.validate(state)
        position, tempo, pattern = state
        if position + 1 < self.positions[tempo]:
            return [(BarPointerState(position + 1, tempo, pattern), 0.0)]
        return [(BarPointerState(0, t, r), float(np.log(p))) for t, r, p in self._wrap_targets(tempo, pattern)]

    def ring_transitions(self) -> _hmm.RingTransitions:
        if "trans" not in self._cache:
            R = self.num_patterns
            arr = self.arrays()
            pred = np.arange(self.num_states) - R
            pred[arr["position"] == 0] = -1
            src, dst, logp = [], [], []
            for t in range(self.num_tempi):
                for r in range(R):
                    s = self.index(BarPointerState(int(self.positions[t]) - 1, t, r))
                    for t2, r2, p in self._wrap_targets(t, r):
                        src.append(s)
                        dst.append(self.index(BarPointerState(0, t2, r2)))
                        logp.append(np.log(p))
            self._cache["trans"] = _hmm.RingTransitions.build(pred, src, dst, logp)
        return self._cache["trans"]

    def emission_classes(self, bins_per_cycle: int) -> np.ndarray:
        """Column ``pattern * bins + bin`` of each state's observation mixture."""
        key = ("classes", bins_per_cycle)
        if key not in self._cache:
            arr = self.arrays()
            n = self.positions[arr["tempo"]]
            b = arr["position"] * bins_per_cycle // n
            self._cache[key] = arr["pattern"] * bins_per_cycle + b
        return self._cache[key]


def build_state_space(tala: TalaSpec, tempo_range: tuple[float, float] = (55.0, 230.0),
                      frame_rate: float = 100.0, num_patterns: int = 1,
                      p_tempo: float = P_TEMPO, p_pattern: float = P_PATTERN) -> BarPointerStateSpace:
    """
    Efficient bar-pointer state space.

    One tempo per integer cycle length between ``round(fps*60*B/max_bpm)``
    and ``round(fps*60*B/min_bpm)`` frames; tempo index 0 is the slowest.
    """
    min_bpm, max_bpm = map(float, tempo_range)
    if not 0 < min_bpm <= max_bpm:
        raise ValueError(f"invalid tempo range {tempo_range}: need 0 < min <= max")
    if num_patterns < 1:
        raise ValueError("num_patterns must be at least 1")
    if not 0 <= p_tempo <= 1 or not 0 <= p_pattern <= 1:
        raise ValueError("transition probabilities must lie in [0, 1]")
    cycle = frame_rate * 60.0 * tala.beats_per_cycle
    longest = int(np.floor(cycle / min_bpm + 0.5))
    shortest = max(int(np.floor(cycle / max_bpm + 0.5)), 1)
    if longest < shortest:
        raise ValueError(f"tempo range {tempo_range} yields no tempi at {frame_rate} fps")
    positions = np.arange(longest, shortest - 1, -1)
    return BarPointerStateSpace(tala, min_bpm, max_bpm, float(frame_rate), int(num_patterns),
                                positions, float(p_tempo), float(p_pattern))


def emission_log_prob(model: ObservationModel, state: BarPointerState, space: BarPointerStateSpace,
                      value: float) -> float:
    space.validate(state)
    b = state.position * model.bins_per_cycle // int(space.positions[state.tempo])
    return model.log_prob(state.pattern, int(b), value)


def _emission_inputs(space: BarPointerStateSpace, model: ObservationModel, nov: NoveltySignal):
    if model.num_patterns != space.num_patterns:
        raise ValueError(f"model has {model.num_patterns} patterns, state space {space.num_patterns}")
    return space.emission_classes(model.bins_per_cycle), model.log_density_table(nov.values)


def viterbi_decode(space: BarPointerStateSpace, model: ObservationModel, nov: NoveltySignal,
                   return_score: bool = False):
    """
    Exact MAP state sequence under a uniform initial distribution.

    Returns an int array of flattened state indices (one per frame); use
    :meth:`BarPointerStateSpace.state` to unpack. With ``return_score`` the
    path log-probability is returned as well.
    """
    classes, table = _emission_inputs(space, model, nov)
    path, score = _hmm.viterbi(space.ring_transitions(), classes, table)
    return (path, score) if return_score else path


def particle_filter_decode(space: BarPointerStateSpace, model: ObservationModel, nov: NoveltySignal,
                           num_particles: int = 2000, seed: int = 0,
                           roughening: float = 0.1, tempo_spread: float = 0.03) -> np.ndarray:
    """
    Bootstrap particle filter over the discrete bar-pointer states.

    Particles start spread evenly over all states (a randomly shifted
    lattice in the tempo/phase plane), move with the transition model and
    are weighted by the observation model. Systematic resampling
    runs whenever the effective sample size drops below half the particle
    count. The per-frame estimate is the highest-weight particle before
    resampling. Output is bit-identical for a given ``seed``.

    Parameters
    ----------
    roughening : float
        After each resampling step every particle independently jumps to
        another tempo (keeping its cycle phase) with this probability, and
        shifts by one position with the same probability. This keeps
        duplicated particles apart; since positions advance deterministically,
        without it the filter can never leave the hypotheses it started with.
        0 gives the plain bootstrap filter.
    tempo_spread : float
        Standard deviation of the log cycle-length jump; any jump moves by at
        least one tempo index.
    """
    if num_particles < 1:
        raise ValueError("num_particles must be at least 1")
    if not 0 <= roughening <= 1:
        raise ValueError("roughening must lie in [0, 1]")
    if tempo_spread < 0:
        raise ValueError("tempo_spread must be non-negative")
    classes, table = _emission_inputs(space, model, nov)
    K = nov.grid.num_frames
    out = np.zeros(K, dtype=np.int64)
    if K == 0:
        return out
    trans = space.ring_transitions()
    R = space.num_patterns
    S = space.num_states
    # successor of every non-exit state; exits sample from their wrap edges
    succ = np.arange(S) + R
    is_exit = np.zeros(S, dtype=bool)
    is_exit[trans.edge_src] = True
    succ[is_exit] = -1
    exit_idx = np.full(S, -1, dtype=np.int64)
    exits = np.flatnonzero(is_exit)
    exit_idx[exits] = np.arange(len(exits))
    width = 3 * R
    out_dst = np.zeros((len(exits), width), dtype=np.int64)
    out_cum = np.ones((len(exits), width))
    fill = np.zeros(len(exits), dtype=np.int64)
    dst_of_edge = np.repeat(trans.entry_states, np.diff(trans.edge_ptr))
    for src, dst, lp in zip(trans.edge_src, dst_of_edge, trans.edge_logp):
        e = exit_idx[src]
        out_dst[e, fill[e]] = dst
        out_cum[e, fill[e]] = np.exp(lp)
        fill[e] += 1
    for e in range(len(exits)):
        out_dst[e, fill[e]:] = out_dst[e, fill[e] - 1]
        out_cum[e, :fill[e]] = np.cumsum(out_cum[e, :fill[e]])
        out_cum[e, :fill[e]] /= out_cum[e, fill[e] - 1]
        out_cum[e, fill[e]:] = 1.0

    rng = np.random.Generator(np.random.PCG64(seed))
    N = num_particles
    idx = _initial_particles(space, N, rng)
    logw = np.full(N, -np.log(N))
    for k in range(K):
        if k > 0:
            u = rng.random(N)
            nxt = succ[idx]
            wrap = nxt < 0
            if wrap.any():
                e = exit_idx[idx[wrap]]
                choice = (u[wrap, None] >= out_cum[e]).sum(axis=1)
                choice = np.minimum(choice, width - 1)
                nxt[wrap] = out_dst[e, choice]
            idx = nxt
        logw = logw + table[k, classes[idx]]
        best = int(np.argmax(logw))
        out[k] = idx[best]
        logw -= np.max(logw)
        w = np.exp(logw)
        w /= w.sum()
        logw = np.log(np.maximum(w, 1e-300))
        ess = 1.0 / np.sum(w * w)
        if ess < N / 2:
            positions = (rng.random() + np.arange(N)) / N
            cum = np.cumsum(w)
            cum[-1] = 1.0
            idx = idx[np.searchsorted(cum, positions, side="right").clip(0, N - 1)]
            logw = np.full(N, -np.log(N))
            if roughening > 0:
                idx = _roughen(space, idx, rng, roughening, tempo_spread)
    return out


def _initial_particles(space: BarPointerStateSpace, N: int, rng: np.random.Generator) -> np.ndarray:
    # Randomly shifted rank-1 lattice: tempo rings are chosen in proportion to
    # their size (uniform over states) and cycle phases follow the golden
    # ratio sequence, so tempo/phase pairs cover the plane evenly.
    u, v = rng.random(2)
    i = np.arange(N)
    sizes = space.positions * space.num_patterns
    cum = np.cumsum(sizes) / sizes.sum()
    tempo = np.minimum(np.searchsorted(cum, (i + u) / N, side="right"), space.num_tempi - 1)
    phase = (i * (np.sqrt(5.0) - 1) / 2 + v) % 1.0
    n = space.positions[tempo]
    pos = np.minimum((phase * n).astype(np.int64), n - 1)
    pattern = rng.integers(0, space.num_patterns, size=N)
    return space._offsets[tempo] + pos * space.num_patterns + pattern


def _roughen(space: BarPointerStateSpace, idx: np.ndarray, rng: np.random.Generator, prob: float,
             tempo_spread: float) -> np.ndarray:
    arr = space.arrays()
    R = space.num_patterns
    N = len(idx)
    u = rng.random((3, N))
    z = rng.standard_normal(N)
    tempo, pos, pat = arr["tempo"][idx], arr["position"][idx], arr["pattern"][idx]
    n = space.positions[tempo]
    # log-normal jitter of the cycle length, at least one frame, phase kept
    target = np.rint(n * np.exp(tempo_spread * z)).astype(np.int64)
    target = np.where(target == n, n + np.where(z < 0, -1, 1), target)
    longest = int(space.positions[0])
    moved = np.clip(longest - target, 0, space.num_tempi - 1)
    new_tempo = np.where(u[0] < prob, moved, tempo)
    new_n = space.positions[new_tempo]
    new_pos = (pos * new_n) // n
    step = np.where(u[2] < 0.5, -1, 1)
    new_pos = np.where(u[1] < prob, (new_pos + step) % new_n, new_pos)
    return space._offsets[new_tempo] + new_pos * R + pat


def states_to_meter(path, space: BarPointerStateSpace, grid: FrameGrid) -> tuple[BeatList, BeatList]:
    """
    Beat and downbeat times from a decoded state sequence.

    A beat is emitted at the first frame whose position lies at or past one
    of the B equally spaced beat boundaries of the cycle; the boundary at
    position 0 marks a downbeat. Frame 0 carries a downbeat when the pointer
    is still inside the first beat of the cycle, and an ordinary beat only
    when it sits exactly on a boundary.

    Particle-filter estimates may jump between hypotheses. Such a jump emits
    a beat only if it moves forward into a new beat and lands within the
    first quarter of it; backward jumps never emit. A beat within half a
    beat period of the previous one is suppressed.
    """
    path = np.asarray(path, dtype=np.int64)
    if len(path) != grid.num_frames:
        raise ValueError(f"path has {len(path)} frames, grid {grid.num_frames}")
    if len(path) == 0:
        return BeatList(), BeatList()
    arr = space.arrays()
    B = space.tala.beats_per_cycle
    pos = arr["position"][path]
    n = space.positions[arr["tempo"][path]]
    beat_idx = pos * B // n
    phase = pos / n
    beats, downs = [], []
    last = -np.inf
    for k in range(len(path)):
        if k == 0:
            event = beat_idx[0] == 0 or (pos[0] * B) % n[0] < B
        else:
            stepped = pos[k] == (pos[k - 1] + 1) % n[k - 1] and (n[k] == n[k - 1] or pos[k] == 0)
            if stepped:
                event = beat_idx[k] != beat_idx[k - 1] or (B == 1 and pos[k] == 0)
            else:
                # a jump between hypotheses counts only if it lands early in a new beat
                forward = (phase[k] - phase[k - 1]) % 1.0 < 0.5
                advanced = beat_idx[k] != beat_idx[k - 1] or (B == 1 and pos[k] < pos[k - 1])
                event = forward and advanced and 4 * ((pos[k] * B) % n[k]) < n[k]
        if event and k - last >= n[k] / (2 * B):
            t = k / grid.frame_rate_hz
            beats.append(t)
            if beat_idx[k] == 0:
                downs.append(t)
            last = k
    return BeatList(beats), BeatList(downs)
