"""
Viterbi decoding for ring-structured state spaces.

Most states have exactly one predecessor (the pointer advances by one
position per frame). Only *entry* states, the first position of a ring,
collect several incoming edges. The decoder therefore stores back-pointers
for entry states only, which keeps memory at ``K x num_entries``.

Layout
------
pred[s]        predecessor of s, or -1 when s is an entry state
entry_of[s]    index of s among entry states, or -1
edge_ptr       CSR row pointers over entry states (length num_entries + 1)
edge_src       source state of each incoming edge, ascending per entry
edge_logp      log transition probability of each edge
emit_class[s]  column of the per-frame emission table used by s
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass(frozen=True)
class RingTransitions:
    pred: np.ndarray
    entry_of: np.ndarray
    entry_states: np.ndarray
    edge_ptr: np.ndarray
    edge_src: np.ndarray
    edge_logp: np.ndarray

    @property
    def num_states(self) -> int:
        return len(self.pred)

    @classmethod
    def build(cls, pred: np.ndarray, edges_src, edges_dst, edges_logp) -> "RingTransitions":
        """Assemble from per-state predecessors and a list of entry edges."""
        pred = np.asarray(pred, dtype=np.int64)
        src = np.asarray(edges_src, dtype=np.int64)
        dst = np.asarray(edges_dst, dtype=np.int64)
        logp = np.asarray(edges_logp, dtype=float)
        entry_states = np.flatnonzero(pred < 0)
        entry_of = np.full(len(pred), -1, dtype=np.int64)
        entry_of[entry_states] = np.arange(len(entry_states))
        if np.any(entry_of[dst] < 0):
            raise ValueError("edges must target entry states")
        order = np.lexsort((src, entry_of[dst]))
        src, dst, logp = src[order], dst[order], logp[order]
        counts = np.bincount(entry_of[dst], minlength=len(entry_states))
        if np.any(counts == 0):
            raise ValueError("every entry state needs at least one incoming edge")
        edge_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return cls(pred, entry_of, entry_states, edge_ptr, src, logp)


@numba.njit(cache=True)
def _viterbi(pred, entry_of, edge_ptr, edge_src, edge_logp, emit_class, emissions, log_init):
    K = emissions.shape[0]
    S = pred.shape[0]
    n_entry = edge_ptr.shape[0] - 1
    bp = np.empty((K, n_entry), dtype=np.int32)
    cur = np.empty(S)
    new = np.empty(S)
    for s in range(S):
        cur[s] = log_init[s] + emissions[0, emit_class[s]]
    for k in range(1, K):
        e = emissions[k]
        for s in range(S):
            p = pred[s]
            if p >= 0:
                new[s] = cur[p] + e[emit_class[s]]
            else:
                ei = entry_of[s]
                j0 = edge_ptr[ei]
                arg = edge_src[j0]
                best = cur[arg] + edge_logp[j0]
                for j in range(j0 + 1, edge_ptr[ei + 1]):
                    v = cur[edge_src[j]] + edge_logp[j]
                    if v > best:
                        best = v
                        arg = edge_src[j]
                new[s] = best + e[emit_class[s]]
                bp[k, ei] = arg
        tmp = cur
        cur = new
        new = tmp
    last = 0
    score = cur[0]
    for s in range(1, S):
        if cur[s] > score:
            score = cur[s]
            last = s
    path = np.empty(K, dtype=np.int64)
    s = last
    for k in range(K - 1, 0, -1):
        path[k] = s
        p = pred[s]
        if p >= 0:
            s = p
        else:
            s = bp[k, entry_of[s]]
    path[0] = s
    return path, score


def viterbi(trans: RingTransitions, emit_class: np.ndarray, emissions: np.ndarray,
            log_init: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """
    MAP state path and its log score.

    ``emissions`` is ``K x C``; state ``s`` at frame ``k`` scores
    ``emissions[k, emit_class[s]]``. Ties go to the smaller state index.
    The initial distribution defaults to uniform.
    """
    S = trans.num_states
    emissions = np.ascontiguousarray(emissions, dtype=float)
    if emissions.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    if log_init is None:
        log_init = np.full(S, -np.log(S))
    return _viterbi(trans.pred, trans.entry_of, trans.edge_ptr, trans.edge_src, trans.edge_logp,
                    np.ascontiguousarray(emit_class, dtype=np.int64), emissions,
                    np.ascontiguousarray(log_init, dtype=float))


def path_score(trans: RingTransitions, emit_class, emissions, path, log_init=None) -> float:
    """Log score of an explicit state path (``-inf`` if it uses a missing edge)."""
    S = trans.num_states
    path = np.asarray(path)
    init = -np.log(S) if log_init is None else log_init[path[0]]
    score = init + emissions[0, emit_class[path[0]]]
    for k in range(1, len(path)):
        a, b = path[k - 1], path[k]
        if trans.pred[b] >= 0:
            if trans.pred[b] != a:
                return -np.inf
            lp = 0.0
        else:
            ei = trans.entry_of[b]
            sl = slice(trans.edge_ptr[ei], trans.edge_ptr[ei + 1])
            hit = np.flatnonzero(trans.edge_src[sl] == a)
            if len(hit) == 0:
                return -np.inf
            lp = trans.edge_logp[sl][hit[0]]
        score += lp + emissions[k, emit_class[b]]
    return float(score)
