"""
Bar-position observation model: one 1-D Gaussian mixture per
(rhythmic pattern, cycle bin), fitted by expectation-maximization on frames
aligned to annotated cycles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .model import AnnotationSequence, NoveltySignal, TalaSpec

VARIANCE_FLOOR = 1e-3
_LOG_2PI = np.log(2 * np.pi)
SCHEMA_VERSION = 1


def fit_gmm_1d(x, n_components: int = 2, max_iter: int = 50, tol: float = 1e-6,
               var_floor: float = VARIANCE_FLOOR) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fit a 1-D Gaussian mixture with EM.

    Initialised by splitting the sorted data into ``n_components`` equal
    quantile groups. Stops after ``max_iter`` iterations or once the mean
    log-likelihood improves by less than ``tol``. Falls back to a single
    Gaussian when there are fewer samples than components.

    Returns
    -------
    weights, means, variances : ndarray
        Each of length ``n_components``; unused components carry weight 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    weights = np.zeros(n_components)
    means = np.zeros(n_components)
    variances = np.full(n_components, var_floor)
    if len(x) == 0:
        weights[0] = 1.0
        return weights, means, variances
    if len(x) < n_components or n_components == 1:
        weights[0] = 1.0
        means[:] = x.mean()
        variances[:] = max(x.var(), var_floor)
        return weights, means, variances

    groups = np.array_split(np.sort(x), n_components)
    weights = np.array([len(g) for g in groups], dtype=float) / len(x)
    means = np.array([g.mean() for g in groups])
    variances = np.array([max(g.var(), var_floor) for g in groups])

    prev = -np.inf
    for _ in range(max_iter):
        log_comp = _component_log_pdf(x, weights, means, variances)
        log_norm = logsumexp(log_comp, axis=1, keepdims=True)
        ll = float(np.mean(log_norm))
        resp = np.exp(log_comp - log_norm)
        nk = resp.sum(axis=0)
        alive = nk > 1e-12
        weights = nk / nk.sum()
        means = np.where(alive, (resp * x[:, None]).sum(axis=0) / np.maximum(nk, 1e-300), means)
        var = (resp * (x[:, None] - means) ** 2).sum(axis=0) / np.maximum(nk, 1e-300)
        variances = np.maximum(np.where(alive, var, var_floor), var_floor)
        if abs(ll - prev) < tol:
            break
        prev = ll
    return weights, means, variances


def _component_log_pdf(x, weights, means, variances):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    x = np.asarray(x, dtype=float)[:, None]
    return logw - 0.5 * (_LOG_2PI + np.log(variances) + (x - means) ** 2 / variances)


def mixture_log_pdf(x, weights, means, variances) -> np.ndarray:
    """``log sum_j w_j N(x; mu_j, var_j)`` evaluated element-wise."""
    return logsumexp(_component_log_pdf(np.atleast_1d(x), weights, means, variances), axis=1)


@dataclass(frozen=True)
class ObservationModel:
    """
    Gaussian mixtures indexed by ``[pattern, bin, component]``.

    A state at integer position ``p`` of a cycle with ``n`` positions uses
    bin ``p * bins_per_cycle // n``.
    """

    bins_per_cycle: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "variances"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 3 or arr.shape[1] != self.bins_per_cycle:
                raise ValueError(f"{name} must have shape (patterns, {self.bins_per_cycle}, components)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.allclose(self.weights.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def num_patterns(self) -> int:
        return self.weights.shape[0]

    def log_density_table(self, values) -> np.ndarray:
        """``K x (patterns * bins)`` log densities, column ``r * bins + bin``."""
        v = np.asarray(values, dtype=float)
        R, nb, C = self.weights.shape
        w = self.weights.reshape(R * nb, C)
        m = self.means.reshape(R * nb, C)
        var = self.variances.reshape(R * nb, C)
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        comp = logw[None] - 0.5 * (_LOG_2PI + np.log(var)[None] + (v[:, None, None] - m[None]) ** 2 / var[None])
        return logsumexp(comp, axis=2)

    def log_prob(self, pattern: int, bin_index: int, value: float) -> float:
        return float(mixture_log_pdf(value, self.weights[pattern, bin_index],
                                     self.means[pattern, bin_index],
                                     self.variances[pattern, bin_index])[0])

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": "bar_position_gmm",
            "bins_per_cycle": int(self.bins_per_cycle),
            "num_patterns": int(self.num_patterns),
            "patterns": [
                [{"weights": self.weights[r, b].tolist(),
                  "means": self.means[r, b].tolist(),
                  "variances": self.variances[r, b].tolist()}
                 for b in range(self.bins_per_cycle)]
                for r in range(self.num_patterns)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ObservationModel":
        if doc.get("version") != SCHEMA_VERSION or doc.get("kind") != "bar_position_gmm":
            raise ValueError("unsupported observation model document")
        pats = doc["patterns"]
        arrs = {k: np.array([[mix[k] for mix in pat] for pat in pats], dtype=float)
                for k in ("weights", "means", "variances")}
        return cls(int(doc["bins_per_cycle"]), arrs["weights"], arrs["means"], arrs["variances"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ObservationModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def cycle_bins(nov: NoveltySignal, ann: AnnotationSequence, bins_per_cycle: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Cycle bin and cycle number of every frame inside a complete sama-to-sama cycle.

    Frames outside complete cycles get bin -1.
    """
    samas = ann.sama_times
    t = nov.grid.times()
    bins = np.full(len(t), -1, dtype=np.int64)
    cycle = np.full(len(t), -1, dtype=np.int64)
    if len(samas) < 2:
        return bins, cycle
    # frames that sit on an annotation belong to the bin it opens, despite round-off
    c = np.searchsorted(samas, t + 1e-9, side="right") - 1
    inside = (c >= 0) & (c < len(samas) - 1)
    start = samas[np.clip(c, 0, len(samas) - 2)]
    end = samas[np.clip(c + 1, 1, len(samas) - 1)]
    phase = (t - start) / (end - start)
    b = np.clip(np.floor(phase * bins_per_cycle + 1e-9).astype(np.int64), 0, bins_per_cycle - 1)
    bins[inside] = b[inside]
    cycle[inside] = c[inside]
    return bins, cycle


def fit_observation_model(training: Sequence[tuple[NoveltySignal, AnnotationSequence]], tala: TalaSpec,
                          bins_per_cycle: int | None = None, components: int = 2,
                          pattern_labels: Sequence[Sequence[int]] | None = None,
                          var_floor: float = VARIANCE_FLOOR) -> ObservationModel:
    """
    Fit one mixture per cycle bin from novelty curves and their annotations.

    Parameters
    ----------
    training : list of (NoveltySignal, AnnotationSequence)
        Every pair must contain at least one complete cycle.
    bins_per_cycle : int, optional
        Defaults to ``16 * beats_per_cycle``.
    pattern_labels : list of int sequences, optional
        Pattern index of each complete cycle, per track. Without labels a
        single pattern is fitted.
    """
    nb = 16 * tala.beats_per_cycle if bins_per_cycle is None else int(bins_per_cycle)
    if not training:
        raise ValueError("no training data")
    values, bins, pats = [], [], []
    for i, (nov, ann) in enumerate(training):
        if ann.tala.beats_per_cycle != tala.beats_per_cycle:
            raise ValueError(f"track {i}: tala {ann.tala.name} does not match {tala.name}")
        b, c = cycle_bins(nov, ann, nb)
        if not np.any(b >= 0):
            raise ValueError(f"track {i} contains no complete cycle")
        keep = b >= 0
        values.append(nov.values[keep])
        bins.append(b[keep])
        if pattern_labels is None:
            pats.append(np.zeros(keep.sum(), dtype=np.int64))
        else:
            labels = np.asarray(pattern_labels[i], dtype=np.int64)
            pats.append(labels[c[keep]])
    values, bins, pats = np.concatenate(values), np.concatenate(bins), np.concatenate(pats)
    R = int(pats.max()) + 1
    W = np.zeros((R, nb, components))
    M = np.zeros((R, nb, components))
    V = np.full((R, nb, components), var_floor)
    for r in range(R):
        pooled = values[pats == r]
        for b in range(nb):
            x = values[(pats == r) & (bins == b)]
            if len(x) == 0:
                x = pooled if len(pooled) else values
                w, m, v = fit_gmm_1d(x, 1, var_floor=var_floor)
            else:
                w, m, v = fit_gmm_1d(x, components, var_floor=var_floor)
            W[r, b], M[r, b], V[r, b] = w, m, v
    return ObservationModel(nb, W, M, V)
