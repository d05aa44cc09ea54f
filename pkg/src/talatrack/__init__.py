"""
Meter tracking for Carnatic tala cycles: novelty features, classical pulse
trackers, a bar-pointer model with Viterbi and particle-filter inference, an
activation post-processor, beat evaluation metrics, training losses and
dataset utilities.
"""

from .model import (TALAS, ActivationPair, AnnotationSequence, BeatList, FrameGrid, NoveltySignal,
                    TalaSpec, get_tala)

__version__ = "0.1.0"

__all__ = ["TALAS", "ActivationPair", "AnnotationSequence", "BeatList", "FrameGrid", "NoveltySignal",
           "TalaSpec", "get_tala", "__version__"]
