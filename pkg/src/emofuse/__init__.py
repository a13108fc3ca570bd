"""Ensemble pipeline for categorical audio emotion recognition.

Four scoring sub-systems (two multi-task feedforward nets on utterance
features, an attention-pooling recurrent net on frame features, a lexical
TF-IDF SVM) whose class scores are fused by an affine combiner trained to
minimize the multiclass cost of the log-likelihood ratio.
"""

__version__ = "0.1.0"

from emofuse.labels import EMOTION_CLASSES, GENDERS

__all__ = ["EMOTION_CLASSES", "GENDERS", "__version__"]
