"""Bias-variance decompositions of an ensemble's predictions.

Several models trained on different data predict the same examples. Their
disagreement is the variance term; the remaining loss is bias.
"""
import numpy as np

from causalmi.features import PredictionBatch, ce_decompose, mse_decompose

rng = np.random.default_rng(0)
n_models, n_examples, n_classes = 5, 200, 10
labels = np.eye(n_classes)[rng.integers(0, n_classes, n_examples)]

for spread in (0.1, 1.0, 3.0):
    logits = 2.0 * labels + rng.normal(scale=spread, size=(n_models, n_examples, n_classes))
    p = np.exp(logits)
    p /= p.sum(axis=2, keepdims=True)
    ce = ce_decompose(PredictionBatch(p, labels))
    mse = mse_decompose(PredictionBatch(p, labels, kind="real"))
    print(f"spread {spread:>3}: CE loss {ce.loss:.3f} = bias {ce.bias:.3f} + variance {ce.variance:.3f}; "
          f"MSE loss {mse.loss:.3f}, variance {mse.variance:.3f}")
