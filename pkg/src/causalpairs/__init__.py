"""Causal discovery for high-dimensional representation pairs.

A numpy-based library providing:

- a minimal reverse-mode differentiation engine with differentiable
  SPD solves (``engine``),
- a deterministic synthetic generator of causally related
  representation pairs (``datagen``),
- differentiable closed-form ridge / kernel-ridge regressors
  (``regressors``),
- a three-class neural causal inference model with an adversarial
  debiasing branch (``model``),
- score-based and supervised baselines (``baselines``),
- discrete attribute-label generation with known causal structure
  (``labels``),
- the causal-consistency evaluation pipeline (``consistency``),
- experiment orchestration and table emission (``harness``).
"""

from . import baselines, consistency, datagen, engine, harness, labels, model, regressors

__all__ = [
    "baselines",
    "consistency",
    "datagen",
    "engine",
    "harness",
    "labels",
    "model",
    "regressors",
]
