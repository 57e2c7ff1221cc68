"""Causal consistency between attribute labels and learned representations.

Vector observations are generated from causally related discrete labels via
a frozen random MLP, two attribute predictors are trained on them, and the
penultimate-layer representations are checked for whether a causal-discovery
method infers the same relation between them as the one that generated the
labels. Consistency is the fraction of disjoint observation subsets whose
inferred relation matches the true label, averaged over the last K epochs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import AdamW, Tape, Tensor, backward
from .model import mlp_apply, mlp_init

__all__ = [
    "ObservationModel",
    "AttributePredictor",
    "ConsistencyReport",
    "generate_observations",
    "train_attribute_predictors",
    "causal_consistency",
    "save_consistency_csv",
]


class ObservationModel:
    """Frozen random MLP g: (one-hot a_x || one-hot a_y || noise) -> R^D."""

    def __init__(self, arity: int, rng: np.random.Generator, noise_dim: int = 8, out_dim: int = 32, hidden: int = 64, noise_scale: float = 0.8):
        self.arity = arity
        self.noise_dim = noise_dim
        self.out_dim = out_dim
        self.noise_scale = noise_scale
        in_dim = 2 * arity + noise_dim
        self.w1 = rng.normal(0.0, np.sqrt(2.0 / (in_dim + hidden)), (in_dim, hidden))
        self.b1 = rng.normal(0.0, 0.1, hidden)
        self.w2 = rng.normal(0.0, np.sqrt(2.0 / (hidden + out_dim)), (hidden, out_dim))
        self.b2 = rng.normal(0.0, 0.1, out_dim)

    def apply(self, pairs: np.ndarray, eps: np.ndarray) -> np.ndarray:
        """Deterministic map of (labels, noise) to raw observations."""
        pairs = np.asarray(pairs, dtype=np.int64)
        if np.any(pairs < 0) or np.any(pairs >= self.arity):
            raise ValueError("labels outside arity")
        n = len(pairs)
        one_hot = np.zeros((n, 2 * self.arity))
        one_hot[np.arange(n), pairs[:, 0]] = 1.0
        one_hot[np.arange(n), self.arity + pairs[:, 1]] = 1.0
        inp = np.concatenate([one_hot, eps], axis=1)
        h = np.tanh(inp @ self.w1 + self.b1)
        return np.tanh(h @ self.w2 + self.b2)


def generate_observations(pairs, model: ObservationModel, rng: np.random.Generator) -> np.ndarray:
    """One observation vector per label pair, standardized per dimension.

    Constant dimensions (possible when the noise scale is zero) are centered
    and left at zero instead of rejected.
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    eps = model.noise_scale * rng.standard_normal((len(pairs), model.noise_dim))
    raw = model.apply(pairs, eps)
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0)
    return (raw - mu) / np.where(sd > 1e-12, sd, 1.0)


class AttributePredictor:
    """Classifier D -> r -> arity whose penultimate activations (dim r) are
    the representation handed to the causal-discovery methods."""

    def __init__(self, in_dim: int, arity: int, rng: np.random.Generator, rep_dim: int = 8):
        self.in_dim, self.arity, self.rep_dim = in_dim, arity, rep_dim
        self.layers = mlp_init([in_dim, rep_dim, arity], rng)

    def tensors(self):
        return [t for w, b in self.layers for t in (w, b)]

    def representations(self, obs: np.ndarray) -> np.ndarray:
        (w1, b1), _ = self.layers
        return np.tanh(obs @ w1.values + b1.values)

    def logits(self, obs: Tensor) -> Tensor:
        return mlp_apply(self.layers, obs)

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(Tensor(obs)).values, axis=1)


@dataclass
class ConsistencyReport:
    mean: float
    std: float
    per_epoch: list
    subset_count: int
    subset_size: int
    graph: str = ""
    method: str = ""
    # final-epoch validation accuracy of the weaker attribute predictor,
    # when the caller has it (defines "converged": val_acc >= 0.95)
    val_acc: float = float("nan")


def train_attribute_predictors(observations: np.ndarray, pairs, epochs: int = 50, seed: int = 0, batch_size: int = 64, lr: float = 5e-4, weight_decay: float = 5e-4):
    """Train independent predictors for a_x and a_y on an 80/20 split.

    Returns (predictor_x, predictor_y, snapshots): one snapshot per epoch
    holding both predictors' representations of every observation (in input
    order), the train/validation index split, and validation accuracies.
    """
    observations = np.asarray(observations, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64)
    n = len(observations)
    if n < 10:
        raise ValueError("need at least 10 observations")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    split = int(0.8 * n)
    tr, va = perm[:split], perm[split:]
    arity = int(pairs.max()) + 1
    preds = [
        AttributePredictor(observations.shape[1], arity, rng),
        AttributePredictor(observations.shape[1], arity, rng),
    ]
    opts = [AdamW(p.tensors(), lr=lr, weight_decay=weight_decay) for p in preds]

    snapshots = []
    for epoch in range(epochs):
        order = rng.permutation(tr)
        for start in range(0, len(order) - 1, batch_size):
            idx = order[start : start + batch_size]
            if len(idx) < 2:
                continue
            for side, (pred, opt) in enumerate(zip(preds, opts)):
                with Tape() as tape:
                    loss = E.softmax_cross_entropy(
                        pred.logits(Tensor(observations[idx])), pairs[idx, side]
                    )
                if not np.isfinite(loss.values):
                    raise E.NumericError(f"predictor {side} diverged at epoch {epoch}")
                opt.zero_grad()
                backward(tape, loss)
                opt.step()
        snapshots.append(
            {
                "epoch": epoch,
                "reps_x": preds[0].representations(observations),
                "reps_y": preds[1].representations(observations),
                "val_acc_x": float(np.mean(preds[0].predict(observations[va]) == pairs[va, 0])),
                "val_acc_y": float(np.mean(preds[1].predict(observations[va]) == pairs[va, 1])),
                "train_idx": tr,
                "val_idx": va,
            }
        )
    return preds[0], preds[1], snapshots


def _safe_standardize(mat: np.ndarray) -> np.ndarray:
    mu = mat.mean(axis=0)
    sd = mat.std(axis=0)
    return (mat - mu) / np.where(sd > 1e-12, sd, 1.0)


def causal_consistency(snapshots, true_label: int, infer, subset_size: int = 100, last_k: int = 10, indices=None, graph: str = "", method: str = "") -> ConsistencyReport:
    """Fraction of disjoint subsets whose inferred relation matches the true
    label, per snapshot, summarized as mean +/- std over the last K snapshots.

    ``infer`` maps two standardized (subset_size, r) matrices to a label in
    {0, 1, 2}. ``indices`` restricts the evaluation to a subset of the
    observations (e.g. the validation split).
    """
    if not snapshots:
        raise ValueError("no snapshots")
    n = len(snapshots[0]["reps_x"]) if indices is None else len(indices)
    subset_count = n // subset_size
    if subset_count < 2:
        raise ValueError("need at least 2 disjoint subsets")
    per_epoch = []
    for snap in snapshots:
        rx, ry = snap["reps_x"], snap["reps_y"]
        if indices is not None:
            rx, ry = rx[indices], ry[indices]
        hits = 0
        for s in range(subset_count):
            sl = slice(s * subset_size, (s + 1) * subset_size)
            x = _safe_standardize(rx[sl])
            y = _safe_standardize(ry[sl])
            hits += int(infer(x, y) == true_label)
        per_epoch.append(hits / subset_count)
    tail = per_epoch[-last_k:]
    return ConsistencyReport(
        mean=float(np.mean(tail)),
        std=float(np.std(tail, ddof=1)) if len(tail) > 1 else 0.0,
        per_epoch=per_epoch,
        subset_count=subset_count,
        subset_size=subset_size,
        graph=graph,
        method=method,
    )


def save_consistency_csv(path, reports: list) -> None:
    """Rows (graph, method, epoch, consistency) for external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph", "method", "epoch", "consistency"])
        for rep in reports:
            for epoch, value in enumerate(rep.per_epoch):
                writer.writerow([rep.graph, rep.method, epoch, f"{value:.6f}"])
