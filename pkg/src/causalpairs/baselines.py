"""Score-based and supervised baseline methods for pairwise causal discovery.

Three unsupervised direction scores (RECI, ANM, BFit) share the convention
s > 0 means X causes Y and s < 0 means Y causes X; a validation-calibrated
threshold tau turns each score into a 3-class decision (|s| < tau means
unassociated). NCC is a supervised 3-class classifier over concatenated
pairs. All scorers regress over a fixed cubic monomial basis of the raw
features, since column-standardized inputs make plain linear fits blind to
the quadratic-style function classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import engine as E
from .datagen import FunctionClass, GenConfig, Sample, generate_epoch, substream
from .engine import AdamW, Tape, Tensor, backward
from .model import TrainConfig, mlp_apply, mlp_init
from .regressors import median_bandwidth, poly_features

__all__ = [
    "ScoreMethod",
    "ThresholdTable",
    "NCCParams",
    "reci_score",
    "anm_score",
    "bfit_score",
    "score_sample",
    "hsic",
    "calibrate_threshold",
    "classify_score",
    "ncc_init",
    "ncc_train",
    "ncc_predict",
    "ncc_predict_batch",
]


class ScoreMethod(Enum):
    ANM = "anm"
    BFIT = "bfit"
    RECI = "reci"


@dataclass
class ThresholdTable:
    """Per-method decision thresholds, always fit on validation data."""

    taus: dict = field(default_factory=dict)

    def __setitem__(self, method: ScoreMethod, tau: float):
        if tau < 0:
            raise ValueError("threshold must be nonnegative")
        self.taus[method] = float(tau)

    def __getitem__(self, method: ScoreMethod) -> float:
        return self.taus[method]


def _ridge_fit(features: np.ndarray, target: np.ndarray, lam: float):
    """Plain-numpy ridge fit; returns (prediction, residual)."""
    p = features.shape[1]
    w = np.linalg.solve(features.T @ features + lam * np.eye(p), features.T @ target)
    pred = features @ w
    return pred, target - pred


def reci_score(sample: Sample, lam_ridge: float = 1e-3) -> float:
    """Regression-error difference: MSE(Y predicting X) - MSE(X predicting Y)."""
    fx, fy = poly_features(sample.x), poly_features(sample.y)
    m = sample.m
    _, res_xy = _ridge_fit(fx, sample.y, lam_ridge)
    _, res_yx = _ridge_fit(fy, sample.x, lam_ridge)
    return float(np.sum(res_yx**2) - np.sum(res_xy**2)) / m


def hsic(a: np.ndarray, b: np.ndarray) -> float:
    """Biased V-statistic HSIC with RBF median-heuristic kernels.

    (1/m^2) tr(K H L H) for row-wise samples a, b with m matching rows.
    """
    if a.shape[0] != b.shape[0]:
        raise E.ShapeError("hsic requires matching row counts")
    m = a.shape[0]

    def gram(v):
        bw = median_bandwidth(v)
        sq = np.sum(v * v, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (v @ v.T), 0.0)
        return np.exp(-d2 / (2.0 * bw * bw))

    k, l = gram(a), gram(b)
    kc = k - k.mean(axis=0, keepdims=True)
    kc -= kc.mean(axis=1, keepdims=True)
    lc = l - l.mean(axis=0, keepdims=True)
    lc -= lc.mean(axis=1, keepdims=True)
    return float(np.sum(kc * lc)) / (m * m)


def anm_score(sample: Sample, lam_ridge: float = 1e-3) -> float:
    """Residual-independence difference: the direction whose regression
    residual is independent of the putative cause is the causal one.

    Residuals are computed out of sample (fit on the first half of the pairs,
    evaluate on the second); in-sample residuals inherit dependence on the
    regressor through the hat matrix, which at this feature count swamps the
    signal and inverts the score.

    The regression is linear in the raw coordinates: the additive-noise
    assumption only licenses the independence test when the mechanism is in
    the regressor's span, so a linear fit keeps the method honest (and near
    chance) on the nonlinear mechanism classes.
    """
    h = sample.m // 2
    if h < 2:
        raise E.ShapeError("anm_score needs at least 4 pairs")
    fx, fy = sample.x, sample.y

    def oos_residual(features, target):
        p = features.shape[1]
        w = np.linalg.solve(
            features[:h].T @ features[:h] + lam_ridge * np.eye(p),
            features[:h].T @ target[:h],
        )
        return target[h:] - features[h:] @ w

    res_xy = oos_residual(fx, sample.y)
    res_yx = oos_residual(fy, sample.x)
    return hsic(res_yx, sample.y[h:]) - hsic(res_xy, sample.x[h:])


def bfit_score(sample: Sample, lam_ridge: float = 1e-3) -> float:
    """Goodness-of-fit difference: R^2(X predicting Y) - R^2(Y predicting X),
    with R^2 computed per output column and averaged."""
    fx, fy = poly_features(sample.x), poly_features(sample.y)

    def r2(features, target):
        _, res = _ridge_fit(features, target, lam_ridge)
        sse = np.sum(res**2, axis=0)
        sst = np.sum((target - target.mean(axis=0)) ** 2, axis=0)
        return float(np.mean(1.0 - sse / np.maximum(sst, 1e-12)))

    return r2(fx, sample.y) - r2(fy, sample.x)


_SCORERS = {
    ScoreMethod.RECI: reci_score,
    ScoreMethod.ANM: anm_score,
    ScoreMethod.BFIT: bfit_score,
}


def score_sample(method: ScoreMethod, sample: Sample, lam_ridge: float = 1e-3) -> float:
    return _SCORERS[method](sample, lam_ridge)


def classify_score(s: float, tau: float) -> int:
    """0 (unassociated) if |s| < tau, else 1 if s > 0, else 2."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    if abs(s) < tau:
        return 0
    return 1 if s > 0 else 2


def calibrate_threshold(scores, labels=None, grid_size: int = 200, lam_ridge: float = 1e-3) -> float:
    """Pick tau maximizing class-balanced 3-class accuracy over a grid from
    0 to the 99th percentile of |score|; ties resolve toward the smaller tau.

    Balancing over the label classes (rather than pooling) keeps tau from
    collapsing to zero when hard directional samples dominate the validation
    split: pooled accuracy will happily give up the unassociated class.

    Accepts either precomputed (scores, labels) or (method, validation
    samples), in which case the samples are scored first.
    """
    if isinstance(scores, ScoreMethod):
        method, samples = scores, labels
        labels = [s.label for s in samples]
        scores = [score_sample(method, s, lam_ridge) for s in samples]
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("threshold calibration needs at least two distinct labels")
    present = [lab for lab in (0, 1, 2) if np.any(labels == lab)]
    hi = float(np.percentile(np.abs(scores), 99))
    grid = np.linspace(0.0, hi, grid_size)
    best_tau, best_acc = 0.0, -1.0
    for tau in grid:
        preds = np.where(np.abs(scores) < tau, 0, np.where(scores > 0, 1, 2))
        acc = float(np.mean([np.mean(preds[labels == lab] == lab) for lab in present]))
        if acc > best_acc:
            best_tau, best_acc = float(tau), acc
    return best_tau


# ---------------------------------------------------------------------------
# NCC: supervised 3-class classification over concatenated pairs
# ---------------------------------------------------------------------------


class NCCParams:
    """Per-pair embedding MLP over [x_j || y_j], mean pooling, 3-class head.

    Activations are ReLU: the columns are standardized to mean zero, so an
    odd activation like tanh pools to nearly zero at initialization and the
    classifier never escapes chance level.
    """

    def __init__(self, d: int, embed, head):
        self.d = d
        self.embed = embed
        self.head = head

    def tensors(self):
        out = []
        for group in (self.embed, self.head):
            for w, b in group:
                out.extend((w, b))
        return out


def ncc_init(d: int, rng: np.random.Generator) -> NCCParams:
    return NCCParams(d, mlp_init([2 * d, 32, 32], rng), mlp_init([32, 32, 3], rng))


def _ncc_logits(params: NCCParams, xb: np.ndarray, yb: np.ndarray) -> Tensor:
    n, m, d = xb.shape
    if d != params.d:
        raise E.ShapeError(f"sample dim {d} != model dim {params.d}")
    flat = E.concat_cols(
        E.reshape(Tensor(xb), (n * m, d)), E.reshape(Tensor(yb), (n * m, d))
    )
    emb = mlp_apply(params.embed, flat, final_activation=True, activation=E.relu)
    pooled = E.row_mean_pool(E.reshape(emb, (n, m, 32)))
    return mlp_apply(params.head, pooled, activation=E.relu)


def ncc_predict(params: NCCParams, sample: Sample) -> int:
    logits = _ncc_logits(params, sample.x[None], sample.y[None])
    return int(np.argmax(logits.values[0]))


def ncc_predict_batch(params: NCCParams, samples) -> np.ndarray:
    xb = np.stack([s.x for s in samples])
    yb = np.stack([s.y for s in samples])
    return np.argmax(_ncc_logits(params, xb, yb).values, axis=1)


def ncc_train(cfg: TrainConfig, rng: np.random.Generator | None = None, exclude: FunctionClass | None = None):
    """Train NCC with the same AdamW schedule as the main model; returns
    (params, per-epoch metrics with mean loss and held-out accuracy)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng(substream(cfg.seed, 11))
    params = ncc_init(cfg.gen.dim, init_rng)
    opt = AdamW(params.tensors(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    val_rng = np.random.default_rng(substream(cfg.seed, 12))
    val = list(generate_epoch(cfg.gen, val_rng, n=cfg.val_samples, exclude=exclude))
    val_labels = np.array([s.label for s in val])

    metrics = []
    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(substream(cfg.seed, 2000 + epoch))
        samples = list(generate_epoch(cfg.gen, epoch_rng, n=cfg.samples_per_epoch, exclude=exclude))
        loss_sum, steps = 0.0, 0
        for start in range(0, len(samples) - cfg.batch_size + 1, cfg.batch_size):
            batch = samples[start : start + cfg.batch_size]
            xb = np.stack([s.x for s in batch])
            yb = np.stack([s.y for s in batch])
            labels = np.array([s.label for s in batch])
            with Tape() as tape:
                loss = E.softmax_cross_entropy(_ncc_logits(params, xb, yb), labels)
            if not np.isfinite(loss.values):
                raise E.NumericError(f"NCC training diverged at epoch {epoch}, step {steps}")
            opt.zero_grad()
            backward(tape, loss)
            opt.step()
            loss_sum += float(loss.values)
            steps += 1
        preds = ncc_predict_batch(params, val)
        metrics.append(
            {
                "epoch": epoch,
                "loss": loss_sum / steps,
                "val_acc": float(np.mean(preds == val_labels)),
            }
        )
    return params, metrics
