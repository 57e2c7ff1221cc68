"""Three-class neural causal inference model.

A shared encoder maps both members of a representation pair into a common
space, a supervised encoder pools the pair-wise embeddings into one feature
vector per sample, a closed-form ridge branch compares regression errors in
the two directions, a kernel-ridge adversary penalizes function-class
information in the pooled feature, and a fusion classifier predicts one of
three relations: 0 (unassociated), 1 (X causes Y), 2 (Y causes X).

Total training loss: classification + regression + lam_adv * adversary.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .datagen import FunctionClass, GenConfig, Sample, generate_epoch, substream
from .engine import AdamW, Tape, Tensor, backward
from .regressors import KernelConfig, batched_ridge_mse, kernel_ridge_predict

__all__ = [
    "TrainConfig",
    "ModelParams",
    "Prediction",
    "init_params",
    "encode",
    "forward",
    "losses",
    "train",
    "predict",
    "predict_batch",
    "save_checkpoint",
    "load_checkpoint",
    "mlp_init",
    "mlp_apply",
]


@dataclass
class TrainConfig:
    lam_ridge: float = 1e-3
    beta_adv: float = 1e-3
    adv_bandwidth: float | None = None  # None selects the median heuristic
    lam_adv: float = 1.0  # 0 disables the adversary
    lr: float = 5e-4
    weight_decay: float = 5e-4
    epochs: int = 50
    batch_size: int = 32
    samples_per_epoch: int = 1000
    val_samples: int = 120
    seed: int = 0
    gen: GenConfig = field(default_factory=GenConfig)

    def __post_init__(self):
        if min(self.lam_ridge, self.beta_adv, self.lr, self.weight_decay) <= 0:
            raise ValueError("lam_ridge, beta_adv, lr, weight_decay must be positive")
        if self.lam_adv < 0:
            raise ValueError("lam_adv must be >= 0")
        if self.epochs < 1 or self.batch_size < 2 or self.samples_per_epoch < self.batch_size:
            raise ValueError("bad schedule configuration")


def mlp_init(dims, rng: np.random.Generator):
    """Xavier-scaled weights and zero biases for a stack of dense layers."""
    layers = []
    for i in range(len(dims) - 1):
        scale = np.sqrt(2.0 / (dims[i] + dims[i + 1]))
        w = Tensor(rng.normal(0.0, scale, size=(dims[i], dims[i + 1])), requires_grad=True)
        b = Tensor(np.zeros(dims[i + 1]), requires_grad=True)
        layers.append((w, b))
    return layers


def mlp_apply(layers, x: Tensor, final_activation: bool = False, activation=E.tanh) -> Tensor:
    h = x
    for i, (w, b) in enumerate(layers):
        h = E.add(E.matmul(h, w), b)
        if i < len(layers) - 1 or final_activation:
            h = activation(h)
    return h


class ModelParams:
    """All trainable weights plus the architecture dimensions."""

    def __init__(self, d: int, h: int, z: int, shared, supervised, classifier):
        self.d, self.h, self.z = d, h, z
        self.shared = shared
        self.supervised = supervised
        self.classifier = classifier

    def tensors(self):
        out = []
        for group in (self.shared, self.supervised, self.classifier):
            for w, b in group:
                out.extend((w, b))
        return out


@dataclass
class Prediction:
    logits: np.ndarray
    label: int


def init_params(d: int, rng: np.random.Generator, h: int = 32, z: int = 32) -> ModelParams:
    shared = mlp_init([d, 32, h], rng)
    supervised = mlp_init([2 * h, 64, z], rng)
    classifier = mlp_init([z + 3, 32, 3], rng)
    return ModelParams(d, h, z, shared, supervised, classifier)


def _forward_batch(params: ModelParams, xb: np.ndarray, yb: np.ndarray, lam: float):
    """Shared forward over a stacked batch (n, m, d). Returns the logits,
    both per-sample regression errors, and the pooled feature."""
    n, m, d = xb.shape
    if d != params.d:
        raise E.ShapeError(f"sample dim {d} != model dim {params.d}")
    flat_x = E.reshape(Tensor(xb), (n * m, d))
    flat_y = E.reshape(Tensor(yb), (n * m, d))
    zx = mlp_apply(params.shared, flat_x, final_activation=True)
    zy = mlp_apply(params.shared, flat_y, final_activation=True)

    pooled_in = E.concat_cols(zx, zy)
    enc = mlp_apply(params.supervised, pooled_in)
    z = E.row_mean_pool(E.reshape(enc, (n, m, params.z)))

    zx3 = E.reshape(zx, (n, m, params.h))
    zy3 = E.reshape(zy, (n, m, params.h))
    mse_xy = batched_ridge_mse(zx3, Tensor(yb), lam)
    mse_yx = batched_ridge_mse(zy3, Tensor(xb), lam)
    fusion = E.stack_cols(mse_xy, mse_yx, E.minmax_ratio(mse_xy, mse_yx))

    logits = mlp_apply(params.classifier, E.concat_cols(z, fusion))
    return logits, mse_xy, mse_yx, fusion, z, (zx, zy)


def encode(params: ModelParams, sample: Sample):
    """Per-pair embeddings (Zx, Zy) and the pooled feature z of one sample."""
    flat_x = Tensor(sample.x)
    flat_y = Tensor(sample.y)
    zx = mlp_apply(params.shared, flat_x, final_activation=True)
    zy = mlp_apply(params.shared, flat_y, final_activation=True)
    enc = mlp_apply(params.supervised, E.concat_cols(zx, zy))
    z = E.mean_over_rows(enc)
    return zx, zy, z


def forward(params: ModelParams, sample: Sample, lam: float = 1e-3):
    """Single-sample forward pass; returns (logits, fusion features, z)."""
    logits, _, _, fusion, z, _ = _forward_batch(
        params, sample.x[None, :, :], sample.y[None, :, :], lam
    )
    return E.reshape(logits, (3,)), E.reshape(fusion, (3,)), E.reshape(z, (params.z,))


def losses(params: ModelParams, batch: list[Sample], cfg: TrainConfig):
    """Classification, regression, and adversary losses over a minibatch.

    Returns (L_C, L_R, L_A, total) as engine Tensors. The adversary needs a
    gram matrix, so the batch must hold at least two samples.
    """
    if len(batch) < 2:
        raise ValueError("losses needs a batch of at least 2 samples")
    xb = np.stack([s.x for s in batch])
    yb = np.stack([s.y for s in batch])
    labels = np.array([s.label for s in batch])
    yf = np.stack([s.func_one_hot() for s in batch])

    logits, mse_xy, mse_yx, _, z, _ = _forward_batch(params, xb, yb, cfg.lam_ridge)
    l_c = E.softmax_cross_entropy(logits, labels)
    l_r = E.mean_all(E.add(mse_xy, mse_yx))
    yf_t = Tensor(yf)
    pred = kernel_ridge_predict(z, yf_t, KernelConfig(beta=cfg.beta_adv, bandwidth=cfg.adv_bandwidth))
    l_a = E.scale(E.frobenius_sq(E.sub(yf_t, pred)), -1.0 / len(batch))
    total = E.add(E.add(l_c, l_r), E.scale(l_a, cfg.lam_adv))
    return l_c, l_r, l_a, total


def predict(params: ModelParams, sample: Sample, lam: float = 1e-3) -> Prediction:
    logits, _, _ = forward(params, sample, lam)
    return Prediction(logits=logits.values.copy(), label=int(np.argmax(logits.values)))


def predict_batch(params: ModelParams, samples: list[Sample], lam: float = 1e-3) -> np.ndarray:
    """Vectorized argmax labels for equally sized samples."""
    xb = np.stack([s.x for s in samples])
    yb = np.stack([s.y for s in samples])
    logits, *_ = _forward_batch(params, xb, yb, lam)
    return np.argmax(logits.values, axis=1)


def train(cfg: TrainConfig, rng: np.random.Generator | None = None, exclude: FunctionClass | None = None):
    """Train on freshly generated data; returns (params, per-epoch metrics).

    Each epoch draws ``samples_per_epoch`` new samples (optionally excluding
    one function class), takes AdamW steps over minibatches, and evaluates
    three-class accuracy on a fixed held-out stream.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    init_rng = np.random.default_rng(substream(cfg.seed, 1))
    params = init_params(cfg.gen.dim, init_rng)
    opt = AdamW(params.tensors(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    val_rng = np.random.default_rng(substream(cfg.seed, 2))
    val = list(generate_epoch(cfg.gen, val_rng, n=cfg.val_samples, exclude=exclude))
    val_labels = np.array([s.label for s in val])

    metrics = []
    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(substream(cfg.seed, 1000 + epoch))
        samples = list(generate_epoch(cfg.gen, epoch_rng, n=cfg.samples_per_epoch, exclude=exclude))
        if exclude is not None and any(s.func is exclude for s in samples):
            raise AssertionError("excluded function class leaked into training data")
        sums = np.zeros(4)
        steps = 0
        for start in range(0, len(samples) - cfg.batch_size + 1, cfg.batch_size):
            batch = samples[start : start + cfg.batch_size]
            with Tape() as tape:
                l_c, l_r, l_a, total = losses(params, batch, cfg)
            if not np.isfinite(total.values):
                raise E.NumericError(
                    f"training diverged at epoch {epoch}, step {steps}: "
                    f"L_C={float(l_c.values):.4g} L_R={float(l_r.values):.4g} L_A={float(l_a.values):.4g}"
                )
            opt.zero_grad()
            backward(tape, total)
            opt.step()
            sums += [float(l_c.values), float(l_r.values), float(l_a.values), float(total.values)]
            steps += 1
        preds = predict_batch(params, val, cfg.lam_ridge)
        metrics.append(
            {
                "epoch": epoch,
                "L_C": sums[0] / steps,
                "L_R": sums[1] / steps,
                "L_A": sums[2] / steps,
                "total": sums[3] / steps,
                "val_acc": float(np.mean(preds == val_labels)),
            }
        )
    return params, metrics


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams, hyper: dict | None = None) -> None:
    """JSON header (shapes, hyperparameters) followed by a float64-LE blob."""
    tensors = params.tensors()
    header = {
        "d": params.d,
        "h": params.h,
        "z": params.z,
        "shapes": [list(t.values.shape) for t in tensors],
        "hyper": hyper or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"NCIMODL1")
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for t in tensors:
            fh.write(t.values.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != b"NCIMODL1":
            raise ValueError("not a model checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params = init_params(header["d"], np.random.default_rng(0), h=header["h"], z=header["z"])
        for t, shape in zip(params.tensors(), header["shapes"]):
            n = int(np.prod(shape))
            t.values = np.frombuffer(fh.read(n * 8), dtype="<f8").reshape(shape).copy()
    return params, header["hyper"]
