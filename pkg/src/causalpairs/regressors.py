"""Differentiable closed-form ridge and kernel-ridge regression.

The multi-output ridge solution W = (Z^T Z + lam I)^{-1} Z^T T with
prediction Z W is the shared computational core of the causal-regression
branch, the kernel adversary, and the score-based baselines. Everything here
is built from the engine primitives, so gradients flow through the solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import Tensor

__all__ = [
    "RidgeConfig",
    "poly_features",
    "KernelConfig",
    "median_bandwidth",
    "ridge_fit_predict",
    "ridge_mse",
    "batched_ridge_mse",
    "kernel_ridge_predict",
    "fusion_features",
]


@dataclass
class RidgeConfig:
    lam: float = 1e-3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("ridge regularization must be positive")


@dataclass
class KernelConfig:
    beta: float = 1e-3
    bandwidth: float | None = None  # None selects the median heuristic

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("kernel regularization must be positive")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("fixed bandwidth must be positive")


def poly_features(mat: np.ndarray, degree: int = 3) -> np.ndarray:
    """Columns of elementwise monomials [M, M^2, ..., M^degree].

    The regression-error direction scores regress over this fixed basis;
    plain column-standardized features make the closed-form fits blind to the
    quadratic-style function classes in both directions.
    """
    return np.concatenate([mat**k for k in range(1, degree + 1)], axis=1)


def median_bandwidth(z: np.ndarray) -> float:
    """Median pairwise Euclidean distance between rows, floored at 1e-6.

    Recomputed per batch but treated as a constant under differentiation.
    """
    sq = np.sum(z * z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.maximum(d2, 0.0, out=d2)
    iu = np.triu_indices(z.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return max(med, 1e-6)


def _as_tensor(a) -> Tensor:
    return a if isinstance(a, Tensor) else Tensor(a)


def ridge_fit_predict(z, t, lam: float):
    """Fit ridge weights of T on Z and predict; returns (prediction, weights).

    Z is (m, p), T is (m, q); both may be Tensors or arrays. Differentiable
    with respect to both.
    """
    z, t = _as_tensor(z), _as_tensor(t)
    if z.values.ndim != 2 or t.values.ndim != 2 or z.values.shape[0] < 2:
        raise E.ShapeError("ridge expects (m, p) and (m, q) with m >= 2")
    p = z.values.shape[1]
    zt = E.transpose_last(z)
    gram = E.add(E.matmul(zt, z), Tensor(lam * np.eye(p)))
    weights = E.spd_solve(gram, E.matmul(zt, t))
    return E.matmul(z, weights), weights


def ridge_mse(z, t, lam: float) -> Tensor:
    """Mean squared residual norm (1/m) sum_j ||t_j - pred_j||^2."""
    z, t = _as_tensor(z), _as_tensor(t)
    pred, _ = ridge_fit_predict(z, t, lam)
    m = z.values.shape[0]
    return E.scale(E.frobenius_sq(E.sub(t, pred)), 1.0 / m)


def batched_ridge_mse(z, t, lam: float) -> Tensor:
    """Vector of per-sample ridge MSEs over stacked inputs.

    ``z`` is (n, m, p), ``t`` is (n, m, q); one closed-form fit per leading
    index, all solved in a single batched call.
    """
    z, t = _as_tensor(z), _as_tensor(t)
    if z.values.ndim != 3 or t.values.ndim != 3:
        raise E.ShapeError("batched ridge expects (n, m, p) and (n, m, q)")
    n, m, p = z.values.shape
    zt = E.transpose_last(z)
    gram = E.add(E.matmul(zt, z), Tensor(lam * np.eye(p)))
    weights = E.spd_solve(gram, E.matmul(zt, t))
    resid = E.sub(t, E.matmul(z, weights))
    return E.scale(E.sq_norm_lasttwo(resid), 1.0 / m)


def kernel_ridge_predict(zb, t, cfg: KernelConfig) -> Tensor:
    """RBF kernel-ridge prediction K (K + beta I)^{-1} T over batch rows."""
    zb, t = _as_tensor(zb), _as_tensor(t)
    n = zb.values.shape[0]
    if n < 2:
        raise E.ShapeError("kernel ridge needs at least 2 rows")
    bw = cfg.bandwidth if cfg.bandwidth is not None else median_bandwidth(zb.values)
    k = E.rbf_gram(zb, bw)
    coef = E.spd_solve(E.add(k, Tensor(cfg.beta * np.eye(n))), t)
    return E.matmul(k, coef)


def fusion_features(mse_xy, mse_yx) -> Tensor:
    """[mse_xy, mse_yx, min/max], with the ratio defined as 1 when both
    errors are below 1e-12."""
    a = E.reshape(_as_tensor(mse_xy), (1,))
    b = E.reshape(_as_tensor(mse_yx), (1,))
    return E.concat_cols(a, b, E.minmax_ratio(a, b))
