"""Minimal reverse-mode differentiation engine over dense float64 arrays.

Everything the trainable models in this package need: a small catalog of
differentiable primitives, a tape that records them, a backward pass with a
deterministic reduction order, a differentiable symmetric-positive-definite
solve, a finite-difference gradient checker, and an AdamW optimizer.

Ops record onto the innermost active :class:`Tape` whenever any input has
``requires_grad`` set. Reductions use numpy's fixed left-to-right summation,
so two backward passes over the same tape produce bitwise-identical
gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericError",
    "NotPositiveDefiniteError",
    "apply_primitive",
    "backward",
    "grad_check",
    "AdamW",
    "adamw_step",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "neg",
    "relu",
    "tanh",
    "concat_cols",
    "stack_cols",
    "reshape",
    "transpose_last",
    "mean_over_rows",
    "row_mean_pool",
    "mean_all",
    "softmax_cross_entropy",
    "frobenius_sq",
    "sq_norm_lasttwo",
    "rbf_gram",
    "spd_solve",
    "minmax_ratio",
]


class ShapeError(ValueError):
    """Input shapes do not conform to the primitive's contract."""


class NumericError(ArithmeticError):
    """Non-finite values or a numerically failed operation."""


class NotPositiveDefiniteError(NumericError):
    """Cholesky factorization failed; the caller must add a ridge term."""


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape

    def reset_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications, used by :func:`backward`.

    Tapes nest as context managers; ops record on the innermost active one.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.remove(self)
        return False


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(inputs, out_values, backward_fn) -> Tensor:
    tape = _active_tape()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_values, requires_grad=needs)
    if tape is not None and needs:
        tape.nodes.append(_Node(tuple(inputs), out, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate gradients of a scalar ``loss`` onto every leaf on ``tape``.

    Repeated calls without resetting ``grad`` accumulate. Raises
    ``ShapeError`` if the loss is not a scalar.
    """
    if loss.values.size != 1:
        raise ShapeError("backward requires a scalar loss")
    produced = {id(n.output) for n in tape.nodes}
    if id(loss) not in produced:
        if loss.requires_grad:
            seed = np.ones_like(loss.values)
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, in_grads):
            if ig is None or not t.requires_grad:
                continue
            if id(t) in produced:
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
            else:
                t.grad = ig if t.grad is None else t.grad + ig


def _check_finite(*tensors):
    for t in tensors:
        if not np.all(np.isfinite(t.values)):
            raise NumericError("non-finite input tensor")


# ---------------------------------------------------------------------------
# primitive catalog
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shapes {av.shape} x {bv.shape}")
    if av.ndim != bv.ndim or av.shape[:-2] != bv.shape[:-2]:
        raise ShapeError("matmul batch dims must match exactly")
    out = av @ bv

    def bwd(g):
        return (g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g)

    return _record((a, b), out, bwd)


def _broadcast_back(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (trailing-axes broadcast only)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _ewise_ok(a, b):
    try:
        np.broadcast_shapes(a.values.shape, b.values.shape)
    except ValueError:
        raise ShapeError(f"elementwise shapes {a.values.shape} vs {b.values.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _ewise_ok(a, b)
    out = a.values + b.values

    def bwd(g):
        return (_broadcast_back(g, a.values.shape), _broadcast_back(g, b.values.shape))

    return _record((a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _ewise_ok(a, b)
    out = a.values - b.values

    def bwd(g):
        return (_broadcast_back(g, a.values.shape), _broadcast_back(-g, b.values.shape))

    return _record((a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _ewise_ok(a, b)
    av, bv = a.values, b.values
    out = av * bv

    def bwd(g):
        return (_broadcast_back(g * bv, av.shape), _broadcast_back(g * av, bv.shape))

    return _record((a, b), out, bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    _ewise_ok(a, b)
    av, bv = a.values, b.values
    out = av / bv

    def bwd(g):
        return (
            _broadcast_back(g / bv, av.shape),
            _broadcast_back(-g * av / (bv * bv), bv.shape),
        )

    return _record((a, b), out, bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.values * c

    def bwd(g):
        return (g * c,)

    return _record((a,), out, bwd)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    out = np.where(mask, a.values, 0.0)

    def bwd(g):
        return (g * mask,)

    return _record((a,), out, bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _record((a,), out, bwd)


def concat_cols(*tensors: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    if not tensors:
        raise ShapeError("concat of nothing")
    lead = tensors[0].values.shape[:-1]
    if any(t.values.shape[:-1] != lead for t in tensors):
        raise ShapeError("concat-columns requires matching leading dims")
    out = np.concatenate([t.values for t in tensors], axis=-1)
    widths = [t.values.shape[-1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=-1))

    return _record(tensors, out, bwd)


def stack_cols(*tensors: Tensor) -> Tensor:
    """Stack equal-length vectors as the columns of a matrix."""
    n = tensors[0].values.shape
    if any(t.values.shape != n for t in tensors) or len(n) != 1:
        raise ShapeError("stack_cols expects equal-length vectors")
    out = np.stack([t.values for t in tensors], axis=1)

    def bwd(g):
        return tuple(g[:, i] for i in range(len(tensors)))

    return _record(tensors, out, bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.values.shape
    out = a.values.reshape(shape)

    def bwd(g):
        return (g.reshape(old),)

    return _record((a,), out, bwd)


def transpose_last(a: Tensor) -> Tensor:
    """Swap the last two axes (batched matrix transpose)."""
    if a.values.ndim < 2:
        raise ShapeError("transpose needs >= 2 dims")
    out = np.swapaxes(a.values, -1, -2)

    def bwd(g):
        return (np.swapaxes(g, -1, -2),)

    return _record((a,), out, bwd)


def mean_over_rows(a: Tensor) -> Tensor:
    """Column-wise mean: average over axis 0."""
    if a.values.ndim < 1:
        raise ShapeError("mean-over-rows needs at least 1 dim")
    m = a.values.shape[0]
    out = a.values.mean(axis=0)

    def bwd(g):
        return (np.broadcast_to(g / m, a.values.shape).copy(),)

    return _record((a,), out, bwd)


def row_mean_pool(a: Tensor) -> Tensor:
    """Pool over the second-to-last axis: (..., m, k) -> (..., k)."""
    if a.values.ndim < 2:
        raise ShapeError("row-mean-pool needs >= 2 dims")
    m = a.values.shape[-2]
    out = a.values.mean(axis=-2)

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g / m, -2), a.values.shape).copy(),)

    return _record((a,), out, bwd)


def mean_all(a: Tensor) -> Tensor:
    """Mean over all entries, producing a scalar."""
    n = a.values.size
    out = np.asarray(a.values.mean())

    def bwd(g):
        return (np.full(a.values.shape, float(g) / n),)

    return _record((a,), out, bwd)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy between row-wise softmax(logits) and int labels."""
    lv = logits.values
    if lv.ndim != 2:
        raise ShapeError("softmax-cross-entropy expects an n x c logit matrix")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (lv.shape[0],):
        raise ShapeError("labels must be a vector of length n")
    shifted = lv - lv.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    n = lv.shape[0]
    losses = lse - shifted[np.arange(n), labels]
    out = np.asarray(losses.mean())
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    def bwd(g):
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        return (gl * (float(g) / n),)

    return _record((logits,), out, bwd)


def frobenius_sq(a: Tensor) -> Tensor:
    """Sum of squared entries, as a scalar."""
    out = np.asarray(np.sum(a.values * a.values))

    def bwd(g):
        return (2.0 * float(g) * a.values,)

    return _record((a,), out, bwd)


def sq_norm_lasttwo(a: Tensor) -> Tensor:
    """Squared Frobenius norm over the last two axes: (n, m, k) -> (n,)."""
    if a.values.ndim < 2:
        raise ShapeError("sq_norm_lasttwo needs >= 2 dims")
    out = np.sum(a.values * a.values, axis=(-1, -2))

    def bwd(g):
        return (2.0 * np.expand_dims(np.expand_dims(g, -1), -1) * a.values,)

    return _record((a,), out, bwd)


def rbf_gram(z: Tensor, bandwidth: float) -> Tensor:
    """RBF gram matrix exp(-||z_i - z_j||^2 / (2 s^2)) of the rows of ``z``.

    The bandwidth is treated as a constant in differentiation.
    """
    s = float(bandwidth)
    if s <= 0:
        raise ShapeError("bandwidth must be positive")
    zv = z.values
    if zv.ndim != 2:
        raise ShapeError("rbf-gram expects an n x h matrix")
    sq = np.sum(zv * zv, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (zv @ zv.T)
    np.maximum(d2, 0.0, out=d2)
    k = np.exp(-d2 / (2.0 * s * s))

    def bwd(g):
        m = (g + g.T) * k
        gz = (m @ zv - m.sum(axis=1)[:, None] * zv) / (s * s)
        return (gz,)

    return _record((z,), k, bwd)


def spd_solve(a: Tensor, b: Tensor) -> Tensor:
    """Solve A X = B for symmetric positive-definite A; differentiable in both.

    Supports batched inputs (n, p, p) with (n, p, q). Raises
    ``NotPositiveDefiniteError`` when a Cholesky factorization fails; the
    caller is expected to have added its ridge term.
    """
    av, bv = a.values, b.values
    if av.ndim < 2 or av.shape[-1] != av.shape[-2]:
        raise ShapeError("A must be square")
    if bv.ndim < 2 or bv.shape[-2] != av.shape[-1] or av.shape[:-2] != bv.shape[:-2]:
        raise ShapeError(f"spd_solve shapes {av.shape} x {bv.shape}")
    asym = np.max(np.abs(av - np.swapaxes(av, -1, -2)))
    if asym > 1e-9:
        raise ShapeError(f"A is not symmetric (max asymmetry {asym:.3e})")
    try:
        np.linalg.cholesky(av)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    x = np.linalg.solve(av, bv)

    def bwd(g):
        # adjoint of a linear solve: gB = A^{-T} g, gA = -gB X^T
        gb = np.linalg.solve(np.swapaxes(av, -1, -2), g)
        ga = -gb @ np.swapaxes(x, -1, -2)
        return (ga, gb)

    return _record((a, b), x, bwd)


def minmax_ratio(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min(a, b) / max(a, b) for nonnegative inputs.

    Defined as 1 (with zero gradient) where both entries are <= 1e-12.
    """
    if a.values.shape != b.values.shape:
        raise ShapeError("minmax_ratio expects equal shapes")
    av, bv = a.values, b.values
    degenerate = (av <= 1e-12) & (bv <= 1e-12)
    a_small = av <= bv
    safe_b = np.where(degenerate, 1.0, bv)
    safe_a = np.where(degenerate, 1.0, av)
    out = np.where(degenerate, 1.0, np.where(a_small, av / safe_b, bv / safe_a))

    def bwd(g):
        ga = np.where(degenerate, 0.0, np.where(a_small, 1.0 / safe_b, -bv / (safe_a * safe_a)))
        gb = np.where(degenerate, 0.0, np.where(a_small, -av / (safe_b * safe_b), 1.0 / safe_a))
        return (g * ga, g * gb)

    return _record((a, b), out, bwd)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "relu": relu,
    "tanh": tanh,
    "concat-columns": concat_cols,
    "mean-over-rows": mean_over_rows,
    "row-mean-pool": row_mean_pool,
    "softmax-cross-entropy": softmax_cross_entropy,
    "frobenius-sq": frobenius_sq,
    "rbf-gram": rbf_gram,
}


def apply_primitive(name: str, *inputs):
    """Apply a named catalog primitive, validating inputs for finiteness."""
    if name not in _PRIMITIVES:
        raise KeyError(f"unknown primitive {name!r}")
    _check_finite(*[t for t in inputs if isinstance(t, Tensor)])
    return _PRIMITIVES[name](*inputs)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(f, inputs, eps: float = 1e-5) -> float:
    """Max relative error of reverse-mode gradients against central differences.

    ``f`` maps a list of Tensors to a scalar Tensor. The error per entry is
    |analytic - central| / max(1, |central|); the max over all entries of all
    inputs is returned.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-7, 1e-4]")
    leaves = [Tensor(t.values.copy(), requires_grad=True) for t in inputs]
    with Tape() as tape:
        loss = f(leaves)
    if loss.values.size != 1:
        raise ShapeError("grad_check requires a scalar-valued function")
    backward(tape, loss)
    worst = 0.0
    for k, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values)
        flat = leaf.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f([Tensor(t.values) for t in leaves]).values)
            flat[i] = orig - eps
            fm = float(f([Tensor(t.values) for t in leaves]).values)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("non-finite intermediate during grad_check")
            central = (fp - fm) / (2.0 * eps)
            err = abs(analytic.reshape(-1)[i] - central) / max(1.0, abs(central))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------


class AdamW:
    """Decoupled weight-decay Adam over a list of parameter Tensors."""

    def __init__(self, params, lr=5e-4, weight_decay=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            if g.shape != p.values.shape:
                raise ShapeError("gradient shape mismatch")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.values -= self.lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.values)


def adamw_step(params, grads, state: AdamW):
    """Functional single AdamW step: assigns ``grads`` then updates in place."""
    if len(params) != len(grads):
        raise ShapeError("params and grads length mismatch")
    for p, g in zip(params, grads):
        p.grad = None if g is None else np.asarray(g, dtype=np.float64)
    state.step()
    return params, state
