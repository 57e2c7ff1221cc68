import numpy as np
import pytest

from causalpairs import engine as E
from causalpairs.engine import (
    AdamW,
    NotPositiveDefiniteError,
    ShapeError,
    Tape,
    Tensor,
    adamw_step,
    apply_primitive,
    backward,
    grad_check,
    spd_solve,
)

RNG = np.random.default_rng(20240817)


def scalar(f):
    """Wrap an op chain so grad_check sees a list-of-tensors signature."""
    return f


def test_matmul_identity():
    out = apply_primitive("matmul", Tensor(np.eye(2)), Tensor([[2.0, 0.0], [0.0, 3.0]]))
    np.testing.assert_allclose(out.values, [[2.0, 0.0], [0.0, 3.0]])


def test_mean_over_rows():
    out = apply_primitive("mean-over-rows", Tensor([[1.0, 3.0], [5.0, 7.0]]))
    np.testing.assert_allclose(out.values, [3.0, 5.0])


def test_rbf_gram_identical_rows():
    z = Tensor(np.array([[1.0, 2.0], [1.0, 2.0]]))
    k = apply_primitive("rbf-gram", z, 1.0)
    np.testing.assert_allclose(k.values, np.ones((2, 2)))


def test_primitive_rejects_nonfinite():
    with pytest.raises(E.NumericError):
        apply_primitive("relu", Tensor([np.inf, 1.0]))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        apply_primitive("matmul", Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_spd_solve_identity():
    b = RNG.normal(size=(3, 2))
    x = spd_solve(Tensor(np.eye(3)), Tensor(b))
    np.testing.assert_allclose(x.values, b)


def test_spd_solve_diagonal():
    x = spd_solve(Tensor(2.0 * np.eye(2)), Tensor([[4.0], [6.0]]))
    np.testing.assert_allclose(x.values, [[2.0], [3.0]])


def test_spd_solve_rejects_indefinite():
    a = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefiniteError):
        spd_solve(Tensor(a), Tensor(np.ones((2, 1))))


def test_spd_solve_rejects_asymmetric():
    a = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ShapeError):
        spd_solve(Tensor(a), Tensor(np.ones((2, 1))))


def _random_spd(n, rng, cond_cap=1e6):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = np.exp(rng.uniform(0, np.log(cond_cap) / 2, size=n))
    return (q * eigs) @ q.T


def test_spd_solve_recovers_solution():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a = _random_spd(6, rng)
        x0 = rng.normal(size=(6, 3))
        x = spd_solve(Tensor(a), Tensor(a @ x0))
        rel = np.linalg.norm(x.values - x0) / np.linalg.norm(x0)
        assert rel <= 1e-8


def test_spd_solve_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    a0 = _random_spd(4, rng, cond_cap=100.0)
    b0 = rng.normal(size=(4, 2))
    lam = 0.5

    def f(ts):
        a, b = ts
        ridged = E.add(a, Tensor(lam * np.eye(4)))
        sym = E.scale(E.add(ridged, E.transpose_last(ridged)), 0.5)
        return E.frobenius_sq(spd_solve(sym, b))

    assert grad_check(f, [Tensor(a0), Tensor(b0)], eps=1e-5) <= 1e-6


def test_backward_zero_at_origin():
    w = Tensor(np.zeros((3, 3)), requires_grad=True)
    with Tape() as tape:
        loss = E.frobenius_sq(w)
    backward(tape, loss)
    np.testing.assert_allclose(w.grad, np.zeros((3, 3)))


def test_backward_linear_map():
    c = 4.0
    n = 5
    x = Tensor(RNG.normal(size=(n,)), requires_grad=True)
    with Tape() as tape:
        loss = E.mean_all(E.scale(x, c))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, np.full(n, c / n))


def test_backward_accumulates_and_resets():
    x = Tensor(RNG.normal(size=(4,)), requires_grad=True)
    with Tape() as tape:
        loss = E.frobenius_sq(x)
    backward(tape, loss)
    once = x.grad.copy()
    backward(tape, loss)
    np.testing.assert_array_equal(x.grad, 2 * once)
    x.reset_grad()
    backward(tape, loss)
    np.testing.assert_array_equal(x.grad, once)


def test_backward_deterministic_bitwise():
    def run():
        rng = np.random.default_rng(99)
        x = Tensor(rng.normal(size=(8, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        with Tape() as tape:
            h = E.tanh(E.matmul(x, w))
            loss = E.frobenius_sq(E.row_mean_pool(h))
        backward(tape, loss)
        return x.grad.tobytes(), w.grad.tobytes()

    assert run() == run()


def test_backward_requires_scalar():
    x = Tensor(RNG.normal(size=(3,)), requires_grad=True)
    with Tape() as tape:
        y = E.scale(x, 2.0)
    with pytest.raises(ShapeError):
        backward(tape, y)


def test_grad_check_exact_for_sum():
    def f(ts):
        return E.mean_all(E.concat_cols(*ts))

    err = grad_check(f, [Tensor(RNG.normal(size=(2, 3))), Tensor(RNG.normal(size=(2, 2)))])
    assert err <= 1e-10


def test_grad_check_softmax_cross_entropy():
    logits = Tensor(RNG.normal(size=(6, 3)))
    labels = RNG.integers(0, 3, size=6)

    def f(ts):
        return E.softmax_cross_entropy(ts[0], labels)

    assert grad_check(f, [logits]) <= 1e-5


@pytest.mark.parametrize("trial", range(20))
def test_grad_check_composed_graph(trial):
    """Random compositions of the primitive catalog vs central differences."""
    rng = np.random.default_rng(1000 + trial)
    x = Tensor(rng.normal(size=(5, 3)))
    w = Tensor(rng.normal(size=(3, 4)) * 0.5)
    labels = rng.integers(0, 4, size=5)

    def f(ts):
        xv, wv = ts
        h = E.tanh(E.matmul(xv, wv))
        r = E.relu(E.sub(h, E.scale(h, 0.25)))
        pooled = E.mean_over_rows(r)
        k = E.rbf_gram(h, 1.3)
        reg = E.frobenius_sq(E.spd_solve(E.add(k, Tensor(np.eye(5) * 0.7)), xv))
        ce = E.softmax_cross_entropy(h, labels)
        return E.add(E.add(E.mean_all(pooled), E.scale(reg, 0.01)), ce)

    assert grad_check(f, [x, w]) <= 1e-4


@pytest.mark.parametrize(
    "name,builder",
    [
        ("matmul", lambda rng: (lambda ts: E.frobenius_sq(E.matmul(*ts)),
                                [Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(3, 2)))])),
        ("add", lambda rng: (lambda ts: E.frobenius_sq(E.add(*ts)),
                             [Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))])),
        ("sub", lambda rng: (lambda ts: E.frobenius_sq(E.sub(*ts)),
                             [Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))])),
        ("mul", lambda rng: (lambda ts: E.frobenius_sq(E.mul(*ts)),
                             [Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))])),
        ("div", lambda rng: (lambda ts: E.frobenius_sq(E.div(*ts)),
                             [Tensor(rng.normal(size=(3,))), Tensor(rng.uniform(1, 2, size=(3,)))])),
        ("scale", lambda rng: (lambda ts: E.frobenius_sq(E.scale(ts[0], 2.5)),
                               [Tensor(rng.normal(size=(3, 2)))])),
        ("relu", lambda rng: (lambda ts: E.frobenius_sq(E.relu(ts[0])),
                              [Tensor(rng.normal(size=(4, 4)) + 0.1)])),
        ("tanh", lambda rng: (lambda ts: E.frobenius_sq(E.tanh(ts[0])),
                              [Tensor(rng.normal(size=(4, 4)))])),
        ("concat", lambda rng: (lambda ts: E.frobenius_sq(E.concat_cols(*ts)),
                                [Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 4)))])),
        ("mean-over-rows", lambda rng: (lambda ts: E.frobenius_sq(E.mean_over_rows(ts[0])),
                                        [Tensor(rng.normal(size=(5, 3)))])),
        ("row-mean-pool", lambda rng: (lambda ts: E.frobenius_sq(E.row_mean_pool(ts[0])),
                                       [Tensor(rng.normal(size=(2, 5, 3)))])),
        ("rbf-gram", lambda rng: (lambda ts: E.frobenius_sq(E.rbf_gram(ts[0], 0.9)),
                                  [Tensor(rng.normal(size=(5, 3)))])),
        ("minmax-ratio", lambda rng: (lambda ts: E.mean_all(E.minmax_ratio(*ts)),
                                      [Tensor(rng.uniform(0.2, 1, size=(4,))),
                                       Tensor(rng.uniform(0.2, 1, size=(4,)))])),
        ("sq-norm-lasttwo", lambda rng: (lambda ts: E.mean_all(E.sq_norm_lasttwo(ts[0])),
                                         [Tensor(rng.normal(size=(3, 4, 2)))])),
        ("stack-cols", lambda rng: (lambda ts: E.frobenius_sq(E.stack_cols(*ts)),
                                    [Tensor(rng.normal(size=(4,))), Tensor(rng.normal(size=(4,)))])),
    ],
)
@pytest.mark.parametrize("trial", range(20))
def test_grad_check_every_primitive(name, builder, trial):
    rng = np.random.default_rng(hash((name, trial)) % 2**32)
    f, inputs = builder(rng)
    assert grad_check(f, inputs) <= 1e-4


def test_batched_spd_solve_matches_loop():
    rng = np.random.default_rng(3)
    a = np.stack([_random_spd(4, np.random.default_rng(i)) for i in range(3)])
    b = rng.normal(size=(3, 4, 2))
    x = spd_solve(Tensor(a), Tensor(b))
    for i in range(3):
        np.testing.assert_allclose(x.values[i], np.linalg.solve(a[i], b[i]), atol=1e-10)


def test_adamw_no_signal_no_motion():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(p.values, [1.0, -2.0])
    assert opt.t == 1


def test_adamw_first_step_unit_direction():
    # bias correction makes the first step lr-sized regardless of grad scale
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.0, beta1=0.9, beta2=0.999)
    p.grad = np.array([1.0])
    opt.step()
    np.testing.assert_allclose(p.values, [0.9], atol=1e-6)


def test_adamw_decoupled_decay():
    p = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.01)
    p.grad = np.array([0.0])
    opt.step()
    np.testing.assert_allclose(p.values, [2.0 - 0.1 * 0.01 * 2.0])


def test_adamw_step_functional_surface():
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamW([p], lr=0.1, weight_decay=0.0)
    params, state = adamw_step([p], [np.array([1.0])], state)
    assert state.t == 1
    np.testing.assert_allclose(params[0].values, [0.9], atol=1e-6)
