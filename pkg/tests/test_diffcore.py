"""Engine tests: primitive gradients vs central finite differences, Adam."""

import numpy as np
import pytest

import simcal.diffcore as dc

RNG = np.random.default_rng(20240817)


def central_diff(f, x, h=1e-5):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def check_grad(build, x, tol=1e-4, h=1e-5):
    """Compare engine gradient of sum(build(Node)) against finite differences."""
    p = dc.Parameter(x.copy(), "p")
    out = build(p)
    loss = out.sum() if out.value.ndim else out
    dc.backward(loss)

    def f(xv):
        out = build(dc.constant(xv))
        return float(out.value.sum())

    fd = central_diff(f, x, h)
    scale = max(np.abs(fd).max(), 1.0)
    assert np.abs(p.grad - fd).max() / scale < tol


def rand(shape, lo=-2.0, hi=2.0):
    return RNG.uniform(lo, hi, shape)


def test_logsumexp_stability_case():
    x = dc.Parameter(np.array([1000.0, 1000.0]), "x")
    out = dc.logsumexp(x)
    assert out.value == pytest.approx(1000.0 + np.log(2.0), abs=1e-12)
    dc.backward(out)
    assert np.allclose(x.grad, [0.5, 0.5])


def test_logsumexp_finite_for_large_magnitudes():
    for sign in (-1.0, 1.0):
        x = dc.constant(sign * np.array([1e6, 5e5, 1.0]))
        assert np.isfinite(dc.logsumexp(x).value)


def test_tanh_identity_case():
    x = dc.Parameter(np.array(0.0), "x")
    out = dc.tanh(x)
    assert out.value == 0.0
    dc.backward(out)
    assert x.grad == pytest.approx(1.0)


def test_matmul_backward_matches_finite_differences():
    a = rand((2, 3))
    b = rand((3, 2))
    pa = dc.Parameter(a, "a")
    pb = dc.Parameter(b, "b")
    loss = dc.tanh(pa @ pb).sum()
    dc.backward(loss)

    fd_a = central_diff(lambda v: np.tanh(v @ b).sum(), a)
    fd_b = central_diff(lambda v: np.tanh(a @ v).sum(), b)
    assert np.abs(pa.grad - fd_a).max() / np.abs(fd_a).max() < 1e-4
    assert np.abs(pb.grad - fd_b).max() / np.abs(fd_b).max() < 1e-4


def test_backward_square_at_three():
    x = dc.Parameter(np.array(3.0), "x")
    dc.backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_backward_linear_in_constant():
    c = rand((4,))
    x = dc.Parameter(rand((4,)), "x")
    dc.backward((dc.constant(c) * x).sum())
    assert np.allclose(x.grad, c)


def test_backward_two_layer_tanh_net():
    w1 = rand((3, 5))
    w2 = rand((5, 1))
    x = rand((4, 3))

    def build(p):
        h = dc.tanh(dc.constant(x) @ p)
        return dc.tanh(h @ dc.constant(w2))

    check_grad(build, w1)


def test_backward_rejects_non_scalar_root():
    x = dc.Parameter(rand((3,)), "x")
    with pytest.raises(ValueError, match="scalar"):
        dc.backward(x * 2.0)


def test_shape_mismatch_messages_name_both_shapes():
    a = dc.constant(rand((2, 3)))
    b = dc.constant(rand((4, 2)))
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 2\)"):
        dc.matmul(a, b)
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 2\)"):
        dc.add(a, b)


@pytest.mark.parametrize("build,shape", [
    (lambda p: dc.tanh(p), (7,)),
    (lambda p: dc.exp(p), (3, 4)),
    (lambda p: dc.sigmoid(p), (2, 3, 4)),
    (lambda p: dc.logsumexp(p, axis=1), (4, 6)),
    (lambda p: p.mean(axis=0), (5, 3)),
    (lambda p: p.sum(axis=1), (4, 2)),
    (lambda p: (p * p), (6,)),
    (lambda p: dc.concat([p[:, :1], p[:, 1:]], axis=1), (3, 4)),
    (lambda p: p[:, -1, :], (2, 5, 3)),
])
def test_primitive_gradients_match_finite_differences(build, shape):
    for _ in range(12):
        check_grad(build, rand(shape))


def test_relu_and_log_gradients_on_their_domains():
    # relu checked away from the kink; log on positive inputs.
    for _ in range(12):
        x = rand((4, 4))
        x[np.abs(x) < 0.05] += 0.1
        check_grad(lambda p: dc.relu(p), x)
        check_grad(lambda p: dc.log(p), rand((4, 4), 0.2, 3.0))


def test_backward_is_deterministic():
    x = rand((6, 6))
    grads = []
    for _ in range(2):
        p = dc.Parameter(x.copy(), "p")
        loss = dc.logsumexp(dc.tanh(p @ p), axis=None)
        dc.backward(loss)
        grads.append(p.grad.copy())
    assert np.array_equal(grads[0], grads[1])


def test_grad_shape_matches_value_shape():
    p = dc.Parameter(rand((2, 3, 4)), "p")
    dc.backward(dc.sigmoid(p).sum())
    assert p.grad.shape == p.value.shape
    assert np.all(np.isfinite(p.grad))


class TestAdam:
    def test_first_step_moves_by_lr_sign(self):
        store = dc.ParamStore()
        w = store.register("w", np.array([1.0, -2.0]))
        w.grad = np.array([0.3, -0.7])
        store.adam_step(lr=1e-2)
        assert np.allclose(w.value, [1.0 - 1e-2, -2.0 + 1e-2], atol=1e-6)

    def test_zero_gradient_leaves_parameters_unchanged(self):
        store = dc.ParamStore()
        w = store.register("w", np.array([5.0]))
        w.grad = np.zeros(1)
        store.adam_step(lr=0.1)
        assert w.value[0] == 5.0

    def test_bowl_norm_strictly_decreases_over_200_steps(self):
        store = dc.ParamStore()
        w = store.register("w", RNG.standard_normal(8))
        norms = [np.linalg.norm(w.value)]
        for _ in range(200):
            store.zero_grad()
            dc.backward((w * w).sum())
            store.adam_step(lr=5e-4)
            norms.append(np.linalg.norm(w.value))
        assert all(a > b for a, b in zip(norms, norms[1:]))

    def test_non_finite_gradient_refused_with_name(self):
        store = dc.ParamStore()
        w = store.register("weights.w1", np.ones(3))
        w.grad = np.array([1.0, np.nan, 0.0])
        before = w.value.copy()
        with pytest.raises(FloatingPointError, match="weights.w1"):
            store.adam_step(lr=1e-3)
        assert np.array_equal(w.value, before)

    def test_step_counter_monotone(self):
        store = dc.ParamStore()
        w = store.register("w", np.ones(2))
        for i in range(1, 4):
            w.grad = np.ones(2)
            store.adam_step(1e-3)
            assert store.step_count == i
