import numpy as np
import pytest

from ffa_punct.exceptions import OptimizerError
from ffa_punct.optim import OptimizerState, adam_step
from ffa_punct.tensor import Tensor


def param(values, grad=None):
    p = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
    p.grad = None if grad is None else np.asarray(grad, dtype=np.float64)
    return p


def reference_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def test_zero_gradient_leaves_params():
    p = param([1.0, -2.0], [0.0, 0.0])
    adam_step({"p": p}, OptimizerState(learning_rate=0.1))
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_first_step_closed_form():
    # bias correction makes the first step lr * g / (|g| + eps)
    p = param([1.0, 1.0, 1.0], [0.5, -3.0, 1e-3])
    adam_step({"p": p}, OptimizerState(learning_rate=0.01))
    g = np.array([0.5, -3.0, 1e-3])
    np.testing.assert_allclose(p.data, 1.0 - 0.01 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-15)


def test_moves_against_gradient_sign():
    p = param([0.0, 0.0], [2.0, -2.0])
    adam_step({"p": p}, OptimizerState())
    assert p.data[0] < 0 < p.data[1]


def test_matches_reference_over_100_steps():
    rng = np.random.default_rng(0)
    theta0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(100)]
    p = param(theta0.copy())
    state = OptimizerState(learning_rate=3e-3)
    for g in grads:
        p.grad = g.copy()
        adam_step({"p": p}, state)
    assert state.t == 100
    np.testing.assert_allclose(p.data, reference_adam(theta0, grads, 3e-3), rtol=0, atol=1e-12)


def test_missing_gradient_raises_before_updating():
    a, b = param([1.0], [1.0]), param([2.0])
    with pytest.raises(OptimizerError, match="'b'"):
        adam_step({"a": a, "b": b}, OptimizerState())
    assert a.data[0] == 1.0


def test_gradients_cleared_and_dtype_kept():
    p = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    p.grad = np.ones(3, dtype=np.float32)
    adam_step({"p": p}, OptimizerState())
    assert p.grad is None and p.data.dtype == np.float32
