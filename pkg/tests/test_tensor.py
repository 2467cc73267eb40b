import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ffa_punct import tensor as T
from ffa_punct.exceptions import DegenerateRowError, DeterminismError, EmptyBatchError, ShapeError
from ffa_punct.tensor import IGNORE_INDEX, Tensor, finite_difference_gradient


def triple_loop_matmul(a, b):
    m, k = a.shape
    p = b.shape[1]
    out = np.zeros((m, p))
    for i in range(m):
        for j in range(p):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def mp_softmax(row):
    with mpmath.workdps(50):
        exps = [mpmath.exp(mpmath.mpf(v)) for v in row]
        total = sum(exps)
        return [float(e / total) for e in exps]


class TestMatmul:
    def test_identity(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal((Tensor(np.eye(2)) @ Tensor(b)).data, b)

    def test_known_product_against_triple_loop(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        expected = triple_loop_matmul(a, b)
        np.testing.assert_array_equal(expected, [[19, 22], [43, 50]])
        np.testing.assert_array_equal(T.matmul(Tensor(a), Tensor(b)).data, expected)

    def test_shape_contract(self):
        out = T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
        assert out.shape == (2, 4)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    def test_dtype_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(np.ones((2, 2), np.float32)), Tensor(np.ones((2, 2))))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_bit_identical_to_triple_loop_f64(self, m, k, p, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, p))
        np.testing.assert_array_equal(T.matmul(Tensor(a), Tensor(b)).data, triple_loop_matmul(a, b))

    def test_leading_batch_dimension(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((3, 2, 4)), rng.standard_normal((3, 4, 5))
        out = T.matmul(Tensor(a), Tensor(b)).data
        for i in range(3):
            np.testing.assert_array_equal(out[i], triple_loop_matmul(a[i], b[i]))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(T.softmax_last_axis(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_single_unmasked_entry(self):
        out = T.softmax_last_axis(Tensor([5.0, 7.0]), mask=np.array([False, True])).data
        assert out[0] == 1.0 and out[1] == 0.0

    def test_known_values(self):
        oracle = mp_softmax([1, 2, 3])
        np.testing.assert_allclose(oracle, [0.09003, 0.24473, 0.66524], atol=1e-5)
        np.testing.assert_allclose(T.softmax_last_axis(Tensor([1.0, 2.0, 3.0])).data, oracle, atol=1e-12)

    def test_fully_masked_row_raises(self):
        with pytest.raises(DegenerateRowError):
            T.softmax_last_axis(Tensor(np.zeros((2, 3))), mask=np.array([[False, True, True], [True, True, True]]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**31 - 1), st.sampled_from(["float32", "float64"]))
    def test_rows_are_distributions(self, rows, cols, seed, dtype):
        rng = np.random.default_rng(seed)
        x = (rng.standard_normal((rows, cols)) * 5).astype(dtype)
        mask = rng.random((rows, cols)) < 0.4
        mask[:, rng.integers(cols)] = False
        y = T.softmax_last_axis(Tensor(x), mask).data
        tol = 1e-6 if dtype == "float32" else 1e-12
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=tol)
        assert np.all((y >= 0) & (y <= 1))
        assert np.all(y[mask] == 0.0)


class TestLayerNorm:
    def _ln(self, x, eps):
        d = len(x)
        return T.layer_norm(Tensor(np.array(x, float)), Tensor(np.ones(d)), Tensor(np.zeros(d)), eps).data

    def test_constant_row(self):
        np.testing.assert_array_equal(self._ln([5, 5, 5, 5], 1e-5), [0, 0, 0, 0])

    def test_already_normalized(self):
        np.testing.assert_allclose(self._ln([-1, 1], 0.0), [-1, 1])

    def test_known_values(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        reference = (x - x.mean()) / math.sqrt(x.var() + 1e-5)
        np.testing.assert_allclose(reference, [-1.34163, -0.44721, 0.44721, 1.34163], atol=1e-4)
        np.testing.assert_allclose(self._ln(x, 1e-5), reference, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 16), st.integers(0, 2**31 - 1))
    def test_moments(self, d, seed):
        x = np.random.default_rng(seed).standard_normal((3, d)) * 10 + 3
        assume(x.var(axis=-1).min() >= 1e4 * 1e-5)  # variance >> eps
        y = T.layer_norm(Tensor(x), Tensor(np.ones(d)), Tensor(np.zeros(d)), 1e-5).data
        assert np.all(np.abs(y.mean(axis=-1)) <= 1e-6)
        assert np.all(np.abs(y.var(axis=-1) - 1) <= 1e-4)

    def test_gamma_shape_checked(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(2)), Tensor(np.zeros(3)))


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = T.cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3])
        assert loss.item() == pytest.approx(math.log(4), abs=1e-15)

    def test_confident_prediction_goes_to_zero(self):
        values = [T.cross_entropy(Tensor([[s, 0.0, 0.0, 0.0]]), [0]).item() for s in (5.0, 20.0, 50.0)]
        assert values[0] > values[1] > values[2] >= 0
        assert values[2] < 1e-20

    def test_known_value(self):
        reference = -math.log(math.e / (math.e + 3))
        assert reference == pytest.approx(0.74366, abs=1e-4)
        assert T.cross_entropy(Tensor([[1.0, 0.0, 0.0, 0.0]]), [0]).item() == pytest.approx(reference, abs=1e-12)

    def test_ignored_positions_contribute_nothing(self):
        logits = np.random.default_rng(0).standard_normal((4, 4))
        full = T.cross_entropy(Tensor(logits[:2]), [1, 2]).item()
        masked = T.cross_entropy(Tensor(logits), [1, 2, IGNORE_INDEX, IGNORE_INDEX]).item()
        assert full == pytest.approx(masked, abs=1e-15)

    def test_all_ignored(self):
        with pytest.raises(EmptyBatchError):
            T.cross_entropy(Tensor(np.zeros((2, 4))), [IGNORE_INDEX, IGNORE_INDEX])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10), st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_non_negative(self, n, k, seed):
        rng = np.random.default_rng(seed)
        assert T.cross_entropy(Tensor(rng.standard_normal((n, k)) * 10), rng.integers(0, k, n)).item() >= 0


class TestBackward:
    def test_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, [1, 1, 1])

    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        assert x.grad == 6.0

    def test_accumulates_across_calls(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        (x * x).backward()
        assert x.grad == 12.0

    def test_non_scalar_rejected(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0], requires_grad=True).backward()

    def test_constant_never_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([3.0, 4.0])
        (x * c).sum().backward()
        assert c.grad is None

    def test_no_grad_skips_tape(self):
        x = Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = x * 2.0
        assert not y.requires_grad


def _composite_check(build, shapes, seed=0, eps=1e-5):
    rng = np.random.default_rng(seed)
    params = {f"p{i}": Tensor(rng.standard_normal(s), requires_grad=True) for i, s in enumerate(shapes)}
    report = finite_difference_gradient(lambda: build(*params.values()), params, eps)
    return report


class TestPrimitiveGradients:
    # every primitive is checked against central differences in f64
    cases = {
        "add_broadcast": (lambda a, b: ((a + b) * (a + b)).sum(), [(3, 4), (4,)]),
        "sub_div": (lambda a, b: ((a - b) / (b * b + 1.0)).sum(), [(2, 3), (2, 3)]),
        "matmul_batched": (lambda a, b: T.gelu(a @ b).sum(), [(2, 3, 4), (4, 5)]),
        "exp_log": (lambda a: T.log(T.exp(a) + 1.0).mean(), [(5,)]),
        "softmax_masked": (lambda a: (T.softmax_last_axis(a, np.array([False, True, False, False]))
                                      * Tensor(np.arange(4.0))).sum(), [(3, 4)]),
        "log_softmax": (lambda a: (T.log_softmax_last_axis(a) * Tensor(np.arange(12.0).reshape(3, 4))).sum(), [(3, 4)]),
        "layer_norm": (lambda a, g, b: (T.layer_norm(a, g, b) * Tensor(np.arange(12.0).reshape(2, 6))).sum(),
                       [(2, 6), (6,), (6,)]),
        "cross_entropy": (lambda a: T.cross_entropy(a, [0, 3, IGNORE_INDEX, 1]), [(4, 4)]),
        "concat_transpose_reshape": (
            lambda a, b: (T.reshape(T.transpose(T.concat([a, b]), (1, 0)), (-1,)) * Tensor(np.arange(15.0))).sum(),
            [(3, 2), (3, 3)]),
        "embedding": (lambda w: (T.embedding(w, np.array([[0, 2], [2, 1]]))
                                 * Tensor(np.arange(3.0).reshape(1, 1, 3) + 1)).sum(), [(4, 3)]),
        "mean_axis": (lambda a: (T.mean(a, axis=1) * T.mean(a, axis=1)).sum(), [(3, 5)]),
    }

    @pytest.mark.parametrize("name", sorted(cases))
    def test_matches_finite_differences(self, name):
        build, shapes = self.cases[name]
        report = _composite_check(build, shapes)
        assert report.max_relative_error <= 1e-4, report.format_table()

    def test_dropout_with_frozen_mask(self):
        x = Tensor(np.random.default_rng(1).standard_normal((4, 5)), requires_grad=True)
        report = finite_difference_gradient(
            lambda: (T.dropout(x, 0.3, np.random.default_rng(7)) * T.dropout(x, 0.3, np.random.default_rng(7))).sum(),
            {"x": x},
        )
        assert report.max_relative_error <= 1e-4


class TestFiniteDifference:
    def test_quadratic(self):
        x = Tensor(3.0, requires_grad=True)
        report = finite_difference_gradient(lambda: x * x, {"x": x}, 1e-5)
        assert report.numeric["x"] == pytest.approx(6.0, abs=1e-6)
        assert report.analytic["x"] == 6.0

    def test_constant_function(self):
        x = Tensor(np.ones(3), requires_grad=True)
        report = finite_difference_gradient(lambda: 2.5, {"x": x}, 1e-5)
        assert np.all(np.abs(report.numeric["x"]) <= 1e-10)

    def test_nondeterministic_function_rejected(self):
        x = Tensor(1.0, requires_grad=True)
        rng = np.random.default_rng(0)
        with pytest.raises(DeterminismError):
            finite_difference_gradient(lambda: x * float(rng.random()), {"x": x})

    def test_parameters_restored(self):
        x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        finite_difference_gradient(lambda: (x * x).sum(), {"x": x})
        np.testing.assert_array_equal(x.data, [1.0, -2.0])

    def test_relative_error_floor(self):
        assert T.relative_error(0.0, 0.0) == 0.0
        assert T.relative_error(1e-12, 0.0) == pytest.approx(1e-4)
