import numpy as np
import pytest

from revcast import tensor as T
from revcast.errors import ContractError, DataError, NumericError, ShapeError
from revcast.tensor import Tensor

from oracles import check_grads, matmul_triple_loop


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(a, Tensor(np.eye(2)))
        assert np.array_equal(out.data, a.data)

    def test_annihilating_product(self):
        a = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[0.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(T.matmul(a, b).data, np.zeros((2, 2)))

    def test_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        out = T.matmul(Tensor(a), Tensor(b))
        assert np.abs(out.data - matmul_triple_loop(a, b)).max() < 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_large_inputs_stable(self):
        out = T.softmax(Tensor([1000.0, 1000.0]), axis=0)
        assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)
        assert np.all(np.isfinite(out.data))

    def test_against_extended_precision(self):
        x = np.array([1.0, 2.0, 3.0])
        wide = np.exp(x.astype(np.longdouble))
        expected = (wide / wide.sum()).astype(np.float64)
        out = T.softmax(Tensor(x), axis=0)
        assert np.abs(out.data - expected).max() < 1e-12

    def test_rows_sum_to_one_and_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(scale=5.0, size=(4, 7))
            out = T.softmax(Tensor(x), axis=1).data
            assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
            assert np.all(out > 0)

    def test_invalid_axis(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor([1.0, 2.0]), axis=3)


class TestLayerNorm:
    def test_constant_row_maps_to_bias(self):
        out = T.layer_norm(Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_already_normalized(self):
        out = T.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)
        assert np.allclose(out.data, [1.0, -1.0], atol=1e-12)

    def test_random_row_statistics(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(5, 16))
        out = T.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=0.0).data
        assert np.abs(out.mean(axis=-1)).max() < 1e-12
        var = (out ** 2).mean(axis=-1)
        assert np.abs(var - 1.0).max() < 1e-9

    def test_bad_gain_shape(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(4)), Tensor(np.zeros(3)))


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.random.default_rng(3).normal(size=(2, 3)), requires_grad=True)
        T.backward(T.tsum(x))
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_square_analytic(self):
        x = Tensor([3.0], requires_grad=True)
        T.backward(T.tsum(T.mul(x, x)))
        assert np.allclose(x.grad, [6.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            T.backward(T.mul(x, x))

    def test_unused_tensor_keeps_zero_grad(self):
        x = Tensor([1.0], requires_grad=True)
        y = Tensor([2.0], requires_grad=True)
        T.backward(T.tsum(T.mul(x, x)))
        assert y.grad is None

    def test_composed_graph_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

        def loss(*_):
            h = T.tanh(T.matmul(x, w))
            return T.tsum(T.mul(h, h))

        check_grads(loss, [x, w])

    def test_grad_accumulates_on_reuse(self):
        x = Tensor([2.0], requires_grad=True)
        T.backward(T.tsum(T.add(T.mul(x, x), x)))
        assert np.allclose(x.grad, [5.0])

    def test_diamond_dependency_ordering(self):
        # c feeds the loss both directly and through exp(c); its gradient must
        # be complete before it propagates to x
        x = Tensor([1.0], requires_grad=True)
        c = T.mul(x, 2.0)
        loss = T.tsum(T.add(c, T.exp(c)))
        T.backward(loss)
        assert np.allclose(x.grad, [2.0 + 2.0 * np.exp(2.0)], atol=1e-12)

    def test_deep_chain_does_not_recurse(self):
        x = Tensor([1.0], requires_grad=True)
        y = x
        for _ in range(5000):
            y = T.mul(y, 1.0)
        T.backward(T.tsum(y))
        assert np.allclose(x.grad, [1.0])


class TestFiniteDiff:
    def test_square_at_three(self):
        x = Tensor([3.0])
        g = T.finite_diff_grad(lambda t: T.tsum(T.mul(t, t)), x)
        assert abs(g[0] - 6.0) < 1e-8

    def test_constant_function(self):
        x = Tensor([1.0, 2.0])
        g = T.finite_diff_grad(lambda t: 7.0, x)
        assert np.array_equal(g, np.zeros(2))

    def test_restores_input(self):
        x = Tensor([1.5, -2.5])
        before = x.data.copy()
        T.finite_diff_grad(lambda t: T.tsum(T.exp(t)), x)
        assert np.array_equal(x.data, before)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ContractError):
            T.finite_diff_grad(lambda t: 0.0, Tensor([1.0]), h=0.0)

    def test_nonfinite_evaluation_raises(self):
        x = Tensor([0.0])
        with pytest.raises(NumericError):
            T.finite_diff_grad(lambda t: T.tsum(T.log(t)), x)


class TestOpGradients:
    """Central finite-difference checks across the differentiable op set.

    Together with the layer and model checks this covers well over 50
    randomized cases.
    """

    def _rand(self, rng, shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    @pytest.mark.parametrize("seed", range(3))
    def test_arithmetic_ops(self, seed):
        rng = np.random.default_rng(100 + seed)
        a = self._rand(rng, (3, 4))
        b = self._rand(rng, (3, 4))
        bias = self._rand(rng, (4,))
        check_grads(lambda *_: T.tsum(T.mul(T.add(a, b), b)), [a, b])
        check_grads(lambda *_: T.tsum(T.sub(a, b)), [a, b])
        check_grads(lambda *_: T.tsum(T.add(a, bias)), [a, bias])
        d = Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)
        check_grads(lambda *_: T.tsum(T.div(a, d)), [a, d])
        check_grads(lambda *_: T.tsum(T.maximum(a, b)), [a, b])
        check_grads(lambda *_: T.tsum(T.neg(T.mul(a, 2.5))), [a])

    @pytest.mark.parametrize("seed", range(3))
    def test_matrix_ops(self, seed):
        rng = np.random.default_rng(200 + seed)
        a = self._rand(rng, (3, 4))
        w = self._rand(rng, (4, 2))
        check_grads(lambda *_: T.tsum(T.tanh(T.matmul(a, w))), [a, w])
        p = self._rand(rng, (2, 3, 4))
        q = self._rand(rng, (2, 4, 2))
        check_grads(lambda *_: T.tsum(T.bmm(p, q)), [p, q])
        check_grads(lambda *_: T.tsum(T.mul(T.transpose_last(p), T.transpose_last(p))), [p])

    @pytest.mark.parametrize("seed", range(3))
    def test_shape_ops(self, seed):
        rng = np.random.default_rng(300 + seed)
        a = self._rand(rng, (4, 6))
        b = self._rand(rng, (2, 6))
        check_grads(lambda *_: T.tsum(T.exp(T.reshape(a, (2, 12)))), [a])
        check_grads(lambda *_: T.tsum(T.mul(T.narrow(a, 1, 2, 3), T.narrow(a, 1, 1, 3))), [a])
        check_grads(lambda *_: T.tsum(T.tanh(T.concat([a, b], axis=0))), [a, b])
        check_grads(lambda *_: T.tsum(T.sigmoid(T.repeat_rows(b, 3))), [b])
        w = self._rand(rng, (5, 3))
        idx = rng.integers(0, 5, size=7)
        check_grads(lambda *_: T.tsum(T.exp(T.embedding(w, idx))), [w])

    @pytest.mark.parametrize("seed", range(3))
    def test_pointwise_ops(self, seed):
        rng = np.random.default_rng(400 + seed)
        a = self._rand(rng, (3, 5))
        pos = Tensor(np.abs(rng.normal(size=(3, 5))) + 0.5, requires_grad=True)
        check_grads(lambda *_: T.tsum(T.exp(a)), [a])
        check_grads(lambda *_: T.tsum(T.log(pos)), [pos])
        check_grads(lambda *_: T.tsum(T.tanh(a)), [a])
        check_grads(lambda *_: T.tsum(T.sigmoid(a)), [a])
        check_grads(lambda *_: T.tsum(T.elu(a)), [a])
        check_grads(lambda *_: T.tsum(T.softplus(a)), [a])
        check_grads(lambda *_: T.tsum(T.relu(T.add(a, 0.3))), [a])

    @pytest.mark.parametrize("seed", range(3))
    def test_reductions_and_normalizers(self, seed):
        rng = np.random.default_rng(500 + seed)
        a = self._rand(rng, (3, 5))
        gain = self._rand(rng, (5,))
        bias = self._rand(rng, (5,))
        check_grads(lambda *_: T.tsum(T.mul(T.tmean(a, axis=1), T.tmean(a, axis=1))), [a])
        check_grads(lambda *_: T.mul(T.tmean(T.exp(a)), 2.0), [a])
        check_grads(lambda *_: T.tsum(T.mul(T.softmax(a, axis=1), T.exp(a))), [a])
        check_grads(lambda *_: T.tsum(T.mul(T.layer_norm(a, gain, bias), T.sigmoid(a))), [a, gain, bias])
        mask = np.tri(5, 5, dtype=bool)[rng.integers(1, 5, size=3)]
        check_grads(lambda *_: T.tsum(T.mul(T.masked_softmax(a, mask), T.tanh(a))), [a])


class TestMaskedSoftmax:
    def test_masked_entries_exactly_zero(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(2, 4)))
        mask = np.array([[True, True, False, False], [True, True, True, False]])
        out = T.masked_softmax(x, mask).data
        assert np.all(out[~mask] == 0.0)
        assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12

    def test_fully_masked_row_rejected(self):
        with pytest.raises(ContractError):
            T.masked_softmax(Tensor(np.zeros((2, 3))), np.zeros((2, 3), dtype=bool))

    def test_non_boolean_mask_rejected(self):
        with pytest.raises(ContractError):
            T.masked_softmax(Tensor(np.zeros((2, 3))), np.zeros((2, 3)))


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert T.dropout(x, 0.5, None, train=False) is x

    def test_zero_rate_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert T.dropout(x, 0.0, np.random.default_rng(0), train=True) is x

    def test_train_scaling_preserves_mean(self):
        rng = np.random.default_rng(6)
        x = Tensor(np.ones((200, 200)))
        out = T.dropout(x, 0.3, rng, train=True).data
        assert abs(out.mean() - 1.0) < 0.01
        assert set(np.unique(out)).issubset({0.0, 1.0 / 0.7})


class TestEmbedding:
    def test_out_of_vocabulary_raises(self):
        w = Tensor(np.zeros((3, 2)), requires_grad=True)
        with pytest.raises(DataError):
            T.embedding(w, np.array([0, 3]))

    def test_gradient_scatters(self):
        w = Tensor(np.zeros((3, 2)), requires_grad=True)
        out = T.embedding(w, np.array([1, 1, 2]))
        T.backward(T.tsum(out))
        assert np.array_equal(w.grad, [[0, 0], [2, 2], [1, 1]])


class TestAdam:
    def test_zero_grad_leaves_params_unchanged(self):
        p = np.array([1.0, -2.0])
        state = T.adam_init([p], learning_rate=0.1)
        T.adam_step([p], [np.zeros(2)], state)
        assert np.array_equal(p, [1.0, -2.0])
        assert state.step_count == 1

    def test_first_step_magnitude_is_learning_rate(self):
        p = np.array([0.0])
        state = T.adam_init([p], learning_rate=0.01)
        T.adam_step([p], [np.array([3.7])], state)
        assert abs(abs(p[0]) - 0.01) < 1e-6
        assert p[0] < 0

    def test_minimizes_quadratic_and_matches_reference(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = np.array([0.0])
        state = T.adam_init([p], learning_rate=lr)
        # independent re-derivation of the update rule
        x_ref, m_ref, v_ref = 0.0, 0.0, 0.0
        for t in range(1, 101):
            g = 2.0 * (x_ref - 2.0)
            m_ref = b1 * m_ref + (1 - b1) * g
            v_ref = b2 * v_ref + (1 - b2) * g * g
            x_ref -= lr * (m_ref / (1 - b1 ** t)) / (np.sqrt(v_ref / (1 - b2 ** t)) + eps)
            T.adam_step([p], [np.array([2.0 * (p[0] - 2.0)])], state)
            assert abs(p[0] - x_ref) < 1e-12
        assert abs(p[0] - 2.0) < 0.05

    def test_shape_mismatch_rejected(self):
        p = np.zeros(2)
        state = T.adam_init([p])
        with pytest.raises(ShapeError):
            T.adam_step([p], [np.zeros(3)], state)

    def test_optimizer_wrapper_treats_missing_grad_as_zero(self):
        a = Tensor([1.0], requires_grad=True)
        opt = T.Adam([a], learning_rate=0.5)
        opt.step()
        assert np.array_equal(a.data, [1.0])


class TestDeterminismAndDebug:
    def test_same_seed_bit_identical(self):
        def run():
            rng = np.random.default_rng(42)
            x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
            loss = T.tsum(T.softmax(T.matmul(T.tanh(x), w), axis=1))
            T.backward(loss)
            return loss.data.tobytes(), x.grad.tobytes()

        assert run() == run()

    def test_debug_mode_catches_nonfinite(self):
        T.set_debug(True)
        try:
            with pytest.raises(NumericError):
                Tensor([np.nan])
            with pytest.raises(NumericError):
                T.log(Tensor([-1.0]))
        finally:
            T.set_debug(False)

    def test_no_grad_blocks_graph_construction(self):
        x = Tensor([1.0], requires_grad=True)
        with T.no_grad():
            out = T.mul(x, x)
        assert not out.requires_grad
        assert out._backward is None
