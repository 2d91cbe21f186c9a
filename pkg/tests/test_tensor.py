"""Engine behavior tests: forward values, gradient flow, edge cases.

The exhaustive per-op finite-difference sweep lives in the acceptance
suite; here each op gets its defining values and one targeted gradient
check.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import check_gradients
from salgraph import tensor as T
from salgraph.tensor import Tensor, backward


def rng():
    return np.random.default_rng(7)


class TestTensorBasics:
    def test_add_values(self):
        out = T.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        assert np.array_equal(out.data, [4.0, 6.0])

    def test_mul_identity(self):
        x = rng().normal(size=(3, 4))
        out = T.mul(Tensor(x), T.ones((3, 4)))
        assert np.array_equal(out.data, x)

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor(0.0)).item() == 0.5

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            T.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_scalar_broadcast(self):
        x = Tensor([1.0, 2.0, 3.0])
        assert np.array_equal((x * 2.0).data, [2.0, 4.0, 6.0])
        assert np.array_equal((1.0 - x).data, [0.0, -1.0, -2.0])

    def test_zero_extent_rejected(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((0, 3)))

    def test_detach_breaks_graph(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = (x * x).sum()
        d = x.detach()
        assert not d.requires_grad
        backward(y)
        assert np.array_equal(x.grad, [2.0, 4.0])


class TestBackward:
    def test_sum_gradient(self):
        x = Tensor([1.0, 5.0, -2.0], requires_grad=True)
        backward(T.total(x))
        assert np.array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_sum_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(T.total(x * x))
        assert np.array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            backward(x * x)

    def test_repeated_backward_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        loss = T.total(x * x)
        backward(loss)
        backward(loss)
        assert np.array_equal(x.grad, [12.0])

    def test_diamond_graph_accumulates_both_paths(self):
        x = Tensor([2.0], requires_grad=True)
        y = x * x + x * 3.0
        backward(T.total(y))
        assert np.allclose(x.grad, [7.0])

    def test_no_grad_suppresses_tape(self):
        x = Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = x * x
        assert y._grad_fn is None and not y.requires_grad

    def test_mlp_gradcheck(self):
        r = rng()
        x = r.normal(size=(4, 5))
        w1, b1 = r.normal(size=(5, 6)), r.normal(size=(6,))
        w2, b2 = r.normal(size=(6, 2)), r.normal(size=(2,))

        def loss(xt, w1t, b1t, w2t, b2t):
            h = T.leaky_relu(T.affine(xt, w1t, b1t), slope=0.01)
            return T.total(T.sigmoid(T.affine(h, w2t, b2t)))

        check_gradients(loss, [x, w1, b1, w2, b2])


class TestMatmul:
    def test_identity(self):
        x = rng().normal(size=(2, 3))
        assert np.allclose(T.matmul(Tensor(np.eye(2)), Tensor(x)).data, x)

    def test_hand_product(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_inner_mismatch(self):
        with pytest.raises(ValueError):
            T.matmul(T.ones((2, 3)), T.ones((2, 3)))

    def test_gradcheck(self):
        r = rng()
        check_gradients(lambda a, b: T.total(T.matmul(a, b)),
                        [r.normal(size=(3, 4)), r.normal(size=(4, 2))])


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0]))
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_stability(self):
        out = T.softmax(Tensor([1000.0, 0.0]))
        assert np.isfinite(out.data).all()
        assert out.data[0] > 0.999999

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            T.softmax(Tensor([np.inf, 0.0]))

    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    @settings(max_examples=25, deadline=None)
    def test_normalization_property(self, values):
        out = T.softmax(Tensor(values))
        assert abs(out.data.sum() - 1.0) < 1e-12
        assert (out.data > 0).all()

    def test_rowwise_on_matrix(self):
        x = rng().normal(size=(4, 5))
        out = T.softmax(Tensor(x), axis=1)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)

    def test_gradcheck(self):
        x = rng().uniform(-1, 1, size=(3, 4))
        picker = rng().normal(size=(3, 4))
        check_gradients(lambda a: T.total(T.softmax(a, axis=1) * Tensor(picker)), [x])


class TestConv2d:
    def test_one_by_one_identity(self):
        x = rng().normal(size=(1, 4, 4))
        out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
        assert np.allclose(out.data, x)

    def test_delta_response(self):
        x = np.zeros((1, 3, 3))
        x[0, 1, 1] = 1.0
        out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))))
        assert np.allclose(out.data, np.ones((1, 3, 3)))

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            T.conv2d(T.ones((1, 4, 4)), T.ones((1, 1, 2, 2)))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            T.conv2d(T.ones((2, 4, 4)), T.ones((1, 3, 3, 3)))

    def test_batched_matches_loop(self):
        r = rng()
        x = r.normal(size=(3, 2, 5, 5))
        k = r.normal(size=(4, 2, 3, 3))
        b = r.normal(size=(4,))
        batched = T.conv2d(Tensor(x), Tensor(k), Tensor(b))
        for i in range(3):
            single = T.conv2d(Tensor(x[i]), Tensor(k), Tensor(b))
            assert np.allclose(batched.data[i], single.data, atol=1e-12)

    def test_gradcheck_with_bias(self):
        r = rng()
        picker = Tensor(r.normal(size=(3, 5, 5)))
        check_gradients(
            lambda x, k, b: T.total(T.conv2d(x, k, b) * picker),
            [r.normal(size=(2, 5, 5)), r.normal(size=(3, 2, 3, 3)),
             r.normal(size=(3,))])


class TestPoolingResampling:
    def test_global_avg_pool(self):
        x = rng().normal(size=(3, 4, 5))
        out = T.global_avg_pool(Tensor(x))
        assert np.allclose(out.data, x.mean(axis=(1, 2)))

    def test_adaptive_max_quadrants(self):
        x = np.arange(1.0, 17.0).reshape(1, 4, 4)
        out = T.adaptive_max_pool(Tensor(x), 2, 2)
        assert np.array_equal(out.data, [[[6.0, 8.0], [14.0, 16.0]]])

    def test_adaptive_max_bounded_by_input(self):
        x = rng().normal(size=(2, 7, 5))
        out = T.adaptive_max_pool(Tensor(x), 3, 3)
        assert out.data.max() <= x.max()

    def test_adaptive_max_upsampling_cells(self):
        # fewer input cells than outputs: overlapping windows, values repeat
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = T.adaptive_max_pool(Tensor(x), 3, 3)
        assert out.data.shape == (1, 3, 3)
        assert out.data.max() == 4.0 and out.data.min() == 1.0

    def test_upsample_constant(self):
        out = T.bilinear_resize(T.full((1, 3, 3), 2.5), 7, 9)
        assert np.allclose(out.data, 2.5, atol=1e-12)

    def test_upsample_gradcheck(self):
        x = rng().normal(size=(2, 3, 4))
        check_gradients(
            lambda a: T.total(T.bilinear_resize(a, 6, 7)
                              * Tensor(rng().normal(size=(2, 6, 7)))), [x])

    def test_adaptive_max_gradcheck(self):
        x = rng().normal(size=(2, 5, 5))
        check_gradients(
            lambda a: T.total(T.adaptive_max_pool(a, 3, 3)
                              * Tensor(rng().normal(size=(2, 3, 3)))), [x])

    def test_avg_downsample2_values(self):
        x = np.arange(12.0).reshape(1, 3, 4)
        out = T.avg_downsample2(Tensor(x))
        expected = np.array([[[ (0 + 1 + 4 + 5) / 4, (2 + 3 + 6 + 7) / 4],
                              [(8 + 9) / 2, (10 + 11) / 2]]])
        assert np.allclose(out.data, expected)
        assert out.data.shape == (1, 2, 2)


class TestShapeSurgery:
    def test_concat_split_roundtrip(self):
        r = rng()
        parts = [r.normal(size=(2, k)) for k in (1, 3, 2)]
        joined = T.concat([Tensor(p) for p in parts], axis=1)
        back = T.split(joined, [1, 3, 2], axis=1)
        for orig, piece in zip(parts, back):
            assert np.array_equal(orig, piece.data)

    def test_take_rows_duplicate_accumulates(self):
        x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        out = T.take_rows(x, [1, 1, 2])
        backward(T.total(out))
        assert np.array_equal(x.grad, [[0, 0], [2, 2], [1, 1]])

    def test_pad2d_fill_and_grad(self):
        x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
        out = T.pad2d(x, 1, 0, 0, 2, fill=-5.0)
        assert out.shape == (1, 3, 4)
        assert out.data[0, 0, 0] == -5.0
        backward(T.total(out))
        assert np.array_equal(x.grad, np.ones((1, 2, 2)))

    def test_narrow_out_of_range(self):
        with pytest.raises(ValueError):
            T.narrow(T.ones((3, 3)), 0, 2, 2)

    def test_transpose2d(self):
        x = rng().normal(size=(2, 5))
        assert np.array_equal(T.transpose2d(Tensor(x)).data, x.T)

    def test_stack(self):
        r = rng()
        rows = [r.normal(size=(2, 3)) for _ in range(4)]
        out = T.stack([Tensor(x) for x in rows])
        assert out.shape == (4, 2, 3)
        assert np.array_equal(out.data[2], rows[2])


class TestElementwiseGradients:
    def test_maximum_tie_goes_to_first(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([1.0, 5.0], requires_grad=True)
        backward(T.total(T.maximum(a, b)))
        assert np.array_equal(a.grad, [1.0, 0.0])
        assert np.array_equal(b.grad, [0.0, 1.0])

    def test_softplus_matches_log1p_exp(self):
        x = rng().normal(size=(5,))
        assert np.allclose(T.softplus(Tensor(x)).data, np.log1p(np.exp(x)))

    def test_unary_gradchecks(self):
        r = rng()
        x = r.uniform(0.2, 1.0, size=(3, 3))  # positive, away from kinks
        for op in (T.exp, T.log, T.sqrt, T.sigmoid, T.softplus, T.absolute):
            check_gradients(lambda a, op=op: T.total(op(a)), [x])

    def test_affine_gradcheck(self):
        r = rng()
        check_gradients(lambda x, w, b: T.total(T.affine(x, w, b)),
                        [r.normal(size=(4, 3)), r.normal(size=(3, 5)),
                         r.normal(size=(5,))])
