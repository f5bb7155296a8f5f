"""Tensor kernel tests: each op against hand values or a naive reference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canecover.tensor import (
    Conv2DSpec,
    ShapeError,
    adam_step,
    as_tensor,
    conv2d,
    conv2d_backward,
    global_avg_pool,
    init_adam_state,
    leaky_relu,
    max_pool2,
    max_pool2_backward,
    nearest_upsample,
    nearest_upsample_backward,
    pixel_shuffle,
    pixel_unshuffle,
    power_iteration_sigma,
    softmax,
)


def make_spec(w, b, stride=1, padding=0):
    w = np.asarray(w, dtype=np.float64)
    return Conv2DSpec(
        in_channels=w.shape[1],
        out_channels=w.shape[0],
        kernel_size=w.shape[2],
        stride=stride,
        padding=padding,
        weights=w,
        bias=np.asarray(b, dtype=np.float64),
    )


def conv2d_loops(x, w, b, stride=1, padding=0):
    """Fully naive nested-loop cross-correlation, the independent oracle."""
    c_in, h, w_in = x.shape
    c_out, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w_in + 2 * padding - k) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = 0.0
                for c in range(c_in):
                    for ky in range(k):
                        for kx in range(k):
                            acc += w[o, c, ky, kx] * xp[c, i * stride + ky, j * stride + kx]
                out[o, i, j] = acc + b[o]
    return out


class TestConv2d:
    def test_all_ones_3x3_sums_to_nine(self):
        x = np.ones((1, 3, 3))
        spec = make_spec(np.ones((1, 1, 3, 3)), [0.0])
        out = conv2d(x, spec)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 9.0

    def test_identity_1x1_kernel(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5, 4))
        w = np.zeros((2, 2, 1, 1))
        w[0, 0, 0, 0] = 1.0
        w[1, 1, 0, 0] = 1.0
        out = conv2d(x, make_spec(w, [0.0, 0.0]))
        np.testing.assert_array_equal(out, x)

    def test_ramp_matches_loop_reference(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        rng = np.random.default_rng(11)
        w = rng.normal(size=(2, 1, 3, 3))
        b = rng.normal(size=2)
        out = conv2d(x, make_spec(w, b))
        np.testing.assert_allclose(out, conv2d_loops(x, w, b), rtol=0, atol=1e-12)

    def test_hundred_seeded_cases_match_loop_reference(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            c_in = int(rng.integers(1, 4))
            c_out = int(rng.integers(1, 4))
            k = int(rng.choice([1, 3, 5]))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 3))
            h = int(rng.integers(k, k + 5))
            w_in = int(rng.integers(k, k + 5))
            x = rng.normal(size=(c_in, h, w_in))
            w = rng.normal(size=(c_out, c_in, k, k))
            b = rng.normal(size=c_out)
            got = conv2d(x, make_spec(w, b, stride, padding))
            np.testing.assert_allclose(
                got, conv2d_loops(x, w, b, stride, padding), rtol=0, atol=1e-12
            )

    def test_batched_input_matches_per_image(self):
        rng = np.random.default_rng(5)
        xb = rng.normal(size=(4, 2, 6, 6))
        spec = make_spec(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3), padding=1)
        got = conv2d(xb, spec)
        for i in range(4):
            np.testing.assert_allclose(got[i], conv2d(xb[i], spec), atol=1e-12)

    def test_channel_mismatch_raises(self):
        spec = make_spec(np.ones((1, 2, 3, 3)), [0.0])
        with pytest.raises(ShapeError, match="channels"):
            conv2d(np.ones((3, 4, 4)), spec)

    def test_kernel_too_large_raises(self):
        spec = make_spec(np.ones((1, 1, 5, 5)), [0.0])
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 3, 3)), spec)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        spec = make_spec(w, b, stride=2, padding=1)
        g = rng.normal(size=conv2d(x, spec).shape)

        def loss(xv, wv, bv):
            return float((conv2d(xv, make_spec(wv, bv, 2, 1)) * g).sum())

        gx, gw, gb = conv2d_backward(x, spec, g)
        h = 1e-6
        for arr, grad, which in ((x, gx, "x"), (w, gw, "w"), (b, gb, "b")):
            flat = arr.ravel()
            for idx in range(0, flat.size, max(1, flat.size // 17)):
                bump = np.zeros_like(flat)
                bump[idx] = h
                pert = (flat + bump).reshape(arr.shape)
                args = {"x": (pert, w, b), "w": (x, pert, b), "b": (x, w, pert)}[which]
                num = (loss(*args) - loss(x, w, b)) / h
                assert abs(num - grad.ravel()[idx]) < 1e-4


class TestPixelShuffle:
    def test_unshuffle_r1_is_identity(self):
        x = np.random.default_rng(1).normal(size=(3, 4, 4))
        np.testing.assert_array_equal(pixel_unshuffle(x, 1), x)

    def test_unshuffle_hand_enumerated_4x4(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        out = pixel_unshuffle(x, 2)
        expected = np.array(
            [
                [[0, 2], [8, 10]],
                [[1, 3], [9, 11]],
                [[4, 6], [12, 14]],
                [[5, 7], [13, 15]],
            ],
            dtype=np.float64,
        )
        np.testing.assert_array_equal(out, expected)

    def test_unshuffle_preserves_multiset(self):
        x = np.random.default_rng(2).normal(size=(2, 6, 6))
        out = pixel_unshuffle(x, 2)
        np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(x.ravel()))

    def test_unshuffle_non_divisible_names_dim(self):
        with pytest.raises(ShapeError, match="height 5"):
            pixel_unshuffle(np.ones((1, 5, 4)), 2)
        with pytest.raises(ShapeError, match="width 5"):
            pixel_unshuffle(np.ones((1, 4, 5)), 2)

    def test_shuffle_inverts_hand_example(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        np.testing.assert_array_equal(pixel_shuffle(pixel_unshuffle(x, 2), 2), x)

    def test_shuffle_bad_channels_raises(self):
        with pytest.raises(ShapeError, match="divisible"):
            pixel_shuffle(np.ones((3, 2, 2)), 2)

    @pytest.mark.parametrize("r", [1, 2, 4])
    def test_round_trip_seeded_tensors(self, r):
        rng = np.random.default_rng(100 + r)
        for _ in range(25):
            c = int(rng.integers(1, 4))
            h = r * int(rng.integers(1, 5))
            w = r * int(rng.integers(1, 5))
            x = rng.normal(size=(c, h, w))
            back = pixel_shuffle(pixel_unshuffle(x, r), r)
            np.testing.assert_array_equal(back, x)

    def test_round_trip_8x6x6(self):
        x = np.random.default_rng(42).normal(size=(8, 6, 6))
        np.testing.assert_array_equal(pixel_shuffle(pixel_unshuffle(x, 2), 2), x)


class TestElementwiseAndPooling:
    def test_leaky_relu_values(self):
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_allclose(leaky_relu(x, 0.2), [-0.4, 0.0, 3.0])

    def test_nearest_upsample(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = nearest_upsample(x, 2)
        np.testing.assert_array_equal(
            out[0], [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        )

    def test_nearest_upsample_backward_sums_blocks(self):
        g = np.ones((1, 4, 4))
        np.testing.assert_array_equal(nearest_upsample_backward(g, 2), np.full((1, 2, 2), 4.0))

    def test_max_pool2(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        np.testing.assert_array_equal(max_pool2(x), [[[4.0]]])

    def test_max_pool2_odd_dims_raise(self):
        with pytest.raises(ShapeError, match="even"):
            max_pool2(np.ones((1, 3, 4)))

    def test_max_pool2_backward_routes_to_first_max(self):
        x = np.array([[[1.0, 4.0], [4.0, 0.0]]])  # tie: row-major first wins
        g = np.array([[[2.0]]])
        out = max_pool2_backward(x, g)
        np.testing.assert_array_equal(out, [[[0.0, 2.0], [0.0, 0.0]]])

    def test_global_avg_pool(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        np.testing.assert_allclose(global_avg_pool(x), [2.5])

    def test_empty_tensor_rejected(self):
        with pytest.raises(ShapeError):
            leaky_relu(np.empty((0,)))


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax(np.zeros(2)), [0.5, 0.5])

    def test_requires_two_logits(self):
        with pytest.raises(ShapeError):
            softmax(np.array([1.0]))

    def test_huge_logits_stable(self):
        out = softmax(np.array([1000.0, 1000.0, 999.0]))
        assert np.all(np.isfinite(out)) and np.all(out > 0)
        assert abs(out.sum() - 1.0) <= 1e-12

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=6),
        st.floats(-100, 100),
    )
    @settings(max_examples=50, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, logits, shift):
        z = np.asarray(logits)
        p = softmax(z)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p > 0)
        np.testing.assert_allclose(softmax(z + shift), p, rtol=0, atol=1e-12)


def scalar_adam(p, g, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent scalar Adam, evaluated straight from the update formula."""
    m = v = 0.0
    for t in range(1, steps + 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


class TestAdam:
    def test_zero_gradient_keeps_params_and_moments(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.zeros(2)}
        state = init_adam_state(params)
        new_params, new_state = adam_step(params, grads, state, lr=0.1, t=1)
        np.testing.assert_array_equal(new_params["w"], params["w"])
        np.testing.assert_array_equal(new_state.m["w"], 0.0)
        np.testing.assert_array_equal(new_state.v["w"], 0.0)

    def test_first_step_magnitude_equals_lr(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        new_params, _ = adam_step(params, grads, init_adam_state(params), lr=0.1, t=1)
        # bias-corrected first step: lr * 1 / (1 + eps)
        assert abs(new_params["w"][0] - (-0.1)) < 1e-8

    def test_two_steps_match_scalar_oracle(self):
        params = {"w": np.array([0.3])}
        grads = {"w": np.array([0.7])}
        state = init_adam_state(params)
        for t in (1, 2):
            params, state = adam_step(params, grads, state, lr=0.05, t=t)
        expected = scalar_adam(0.3, 0.7, 0.05, steps=2)
        np.testing.assert_allclose(params["w"][0], expected, rtol=0, atol=1e-15)

    def test_lr_zero_is_identity_on_params(self):
        rng = np.random.default_rng(8)
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        new_params, _ = adam_step(params, grads, init_adam_state(params), lr=0.0, t=1)
        for k in params:
            np.testing.assert_array_equal(new_params[k], params[k])

    def test_shape_mismatch_raises(self):
        params = {"w": np.zeros(2)}
        grads = {"w": np.zeros(3)}
        with pytest.raises(ShapeError):
            adam_step(params, grads, init_adam_state(params), lr=0.1, t=1)

    def test_inputs_not_mutated(self):
        params = {"w": np.array([1.0])}
        grads = {"w": np.array([2.0])}
        state = init_adam_state(params)
        adam_step(params, grads, state, lr=0.1, t=1)
        assert params["w"][0] == 1.0
        assert state.m["w"][0] == 0.0


def sigma_oracle(a, seed=12345):
    """SVD-free reference: iterate A^T A to convergence from a random start."""
    rng = np.random.default_rng(seed)
    ata = a.T @ a
    v = rng.normal(size=a.shape[1])
    v /= np.linalg.norm(v)
    prev = -1.0
    for _ in range(100000):
        v = ata @ v
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        cur = float(v @ (ata @ v))
        if abs(cur - prev) <= 1e-14 * max(cur, 1.0):
            break
        prev = cur
    return float(np.sqrt(cur))


class TestPowerIteration:
    def test_identity_matrix(self):
        assert power_iteration_sigma(np.eye(3)) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_3_1(self):
        assert power_iteration_sigma(np.diag([3.0, 1.0]), iters=50) == pytest.approx(3.0, abs=1e-6)

    def test_zero_matrix(self):
        assert power_iteration_sigma(np.zeros((4, 4))) == 0.0

    def test_seeded_8x8_within_one_percent_of_oracle(self):
        rng = np.random.default_rng(99)
        a = rng.normal(size=(8, 8))
        got = power_iteration_sigma(a, iters=200)
        ref = sigma_oracle(a)
        assert abs(got - ref) / ref < 0.01

    def test_scale_equivariant(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=(5, 7))
        base = power_iteration_sigma(a, iters=80)
        for c in (-3.0, 0.5, 10.0):
            scaled = power_iteration_sigma(c * a, iters=80)
            assert abs(scaled - abs(c) * base) <= 1e-9 * abs(c) * base


class TestAsTensor:
    def test_rank_bounds(self):
        with pytest.raises(ShapeError):
            as_tensor(np.ones((2, 2, 2, 2, 2)))
        with pytest.raises(ShapeError):
            as_tensor(5.0)

    def test_rank_check(self):
        with pytest.raises(ShapeError):
            as_tensor([1.0, 2.0], rank=2)
