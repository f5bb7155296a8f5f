"""Generator, RRDB, discriminator, and L1 training behavior."""

import numpy as np
import pytest
from gradcheck_util import central_difference_grads, max_relative_error

from canecover.superres import (
    DiscriminatorConfig,
    GeneratorConfig,
    SRTrainingConfig,
    discriminator_forward,
    discriminator_param_shapes,
    generator_backward,
    generator_forward,
    generator_param_shapes,
    init_discriminator_params,
    init_generator_params,
    rrdb_forward,
    rrdb_params_from_dict,
    train_generator_l1,
    _generator_forward_cached,
)
from canecover.tensor import (
    ShapeError,
    conv2d,
    leaky_relu,
    nearest_upsample,
    pixel_unshuffle,
    power_iteration_sigma,
)

TINY = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=4)


def rrdb_reference(x, rrdb, beta):
    """Straight-line expansion of the dense wiring, kept independent of the
    production forward pass."""

    def dense(y, convs):
        c1 = leaky_relu(conv2d(y, convs[0]))
        c2 = leaky_relu(conv2d(np.concatenate([y, c1]), convs[1]))
        c3 = leaky_relu(conv2d(np.concatenate([y, c1, c2]), convs[2]))
        c4 = leaky_relu(conv2d(np.concatenate([y, c1, c2, c3]), convs[3]))
        return conv2d(np.concatenate([y, c1, c2, c3, c4]), convs[4])

    y1 = x + beta * dense(x, rrdb.subblocks[0])
    y2 = y1 + beta * dense(y1, rrdb.subblocks[1])
    y3 = y2 + beta * dense(y2, rrdb.subblocks[2])
    return x + beta * (y3 - x)


class TestRRDB:
    def _params(self, config, seed):
        return rrdb_params_from_dict(init_generator_params(config, seed), "rrdb0", config)

    def test_zero_body_weights_is_exact_identity(self):
        config = GeneratorConfig(num_features=8, num_rrdb=1, growth_channels=4)
        params = {k: np.zeros_like(v) for k, v in init_generator_params(config, 0).items()}
        rrdb = rrdb_params_from_dict(params, "rrdb0", config)
        x = np.random.default_rng(1).normal(size=(8, 4, 4))
        np.testing.assert_array_equal(rrdb_forward(x, rrdb, 0.2), x)

    def test_beta_zero_is_identity(self):
        config = GeneratorConfig(num_features=8, num_rrdb=1, growth_channels=4)
        rrdb = self._params(config, 3)
        x = np.random.default_rng(2).normal(size=(8, 4, 4))
        np.testing.assert_array_equal(rrdb_forward(x, rrdb, 0.0), x)

    def test_matches_straight_line_reference(self):
        config = GeneratorConfig(num_features=8, num_rrdb=1, growth_channels=4)
        rrdb = self._params(config, 7)
        x = np.random.default_rng(8).normal(size=(8, 4, 4))
        got = rrdb_forward(x, rrdb, 0.2)
        np.testing.assert_allclose(got, rrdb_reference(x, rrdb, 0.2), rtol=0, atol=1e-12)
        assert got.shape == x.shape

    def test_channel_mismatch_rejected(self):
        config = GeneratorConfig(num_features=8, num_rrdb=1, growth_channels=4)
        rrdb = self._params(config, 1)
        with pytest.raises(ShapeError, match="channels"):
            rrdb_forward(np.ones((4, 4, 4)), rrdb, 0.2)


class TestGeneratorForward:
    @pytest.mark.parametrize("scale", [1, 2, 4])
    def test_shape_law(self, scale):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=scale)
        params = init_generator_params(config, 0)
        r = config.unshuffle_factor
        rng = np.random.default_rng(scale)
        for _ in range(5):
            h = r * int(rng.integers(1, 5)) * (4 // r if r > 1 else 1)
            w = r * int(rng.integers(1, 5)) * (4 // r if r > 1 else 1)
            h = max(h, r)
            w = max(w, r)
            x = rng.uniform(size=(3, h, w))
            out = generator_forward(x, config, params)
            assert out.shape == (3, scale * h, scale * w)

    def test_outscale_three_resamples_to_exact_dims(self):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=3)
        params = init_generator_params(config, 0)
        x = np.random.default_rng(5).uniform(size=(3, 8, 6))
        out = generator_forward(x, config, params)
        assert out.shape == (3, 24, 18)

    def test_indivisible_dims_rejected(self):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=1)
        params = init_generator_params(config, 0)
        with pytest.raises(ShapeError, match="divisible"):
            generator_forward(np.ones((3, 6, 8)), config, params)

    def test_zero_weight_network_outputs_final_bias(self):
        rng = np.random.default_rng(9)
        params = {}
        for name, shape in generator_param_shapes(TINY).items():
            params[name] = np.zeros(shape) if name.endswith(".w") else rng.normal(size=shape)
        x = rng.uniform(size=(3, 4, 4))
        out = generator_forward(x, TINY, params)
        assert np.all(np.isfinite(out))
        for ch in range(3):
            np.testing.assert_allclose(out[ch], params["last.b"][ch], atol=1e-15)

    def test_zero_trunk_passes_first_conv_features_to_tail(self):
        params = init_generator_params(TINY, 4)
        for name in list(params):
            if name.startswith(("rrdb", "trunk")):
                params[name] = np.zeros_like(params[name])
        x = np.random.default_rng(6).uniform(size=(3, 4, 4))
        out = generator_forward(x, TINY, params)

        # independent tail computation fed directly with the first conv output
        from canecover.superres import _spec

        fea = conv2d(pixel_unshuffle(x, 1), _spec(params, "first", 3, 4))
        t = leaky_relu(conv2d(nearest_upsample(fea, 2), _spec(params, "up1", 4, 4)))
        t = leaky_relu(conv2d(nearest_upsample(t, 2), _spec(params, "up2", 4, 4)))
        t = leaky_relu(conv2d(t, _spec(params, "hr", 4, 4)))
        expected = conv2d(t, _spec(params, "last", 4, 3))
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_non_finite_weights_rejected(self):
        params = init_generator_params(TINY, 0)
        params["trunk.w"] = params["trunk.w"].copy()
        params["trunk.w"][0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            generator_forward(np.ones((3, 4, 4)), TINY, params)

    def test_wrong_channel_count_rejected(self):
        params = init_generator_params(TINY, 0)
        with pytest.raises(ShapeError):
            generator_forward(np.ones((1, 4, 4)), TINY, params)


def gradcheck_setup(scale, seed):
    """A well-conditioned smooth point for finite differences.

    Unscaled He weights and residual scale 1.0 keep deep-path gradients
    above the h^2 noise floor; bias offsets keep every leaky-ReLU
    pre-activation away from its kink, and the L1 target keeps a fixed
    sign gap at every output position.
    """
    config = GeneratorConfig(
        num_features=3, num_rrdb=1, growth_channels=2, residual_scale=1.0, out_scale=scale
    )
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in generator_param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = rng.uniform(0.2, 0.4, size=shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0, np.sqrt(2.0 / fan_in), size=shape)
    drv = np.random.default_rng(seed + 100)
    r = config.unshuffle_factor
    hw = 4 if r == 1 else r * 2
    x = drv.uniform(0.2, 0.8, size=(3, hw, hw))
    out, cache = _generator_forward_cached(x, config, params)
    delta = drv.uniform(0.1, 0.5, size=out.shape) * drv.choice([-1.0, 1.0], size=out.shape)
    target = out + delta
    margin = min(
        float(np.min(np.abs(v)))
        for v in [cache["p1"], cache["p2"], cache["ph"]]
        + [p for caches, _, _ in cache["rrdb"] for _, pres in caches for p in pres]
    )
    assert margin > 1e-3, "kink-adjacent configuration; pick another seed"
    return config, params, x, target, out, cache


# seeds giving comfortable kink margins per out_scale (found by sweep)
GRADCHECK_SEEDS = {4: 13, 2: 0, 3: 13}


class TestGeneratorGradients:
    @pytest.mark.parametrize("scale", [4, 2])
    def test_analytic_matches_central_differences(self, scale):
        config, params, x, target, out, cache = gradcheck_setup(scale, GRADCHECK_SEEDS[scale])

        def loss(p):
            return float(np.abs(generator_forward(x, config, p) - target).mean())

        g_out = np.sign(out - target) / out.size
        analytic = generator_backward(g_out, config, params, cache)
        sampled = ["first.w", "rrdb0.sub1.conv3.w", "rrdb0.sub2.conv5.b", "trunk.w", "up2.w", "hr.b", "last.w"]
        numeric = central_difference_grads(loss, params, h=1e-5, names=sampled)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_outscale_three_gradients(self):
        config, params, x, target, out, cache = gradcheck_setup(3, GRADCHECK_SEEDS[3])

        def loss(p):
            return float(np.abs(generator_forward(x, config, p) - target).mean())

        analytic = generator_backward(np.sign(out - target) / out.size, config, params, cache)
        numeric = central_difference_grads(loss, params, h=1e-5, names=["up1.w", "last.b"])
        assert max_relative_error(analytic, numeric) < 1e-4


def smoke_pairs(n=8, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(3, 8, 8))
    hr = nearest_upsample(x, 4)
    return [(x, hr)] * n


class TestTrainGeneratorL1:
    def test_loss_halves_within_200_steps(self):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=4)
        training = SRTrainingConfig(batch_size=2, steps=200, lr=2e-3, seed=1)
        _, history = train_generator_l1(smoke_pairs(), config, training)
        assert history[-1] < 0.5 * history[0]

    def test_lr_zero_keeps_history_constant(self):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=4)
        training = SRTrainingConfig(batch_size=4, steps=10, lr=0.0, seed=1)
        _, history = train_generator_l1(smoke_pairs(4), config, training)
        assert len(set(history)) == 1

    def test_fixed_seed_bit_identical(self):
        config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=4)
        training = SRTrainingConfig(batch_size=2, steps=25, lr=1e-3, seed=9)
        params1, history1 = train_generator_l1(smoke_pairs(), config, training)
        params2, history2 = train_generator_l1(smoke_pairs(), config, training)
        assert history1 == history2
        for name in params1:
            np.testing.assert_array_equal(params1[name], params2[name])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="pair"):
            train_generator_l1([], TINY, SRTrainingConfig(steps=1))

    def test_dimensionally_inconsistent_pair_rejected(self):
        x = np.ones((3, 8, 8))
        with pytest.raises(ShapeError, match="inconsistent"):
            train_generator_l1([(x, np.ones((3, 16, 16)))], TINY, SRTrainingConfig(steps=1))


class TestDiscriminator:
    CONFIG = DiscriminatorConfig(num_features=4, depth=2)

    def test_output_shape_is_per_pixel_map(self):
        params = init_discriminator_params(self.CONFIG, 0)
        out = discriminator_forward(np.random.default_rng(0).uniform(size=(3, 16, 16)), params, self.CONFIG)
        assert out.shape == (1, 16, 16)

    @pytest.mark.parametrize("factor", [0.1, 10.0])
    def test_weight_scaling_leaves_output_unchanged(self, factor):
        params = init_discriminator_params(self.CONFIG, 3)
        x = np.random.default_rng(4).uniform(size=(3, 8, 8))
        base = discriminator_forward(x, params, self.CONFIG)
        scaled = {
            k: (v * factor if k.endswith(".w") else v.copy()) for k, v in params.items()
        }
        out = discriminator_forward(x, scaled, self.CONFIG)
        denom = max(float(np.max(np.abs(base))), 1e-12)
        assert float(np.max(np.abs(out - base))) / denom < 1e-3

    def test_zero_weights_give_bias_only_map(self):
        params = {
            k: np.zeros(shape) for k, shape in discriminator_param_shapes(self.CONFIG).items()
        }
        out = discriminator_forward(np.ones((3, 8, 8)), params, self.CONFIG)
        np.testing.assert_array_equal(out, np.zeros((1, 8, 8)))

    def test_indivisible_dims_rejected(self):
        params = init_discriminator_params(self.CONFIG, 0)
        with pytest.raises(ShapeError, match="divisible"):
            discriminator_forward(np.ones((3, 10, 8)), params, self.CONFIG)

    def test_normalized_weights_have_unit_sigma(self):
        params = init_discriminator_params(self.CONFIG, 8)
        for name in ("enc1", "dec0", "head"):
            w = params[f"{name}.w"]
            mat = w.reshape(w.shape[0], -1)
            sigma = power_iteration_sigma(mat, iters=100)
            renorm = power_iteration_sigma(mat / sigma, iters=100)
            assert renorm == pytest.approx(1.0, abs=1e-6)

    def test_persisted_power_iteration_state_converges(self):
        params = init_discriminator_params(self.CONFIG, 5)
        x = np.random.default_rng(6).uniform(size=(3, 8, 8))
        reference = discriminator_forward(x, params, self.CONFIG, sn_iters=50)
        state = {}
        # repeated single-iteration calls with a persisted vector approach
        # the 50-iteration evaluation result
        for _ in range(60):
            out = discriminator_forward(x, params, self.CONFIG, sn_iters=1, sn_state=state)
        denom = max(float(np.max(np.abs(reference))), 1e-12)
        assert float(np.max(np.abs(out - reference))) / denom < 1e-3
