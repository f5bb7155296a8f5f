"""Classifier forward/backward, training behavior, and prediction contract."""

import numpy as np
import pytest
from gradcheck_util import central_difference_grads, max_relative_error

from canecover.classifier import (
    CLASS_NAMES,
    ClassifierConfig,
    classifier_param_shapes,
    cross_entropy_with_gradient,
    evaluate_arrays,
    forward,
    init_classifier_params,
    predict,
    train_arrays,
    _backward_batch,
    _forward_batch,
)
from canecover.images import image_from_array
from canecover.metrics import confusion_from_pairs
from canecover.synth import FieldSpec, generate_field
from canecover.tensor import (
    Conv2DSpec,
    ShapeError,
    conv2d,
    leaky_relu,
    max_pool2,
    softmax,
)

SMALL = ClassifierConfig(input_size=16, conv_channels=(2, 4), epochs=2, batch_size=4)


def field_tensor(target, seed, size, config):
    spec = FieldSpec(width=size, height=size, gap_fraction_target=target, seed=seed)
    image, _, _ = generate_field(spec)
    from canecover.classifier import prepare_image

    return prepare_image(image, config)


def toy_dataset(config, n_per_class=8, size=32, seed=0):
    xs, ys = [], []
    for i in range(n_per_class):
        xs.append(field_tensor(0.0, seed * 1000 + i, size, config))
        ys.append(0)  # poblada
        xs.append(field_tensor(0.35, seed * 1000 + 500 + i, size, config))
        ys.append(1)  # despoblada
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


class TestForward:
    def test_zero_weights_yield_bias_logits(self):
        params = {k: np.zeros(s) for k, s in classifier_param_shapes(SMALL).items()}
        params["head.b"] = np.array([0.7, 0.7])
        logits = forward(np.random.default_rng(0).uniform(size=(3, 16, 16)), params, SMALL)
        np.testing.assert_allclose(logits, [0.7, 0.7])
        np.testing.assert_allclose(softmax(logits), [0.5, 0.5])

    def test_doubling_head_weights_doubles_logit_minus_bias(self):
        params = init_classifier_params(SMALL, 2)
        params["head.w"] = np.random.default_rng(2).normal(size=params["head.w"].shape)
        x = np.random.default_rng(1).uniform(size=(3, 16, 16))
        base = forward(x, params, SMALL) - params["head.b"]
        doubled = dict(params)
        doubled["head.w"] = 2.0 * params["head.w"]
        got = forward(x, doubled, SMALL) - params["head.b"]
        np.testing.assert_allclose(got, 2.0 * base, atol=1e-12)

    def test_matches_straight_line_reference(self):
        config = ClassifierConfig(input_size=8, conv_channels=(2,))
        params = init_classifier_params(config, 5)
        params["head.w"] = np.random.default_rng(5).normal(size=params["head.w"].shape)
        x = np.random.default_rng(6).uniform(size=(3, 8, 8))

        spec = Conv2DSpec(3, 2, 3, 1, 1, weights=params["conv0.w"], bias=params["conv0.b"])
        act = leaky_relu(conv2d(x, spec), config.leaky_slope)
        pooled = max_pool2(act)
        feats = pooled.mean(axis=(1, 2))
        expected = params["head.w"] @ feats + params["head.b"]

        np.testing.assert_allclose(forward(x, params, config), expected, atol=1e-12)

    def test_wrong_dims_error_mentions_resize(self):
        params = init_classifier_params(SMALL, 0)
        with pytest.raises(ShapeError, match="resize"):
            forward(np.ones((3, 8, 8)), params, SMALL)

    def test_deterministic(self):
        params = init_classifier_params(SMALL, 1)
        x = np.random.default_rng(2).uniform(size=(3, 16, 16))
        np.testing.assert_array_equal(forward(x, params, SMALL), forward(x, params, SMALL))


class TestGradients:
    def test_cross_entropy_gradients_match_finite_differences(self):
        config = ClassifierConfig(input_size=16, conv_channels=(2, 4))
        rng = np.random.default_rng(21)
        params = init_classifier_params(config, 21)
        # a generic differentiable point: nonzero head, kink-free biases
        params["head.w"] = rng.normal(0.0, 0.5, size=params["head.w"].shape)
        for name in params:
            if name.endswith(".b"):
                params[name] = params[name] + rng.uniform(0.2, 0.4, size=params[name].shape)
        x = rng.uniform(0.1, 0.9, size=(2, 3, 16, 16))
        y = np.array([0, 1])

        logits, cache = _forward_batch(x, params, config, want_cache=True)
        _, g_logits = cross_entropy_with_gradient(logits, y)
        analytic = _backward_batch(g_logits / 2.0, params, config, cache)

        def loss(p):
            lo, _ = _forward_batch(x, p, config)
            value, _ = cross_entropy_with_gradient(lo, y)
            return value / 2.0

        numeric = central_difference_grads(loss, params, h=1e-5)
        assert max_relative_error(analytic, numeric) < 1e-4


class TestTraining:
    def test_loss_decreases_on_smoke_set(self):
        config = ClassifierConfig(input_size=32, conv_channels=(4, 8), epochs=50, batch_size=4)
        x, y = toy_dataset(config, n_per_class=8, size=32, seed=1)
        params, history = train_arrays(x, y, x, y, config, seed=3)
        assert history[-1].train_loss < 0.5 * history[0].train_loss
        assert history[-1].train_acc >= history[0].train_acc
        assert history[-1].train_acc == 1.0

    def test_lr_zero_keeps_accuracy_history_constant(self):
        config = ClassifierConfig(
            input_size=16, conv_channels=(2, 4), epochs=3, batch_size=8, lr=0.0
        )
        x, y = toy_dataset(config, n_per_class=4, size=32, seed=2)
        _, history = train_arrays(x, y, x, y, config, seed=1)
        assert len({e.train_acc for e in history}) == 1
        assert len({e.val_acc for e in history}) == 1

    def test_single_class_rejected(self):
        config = SMALL
        x = np.random.default_rng(0).uniform(size=(4, 3, 16, 16))
        y = np.zeros(4, dtype=np.int64)
        with pytest.raises(ValueError, match="single class"):
            train_arrays(x, y, x, y, config, seed=0)

    def test_deterministic_per_seed(self):
        config = ClassifierConfig(input_size=16, conv_channels=(2,), epochs=2, batch_size=4)
        x, y = toy_dataset(config, n_per_class=4, size=24, seed=5)
        p1, h1 = train_arrays(x, y, x, y, config, seed=11)
        p2, h2 = train_arrays(x, y, x, y, config, seed=11)
        assert h1 == h2
        for name in p1:
            np.testing.assert_array_equal(p1[name], p2[name])


@pytest.fixture(scope="module")
def trained():
    config = ClassifierConfig(input_size=32, conv_channels=(4, 8), epochs=80, batch_size=4)
    x, y = toy_dataset(config, n_per_class=12, size=48, seed=7)
    params, history = train_arrays(x, y, x, y, config, seed=7)
    assert history[-1].train_acc == 1.0, "fixture model failed to converge"
    return config, params


class TestPredict:
    def test_depopulated_field_predicted_despoblada(self, trained):
        config, params = trained
        image, _, _ = generate_field(
            FieldSpec(width=48, height=48, gap_fraction_target=0.35, seed=909)
        )
        pred = predict(image, params, config)
        assert pred.label == "despoblada"
        assert pred.probs[1] > 0.5

    def test_probs_sum_to_one(self, trained):
        config, params = trained
        image, _, _ = generate_field(
            FieldSpec(width=40, height=40, gap_fraction_target=0.1, seed=3)
        )
        pred = predict(image, params, config)
        assert abs(sum(pred.probs) - 1.0) <= 1e-9

    def test_same_image_same_prediction(self, trained):
        config, params = trained
        image, _, _ = generate_field(
            FieldSpec(width=40, height=40, gap_fraction_target=0.3, seed=4)
        )
        assert predict(image, params, config) == predict(image, params, config)

    def test_grayscale_input_channel_replicated(self, trained):
        config, params = trained
        gray = image_from_array(np.full((20, 20), 200, dtype=np.uint8))
        pred = predict(gray, params, config)
        assert pred.label in CLASS_NAMES

    def test_argmax_shift_invariant(self):
        probs = softmax(np.array([0.4, 1.3]))
        shifted = softmax(np.array([0.4 + 5.0, 1.3 + 5.0]))
        np.testing.assert_allclose(probs, shifted, atol=1e-12)


class TestEvaluate:
    def test_confusion_roles_transpose(self):
        config = ClassifierConfig(input_size=16, conv_channels=(2,), epochs=1, batch_size=4)
        x, y = toy_dataset(config, n_per_class=4, size=24, seed=9)
        params, _ = train_arrays(x, y, x, y, config, seed=9)
        cm = evaluate_arrays(x, y, params, config)
        preds = []
        from canecover.classifier import _forward_batch as fb

        logits, _ = fb(x, params, config)
        preds = [CLASS_NAMES[i] for i in logits.argmax(axis=1)]
        truths = [CLASS_NAMES[i] for i in y]
        swapped = confusion_from_pairs(preds, truths, CLASS_NAMES)
        np.testing.assert_array_equal(swapped.counts, cm.counts.T)

    def test_counts_sum_to_test_size(self):
        config = ClassifierConfig(input_size=16, conv_channels=(2,), epochs=1, batch_size=4)
        x, y = toy_dataset(config, n_per_class=3, size=24, seed=10)
        params, _ = train_arrays(x, y, x, y, config, seed=10)
        cm = evaluate_arrays(x, y, params, config)
        assert cm.total == len(y)
        assert cm.counts[0].sum() == int((y == 0).sum())
        assert cm.counts[1].sum() == int((y == 1).sum())
