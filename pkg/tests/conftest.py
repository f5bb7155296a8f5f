"""Shared fixtures: tiny images, datasets, and quick-trained models."""

import numpy as np
import pytest

from canecover.classifier import (
    ClassifierConfig,
    prepare_image,
    save_classifier_model,
    train_arrays,
)
from canecover.images import image_from_array, save_image
from canecover.superres import GeneratorConfig, init_generator_params, save_generator_model
from canecover.synth import FieldSpec, generate_field


def checkerboard_image(n=8):
    yy, xx = np.indices((n, n))
    return image_from_array(np.where((yy + xx) % 2 == 0, 0, 255).astype(np.uint8))


@pytest.fixture
def checkerboard_png(tmp_path):
    path = tmp_path / "checkerboard.png"
    save_image(checkerboard_image(8), path)
    return path


@pytest.fixture(scope="session")
def tiny_classifier_model(tmp_path_factory):
    """A quickly trained small classifier saved to disk; label quality is
    good enough to separate the synthetic families."""
    config = ClassifierConfig(input_size=32, conv_channels=(4, 8), epochs=80, batch_size=4)
    xs, ys = [], []
    for i in range(10):
        img, _, _ = generate_field(FieldSpec(width=48, height=48, gap_fraction_target=0.0, seed=i, blob_count=3))
        xs.append(prepare_image(img, config))
        ys.append(0)
        img, _, _ = generate_field(FieldSpec(width=48, height=48, gap_fraction_target=0.35, seed=500 + i))
        xs.append(prepare_image(img, config))
        ys.append(1)
    x = np.stack(xs)
    y = np.asarray(ys, dtype=np.int64)
    params, _ = train_arrays(x, y, x, y, config, seed=5)
    path = tmp_path_factory.mktemp("models") / "tiny.cccl"
    save_classifier_model(path, params, config)
    return path


@pytest.fixture(scope="session")
def tiny_sr_model(tmp_path_factory):
    """An untrained (seeded) generator model file; shape contracts only."""
    config = GeneratorConfig(num_features=4, num_rrdb=1, growth_channels=2, out_scale=4)
    params = init_generator_params(config, 3)
    path = tmp_path_factory.mktemp("models") / "tiny.ccsr"
    save_generator_model(path, params, config)
    return path


@pytest.fixture
def field_png(tmp_path):
    spec = FieldSpec(width=64, height=64, gap_fraction_target=0.25, seed=21)
    image, _, fraction = generate_field(spec)
    path = tmp_path / "field.png"
    save_image(image, path)
    return path, fraction, spec
