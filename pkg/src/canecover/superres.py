"""Toy-scale x4 super-resolution generator and spectrally normalized U-Net critic.

The generator follows the residual-in-residual dense-block family: a
pixel-unshuffle front end (factor 4/out_scale for out_scale 1-2), a trunk
of RRDB blocks with a long skip, a two-stage nearest-neighbor x2 upsampling
tail, and two finishing convolutions. Channel counts default to desk scale
(8 features, 2 blocks, growth 4) so finite-difference gradient checks stay
tractable. Training minimizes mean absolute error with Adam via explicit
backward passes; everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import _resize_axis
from .params_io import MAGIC_SR, load_params, save_params, validate_shapes
from .tensor import (
    Conv2DSpec,
    ShapeError,
    Tensor,
    adam_step,
    conv2d,
    conv2d_backward,
    init_adam_state,
    leaky_relu,
    leaky_relu_backward,
    nearest_upsample,
    nearest_upsample_backward,
    pixel_unshuffle,
    power_iteration,
)

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GeneratorConfig:
    num_features: int = 8
    num_rrdb: int = 2
    growth_channels: int = 4
    residual_scale: float = 0.2
    out_scale: int = 4

    def __post_init__(self):
        if self.out_scale not in (1, 2, 3, 4):
            raise ValueError(f"out_scale must be 1..4, got {self.out_scale}")
        if not 0.0 < self.residual_scale <= 1.0:
            raise ValueError(f"residual_scale must be in (0, 1], got {self.residual_scale}")
        if min(self.num_features, self.num_rrdb, self.growth_channels) < 1:
            raise ValueError("num_features, num_rrdb, growth_channels must be positive")

    @property
    def unshuffle_factor(self) -> int:
        # x4 tail is fixed; smaller output scales shrink the input spatially
        # first so no information is discarded (4 -> r=1, 2 -> r=2, 1 -> r=4).
        return 4 // self.out_scale if self.out_scale in (1, 2) else 1


@dataclass(frozen=True)
class RRDBParams:
    """Three dense sub-blocks of five convolutions each.

    Within a sub-block, conv i consumes the block input concatenated with
    every earlier conv's output (num_features + (i-1)*growth channels) and
    the fifth conv maps back to num_features channels.
    """

    subblocks: tuple

    def __post_init__(self):
        if len(self.subblocks) != 3:
            raise ShapeError(f"RRDB needs exactly 3 dense sub-blocks, got {len(self.subblocks)}")
        f = self.subblocks[0][0].in_channels
        g = self.subblocks[0][0].out_channels
        for convs in self.subblocks:
            if len(convs) != 5:
                raise ShapeError(f"dense sub-block needs 5 convolutions, got {len(convs)}")
            for i, spec in enumerate(convs, start=1):
                expect_in = f + (i - 1) * g
                expect_out = f if i == 5 else g
                if spec.in_channels != expect_in or spec.out_channels != expect_out:
                    raise ShapeError(
                        f"dense conv {i} must map {expect_in} -> {expect_out} channels, "
                        f"got {spec.in_channels} -> {spec.out_channels}"
                    )

    @property
    def num_features(self) -> int:
        return self.subblocks[0][0].in_channels


def rrdb_forward(x: Tensor, params: RRDBParams, beta: float) -> Tensor:
    """One residual-in-residual dense block.

    Each sub-block adds its dense output scaled by beta to its own input,
    and the block adds the chain's net contribution, again scaled by beta,
    back onto x; with all-zero body weights the block is an exact identity.
    """
    if x.shape[0] != params.num_features:
        raise ShapeError(
            f"input has {x.shape[0]} channels, RRDB expects {params.num_features}"
        )
    out, _ = _rrdb_forward_cached(x, params.subblocks, beta)
    return out


# --- parameter templates -------------------------------------------------


def _dense_shapes(prefix: str, f: int, g: int) -> dict:
    shapes = {}
    for i in range(1, 6):
        cin = f + (i - 1) * g
        cout = f if i == 5 else g
        shapes[f"{prefix}.conv{i}.w"] = (cout, cin, 3, 3)
        shapes[f"{prefix}.conv{i}.b"] = (cout,)
    return shapes


def generator_param_shapes(config: GeneratorConfig) -> dict:
    f, g = config.num_features, config.growth_channels
    in_ch = 3 * config.unshuffle_factor**2
    shapes = {"first.w": (f, in_ch, 3, 3), "first.b": (f,)}
    for b in range(config.num_rrdb):
        for s in range(3):
            shapes.update(_dense_shapes(f"rrdb{b}.sub{s}", f, g))
    for name in ("trunk", "up1", "up2", "hr"):
        shapes[f"{name}.w"] = (f, f, 3, 3)
        shapes[f"{name}.b"] = (f,)
    shapes["last.w"] = (3, f, 3, 3)
    shapes["last.b"] = (3,)
    return shapes


def init_generator_params(config: GeneratorConfig, seed: int) -> dict:
    """He-style init scaled by 0.1, the usual RRDB-family residual init."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in generator_param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape) * 0.1
    return params


def save_generator(path, params: dict):
    save_params(path, params, MAGIC_SR)


def load_generator(path, config: GeneratorConfig) -> dict:
    params = load_params(path, MAGIC_SR)
    validate_shapes(params, generator_param_shapes(config), "generator")
    return params


def save_generator_model(path, params: dict, config: GeneratorConfig):
    """Save weights plus the residual scale so inference can rebuild the net."""
    doc = dict(params)
    doc["meta.residual_scale"] = np.array([config.residual_scale])
    save_params(path, doc, MAGIC_SR)


def load_generator_model(path, out_scale: int):
    """Load a model file and reconstruct its config for the requested scale.

    Feature/growth/block counts come from the stored shapes; the requested
    out_scale must belong to the same pixel-unshuffle family the model was
    trained for (1, 2, or 3/4).
    """
    doc = load_params(path, MAGIC_SR)
    beta = float(doc.pop("meta.residual_scale")[0]) if "meta.residual_scale" in doc else 0.2
    f, in_ch = doc["first.w"].shape[0], doc["first.w"].shape[1]
    growth = doc["rrdb0.sub0.conv1.w"].shape[0]
    num_rrdb = 0
    while f"rrdb{num_rrdb}.sub0.conv1.w" in doc:
        num_rrdb += 1
    config = GeneratorConfig(
        num_features=f,
        num_rrdb=num_rrdb,
        growth_channels=growth,
        residual_scale=beta,
        out_scale=out_scale,
    )
    expected_in = 3 * config.unshuffle_factor**2
    if expected_in != in_ch:
        raise ValueError(
            f"model's unshuffle front takes {in_ch} channels but out_scale "
            f"{out_scale} needs {expected_in}; train a model for this scale"
        )
    validate_shapes(doc, generator_param_shapes(config), "generator")
    return doc, config


def _spec(params: dict, name: str, cin: int, cout: int, stride: int = 1) -> Conv2DSpec:
    return Conv2DSpec(
        in_channels=cin,
        out_channels=cout,
        kernel_size=params[f"{name}.w"].shape[2],
        stride=stride,
        padding=params[f"{name}.w"].shape[2] // 2,
        weights=params[f"{name}.w"],
        bias=params[f"{name}.b"],
    )


def _dense_specs(params: dict, prefix: str, f: int, g: int) -> list:
    return [
        _spec(params, f"{prefix}.conv{i}", f + (i - 1) * g, f if i == 5 else g)
        for i in range(1, 6)
    ]


def rrdb_params_from_dict(params: dict, prefix: str, config: GeneratorConfig) -> RRDBParams:
    f, g = config.num_features, config.growth_channels
    return RRDBParams(
        subblocks=tuple(tuple(_dense_specs(params, f"{prefix}.sub{s}", f, g)) for s in range(3))
    )


# --- forward/backward ----------------------------------------------------


def _dense_forward_cached(y, convs, slope=LEAKY_SLOPE):
    feats, pres = [y], []
    for spec in convs[:-1]:
        pre = conv2d(np.concatenate(feats, axis=0), spec)
        pres.append(pre)
        feats.append(leaky_relu(pre, slope))
    delta = conv2d(np.concatenate(feats, axis=0), convs[-1])
    return delta, (feats, pres)


def _split_add(gin, acc, upto):
    start = 0
    for i in range(upto):
        size = acc[i].shape[0]
        acc[i] += gin[start : start + size]
        start += size


def _dense_backward(cache, convs, g, slope=LEAKY_SLOPE):
    feats, pres = cache
    acc = [np.zeros_like(f) for f in feats]
    gin, gw5, gb5 = conv2d_backward(np.concatenate(feats, axis=0), convs[-1], g)
    grads = {4: (gw5, gb5)}
    _split_add(gin, acc, len(feats))
    for i in range(3, -1, -1):
        g_pre = leaky_relu_backward(pres[i], acc[i + 1], slope)
        gin, gw, gb = conv2d_backward(np.concatenate(feats[: i + 1], axis=0), convs[i], g_pre)
        grads[i] = (gw, gb)
        _split_add(gin, acc, i + 1)
    return acc[0], grads


def _rrdb_forward_cached(x, subblocks, beta):
    y = x
    caches = []
    for convs in subblocks:
        delta, cache = _dense_forward_cached(y, convs)
        caches.append(cache)
        y = y + beta * delta
    # Outer residual carries the chain's net contribution only, so an
    # all-zero body leaves x untouched.
    return x + beta * (y - x), caches


def _rrdb_backward(caches, subblocks, beta, g_out):
    g_chain = beta * g_out
    grads = {}
    for s in range(2, -1, -1):
        g_y, dense_grads = _dense_backward(caches[s], subblocks[s], beta * g_chain)
        g_chain = g_chain + g_y
        grads[s] = dense_grads
    g_x = g_chain + (1.0 - beta) * g_out
    return g_x, grads


def _check_finite(params: dict):
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"non-finite weights in parameter '{name}'")


def generator_forward(lr_image: Tensor, config: GeneratorConfig, params: dict) -> Tensor:
    """Upscale a 3xHxW tensor to 3x(s*H)x(s*W) for s = config.out_scale.

    Values are not clamped here; clamping to [0, 1] happens only when the
    result is exported back to an 8-bit image.
    """
    out, _ = _generator_forward_cached(lr_image, config, params, check=True)
    return out


def _generator_forward_cached(x, config: GeneratorConfig, params: dict, check: bool = False):
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"generator input must be 3xHxW, got shape {x.shape}")
    r = config.unshuffle_factor
    _, h, w = x.shape
    if h % r != 0:
        raise ShapeError(f"height {h} not divisible by unshuffle factor {r}")
    if w % r != 0:
        raise ShapeError(f"width {w} not divisible by unshuffle factor {r}")
    if check:
        _check_finite(params)

    f, g = config.num_features, config.growth_channels
    beta = config.residual_scale
    z = pixel_unshuffle(x, r)
    fea = conv2d(z, _spec(params, "first", 3 * r * r, f))
    body = fea
    rrdb_caches = []
    for b in range(config.num_rrdb):
        subblocks = tuple(tuple(_dense_specs(params, f"rrdb{b}.sub{s}", f, g)) for s in range(3))
        body, caches = _rrdb_forward_cached(body, subblocks, beta)
        rrdb_caches.append((caches, subblocks, body))
    trunk_in = rrdb_caches[-1][2] if rrdb_caches else fea
    trunk = conv2d(trunk_in, _spec(params, "trunk", f, f))
    t0 = fea + trunk
    u1 = nearest_upsample(t0, 2)
    p1 = conv2d(u1, _spec(params, "up1", f, f))
    a1 = leaky_relu(p1, LEAKY_SLOPE)
    u2 = nearest_upsample(a1, 2)
    p2 = conv2d(u2, _spec(params, "up2", f, f))
    a2 = leaky_relu(p2, LEAKY_SLOPE)
    ph = conv2d(a2, _spec(params, "hr", f, f))
    ah = leaky_relu(ph, LEAKY_SLOPE)
    out = conv2d(ah, _spec(params, "last", f, 3))
    cache = {
        "z": z,
        "rrdb": rrdb_caches,
        "trunk_in": trunk_in,
        "u1": u1,
        "p1": p1,
        "u2": u2,
        "p2": p2,
        "a2": a2,
        "ph": ph,
        "ah": ah,
        "net_hw": out.shape[1:],
    }
    if config.out_scale == 3:
        # The x4 network output is mapped to exactly 3x via bilinear resampling.
        cache["pre_resize_hw"] = out.shape[1:]
        out = _resize_tensor(out, 3 * h, 3 * w)
    return out, cache


def generator_backward(grad_out: Tensor, config: GeneratorConfig, params: dict, cache: dict) -> dict:
    """Parameter gradients for generator_forward; mirrors the cached pass."""
    f, g = config.num_features, config.growth_channels
    grads = {}
    go = grad_out
    if config.out_scale == 3:
        go = _resize_tensor_backward(go, *cache["pre_resize_hw"])
    g_ah, grads["last.w"], grads["last.b"] = conv2d_backward(
        cache["ah"], _spec(params, "last", f, 3), go
    )
    g_ph = leaky_relu_backward(cache["ph"], g_ah, LEAKY_SLOPE)
    g_a2, grads["hr.w"], grads["hr.b"] = conv2d_backward(
        cache["a2"], _spec(params, "hr", f, f), g_ph
    )
    g_p2 = leaky_relu_backward(cache["p2"], g_a2, LEAKY_SLOPE)
    g_u2, grads["up2.w"], grads["up2.b"] = conv2d_backward(
        cache["u2"], _spec(params, "up2", f, f), g_p2
    )
    g_a1 = nearest_upsample_backward(g_u2, 2)
    g_p1 = leaky_relu_backward(cache["p1"], g_a1, LEAKY_SLOPE)
    g_u1, grads["up1.w"], grads["up1.b"] = conv2d_backward(
        cache["u1"], _spec(params, "up1", f, f), g_p1
    )
    g_t0 = nearest_upsample_backward(g_u1, 2)
    g_body, grads["trunk.w"], grads["trunk.b"] = conv2d_backward(
        cache["trunk_in"], _spec(params, "trunk", f, f), g_t0
    )
    g_fea = g_t0
    for b in range(config.num_rrdb - 1, -1, -1):
        caches, subblocks, _ = cache["rrdb"][b]
        g_body, rrdb_grads = _rrdb_backward(caches, subblocks, config.residual_scale, g_body)
        for s, dense_grads in rrdb_grads.items():
            for i, (gw, gb) in dense_grads.items():
                grads[f"rrdb{b}.sub{s}.conv{i + 1}.w"] = gw
                grads[f"rrdb{b}.sub{s}.conv{i + 1}.b"] = gb
    g_fea = g_fea + g_body
    _, grads["first.w"], grads["first.b"] = conv2d_backward(
        cache["z"], _spec(params, "first", 3 * config.unshuffle_factor**2, f), g_fea
    )
    return grads


def _resize_tensor(t: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of a CxHxW float tensor with half-pixel centers."""
    _, h, w = t.shape
    y0, y1, fy = _resize_axis(out_h, h)
    x0, x1, fx = _resize_axis(out_w, w)
    fy = fy[np.newaxis, :, np.newaxis]
    fx = fx[np.newaxis, np.newaxis, :]
    top = t[:, y0][:, :, x0] * (1 - fx) + t[:, y0][:, :, x1] * fx
    bot = t[:, y1][:, :, x0] * (1 - fx) + t[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bot * fy


def _resize_tensor_backward(grad_out: Tensor, in_h: int, in_w: int) -> Tensor:
    c, out_h, out_w = grad_out.shape
    y0, y1, fy = _resize_axis(out_h, in_h)
    x0, x1, fx = _resize_axis(out_w, in_w)
    g = np.zeros((c, in_h, in_w))
    cc = np.arange(c)[:, np.newaxis, np.newaxis]
    fy = fy[np.newaxis, :, np.newaxis]
    fx = fx[np.newaxis, np.newaxis, :]
    for ys, wy in ((y0, 1 - fy), (y1, fy)):
        for xs, wx in ((x0, 1 - fx), (x1, fx)):
            np.add.at(
                g,
                (cc, ys[np.newaxis, :, np.newaxis], xs[np.newaxis, np.newaxis, :]),
                grad_out * wy * wx,
            )
    return g


# --- L1 training ---------------------------------------------------------


@dataclass(frozen=True)
class SRTrainingConfig:
    """Optimizer settings; defaults record the reference run's values.

    Desk-scale smoke runs shrink batch_size and steps.
    """

    batch_size: int = 48
    steps: int = 500
    lr: float = 1e-4
    seed: int = 0


def train_generator_l1(pairs, config: GeneratorConfig, training: SRTrainingConfig):
    """Minimize mean absolute error over (low-res, high-res) tensor pairs.

    Returns (params, loss_history) where loss_history[t] is the batch L1
    loss before update t+1. Batches cycle through the pairs in order;
    results are bit-identical for a fixed seed.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("training requires at least one (lr, hr) pair")
    s, r = config.out_scale, config.unshuffle_factor
    for i, (lo, hi) in enumerate(pairs):
        if lo.ndim != 3 or lo.shape[0] != 3 or hi.ndim != 3 or hi.shape[0] != 3:
            raise ShapeError(f"pair {i}: tensors must be 3xHxW")
        if lo.shape[1] % r or lo.shape[2] % r:
            raise ShapeError(f"pair {i}: low-res dims {lo.shape[1:]} not divisible by {r}")
        if hi.shape[1:] != (s * lo.shape[1], s * lo.shape[2]):
            raise ShapeError(
                f"pair {i}: high-res dims {hi.shape[1:]} inconsistent with "
                f"out_scale {s} of {lo.shape[1:]}"
            )

    params = init_generator_params(config, training.seed)
    state = init_adam_state(params)
    history = []
    n = len(pairs)
    b = min(training.batch_size, n)
    for t in range(1, training.steps + 1):
        base = (t - 1) * b
        batch = [pairs[(base + k) % n] for k in range(b)]
        loss, grads = _l1_batch_gradients(batch, config, params)
        history.append(loss)
        params, state = adam_step(params, grads, state, training.lr, t=t)
    return params, history


def _l1_batch_gradients(batch, config, params):
    total = None
    loss = 0.0
    for lo, hi in batch:
        out, cache = _generator_forward_cached(lo, config, params)
        diff = out - hi
        loss += float(np.abs(diff).mean())
        g_out = np.sign(diff) / (diff.size * len(batch))
        grads = generator_backward(g_out, config, params, cache)
        if total is None:
            total = grads
        else:
            for name in total:
                total[name] += grads[name]
    return loss / len(batch), total


# --- spectrally normalized U-Net discriminator ----------------------------


@dataclass(frozen=True)
class DiscriminatorConfig:
    num_features: int = 8
    depth: int = 2

    def __post_init__(self):
        if self.num_features < 1 or self.depth < 1:
            raise ValueError("num_features and depth must be positive")


def discriminator_param_shapes(config: DiscriminatorConfig) -> dict:
    f = config.num_features
    shapes = {"enc0.w": (f, 3, 3, 3), "enc0.b": (f,)}
    for i in range(1, config.depth + 1):
        shapes[f"enc{i}.w"] = (f * 2**i, f * 2 ** (i - 1), 3, 3)
        shapes[f"enc{i}.b"] = (f * 2**i,)
    for i in range(config.depth - 1, -1, -1):
        shapes[f"dec{i}.w"] = (f * 2**i, f * 2 ** (i + 1), 3, 3)
        shapes[f"dec{i}.b"] = (f * 2**i,)
    shapes["head.w"] = (1, f, 3, 3)
    shapes["head.b"] = (1,)
    return shapes


def init_discriminator_params(config: DiscriminatorConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in discriminator_param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return params


def _sn_weight(params, name, sn_iters, sn_state):
    """Divide a conv weight by its power-iteration spectral norm estimate."""
    w = params[f"{name}.w"]
    mat = w.reshape(w.shape[0], -1)
    start = sn_state.get(name) if sn_state is not None else None
    sigma, v = power_iteration(mat, iters=sn_iters, start=start)
    if sn_state is not None:
        sn_state[name] = v
    return w / sigma if sigma > 0.0 else w


def discriminator_forward(
    image: Tensor,
    params: dict,
    config: DiscriminatorConfig = DiscriminatorConfig(),
    sn_iters: int = 50,
    sn_state: dict | None = None,
) -> Tensor:
    """Per-pixel realness map (1xHxW) from a 3xHxW input.

    Every conv weight is divided by its estimated spectral norm before use,
    so uniform rescaling of raw weights leaves the output unchanged up to
    power-iteration tolerance. Pass a dict as ``sn_state`` to persist power
    iteration vectors across calls (then sn_iters=1 per call suffices);
    the default runs 50 fresh iterations, the evaluation setting.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"discriminator input must be 3xHxW, got shape {image.shape}")
    f, depth = config.num_features, config.depth
    _, h, w = image.shape
    if h % 2**depth or w % 2**depth:
        raise ShapeError(f"dims {h}x{w} must be divisible by {2 ** depth} (depth {depth})")

    def norm_spec(name, cin, cout, stride=1):
        wn = _sn_weight(params, name, sn_iters, sn_state)
        return Conv2DSpec(
            in_channels=cin,
            out_channels=cout,
            kernel_size=3,
            stride=stride,
            padding=1,
            weights=wn,
            bias=params[f"{name}.b"],
        )

    skips = []
    x = leaky_relu(conv2d(image, norm_spec("enc0", 3, f)), LEAKY_SLOPE)
    skips.append(x)
    for i in range(1, depth + 1):
        x = leaky_relu(
            conv2d(x, norm_spec(f"enc{i}", f * 2 ** (i - 1), f * 2**i, stride=2)), LEAKY_SLOPE
        )
        if i < depth:
            skips.append(x)
    for i in range(depth - 1, -1, -1):
        x = nearest_upsample(x, 2)
        x = leaky_relu(conv2d(x, norm_spec(f"dec{i}", f * 2 ** (i + 1), f * 2**i)), LEAKY_SLOPE)
        x = x + skips[i]
    return conv2d(x, norm_spec("head", f, 1))


__all__ = [
    "GeneratorConfig",
    "RRDBParams",
    "SRTrainingConfig",
    "DiscriminatorConfig",
    "rrdb_forward",
    "rrdb_params_from_dict",
    "generator_forward",
    "generator_backward",
    "generator_param_shapes",
    "init_generator_params",
    "save_generator",
    "load_generator",
    "train_generator_l1",
    "discriminator_param_shapes",
    "init_discriminator_params",
    "discriminator_forward",
]
