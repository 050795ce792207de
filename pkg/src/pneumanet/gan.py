"""Adversarial image synthesis for class balancing.

DCGAN-style pair: the generator projects a latent vector to a small spatial
grid and upsamples it with fractionally-strided convolutions (batchnorm +
relu between stages, sigmoid at the end, so outputs live in [0, 1] like the
/255-normalized real images); the discriminator stacks strided convolutions
with leaky relu into a single sigmoid unit.

Image sides that are not a multiple of the upsampling factor are handled by
generating the next larger multiple and center-cropping (148 -> generate
152, crop 2 per side).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import layers, modelio
from .network import AdamState, adam_step, bce_loss, init_adam, to_nchw
from .validation import check_image_batch, require, shape_mismatch

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 100
    image_shape: tuple[int, int, int] = (148, 148, 1)
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.5
    batch_size: int = 32
    iterations: int = 2000
    base_channels: int = 64
    seed: int = 0

    def __post_init__(self):
        h, w, c = self.image_shape
        require(h == w and c == 1, f"image shape must be square single-channel, got {self.image_shape}")
        require(h >= 4, "image side must be at least 4")
        require(self.latent_dim > 0, "latent_dim must be positive")
        require(self.base_channels > 0, "base_channels must be positive")
        require(self.batch_size >= 2, "batch_size must be >= 2 (generator batchnorm)")

    def to_dict(self):
        return {
            "latent_dim": self.latent_dim, "image_shape": list(self.image_shape),
            "lr_g": self.lr_g, "lr_d": self.lr_d, "adam_beta1": self.adam_beta1,
            "batch_size": self.batch_size, "iterations": self.iterations,
            "base_channels": self.base_channels, "seed": self.seed,
        }

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["image_shape"] = tuple(d["image_shape"])
        return GanConfig(**d)


def _upsample_plan(side):
    """Number of 2x upsampling stages and the base grid they start from."""
    stages = 3 if side >= 64 else (2 if side >= 8 else 1)
    base = math.ceil(side / 2 ** stages)
    return stages, base


@dataclass
class GeneratorParams:
    config: GanConfig
    tensors: dict[str, np.ndarray]
    stages: int
    base: int
    channels: tuple[int, ...]  # per-stage output channels, last is 1

    @property
    def gen_side(self):
        return self.base * 2 ** self.stages


@dataclass
class DiscriminatorParams:
    config: GanConfig
    tensors: dict[str, np.ndarray]
    stages: int
    channels: tuple[int, ...]
    flat_features: int


@dataclass
class GanState:
    config: GanConfig
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    opt_g: AdamState
    opt_d: AdamState
    rng: np.random.Generator
    iteration: int = 0


def _normal_init(rng, shape, dtype=np.float32, scale=0.02):
    return (rng.standard_normal(shape) * scale).astype(dtype)


def build_generator(config: GanConfig, rng) -> GeneratorParams:
    side = config.image_shape[0]
    stages, base = _upsample_plan(side)
    c0 = config.base_channels * 2 ** (stages - 1)
    channels = tuple(
        config.base_channels * 2 ** (stages - 2 - i) if i < stages - 1 else 1
        for i in range(stages)
    )
    t: dict[str, np.ndarray] = {}
    t["g.proj.weights"] = _normal_init(rng, (config.latent_dim, c0 * base * base))
    t["g.proj.bias"] = np.zeros(c0 * base * base, dtype=np.float32)
    t["g.bn0.gamma"] = np.ones(c0, dtype=np.float32)
    t["g.bn0.beta"] = np.zeros(c0, dtype=np.float32)
    t["g.bn0.running_mean"] = np.zeros(c0, dtype=np.float32)
    t["g.bn0.running_var"] = np.ones(c0, dtype=np.float32)
    c_in = c0
    for i, c_out in enumerate(channels):
        t[f"g.up{i}.kernels"] = _normal_init(rng, (c_in, c_out, 4, 4))
        t[f"g.up{i}.bias"] = np.zeros(c_out, dtype=np.float32)
        if i < stages - 1:
            t[f"g.bn{i + 1}.gamma"] = np.ones(c_out, dtype=np.float32)
            t[f"g.bn{i + 1}.beta"] = np.zeros(c_out, dtype=np.float32)
            t[f"g.bn{i + 1}.running_mean"] = np.zeros(c_out, dtype=np.float32)
            t[f"g.bn{i + 1}.running_var"] = np.ones(c_out, dtype=np.float32)
        c_in = c_out
    return GeneratorParams(config=config, tensors=t, stages=stages, base=base, channels=channels)


def build_discriminator(config: GanConfig, rng) -> DiscriminatorParams:
    side = config.image_shape[0]
    stages, _ = _upsample_plan(side)
    channels = tuple(config.base_channels * 2 ** i for i in range(stages))
    t: dict[str, np.ndarray] = {}
    c_in = 1
    s = side
    for i, c_out in enumerate(channels):
        t[f"d.conv{i}.kernels"] = _normal_init(rng, (c_out, c_in, 4, 4))
        t[f"d.conv{i}.bias"] = np.zeros(c_out, dtype=np.float32)
        s = (s + 2 * 1 - 4) // 2 + 1
        c_in = c_out
    flat = channels[-1] * s * s
    t["d.head.weights"] = _normal_init(rng, (flat, 1))
    t["d.head.bias"] = np.zeros(1, dtype=np.float32)
    return DiscriminatorParams(config=config, tensors=t, stages=stages,
                               channels=channels, flat_features=flat)


def init_gan(config: GanConfig) -> GanState:
    rng = np.random.default_rng(config.seed)
    gen = build_generator(config, rng)
    disc = build_discriminator(config, rng)
    opt_g = init_adam(_trainable(gen.tensors), alpha=config.lr_g, beta1=config.adam_beta1)
    opt_d = init_adam(_trainable(disc.tensors), alpha=config.lr_d, beta1=config.adam_beta1)
    return GanState(config=config, generator=gen, discriminator=disc,
                    opt_g=opt_g, opt_d=opt_d, rng=rng)


def _trainable(tensors):
    return {k: v for k, v in tensors.items() if not k.endswith(("running_mean", "running_var"))}


def _running(tensors, name):
    return layers.RunningStats(mean=tensors[f"{name}.running_mean"],
                               var=tensors[f"{name}.running_var"])


def _generator_forward(gen: GeneratorParams, z, mode):
    """Returns (images NCHW on the generator grid before cropping, caches)."""
    t = gen.tensors
    if z.ndim != 2 or z.shape[1] != gen.config.latent_dim:
        raise shape_mismatch("latent batch", ("n", gen.config.latent_dim), z.shape)
    caches = {}
    a = layers.dense_forward(z, t["g.proj.weights"], t["g.proj.bias"])
    caches["z"] = z
    h = a.reshape(z.shape[0], -1, gen.base, gen.base)
    h, caches["bn0"] = layers.batchnorm_forward(
        h, t["g.bn0.gamma"], t["g.bn0.beta"], BN_EPS, mode, _running(t, "g.bn0"), BN_MOMENTUM)
    caches["act0"] = h
    h = layers.activation(h, "relu")
    for i in range(gen.stages):
        caches[f"up{i}.in"] = h
        h = layers.conv_transpose2d_forward(h, t[f"g.up{i}.kernels"], t[f"g.up{i}.bias"], 2, 1)
        if i < gen.stages - 1:
            h, caches[f"bn{i + 1}"] = layers.batchnorm_forward(
                h, t[f"g.bn{i + 1}.gamma"], t[f"g.bn{i + 1}.beta"], BN_EPS,
                mode, _running(t, f"g.bn{i + 1}"), BN_MOMENTUM)
            caches[f"act{i + 1}"] = h
            h = layers.activation(h, "relu")
        else:
            caches["pre_sigmoid"] = h
            h = layers.activation(h, "sigmoid")
    return h, caches


def _generator_backward(gen: GeneratorParams, caches, d_images):
    """d_images is the upstream gradient on the full (uncropped) output."""
    t = gen.tensors
    grads = {}
    p = layers.activation(caches["pre_sigmoid"], "sigmoid")
    dh = d_images * p * (1.0 - p)
    for i in reversed(range(gen.stages)):
        if i < gen.stages - 1:
            dh = layers.activation_backward(caches[f"act{i + 1}"], "relu", dh)
            bn = layers.batchnorm_backward(caches[f"bn{i + 1}"], dh)
            grads[f"g.bn{i + 1}.gamma"], grads[f"g.bn{i + 1}.beta"] = bn.param_grads
            dh = bn.input_grad
        g = layers.conv_transpose2d_backward(
            caches[f"up{i}.in"], t[f"g.up{i}.kernels"], dh, 2, 1)
        grads[f"g.up{i}.kernels"], grads[f"g.up{i}.bias"] = g.param_grads
        dh = g.input_grad
    dh = layers.activation_backward(caches["act0"], "relu", dh)
    bn = layers.batchnorm_backward(caches["bn0"], dh)
    grads["g.bn0.gamma"], grads["g.bn0.beta"] = bn.param_grads
    dh = bn.input_grad
    flat = dh.reshape(dh.shape[0], -1)
    dense = layers.dense_backward(caches["z"], t["g.proj.weights"], flat)
    grads["g.proj.weights"], grads["g.proj.bias"] = dense.param_grads
    return grads


def _crop_offsets(gen: GeneratorParams):
    side = gen.config.image_shape[0]
    margin = gen.gen_side - side
    top = margin // 2
    return top, top + side


def generator_forward(z, gen: GeneratorParams, mode="infer"):
    """Latent batch (n, latent_dim) -> images (n, side, side, 1) in [0, 1]."""
    z = np.asarray(z, dtype=np.float32)
    full, _ = _generator_forward(gen, z, mode)
    lo, hi = _crop_offsets(gen)
    cropped = full[:, :, lo:hi, lo:hi]
    return np.transpose(cropped, (0, 2, 3, 1)).astype(np.float32)


def _discriminator_forward(disc: DiscriminatorParams, x_nchw):
    t = disc.tensors
    caches = {}
    h = x_nchw
    for i in range(disc.stages):
        caches[f"conv{i}.in"] = h
        h = layers.conv2d_forward(h, t[f"d.conv{i}.kernels"], t[f"d.conv{i}.bias"], 2, 1)
        caches[f"act{i}"] = h
        h = layers.activation(h, "leaky_relu", LEAKY_SLOPE)
    caches["flat.shape"] = h.shape
    flat = h.reshape(h.shape[0], -1)
    caches["flat"] = flat
    zlogit = layers.dense_forward(flat, t["d.head.weights"], t["d.head.bias"])
    caches["logit"] = zlogit
    p = layers.activation(zlogit, "sigmoid")
    return p.ravel(), caches


def _discriminator_backward(disc: DiscriminatorParams, caches, d_prob):
    t = disc.tensors
    grads = {}
    p = layers.activation(caches["logit"], "sigmoid")
    dz = d_prob.reshape(p.shape) * p * (1.0 - p)
    dense = layers.dense_backward(caches["flat"], t["d.head.weights"], dz.astype(np.float32))
    grads["d.head.weights"], grads["d.head.bias"] = dense.param_grads
    dh = dense.input_grad.reshape(caches["flat.shape"])
    for i in reversed(range(disc.stages)):
        dh = layers.activation_backward(caches[f"act{i}"], "leaky_relu", dh, LEAKY_SLOPE)
        g = layers.conv2d_backward(caches[f"conv{i}.in"], t[f"d.conv{i}.kernels"], dh, 2, 1)
        grads[f"d.conv{i}.kernels"], grads[f"d.conv{i}.bias"] = g.param_grads
        dh = g.input_grad
    return grads, dh


def discriminator_forward(images, disc: DiscriminatorParams):
    """Image batch (n, side, side, 1) -> per-image probability of 'real'.
    The input dtype is preserved through the math."""
    side = disc.config.image_shape[0]
    images = check_image_batch(images, side)
    p, _ = _discriminator_forward(disc, to_nchw(images))
    return p


def discriminator_input_grad(images, disc: DiscriminatorParams, d_prob):
    """Gradient of a scalar loss w.r.t. the input images, given d(loss)/d(prob)."""
    side = disc.config.image_shape[0]
    images = check_image_batch(images, side)
    _, caches = _discriminator_forward(disc, to_nchw(images))
    _, dx = _discriminator_backward(disc, caches, np.asarray(d_prob))
    return np.transpose(dx, (0, 2, 3, 1))


def gan_train_step(real_batch, state: GanState):
    """One discriminator update on real(1)/fake(0), then one non-saturating
    generator update through the frozen discriminator. Returns (loss_d, loss_g)."""
    side = state.config.image_shape[0]
    real = check_image_batch(real_batch, side)
    n = real.shape[0]
    require(n >= 2, "gan_train_step needs a batch of at least 2 images")
    gen, disc = state.generator, state.discriminator
    ones = np.ones(n, dtype=np.float32)
    zeros = np.zeros(n, dtype=np.float32)

    # discriminator step (generator frozen: its gradients are never formed)
    z = state.rng.standard_normal((n, state.config.latent_dim)).astype(np.float32)
    fake_full, _ = _generator_forward(gen, z, "train")
    lo, hi = _crop_offsets(gen)
    fake = fake_full[:, :, lo:hi, lo:hi]
    p_real, caches_real = _discriminator_forward(disc, to_nchw(real).astype(np.float32))
    p_fake, caches_fake = _discriminator_forward(disc, fake)
    loss_real, grad_real = bce_loss(p_real, ones)
    loss_fake, grad_fake = bce_loss(p_fake, zeros)
    grads_r, _ = _discriminator_backward(disc, caches_real, grad_real)
    grads_f, _ = _discriminator_backward(disc, caches_fake, grad_fake)
    grads_d = {k: grads_r[k] + grads_f[k] for k in grads_r}
    adam_step(_trainable(disc.tensors), grads_d, state.opt_d)
    loss_d = loss_real + loss_fake

    # generator step (discriminator frozen: only its input gradient is used)
    z2 = state.rng.standard_normal((n, state.config.latent_dim)).astype(np.float32)
    fake_full2, g_caches = _generator_forward(gen, z2, "train")
    fake2 = fake_full2[:, :, lo:hi, lo:hi]
    p2, d_caches = _discriminator_forward(disc, fake2)
    loss_g, grad_p2 = bce_loss(p2, ones)
    _, d_images = _discriminator_backward(disc, d_caches, grad_p2)
    d_full = np.zeros_like(fake_full2)
    d_full[:, :, lo:hi, lo:hi] = d_images
    grads_g = _generator_backward(gen, g_caches, d_full)
    adam_step(_trainable(gen.tensors), grads_g, state.opt_g)

    state.iteration += 1
    if not (math.isfinite(loss_d) and math.isfinite(loss_g)):
        raise FloatingPointError(f"non-finite adversarial loss at iteration {state.iteration}")
    return float(loss_d), float(loss_g)


def train_gan(images, config: GanConfig) -> GanState:
    """Run the configured number of adversarial iterations over an image set."""
    images = check_image_batch(images, config.image_shape[0])
    require(images.shape[0] >= 2, "gan training needs at least 2 images")
    state = init_gan(config)
    n = images.shape[0]
    batch = min(config.batch_size, n)
    for _ in range(config.iterations):
        idx = state.rng.choice(n, size=batch, replace=n < batch)
        gan_train_step(images[idx], state)
    return state


def synthesize(count, state: GanState, seed: int):
    """Exactly `count` images from the frozen generator, reproducible given
    the seed (infer-mode batchnorm, so batching does not change results)."""
    require(count >= 0, f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    out = []
    remaining = count
    while remaining > 0:
        b = min(state.config.batch_size, remaining)
        z = rng.standard_normal((b, state.config.latent_dim)).astype(np.float32)
        imgs = generator_forward(z, state.generator, mode="infer")
        out.extend(imgs[i] for i in range(b))
        remaining -= b
    return out


def save_gan(state: GanState, path) -> str:
    descriptor = {"kind": "gan", "config": state.config.to_dict(),
                  "iteration": state.iteration}
    tensors = {**state.generator.tensors, **state.discriminator.tensors}
    return modelio.save_tensors(path, descriptor, tensors)


def load_gan(path) -> GanState:
    """Rebuild a GAN from a checkpoint (optimizer state starts fresh)."""
    descriptor, tensors, _ = modelio.load_tensors(path)
    if descriptor.get("kind") != "gan":
        raise modelio.TensorShapeMismatch(
            f"checkpoint holds a {descriptor.get('kind')!r} model, expected 'gan'")
    config = GanConfig.from_dict(descriptor["config"])
    state = init_gan(config)
    expected = {**state.generator.tensors, **state.discriminator.tensors}
    if set(expected) != set(tensors):
        raise modelio.TensorShapeMismatch("checkpoint tensor names do not match the architecture")
    for k, arr in tensors.items():
        if arr.shape != expected[k].shape:
            raise modelio.TensorShapeMismatch(
                f"tensor {k!r}: expected shape {expected[k].shape}, got {arr.shape}")
    for k in state.generator.tensors:
        state.generator.tensors[k] = tensors[k].copy()
    for k in state.discriminator.tensors:
        state.discriminator.tensors[k] = tensors[k].copy()
    state.opt_g = init_adam(_trainable(state.generator.tensors),
                            alpha=config.lr_g, beta1=config.adam_beta1)
    state.opt_d = init_adam(_trainable(state.discriminator.tensors),
                            alpha=config.lr_d, beta1=config.adam_beta1)
    state.iteration = int(descriptor.get("iteration", 0))
    return state


class XrayGan(BaseEstimator):
    """Estimator-style wrapper: fit(X) trains the adversarial pair on an
    image batch, sample(n) draws synthetic images from the fitted generator."""

    def __init__(self, latent_dim=100, image_size=148, lr_g=2e-4, lr_d=2e-4,
                 adam_beta1=0.5, batch_size=32, iterations=2000,
                 base_channels=64, seed=0):
        self.latent_dim = latent_dim
        self.image_size = image_size
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.adam_beta1 = adam_beta1
        self.batch_size = batch_size
        self.iterations = iterations
        self.base_channels = base_channels
        self.seed = seed

    def _config(self) -> GanConfig:
        return GanConfig(
            latent_dim=self.latent_dim,
            image_shape=(self.image_size, self.image_size, 1),
            lr_g=self.lr_g, lr_d=self.lr_d, adam_beta1=self.adam_beta1,
            batch_size=self.batch_size, iterations=self.iterations,
            base_channels=self.base_channels, seed=self.seed,
        )

    def fit(self, X, y=None):
        self.state_ = train_gan(X, self._config())
        return self

    def sample(self, count, seed=None):
        if not hasattr(self, "state_"):
            raise ValueError("fit must be called before sample")
        return synthesize(count, self.state_, self.seed if seed is None else seed)
