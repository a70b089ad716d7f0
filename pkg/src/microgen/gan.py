"""Volumetric DC-GAN: architecture table, losses, latent space, generation.

The full-scale generator maps a (100, a, a, a) standard-normal latent
field to a (3, L, L, L) soft one-hot volume with L = 64 + (a-1)*16; the
discriminator maps a (3, 64, 64, 64) volume to a scalar probability.
Running every generator layer with circular padding yields volumes that
are exactly periodic with period 16*a per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .voxel import OneHotGrid, VoxelGrid, decode, one_hot_encode
from .metrics import MetricReport, aggregate_stats, compute_report
from .transport import solve_diffusion
from .nn.adam import Adam
from .nn.layers import Sequential, make_block
from .nn.ops import ConvSpec
from .nn.weights import (records_from_sequential, sequential_from_records,
                         split_records, read_mgw1, write_mgw1)

LATENT_CHANNELS = 100
PROB_CLAMP = 1e-7

# (op, in_ch, out_ch, kernel, stride, pad, batch_norm, activation)
GENERATOR_TABLE = [
    ("convT", 100, 512, 4, 1, 0, True, "relu"),
    ("convT", 512, 256, 4, 2, 1, True, "relu"),
    ("convT", 256, 128, 4, 2, 1, True, "relu"),
    ("convT", 128, 64, 4, 2, 1, True, "relu"),
    ("convT", 64, 3, 4, 2, 1, False, "softmax"),
]

DISCRIMINATOR_TABLE = [
    ("conv", 3, 16, 4, 2, 1, True, "leaky_relu"),
    ("conv", 16, 32, 4, 2, 1, True, "leaky_relu"),
    ("conv", 32, 64, 4, 2, 1, True, "leaky_relu"),
    ("conv", 64, 128, 4, 2, 1, True, "leaky_relu"),
    ("conv", 128, 1, 4, 1, 0, False, "sigmoid"),
]


def toy_generator_table(latent_dim: int = 12, phase_count: int = 3):
    """Scaled-down generator producing 8^3 volumes from a=1 latents."""
    return [
        ("convT", latent_dim, 64, 4, 1, 0, True, "relu"),
        ("convT", 64, 32, 4, 2, 1, True, "relu"),
        ("convT", 32, phase_count, 3, 1, 1, False, "softmax"),
    ]


def toy_discriminator_table(phase_count: int = 3):
    return [
        ("conv", phase_count, 8, 4, 2, 1, True, "leaky_relu"),
        ("conv", 8, 1, 4, 1, 0, False, "sigmoid"),
    ]


def build_net(table, seed: int = 0) -> Sequential:
    """Randomly initialized network from an architecture table."""
    rng = np.random.default_rng(seed)
    blocks = []
    for op, c_in, c_out, k, s, p, bn, act in table:
        spec = ConvSpec(c_in, c_out, (k, k, k), s, p, "zero")
        blocks.append(make_block(op, spec, act, bn, rng))
    return Sequential(blocks)


def build_generator(seed: int = 0, table=None) -> Sequential:
    return build_net(GENERATOR_TABLE if table is None else table, seed)


def build_discriminator(seed: int = 0, table=None) -> Sequential:
    return build_net(DISCRIMINATOR_TABLE if table is None else table, seed)


def generated_edge(alpha: int) -> int:
    """Output edge length of the full-scale generator for latent extent a."""
    return 64 + (alpha - 1) * 16


def sample_latent(seed: int, alpha: int = 1,
                  channels: int = LATENT_CHANNELS) -> np.ndarray:
    """Reproducible i.i.d. N(0,1) latent field (channels, a, a, a)."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((channels, alpha, alpha, alpha),
                               dtype=np.float32)


def interpolate_latent(z_start: np.ndarray, z_end: np.ndarray,
                       beta: float) -> np.ndarray:
    """Convex combination beta*z_start + (1-beta)*z_end."""
    if z_start.shape != z_end.shape:
        raise ValueError(f"shape mismatch {z_start.shape} vs {z_end.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return beta * z_start + (1.0 - beta) * z_end


def generate(gen: Sequential, z: np.ndarray,
             spacing_nm: float = 1.0) -> OneHotGrid:
    """Eval-mode forward pass; returns the soft one-hot volume."""
    if z.ndim != 4 or z.shape[0] != gen.in_channels:
        raise ValueError(f"latent shape {z.shape} does not match generator "
                         f"input ({gen.in_channels} channels)")
    y = gen.forward(z, train=False)
    return OneHotGrid(y, spacing_nm=spacing_nm)


def generate_periodic(gen: Sequential, z: np.ndarray,
                      spacing_nm: float = 1.0) -> OneHotGrid:
    """Forward pass with every layer in circular mode.

    The output is exactly periodic under the construction: tiling the
    latent field tiles the output (up to f32 round-off).
    """
    if z.ndim != 4 or z.shape[0] != gen.in_channels:
        raise ValueError(f"latent shape {z.shape} does not match generator "
                         f"input ({gen.in_channels} channels)")
    y = gen.forward(z, train=False, pad_mode="circular")
    return OneHotGrid(y, spacing_nm=spacing_nm)


def _clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def discriminator_loss(d_real, d_fake, smoothing: float = 0.0) -> float:
    """Maximization objective of the discriminator.

    One-sided label smoothing replaces the real-data target 1 with
    1 - smoothing. Training descends on the negation of this value.
    """
    dr = _clamp_probs(np.asarray(d_real, dtype=np.float64))
    df = _clamp_probs(np.asarray(d_fake, dtype=np.float64))
    e = smoothing
    real_term = np.mean((1.0 - e) * np.log(dr) + e * np.log(1.0 - dr))
    fake_term = np.mean(np.log(1.0 - df))
    return float(real_term + fake_term)


def _d_loss_grad_real(d_real, smoothing: float) -> np.ndarray:
    dr = _clamp_probs(np.asarray(d_real, dtype=np.float64))
    e = smoothing
    return -((1.0 - e) / dr - e / (1.0 - dr)) / dr.size


def _d_loss_grad_fake(d_fake) -> np.ndarray:
    df = _clamp_probs(np.asarray(d_fake, dtype=np.float64))
    return (1.0 / (1.0 - df)) / df.size


def discriminator_loss_grads(d_real, d_fake, smoothing: float = 0.0):
    """Gradients of the descent loss (negated objective) w.r.t. the probs."""
    return _d_loss_grad_real(d_real, smoothing), _d_loss_grad_fake(d_fake)


def generator_loss(d_fake, mode: str = "non_saturating") -> float:
    """Generator descent loss over the discriminator's fake-batch probs."""
    df = _clamp_probs(np.asarray(d_fake, dtype=np.float64))
    if mode == "non_saturating":
        return float(-np.mean(np.log(df)))
    if mode == "saturating":
        return float(np.mean(np.log(1.0 - df)))
    raise ValueError(f"mode must be 'non_saturating' or 'saturating', got {mode!r}")


def generator_loss_grad(d_fake, mode: str = "non_saturating") -> np.ndarray:
    df = _clamp_probs(np.asarray(d_fake, dtype=np.float64))
    if mode == "non_saturating":
        return -1.0 / (df * df.size)
    if mode == "saturating":
        return -1.0 / ((1.0 - df) * df.size)
    raise ValueError(f"mode must be 'non_saturating' or 'saturating', got {mode!r}")


@dataclass
class TrainConfig:
    """Adversarial training hyperparameters."""

    lr: float = 2e-5
    beta1: float = 0.5
    beta2: float = 0.999
    label_smoothing: float = 0.1
    update_ratio: int = 2           # generator updates per discriminator update
    batch_size: int = 32
    max_epochs: int = 72
    max_cycles: int | None = None   # overrides max_epochs when set
    seed: int = 0
    snapshot_every_epochs: int = 2
    loss_mode: str = "non_saturating"

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label smoothing must be in [0, 1), "
                             f"got {self.label_smoothing}")
        if self.update_ratio < 1:
            raise ValueError(f"update ratio must be >= 1, got {self.update_ratio}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class TrainResult:
    history: list
    snapshots: list
    d_updates: int
    g_updates: int


def _dataset_array(dataset) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        data = dataset
    else:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        data = np.stack([oh.values for oh in dataset])
    if data.ndim != 5:
        raise ValueError(f"dataset must stack to 5D, got shape {data.shape}")
    return data.astype(np.float32, copy=False)


def _latent_alpha(gen: Sequential, spatial: tuple[int, int, int]) -> int:
    for alpha in range(1, 1 + max(spatial)):
        if gen.out_spatial((alpha,) * 3) == tuple(spatial):
            return alpha
    raise ValueError(f"generator cannot produce sample shape {spatial}")


def train(dataset, config: TrainConfig, generator: Sequential,
          discriminator: Sequential) -> TrainResult:
    """Alternating adversarial updates: per cycle one discriminator step
    (real batch with smoothed labels plus fake batch), then `update_ratio`
    generator steps on the non-saturating loss, ADAM on both nets.

    Deterministic for a fixed config seed.
    """
    data = _dataset_array(dataset)
    n_samples, channels = data.shape[0], data.shape[1]
    if channels != generator.out_channels:
        raise ValueError(f"dataset has {channels} channels, generator "
                         f"outputs {generator.out_channels}")
    if config.batch_size > n_samples:
        raise ValueError(f"batch size {config.batch_size} exceeds dataset "
                         f"size {n_samples}")
    alpha = _latent_alpha(generator, data.shape[2:])
    latent_shape = (config.batch_size, generator.in_channels) + (alpha,) * 3

    rng = np.random.default_rng(config.seed)
    adam_g = Adam(generator.params(), config.lr, config.beta1, config.beta2)
    adam_d = Adam(discriminator.params(), config.lr, config.beta1, config.beta2)
    snapshot_z = rng.standard_normal(latent_shape[1:], dtype=np.float32)

    steps_per_epoch = max(1, n_samples // config.batch_size)
    total_cycles = (config.max_cycles if config.max_cycles is not None
                    else config.max_epochs * steps_per_epoch)

    history = []
    snapshots = []
    d_updates = 0
    g_updates = 0
    order = rng.permutation(n_samples)
    cursor = 0
    next_snapshot = config.snapshot_every_epochs

    def snap(epoch: float) -> None:
        oh = generate(generator, snapshot_z)
        grid = decode(oh)
        counts = np.bincount(grid.flat_labels(), minlength=channels)
        snapshots.append({"epoch": epoch,
                          "volume_fractions": counts / grid.voxel_count,
                          "grid": grid})

    for cycle in range(total_cycles):
        if cursor + config.batch_size > n_samples:
            order = rng.permutation(n_samples)
            cursor = 0
        batch_idx = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        real = data[batch_idx]

        # Discriminator step: ascend J_D (descend its negation). Each
        # sub-batch is backpropagated right after its forward pass because
        # layers hold a single cache.
        discriminator.zero_grads()
        d_real_t = discriminator.forward(real, train=True)
        d_real = d_real_t.reshape(config.batch_size)
        g_real = _d_loss_grad_real(d_real, config.label_smoothing)
        discriminator.backward(g_real.reshape(d_real_t.shape))
        z = rng.standard_normal(latent_shape, dtype=np.float32)
        fake = generator.forward(z, train=True)
        d_fake_t = discriminator.forward(fake, train=True)
        d_fake = d_fake_t.reshape(config.batch_size)
        g_fake = _d_loss_grad_fake(d_fake)
        discriminator.backward(g_fake.reshape(d_fake_t.shape))
        adam_d.step()
        d_updates += 1
        j_d = discriminator_loss(d_real, d_fake, config.label_smoothing)

        # Generator steps: descend the (non-saturating) generator loss.
        j_g = math.nan
        for _ in range(config.update_ratio):
            generator.zero_grads()
            z = rng.standard_normal(latent_shape, dtype=np.float32)
            fake = generator.forward(z, train=True)
            d_out = discriminator.forward(fake, train=True)
            probs = d_out.reshape(config.batch_size)
            j_g = generator_loss(probs, config.loss_mode)
            g_probs = generator_loss_grad(probs, config.loss_mode)
            dx = discriminator.backward(g_probs.reshape(d_out.shape))
            generator.backward(dx)
            adam_g.step()
            g_updates += 1

        epoch = (cycle + 1) / steps_per_epoch
        history.append({"step": cycle + 1, "epoch": epoch, "j_d": j_d,
                        "j_g": j_g, "d_real_mean": float(d_real.mean()),
                        "d_fake_mean": float(d_fake.mean())})
        if epoch >= next_snapshot:
            snap(epoch)
            next_snapshot += config.snapshot_every_epochs

    snap(total_cycles / steps_per_epoch)
    return TrainResult(history=history, snapshots=snapshots,
                       d_updates=d_updates, g_updates=g_updates)


def evaluate_samples(gen: Sequential, n_samples: int, seed: int = 0,
                     alpha: int = 1, spacing_nm: float = 1.0,
                     boundary: str = "truncated",
                     with_transport: bool = False,
                     transport_directions=("z",),
                     transport_tol: float = 1e-6):
    """Generate, decode and characterize n samples.

    Returns (reports, stats); stats maps metric keys to (mean, std) and,
    when transport is enabled, includes d_rel_<phase>_<dir> entries.
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    reports: list[MetricReport] = []
    transport_vals: dict[str, list[float]] = {}
    for i in range(n_samples):
        z = sample_latent(seed + i, alpha, channels=gen.in_channels)
        grid = decode(generate(gen, z, spacing_nm=spacing_nm))
        reports.append(compute_report(grid, boundary))
        if with_transport:
            for phase in range(grid.phase_count):
                for direction in transport_directions:
                    res, _ = solve_diffusion(grid, phase, direction,
                                             tol=transport_tol)
                    key = f"d_rel_{phase}_{direction}"
                    transport_vals.setdefault(key, []).append(res.d_rel)
    stats = aggregate_stats(reports)
    for key, vals in transport_vals.items():
        arr = np.asarray(vals)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        stats[key] = (float(arr.mean()), std)
    return reports, stats


def make_stripe_dataset(n_samples: int, size: int = 8, widths=(3, 3, 2),
                        axis: int = 2, seed: int = 0,
                        spacing_nm: float = 1.0) -> list[OneHotGrid]:
    """Synthetic three-phase training set: axis-aligned periodic stripes
    with random cyclic offsets; every sample has identical phase fractions.
    """
    if sum(widths) != size:
        raise ValueError(f"stripe widths {widths} must sum to size {size}")
    rng = np.random.default_rng(seed)
    stripe = np.repeat(np.arange(len(widths), dtype=np.uint8), widths)
    out = []
    for _ in range(n_samples):
        shifted = np.roll(stripe, int(rng.integers(size)))
        labels = np.zeros((size, size, size), dtype=np.uint8)
        shape = [1, 1, 1]
        shape[axis] = size
        labels += shifted.reshape(shape)
        grid = VoxelGrid(labels, spacing_nm=spacing_nm,
                         phase_count=len(widths))
        out.append(one_hot_encode(grid))
    return out


GENERATOR_ACTIVATION_RULE = ("relu", "softmax")
DISCRIMINATOR_ACTIVATION_RULE = ("leaky_relu", "sigmoid")


def _default_activations(n_layers: int, rule) -> list[str]:
    inner, last = rule
    return [inner] * (n_layers - 1) + [last]


def save_gan(path, discriminator: Sequential | None,
             generator: Sequential | None) -> None:
    """Write discriminator then generator layers into one MGW1 file."""
    records = []
    if discriminator is not None:
        records.extend(records_from_sequential(discriminator))
    if generator is not None:
        records.extend(records_from_sequential(generator))
    write_mgw1(path, records)


def load_gan(path):
    """Read an MGW1 file; returns (discriminator | None, generator | None).

    Activations are not stored in the format and are assigned by the
    DC-GAN convention (leaky ReLU/sigmoid for conv stacks, ReLU/softmax
    for transposed-conv stacks).
    """
    disc_records, gen_records = split_records(read_mgw1(path))
    disc = gen = None
    if disc_records:
        n = sum(1 for r in disc_records if r.is_kernel)
        disc = sequential_from_records(
            disc_records, _default_activations(n, DISCRIMINATOR_ACTIVATION_RULE))
    if gen_records:
        n = sum(1 for r in gen_records if r.is_kernel)
        gen = sequential_from_records(
            gen_records, _default_activations(n, GENERATOR_ACTIVATION_RULE))
    return disc, gen


def load_generator(path) -> Sequential:
    _, gen = load_gan(path)
    if gen is None:
        raise ValueError(f"{path}: no generator (transposed conv) layers found")
    return gen
