"""Toy generative min-max game on the 8-Gaussians ring.

A dense generator maps uniform noise to the plane; a DFFN critic embeds
real and generated batches and is trained to maximise the representation
JSD between their covariances, while the generator minimises it. One critic
step then one generator step per batch.

The generator's tanh sits *before* its final linear layer, not after it,
so outputs are not confined to [-1, 1].
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import RING_CENTERS, RING_STD, SampleSet, make_rng
from .errors import NonFinite
from .features import build_dffn, dffn_forward, init_mlp, mlp_forward
from .grad import AdamState, adam_step, add_grads, dffn_backward, mlp_backward, rjsd_value_and_cov_grad


@dataclass
class GanConfig:
    noise_dim: int = 32
    lr_d: float = 1e-4
    lr_g: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 256
    steps: int = 3000
    hidden: int = 256
    n_fourier: int = 8
    critic_sigma: float = 3.0
    negative_slope: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.lr_d < 0 or self.lr_g < 0:
            raise ValueError("learning rates must be nonnegative")


@dataclass
class Generator:
    layers: list

    def parameters(self):
        p = {}
        for i, layer in enumerate(self.layers):
            p[f"layers.{i}.weight"] = layer.weight.copy()
            p[f"layers.{i}.bias"] = layer.bias.copy()
        return p

    def set_parameters(self, params):
        for name, value in params.items():
            _, i, attr = name.split(".")
            setattr(self.layers[int(i)], attr, np.array(value, dtype=float))

    def __call__(self, z):
        return mlp_forward(self.layers, z)[0]


@dataclass
class GanModels:
    generator: Generator
    critic: object
    trace: list = field(default_factory=list, repr=False)

    def sample(self, n, seed, noise_dim=32):
        z = make_rng(seed, 7).uniform(size=(n, noise_dim))
        return self.generator(z)


def build_models(cfg):
    rng = make_rng(cfg.seed, 0)
    h = cfg.hidden
    gen_layers = init_mlp(
        [cfg.noise_dim, h, h, h, h, 2],
        ["leaky_relu", "leaky_relu", "leaky_relu", "tanh", "identity"],
        rng,
        cfg.negative_slope,
    )
    critic = build_dffn(
        2,
        [h, h, h, h],
        cfg.n_fourier,
        activation="leaky_relu",
        final_activation="leaky_relu",
        negative_slope=cfg.negative_slope,
        sigma=cfg.critic_sigma,
        seed=int(rng.integers(2**31)),
    )
    return GanModels(Generator(gen_layers), critic)


def _divergence_and_feature_grads(critic, x, y):
    phi_x, tape_x = dffn_forward(critic, x)
    phi_y, tape_y = dffn_forward(critic, y)
    n, m = len(x), len(y)
    pi1, pi2 = n / (n + m), m / (n + m)
    value, gx, gy = rjsd_value_and_cov_grad(phi_x.T @ phi_x / n, phi_y.T @ phi_y / m, pi1, pi2)
    return value, (tape_x, (2.0 / n) * phi_x @ gx), (tape_y, (2.0 / m) * phi_y @ gy)


def gan_train(cfg, real=None, on_step=None):
    """Alternating critic-ascent / generator-descent on the divergence.

    ``real`` is an optional :class:`SampleSet` to draw batches from; by
    default fresh 8-Gaussians batches are generated each step. Returns the
    trained :class:`GanModels`; ``models.trace`` holds one record per step.
    """
    models = build_models(cfg)
    gen, critic = models.generator, models.critic
    opt_d = AdamState(lr=cfg.lr_d, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_g = AdamState(lr=cfg.lr_g, beta1=cfg.beta1, beta2=cfg.beta2)
    rng_real = make_rng(cfg.seed, 1)
    rng_noise = make_rng(cfg.seed, 2)
    pool = None if real is None else real.rows
    if pool is not None and pool.shape[1] != 2:
        raise ValueError("real data must be two-dimensional")
    bs = cfg.batch_size
    start = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        if pool is None:
            mode = rng_real.integers(0, 8, size=bs)
            x = RING_CENTERS[mode] + RING_STD * rng_real.standard_normal((bs, 2))
        else:
            x = pool[rng_real.choice(len(pool), bs, replace=len(pool) < bs)]
        z = rng_noise.uniform(size=(bs, cfg.noise_dim))
        y, gen_cache = mlp_forward(gen.layers, z)

        # critic: ascend
        d_value, (tx, ux), (ty, uy) = _divergence_and_feature_grads(critic, x, y)
        if not np.isfinite(d_value):
            raise NonFinite("divergence became non-finite in critic step", step)
        grads = add_grads(dffn_backward(critic, tx, ux)[0], dffn_backward(critic, ty, uy)[0])
        critic.set_parameters(adam_step(opt_d, critic.parameters(), grads, maximize=True))

        # generator: descend through the updated critic
        g_value, _, (ty, uy) = _divergence_and_feature_grads(critic, x, y)
        if not np.isfinite(g_value):
            raise NonFinite("divergence became non-finite in generator step", step)
        _, dy = dffn_backward(critic, ty, uy)
        g_grads, _ = mlp_backward(gen.layers, gen_cache, dy)
        gen.set_parameters(adam_step(opt_g, gen.parameters(), g_grads, maximize=False))

        rec = {
            "step": step,
            "critic_divergence": d_value,
            "generator_divergence": g_value,
            "wallclock_ms": (time.perf_counter() - start) * 1e3,
        }
        models.trace.append(rec)
        if on_step is not None:
            on_step(rec)
    return models


def heldout_divergence(models, n, seed, noise_dim=32):
    """Critic divergence between fresh real and generated batches."""
    real = RING_CENTERS[make_rng(seed, 11).integers(0, 8, n)] + RING_STD * make_rng(
        seed, 12
    ).standard_normal((n, 2))
    fake = models.sample(n, seed, noise_dim)
    value, _, _ = _divergence_and_feature_grads(models.critic, real, fake)
    return value


@dataclass
class ModeCoverage:
    modes_hit: int
    histogram: np.ndarray
    kl_to_uniform: float


def mode_coverage(generated, centers=RING_CENTERS, std=RING_STD, radius_mult=3.0):
    """Count modes receiving >= 1% of samples within ``radius_mult * std``.

    The KL term compares the Laplace-smoothed per-mode histogram of samples
    that land inside some mode radius with the uniform distribution.
    """
    rows = generated.rows if isinstance(generated, SampleSet) else np.asarray(generated)
    k = len(centers)
    dist = np.linalg.norm(rows[:, None, :] - centers[None, :, :], axis=2)
    nearest = dist.argmin(axis=1)
    inside = dist[np.arange(len(rows)), nearest] <= radius_mult * std
    hist = np.bincount(nearest[inside], minlength=k)
    hit = int(np.sum(hist >= 0.01 * len(rows)))
    p = (hist + 1.0) / (hist.sum() + k)
    kl = float(np.sum(p * np.log(p * k)))
    return ModeCoverage(hit, hist, kl)
