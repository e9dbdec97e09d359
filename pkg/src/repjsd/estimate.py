"""Variational JSD estimation: maximise the covariance estimator over the embedding.

``estimate_jsd`` runs plain gradient ascent (Adam) on the divergence computed
from the current batch covariances. ``estimate_jsd_ema`` replaces those with
exponential moving averages; past covariances are treated as constants, so
only the ``alpha * C`` term of the current batch carries gradient.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .data import as_rows, make_rng
from .divergence import sample_proportions
from .errors import DimMismatch, NonFinite
from .features import build_dffn, dffn_forward
from .grad import AdamState, adam_step, add_grads, dffn_backward, rjsd_value_and_cov_grad

log = logging.getLogger(__name__)


@dataclass
class EstimatorConfig:
    epochs: int = 1000
    lr: float = 1e-3
    num_fourier_features: int = 50
    sigma_init: float = 2.0
    use_ema: bool = False
    ema_alpha: float = 0.1
    seed: int = 0
    hidden: tuple = ()
    activation: str = "softplus"
    combined: bool = False
    train_omega: bool = True
    train_sigma: bool = True
    train_network: bool = True
    batch_size: Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in (0, 1]")


@dataclass
class EmaState:
    cx: Optional[np.ndarray] = None
    cy: Optional[np.ndarray] = None
    step: int = 0


def ema_update(state, cx, cy, alpha):
    """Return the next EMA state; the first call just stores (cx, cy)."""
    if state.cx is not None and (state.cx.shape != cx.shape or state.cy.shape != cy.shape):
        raise DimMismatch("covariance shape changed between EMA updates")
    if state.step == 0:
        return EmaState(cx.copy(), cy.copy(), 1)
    return EmaState(
        (1.0 - alpha) * state.cx + alpha * cx,
        (1.0 - alpha) * state.cy + alpha * cy,
        state.step + 1,
    )


@dataclass
class EstimateResult:
    estimate: float
    trace: list
    network: object = field(repr=False)

    @property
    def estimates(self):
        return np.array([r["estimate"] for r in self.trace])

    def tail_mean(self, n=100):
        return float(self.estimates[-n:].mean())

    def __iter__(self):
        # allows ``value, trace = estimate_jsd(...)``
        return iter((self.estimate, self.trace))


def trainable_keys(net, cfg):
    keys = []
    for name in net.parameters():
        if name.startswith("layers.") or name == "epsilon_logit":
            ok = cfg.train_network
        elif name.endswith(".omega"):
            ok = cfg.train_omega
        else:
            ok = cfg.train_sigma
        if ok:
            keys.append(name)
    return keys


def _sampler(data, rng_stream, batch_size):
    """Turn an array/SampleSet/callable into ``draw(epoch) -> array``."""
    if callable(data):
        return lambda epoch: as_rows(data(rng_stream))
    rows = as_rows(data)
    if batch_size is None or batch_size >= len(rows):
        return lambda epoch: rows
    return lambda epoch: rows[rng_stream.choice(len(rows), batch_size, replace=False)]


def default_network(d, cfg):
    return build_dffn(
        d,
        cfg.hidden,
        cfg.num_fourier_features,
        activation=cfg.activation,
        sigma=cfg.sigma_init,
        seed=cfg.seed,
        combined=cfg.combined,
    )


def fit_divergence(X, Y, cfg, net=None, ema_alpha=None, on_epoch=None):
    """Core ascent loop shared by the plain and EMA estimators.

    ``X`` and ``Y`` may be arrays, :class:`SampleSet` objects, or callables
    ``f(rng) -> array`` that draw a fresh batch every epoch.
    """
    rng_x = make_rng(cfg.seed, 1)
    rng_y = make_rng(cfg.seed, 2)
    draw_x = _sampler(X, rng_x, cfg.batch_size)
    draw_y = _sampler(Y, rng_y, cfg.batch_size)
    x0 = draw_x(0)
    if net is None:
        net = default_network(x0.shape[1], cfg)
    keys = trainable_keys(net, cfg)
    opt = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    ema = EmaState()
    trace = []
    start = time.perf_counter()
    value = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        xb = x0 if epoch == 1 else draw_x(epoch)
        yb = draw_y(epoch)
        if xb.shape[1] != yb.shape[1]:
            raise DimMismatch("X and Y differ in dimension")
        n, m = len(xb), len(yb)
        pi1, pi2 = sample_proportions(n, m)
        phi_x, tape_x = dffn_forward(net, xb)
        phi_y, tape_y = dffn_forward(net, yb)
        cx = phi_x.T @ phi_x / n
        cy = phi_y.T @ phi_y / m
        scale = 1.0
        if ema_alpha is not None:
            ema = ema_update(ema, cx, cy, ema_alpha)
            cx, cy = ema.cx, ema.cy
            scale = 1.0 if ema.step == 1 else ema_alpha
        if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
            raise NonFinite("non-finite covariance", epoch)
        value, gx, gy = rjsd_value_and_cov_grad(cx, cy, pi1, pi2)
        if not np.isfinite(value):
            raise NonFinite("divergence became non-finite", epoch)
        trace.append(
            {
                "epoch": epoch,
                "estimate": value,
                "sigma": net.terminal.sigma,
                "wallclock_ms": (time.perf_counter() - start) * 1e3,
            }
        )
        if on_epoch is not None:
            on_epoch(trace[-1])
        if epoch == cfg.epochs:
            break
        gx_feat = (2.0 * scale / n) * phi_x @ gx
        gy_feat = (2.0 * scale / m) * phi_y @ gy
        grads_x, _ = dffn_backward(net, tape_x, gx_feat)
        grads_y, _ = dffn_backward(net, tape_y, gy_feat)
        grads = add_grads(grads_x, grads_y)
        grads = {k: grads[k] for k in keys}
        params = net.parameters()
        net.set_parameters({k: v for k, v in adam_step(opt, params, grads, maximize=True).items() if k in keys})
    log.debug("finished %d epochs, final estimate %.6f", cfg.epochs, value)
    return EstimateResult(value, trace, net)


def estimate_jsd(X, Y, cfg, net=None, on_epoch=None):
    """Maximise the covariance estimator of the divergence over the embedding."""
    if cfg.use_ema:
        return estimate_jsd_ema(X, Y, cfg, net=net, on_epoch=on_epoch)
    return fit_divergence(X, Y, cfg, net=net, on_epoch=on_epoch)


def estimate_jsd_ema(X, Y, cfg, net=None, on_epoch=None):
    return fit_divergence(X, Y, cfg, net=net, ema_alpha=cfg.ema_alpha, on_epoch=on_epoch)


def write_trace(path, trace):
    """One JSON object per line: {epoch, estimate, sigma, wallclock_ms}."""
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def config_dict(cfg):
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
