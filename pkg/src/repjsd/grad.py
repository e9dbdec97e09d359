"""Analytic reverse-mode gradients and the Adam optimizer.

The spectral head uses the matrix-function derivative of the entropy,
d(-tr C ln C)/dC = -(ln C + I), valid for symmetric perturbations. The
network part is an explicit backward pass over the tape produced by
:func:`repjsd.features.dffn_forward`.
"""

from dataclasses import dataclass, field

import numpy as np

from .divergence import sample_proportions
from .errors import DimMismatch, NoConvergence, ShapeMismatch, TapeMismatch
from .features import activate_grad
from .spectral import LOG_FLOOR, entropy_from_eigenvalues


def _eigh(c):
    try:
        lam, vec = np.linalg.eigh(0.5 * (c + c.T))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return np.clip(lam, 0.0, None), vec


def entropy_grad(lam, vec):
    """Gradient of S at C = V diag(lam) V^T: -(ln C + I), with floored logs."""
    g = -(vec * np.log(np.maximum(lam, LOG_FLOOR))) @ vec.T
    g[np.diag_indices_from(g)] -= 1.0
    return g


def rjsd_value_and_cov_grad(cx, cy, pi1, pi2):
    """Divergence value and its gradients with respect to Cx and Cy.

    Returns ``(value, gx, gy)`` where ``gx = pi1 (ln Cx - ln M)`` and
    ``gy = pi2 (ln Cy - ln M)``; both are exactly symmetric.
    """
    if cx.shape != cy.shape:
        raise DimMismatch(f"covariances differ in shape: {cx.shape} vs {cy.shape}")
    lx, vx = _eigh(cx)
    ly, vy = _eigh(cy)
    lm, vm = _eigh(pi1 * cx + pi2 * cy)
    value = entropy_from_eigenvalues(lm) - (
        pi1 * entropy_from_eigenvalues(lx) + pi2 * entropy_from_eigenvalues(ly)
    )
    gm = entropy_grad(lm, vm)
    gx = pi1 * (gm - entropy_grad(lx, vx))
    gy = pi2 * (gm - entropy_grad(ly, vy))
    return float(value), 0.5 * (gx + gx.T), 0.5 * (gy + gy.T)


def grad_rjsd_wrt_cov(p):
    """(dD/dCx, dD/dCy) for a :class:`~repjsd.divergence.CovariancePair`."""
    _, gx, gy = rjsd_value_and_cov_grad(p.cx, p.cy, p.pi1, p.pi2)
    return gx, gy


def grad_rjsd_wrt_features(phi_x, phi_y, pi1=None, pi2=None):
    """Chain rule through C = Phi^T Phi / N: dD/dPhi_X = (2/N) Phi_X G_X."""
    n, m = len(phi_x), len(phi_y)
    if pi1 is None or pi2 is None:
        pi1, pi2 = sample_proportions(n, m)
    cx = phi_x.T @ phi_x / n
    cy = phi_y.T @ phi_y / m
    _, gx, gy = rjsd_value_and_cov_grad(cx, cy, pi1, pi2)
    return (2.0 / n) * phi_x @ gx, (2.0 / m) * phi_y @ gy


# network backward -------------------------------------------------------------

def _fourier_backward(fmap, h, U, g):
    """Backprop through sqrt(2/D)[cos U, sin U], U = h omega / sigma."""
    k = U.shape[1]
    c = np.sqrt(1.0 / k)
    dU = c * (np.cos(U) * g[:, 1::2] - np.sin(U) * g[:, 0::2])
    d_omega = h.T @ dU / fmap.sigma
    d_sigma = -np.sum(dU * U) / fmap.sigma
    d_h = dU @ fmap.omega.T / fmap.sigma
    return d_omega, np.array(d_sigma), d_h


def dffn_backward(net, tape, upstream):
    """Gradients of ``sum(upstream * Phi)`` for every parameter and the input.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` keyed like
    :meth:`DeepFourierNetwork.parameters`.
    """
    upstream = np.asarray(upstream, dtype=float)
    if tape.output is None or upstream.shape != tape.output.shape:
        raise TapeMismatch("upstream gradient does not match the recorded output")
    if len(tape.layer_cache) != len(net.layers) or (tape.epsilon is None) == net.combined:
        raise TapeMismatch("tape was recorded with a different network structure")

    grads = {}
    dx = np.zeros_like(tape.x)
    D1 = net.terminal.dim
    if net.combined:
        eps = tape.epsilon
        a, b = np.sqrt(1.0 - eps), np.sqrt(eps)
        g_phi, g_psi = upstream[:, :D1], upstream[:, D1:]
        d_eps = (-0.5 / a) * np.sum(g_phi * tape.terminal_out) + (0.5 / b) * np.sum(
            g_psi * tape.input_out
        )
        grads["epsilon_logit"] = np.array(d_eps * eps * (1.0 - eps))
        d_om, d_sig, d_in = _fourier_backward(net.input_map, tape.x, tape.input_args, b * g_psi)
        grads["input_map.omega"], grads["input_map.sigma"] = d_om, d_sig
        dx += d_in
        g_phi = a * g_phi
    else:
        g_phi = upstream

    d_om, d_sig, d_h = _fourier_backward(
        net.terminal, tape.terminal_input, tape.terminal_args, g_phi
    )
    grads["terminal.omega"], grads["terminal.sigma"] = d_om, d_sig
    if net.combined:
        d = tape.x.shape[1]
        dx += d_h[:, -d:]
        d_h = d_h[:, :-d]

    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        a_in, z = tape.layer_cache[i]
        dz = d_h * activate_grad(z, layer)
        grads[f"layers.{i}.weight"] = a_in.T @ dz
        grads[f"layers.{i}.bias"] = dz.sum(axis=0)
        d_h = dz @ layer.weight.T
    dx += d_h
    return grads, dx


def mlp_backward(layers, cache, upstream):
    """Backward pass of a plain dense stack (the GAN generator)."""
    grads = {}
    d_h = upstream
    for i in reversed(range(len(layers))):
        a_in, z = cache[i]
        dz = d_h * activate_grad(z, layers[i])
        grads[f"layers.{i}.weight"] = a_in.T @ dz
        grads[f"layers.{i}.bias"] = dz.sum(axis=0)
        d_h = dz @ layers[i].weight.T
    return grads, d_h


def add_grads(a, b):
    return {k: a[k] + b[k] for k in a}


# Adam -------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads, maximize=False):
    """One bias-corrected Adam update; returns a new parameter dict.

    Only keys present in ``grads`` are updated. ``maximize`` ascends.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    out = dict(params)
    for name, g in grads.items():
        p = np.asarray(params[name], dtype=float)
        g = np.asarray(g, dtype=float)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out[name] = p + step if maximize else p - step
    return out


# finite differences -------------------------------------------------------------

def central_difference(f, x, index, h):
    """(f(x + h e_i) - f(x - h e_i)) / 2h for one entry of array ``x`` (restored after)."""
    old = x[index]
    x[index] = old + h
    up = f()
    x[index] = old - h
    down = f()
    x[index] = old
    return (up - down) / (2.0 * h)


def relative_error(analytic, numeric):
    """||a - n|| / max(||n||, ||a||, 1e-12) over the sampled entries."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), np.linalg.norm(a), 1e-12))
