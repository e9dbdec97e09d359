"""Numerical invariant suite behind ``repjsd selfcheck``.

Each check compares two independent computations on random instances.
The oracles here use ``numpy.linalg.eigvalsh`` directly rather than the
library's spectral helpers, so a broken helper cannot vouch for itself.

``MUTATIONS`` holds deliberate faults used to confirm that the suite
notices them; they are patched in for the duration of one run only.
"""

import contextlib
from dataclasses import dataclass

import numpy as np

from . import divergence, grad
from .divergence import (
    CovariancePair,
    hs_lower_bound,
    mmd2_vstat,
    rjsd_cov,
    rjsd_from_gram,
    rjsd_kernel,
    rjsd_mutual_info,
)
from .features import build_dffn, dffn_forward, map_rff, sample_rff


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _entropy(c):
    lam = np.linalg.eigvalsh(0.5 * (c + c.T))
    lam = lam[lam > 1e-300]
    return float(-np.sum(lam * np.log(lam)))


def _feature_divergence(px, py):
    n, m = len(px), len(py)
    cx, cy = px.T @ px / n, py.T @ py / m
    a, b = n / (n + m), m / (n + m)
    return _entropy(a * cx + b * cy) - a * _entropy(cx) - b * _entropy(cy)


def _unit_rows(rng, n, d):
    a = rng.standard_normal((n, d))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def check_mixture_spectrum(rng, trials=20):
    """Entropy of the weighted mixture covariance equals that of the pooled Gram."""
    worst = 0.0
    for _ in range(trials):
        n, m = rng.integers(2, 30, size=2)
        while n == m:
            m = rng.integers(2, 30)
        d = int(rng.integers(2, 16))
        px, py = _unit_rows(rng, n, d), _unit_rows(rng, m, d)
        p = CovariancePair.from_features(px, py)
        pz = np.vstack([px, py])
        worst = max(worst, abs(_entropy(p.mixture) - _entropy(pz @ pz.T / (n + m))))
    return worst <= 1e-8, f"max |S(mixture) - S(K_Z)| = {worst:.2e}"


def check_covariance_vs_gram(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        n, m = rng.integers(1, 40, size=2)
        f = sample_rff(3, 2 * int(rng.integers(1, 16)), float(rng.uniform(0.3, 3)), int(rng.integers(2**31)))
        X, Y = rng.standard_normal((n, 3)), rng.standard_normal((m, 3)) + rng.uniform(0, 2)
        px, py = map_rff(f, X), map_rff(f, Y)
        pz = np.vstack([px, py])
        a = rjsd_cov(CovariancePair.from_features(px, py))
        worst = max(worst, abs(a - rjsd_from_gram(pz @ pz.T, n)))
    return worst <= 1e-8, f"max |cov route - Gram route| = {worst:.2e}"


def check_mutual_information_form(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 30))
        X, Y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2)) * 1.5 + 0.5
        sigma = float(rng.uniform(0.3, 3))
        worst = max(worst, abs(rjsd_kernel(X, Y, sigma) - rjsd_mutual_info(X, Y, sigma)))
    return worst <= 1e-8, f"max |kernel - mutual information| = {worst:.2e}"


def check_hs_bound(rng, trials=200):
    worst = np.inf
    mmd_err = 0.0
    for _ in range(trials):
        n, m = rng.integers(1, 20, size=2)
        d = int(rng.integers(2, 8))
        px, py = _unit_rows(rng, n, d), _unit_rows(rng, m, d)
        p = CovariancePair.from_features(px, py)
        worst = min(worst, _feature_divergence(px, py) - hs_lower_bound(p))
        pz = np.vstack([px, py])
        mmd_err = max(mmd_err, abs(np.sum((p.cx - p.cy) ** 2) - mmd2_vstat((pz @ pz.T) ** 2, n)))
    ok = worst >= -1e-9 and mmd_err <= 1e-8
    return ok, f"min gap = {worst:.2e}, HS/MMD mismatch = {mmd_err:.2e}"


def check_cov_gradient(rng, trials=5, h=1e-5):
    worst = 0.0
    for _ in range(trials):
        dim = 5
        a, b = rng.standard_normal((2, dim, 2 * dim))
        cx, cy = a @ a.T, b @ b.T
        cx, cy = cx / np.trace(cx), cy / np.trace(cy)
        pi1 = float(rng.uniform(0.2, 0.8))
        pi2 = 1.0 - pi1
        _, gx, gy = grad.rjsd_value_and_cov_grad(cx, cy, pi1, pi2)

        def f(x, y):
            return _entropy(pi1 * x + pi2 * y) - pi1 * _entropy(x) - pi2 * _entropy(y)

        ana, num = [], []
        for _ in range(8):
            e = rng.standard_normal((dim, dim))
            e = e + e.T
            num.append((f(cx + h * e, cy) - f(cx - h * e, cy)) / (2 * h))
            ana.append(np.sum(gx * e))
            num.append((f(cx, cy + h * e) - f(cx, cy - h * e)) / (2 * h))
            ana.append(np.sum(gy * e))
        worst = max(worst, grad.relative_error(ana, num))
    return worst <= 1e-4, f"max relative error = {worst:.2e}"


def check_network_gradient(rng, h=1e-4):
    net = build_dffn(2, [5, 4], 6, sigma=1.2, seed=int(rng.integers(2**31)), combined=True)
    net.epsilon_logit = 0.3
    X, Y = rng.standard_normal((10, 2)), rng.standard_normal((12, 2)) + 0.5

    def objective():
        return _feature_divergence(dffn_forward(net, X)[0], dffn_forward(net, Y)[0])

    px, tx = dffn_forward(net, X)
    py, ty = dffn_forward(net, Y)
    ux, uy = grad.grad_rjsd_wrt_features(px, py)
    grads = grad.add_grads(grad.dffn_backward(net, tx, ux)[0], grad.dffn_backward(net, ty, uy)[0])
    params = net.parameters()
    ana, num = [], []
    for name, value in params.items():
        value = np.array(value, dtype=float)

        def f():
            net.set_parameters({name: value})
            return objective()

        for flat in rng.choice(value.size, size=min(4, value.size), replace=False):
            idx = np.unravel_index(flat, value.shape)
            num.append(grad.central_difference(f, value, idx, h))
            ana.append(np.asarray(grads[name])[idx])
        net.set_parameters({name: params[name]})
    err = grad.relative_error(ana, num)
    return err <= 1e-3, f"relative error = {err:.2e}"


def check_rff_convergence(rng):
    x, y = rng.standard_normal((2, 50, 2))
    exact = np.exp(-np.sum((x - y) ** 2, axis=1) / 2)
    med = []
    for D in (64, 256, 2048):
        errs = []
        for _ in range(10):
            f = sample_rff(2, D, 1.0, int(rng.integers(2**31)))
            errs.append(np.max(np.abs(np.sum(map_rff(f, x) * map_rff(f, y), axis=1) - exact)))
        med.append(float(np.median(errs)))
    return med[0] > med[1] > med[2], "median max error " + " > ".join(f"{v:.3f}" for v in med)


CHECKS = {
    "mixture-spectrum": check_mixture_spectrum,
    "covariance-vs-gram": check_covariance_vs_gram,
    "mutual-information-form": check_mutual_information_form,
    "hs-lower-bound": check_hs_bound,
    "covariance-gradient": check_cov_gradient,
    "network-gradient": check_network_gradient,
    "rff-convergence": check_rff_convergence,
}


def run_checks(seed=0):
    results = []
    for name, check in CHECKS.items():
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), len(results)]))
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results


# mutations ----------------------------------------------------------------------

def _flipped_entropy_grad(lam, vec, _orig=grad.entropy_grad):
    return -_orig(lam, vec)


MUTATIONS = {
    "entropy-grad-sign": (grad, "entropy_grad", _flipped_entropy_grad),
    "no-trace-normalization": (divergence, "unit_trace", lambda K: K),
    "wrong-pi": (divergence, "sample_proportions", lambda n, m: (0.5, 0.5)),
}


@contextlib.contextmanager
def mutated(name):
    """Temporarily install one of ``MUTATIONS`` (``None`` for no change)."""
    if name is None:
        yield
        return
    module, attr, replacement = MUTATIONS[name]
    original = getattr(module, attr)
    setattr(module, attr, replacement)
    try:
        yield
    finally:
        setattr(module, attr, original)
