"""Eigendecomposition of PSD matrices and the von Neumann entropy."""

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NotPositiveSemidefinite, NotSymmetric, TraceNotUnit

SYM_RTOL = 1e-12
NEG_ATOL = 1e-10
LOG_FLOOR = 1e-12
TRACE_ATOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending with matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _check_symmetric(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def _clamp(lam):
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    if lam.size and lam.min() < -NEG_ATOL * scale:
        raise NotPositiveSemidefinite(f"smallest eigenvalue {lam.min():.3e} is negative")
    return np.clip(lam, 0.0, None)


def eigh_psd(m):
    """Symmetric eigendecomposition of a PSD matrix.

    Round-off negatives in ``[-1e-10, 0)`` are clamped to zero; anything more
    negative raises :class:`NotPositiveSemidefinite`.
    """
    m = _check_symmetric(m)
    try:
        lam, vec = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    lam = _clamp(lam[::-1])
    return Spectrum(lam, np.ascontiguousarray(vec[:, ::-1]))


def eigvals_psd(m):
    """Descending, clamped eigenvalues only (cheaper than :func:`eigh_psd`)."""
    m = _check_symmetric(m)
    try:
        lam = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return _clamp(lam[::-1])


def entropy_from_eigenvalues(lam):
    """-sum(lam * ln lam) with 0 ln 0 = 0. Works on a trailing axis for stacks."""
    lam = np.clip(np.asarray(lam, dtype=float), 0.0, None)
    safe = np.where(lam > 0, lam, 1.0)
    return -np.sum(lam * np.log(safe), axis=-1)


def vn_entropy(m):
    """Von Neumann entropy (natural log) of a unit-trace PSD matrix."""
    m = np.asarray(m, dtype=float)
    tr = float(np.trace(m))
    if abs(tr - 1.0) > TRACE_ATOL:
        raise TraceNotUnit(f"trace is {tr!r}, expected 1")
    return float(entropy_from_eigenvalues(eigvals_psd(m)))


def matrix_log_sym(m, floor=LOG_FLOOR):
    """V diag(ln max(lam, floor)) V^T."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    spec = eigh_psd(m)
    v = spec.eigenvectors
    return (v * np.log(np.maximum(spec.eigenvalues, floor))) @ v.T
