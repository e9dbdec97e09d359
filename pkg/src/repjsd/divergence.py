"""Representation Jensen-Shannon divergence estimators.

Three routes to the same quantity:

* ``rjsd_cov``: entropies of explicit D x D covariance matrices,
* ``rjsd_kernel`` / ``rjsd_from_gram``: entropies of normalized Gram matrices,
* ``rjsd_mutual_info``: matrix-based mutual information between the pooled
  sample and its labels (balanced sets only).

All values are in nats.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimMismatch, RowNotUnitNorm, TraceNotUnit, Unbalanced
from .spectral import TRACE_ATOL, entropy_from_eigenvalues, vn_entropy

UNIT_NORM_ATOL = 1e-9


def sample_proportions(n, m):
    """(N/(N+M), M/(N+M))."""
    return n / (n + m), m / (n + m)


def upper_bound(n, m):
    """ln((N+M)/sqrt(NM)), the boundedness ceiling of the estimators."""
    return float(np.log((n + m) / np.sqrt(n * m)))


@dataclass(frozen=True)
class CovariancePair:
    cx: np.ndarray
    cy: np.ndarray
    pi1: float
    pi2: float

    def __post_init__(self):
        if self.cx.shape != self.cy.shape:
            raise DimMismatch(f"covariances differ in shape: {self.cx.shape} vs {self.cy.shape}")
        if abs(self.pi1 + self.pi2 - 1.0) > 1e-12:
            raise ValueError("sample proportions must sum to 1")
        for c in (self.cx, self.cy):
            if abs(np.trace(c) - 1.0) > TRACE_ATOL:
                raise TraceNotUnit(f"covariance trace {np.trace(c)!r} is not 1")

    @classmethod
    def from_features(cls, phi_x, phi_y):
        if phi_x.shape[1] != phi_y.shape[1]:
            raise DimMismatch("feature matrices have different widths")
        pi1, pi2 = sample_proportions(len(phi_x), len(phi_y))
        return cls(cov_from_features(phi_x), cov_from_features(phi_y), pi1, pi2)

    @property
    def mixture(self):
        return self.pi1 * self.cx + self.pi2 * self.cy


def _check_unit_rows(phi):
    norms = np.linalg.norm(phi, axis=1)
    bad = np.abs(norms - 1.0) > UNIT_NORM_ATOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowNotUnitNorm(f"row {i} has norm {norms[i]!r}")


def cov_from_features(phi):
    """Uncentered covariance (1/N) Phi^T Phi of unit-norm feature rows."""
    phi = np.asarray(phi, dtype=float)
    _check_unit_rows(phi)
    c = phi.T @ phi / len(phi)
    return 0.5 * (c + c.T)


@dataclass(frozen=True)
class NormalizedKernelMatrix:
    entries: np.ndarray
    n: int


def unit_trace(K):
    return K / np.trace(K)


def normalize_gram(K):
    """Scale a Gram matrix with unit diagonal to unit trace."""
    K = np.asarray(K, dtype=float)
    return NormalizedKernelMatrix(unit_trace(K), len(K))


def gaussian_gram(X, Y, sigma):
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * sigma**2))


def kernel_matrix_gaussian(X, sigma):
    """Gaussian Gram matrix divided by N, so the trace is exactly 1."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = gaussian_gram(X, X, sigma)
    np.fill_diagonal(K, 1.0)
    return NormalizedKernelMatrix(K / len(X), len(X))


def rjsd_cov(p):
    """S(pi1 Cx + pi2 Cy) - pi1 S(Cx) - pi2 S(Cy)."""
    value = vn_entropy(p.mixture) - (p.pi1 * vn_entropy(p.cx) + p.pi2 * vn_entropy(p.cy))
    return max(value, 0.0)


def rjsd_from_gram(K, n):
    """Kernel estimator from the raw (unit-diagonal) Gram of the pooled sample.

    ``K`` is (N+M) x (N+M) with the first ``n`` rows belonging to X.
    """
    K = np.asarray(K, dtype=float)
    total = len(K)
    m = total - n
    if n < 1 or m < 1:
        raise DimMismatch("both samples must be nonempty")
    pi1, pi2 = sample_proportions(n, m)
    s_z = vn_entropy(unit_trace(K))
    s_x = vn_entropy(unit_trace(K[:n, :n]))
    s_y = vn_entropy(unit_trace(K[n:, n:]))
    return max(s_z - (pi1 * s_x + pi2 * s_y), 0.0)


def _pooled(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimMismatch(f"samples differ in dimension: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y, np.vstack([X, Y])


def rjsd_kernel(X, Y, sigma):
    """Kernel-matrix estimator with a Gaussian kernel of bandwidth ``sigma``."""
    X, Y, Z = _pooled(X, Y)
    K = gaussian_gram(Z, Z, sigma)
    np.fill_diagonal(K, 1.0)
    return rjsd_from_gram(K, len(X))


def rjsd_mutual_info(X, Y, sigma):
    """S(K_Z) + S(K_L) - S(K_Z * K_L / tr), for N = M."""
    X, Y, Z = _pooled(X, Y)
    n, m = len(X), len(Y)
    if n != m:
        raise Unbalanced(f"mutual-information form needs N = M, got {n} and {m}")
    K = gaussian_gram(Z, Z, sigma)
    np.fill_diagonal(K, 1.0)
    labels = np.zeros((n + m, 2))
    labels[:n, 0] = 1.0
    labels[n:, 1] = 1.0
    K_l = labels @ labels.T
    joint = K * K_l
    return (
        vn_entropy(unit_trace(K))
        + vn_entropy(unit_trace(K_l))
        - vn_entropy(unit_trace(joint))
    )


def hs_lower_bound(p):
    """pi1 pi2 / 2 * ||Cx - Cy||_F^2, which is ||Cx - Cy||_F^2 / 8 for balanced weights.

    Follows from Pinsker's inequality for the quantum relative entropy applied
    to both terms of pi1 KL(Cx || M) + pi2 KL(Cy || M).
    """
    return 0.5 * p.pi1 * p.pi2 * float(np.sum((p.cx - p.cy) ** 2))


def hs_lower_bound_gap(p):
    """rjsd_cov(p) - hs_lower_bound(p); nonnegative for valid inputs."""
    return rjsd_cov(p) - hs_lower_bound(p)


def mmd2_vstat(K, n):
    """Biased (V-statistic) MMD^2 from a pooled Gram matrix, first ``n`` rows = X."""
    K = np.asarray(K, dtype=float)
    return K[:n, :n].mean() + K[n:, n:].mean() - 2.0 * K[:n, n:].mean()


def entropies_batched(C):
    """Entropy of each matrix in a (B, D, D) stack of unit-trace PSD matrices."""
    return entropy_from_eigenvalues(np.linalg.eigvalsh(C))
