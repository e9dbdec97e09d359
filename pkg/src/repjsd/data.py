"""Synthetic sample generators, the Cauchy closed form, and CSV ingestion.

Dataset parameterization
------------------------
blobs
    3 x 3 grid of centres at {0, 5, 10}^2, equal weights. P uses unit
    isotropic covariance per blob; Q keeps the centres but blob k has
    covariance R(k pi / 9) diag(1, 4) R(k pi / 9)^T.
hdgm
    Two equal-weight modes at 0 and 0.5 * 1_d. P has identity covariance;
    Q is identical except entries (0, 1) and (1, 0) are 0.5.
8gaussians
    Eight modes on a circle of radius 2, standard deviation 0.02.
null-gauss
    Standard normal in d dimensions, P = Q.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadShape, ParseError, RaggedRows, TargetOutOfRange

TRAIN_STREAM = 0
TEST_STREAM = 1


@dataclass
class SampleSet:
    rows: np.ndarray
    name: str = ""
    seed: int = 0

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if len(self.rows) < 1:
            raise BadShape("a sample set needs at least one row")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("sample set contains non-finite entries")

    def __len__(self):
        return len(self.rows)

    @property
    def d(self):
        return self.rows.shape[1]


def as_rows(data):
    return data.rows if isinstance(data, SampleSet) else np.atleast_2d(np.asarray(data, dtype=float))


def make_rng(seed, *stream):
    """Independent generator for ``(seed, *stream)``; distinct streams never overlap."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def _check_n(n):
    if int(n) < 1:
        raise BadShape(f"need at least one sample, got {n}")
    return int(n)


# Cauchy ---------------------------------------------------------------------

@dataclass(frozen=True)
class CauchySpec:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Cauchy scale must be positive")


def cauchy_jsd_closed_form(p, q, base=np.e):
    """Jensen-Shannon divergence between two Cauchy laws (natural log by default)."""
    r = np.sqrt((p.location - q.location) ** 2 + (p.scale + q.scale) ** 2)
    return float(np.log(2.0 * r / (r + 2.0 * np.sqrt(p.scale * q.scale))) / np.log(base))


def location_for_target_jsd(target, s=1.0, base=np.e):
    """Location offset giving two scale-``s`` Cauchy laws the requested JSD.

    Inverts the closed form: with e = base**target, r = 2 e / (2 - e) and
    offset = s * sqrt(r^2 - 4) (for equal scales r is measured in units of s).
    """
    ceiling = np.log(2.0) / np.log(base)
    if not 0.0 <= target < ceiling:
        raise TargetOutOfRange(f"target {target} outside [0, {ceiling:.6f})")
    e = base**target
    r = 2.0 * e / (2.0 - e)
    return float(s * np.sqrt(max(r * r - 4.0, 0.0)))


def gen_cauchy(spec, n, seed, stream=TRAIN_STREAM):
    rng = make_rng(seed, stream)
    u = rng.uniform(size=(_check_n(n), 1))
    rows = spec.location + spec.scale * np.tan(np.pi * (u - 0.5))
    return SampleSet(rows, f"cauchy(l={spec.location:g},s={spec.scale:g})", seed)


# blobs ----------------------------------------------------------------------

BLOB_CENTERS = np.array([(a, b) for a in (0.0, 5.0, 10.0) for b in (0.0, 5.0, 10.0)])


def blob_covariance(k):
    t = k * np.pi / 9.0
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return rot @ np.diag([1.0, 4.0]) @ rot.T


def gen_blobs(side, n, which, seed, stream=TRAIN_STREAM):
    """``n`` samples per blob from P or Q (9 n rows total, blob-major order)."""
    if side != 3:
        raise BadShape("only the 3 x 3 blob grid is supported")
    if which not in ("P", "Q"):
        raise ValueError("which must be 'P' or 'Q'")
    n = _check_n(n)
    rng = make_rng(seed, stream)
    parts = []
    for k, centre in enumerate(BLOB_CENTERS):
        z = rng.standard_normal((n, 2))
        if which == "Q":
            z = z @ np.linalg.cholesky(blob_covariance(k)).T
        parts.append(centre + z)
    return SampleSet(np.vstack(parts), f"blobs-{which}", seed)


# HDGM -----------------------------------------------------------------------

def hdgm_covariance(d, which):
    cov = np.eye(d)
    if which == "Q":
        if d < 2:
            raise BadShape("HDGM Q needs d >= 2")
        cov[0, 1] = cov[1, 0] = 0.5
    return cov


def gen_hdgm(d, n, which, seed, stream=TRAIN_STREAM):
    if which not in ("P", "Q"):
        raise ValueError("which must be 'P' or 'Q'")
    n = _check_n(n)
    rng = make_rng(seed, stream)
    chol = np.linalg.cholesky(hdgm_covariance(d, which))
    mode = rng.integers(0, 2, size=n)
    rows = rng.standard_normal((n, d)) @ chol.T + 0.5 * mode[:, None]
    return SampleSet(rows, f"hdgm-{which}(d={d})", seed)


# 8 Gaussians ----------------------------------------------------------------

RING_RADIUS = 2.0
RING_STD = 0.02
RING_CENTERS = RING_RADIUS * np.stack(
    [np.cos(np.arange(8) * np.pi / 4), np.sin(np.arange(8) * np.pi / 4)], axis=1
)


def gen_8gaussians(n, seed, stream=TRAIN_STREAM):
    n = _check_n(n)
    rng = make_rng(seed, stream)
    mode = rng.integers(0, 8, size=n)
    rows = RING_CENTERS[mode] + RING_STD * rng.standard_normal((n, 2))
    return SampleSet(rows, "8gaussians", seed)


def gen_null_gauss(d, n, seed, stream=TRAIN_STREAM):
    rng = make_rng(seed, stream)
    return SampleSet(rng.standard_normal((_check_n(n), d)), f"null-gauss(d={d})", seed)


# CSV ------------------------------------------------------------------------

def load_csv(path, has_header=False):
    """Read a rectangular numeric CSV into a :class:`SampleSet`."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise RaggedRows(f"expected {width} fields, found {len(record)}", lineno)
            try:
                rows.append([float(cell) for cell in record])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if not rows:
        raise ParseError("file contains no data rows")
    return SampleSet(np.array(rows), name=str(path))


def write_csv(path, rows, header=None):
    rows = np.atleast_2d(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        writer.writerows([repr(float(v)) for v in row] for row in rows)
