"""Two-sample testing with the representation JSD.

Protocol: fit an embedding (or kernel bandwidth) on a training split, freeze
it, then for each of ``n_test_sets`` fresh test sets compare the observed
divergence against ``permutations`` label-shuffled surrogates.

Methods
-------
jsd-k    Gaussian kernel on the raw inputs; only the bandwidth is trained
         (grid search, then Adam on log sigma).
jsd-rff  Random Fourier features; only the bandwidth is trained.
jsd-ff   Fourier features; frequencies and bandwidth are trained.
jsd-d    Dense softplus network feeding a Fourier layer on f(x) + x, mixed
         with an input-space Fourier map (trainable mixing weight).
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .data import (
    TEST_STREAM,
    TRAIN_STREAM,
    CauchySpec,
    as_rows,
    gen_8gaussians,
    gen_blobs,
    gen_cauchy,
    gen_hdgm,
    gen_null_gauss,
)
from .divergence import gaussian_gram, sample_proportions, upper_bound
from .errors import DimMismatch, InsufficientData
from .estimate import EstimatorConfig, fit_divergence
from .features import DeepFourierNetwork, build_dffn, dffn_forward
from .grad import AdamState, adam_step, entropy_grad
from .spectral import entropy_from_eigenvalues

METHODS = ("jsd-ff", "jsd-rff", "jsd-d", "jsd-k")
FAMILIES = ("blobs", "hdgm", "8gaussians", "null-gauss", "cauchy")

# (hidden width, Fourier count, {method: lr}) per dataset family
_FAMILY_SETTINGS = {
    "blobs": (lambda d: 50, 50, {"jsd-ff": 1e-3, "jsd-rff": 1e-3, "jsd-d": 1e-3}),
    "hdgm": (lambda d: 3 * d, 15, {"jsd-ff": 5e-3, "jsd-rff": 5e-3, "jsd-d": 5e-2}),
    "csv": (lambda d: 20, 15, {"jsd-ff": 1e-2, "jsd-rff": 1e-2, "jsd-d": 1e-2}),
}
_DEFAULT_SETTINGS = (lambda d: 50, 50, {"jsd-ff": 1e-3, "jsd-rff": 1e-3, "jsd-d": 1e-3})


@dataclass
class TstConfig:
    method: str = "jsd-ff"
    permutations: int = 100
    alpha_level: float = 0.05
    n_test_sets: int = 100
    n_trials: int = 10
    epochs: int = 200
    lr: Optional[float] = None
    num_fourier_features: Optional[int] = None
    hidden: Optional[int] = None
    kernel_steps: int = 20
    kernel_lr: float = 0.02
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if not 0.0 < self.alpha_level < 1.0:
            raise ValueError("alpha_level must lie in (0, 1)")


@dataclass
class TestReport:
    statistic: float
    null_quantile: float
    reject: bool
    null_samples: np.ndarray = field(repr=False)

    __test__ = False  # not a pytest class


# frozen embeddings -------------------------------------------------------------

@dataclass
class FeatureEmbedding:
    """Frozen explicit feature map; ``net`` is a DeepFourierNetwork."""

    net: DeepFourierNetwork

    def represent(self, Z):
        return dffn_forward(self.net, Z)[0]


@dataclass
class KernelEmbedding:
    """Frozen Gaussian kernel with bandwidth ``sigma``."""

    sigma: float

    def represent(self, Z):
        K = gaussian_gram(Z, Z, self.sigma)
        np.fill_diagonal(K, 1.0)
        return K


def _chunks(total, per_item_bytes, budget=64 * 2**20):
    step = max(1, int(budget // max(per_item_bytes, 1)))
    for start in range(0, total, step):
        yield slice(start, min(start + step, total))


def _block_entropies(rep, kernel, idx):
    """Entropy of the normalized second-moment block for each row set in ``idx``.

    ``idx`` is (B, k). For features the smaller of the k x k Gram and the
    D x D covariance is used; both share the same nonzero spectrum.
    """
    B, k = idx.shape
    out = np.empty(B)
    if kernel:
        for sl in _chunks(B, k * k * 8):
            sub = rep[idx[sl, :, None], idx[sl, None, :]] / k
            out[sl] = entropy_from_eigenvalues(np.linalg.eigvalsh(sub))
        return out
    D = rep.shape[1]
    for sl in _chunks(B, (k * D + min(k, D) ** 2) * 8):
        rows = rep[idx[sl]]
        if k <= D:
            mats = rows @ rows.transpose(0, 2, 1) / k
        else:
            mats = rows.transpose(0, 2, 1) @ rows / k
        out[sl] = entropy_from_eigenvalues(np.linalg.eigvalsh(mats))
    return out


def _pool_entropy(rep, kernel):
    T = len(rep)
    if kernel:
        return float(entropy_from_eigenvalues(np.linalg.eigvalsh(rep / T)))
    mat = rep @ rep.T if T <= rep.shape[1] else rep.T @ rep
    return float(entropy_from_eigenvalues(np.linalg.eigvalsh(mat / T)))


def null_threshold(null_samples, alpha_level):
    """The ceil((1 - alpha)(B + 1))-th smallest null sample (inf if that exceeds B)."""
    B = len(null_samples)
    k = math.ceil((1.0 - alpha_level) * (B + 1) - 1e-12)
    if k > B:
        return math.inf
    return float(np.sort(null_samples)[k - 1])


def permutation_test(X, Y, embedding, cfg, seed=0):
    """Observed divergence vs. ``cfg.permutations`` label-shuffled surrogates.

    The embedding is used as-is (no training). The pooled mixture entropy is
    invariant to relabelling, so each surrogate only recomputes the two
    per-sample-set entropies. Rejection needs the statistic to strictly
    exceed the threshold, so ties keep the null.
    """
    X, Y = as_rows(X), as_rows(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimMismatch(f"samples differ in dimension: {X.shape[1]} vs {Y.shape[1]}")
    n, m = len(X), len(Y)
    T = n + m
    pi1, pi2 = sample_proportions(n, m)
    kernel = isinstance(embedding, KernelEmbedding)
    rep = embedding.represent(np.vstack([X, Y]))
    s_pool = _pool_entropy(rep, kernel)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E7]))
    perms = np.vstack([np.arange(T), np.argsort(rng.random((cfg.permutations, T)), axis=1)])
    sx = _block_entropies(rep, kernel, perms[:, :n])
    sy = _block_entropies(rep, kernel, perms[:, n:])
    values = np.clip(s_pool - pi1 * sx - pi2 * sy, 0.0, upper_bound(n, m))
    stat, null = float(values[0]), values[1:]
    threshold = null_threshold(null, cfg.alpha_level)
    return TestReport(stat, threshold, bool(stat > threshold), null)


# training ------------------------------------------------------------------------

def median_distance(Z, max_rows=1000):
    Z = as_rows(Z)[:max_rows]
    if len(Z) < 2:
        return 1.0
    med = float(np.median(pdist(Z)))
    return med if med > 0 else 1.0


def _settings(family, d):
    return _FAMILY_SETTINGS.get(family, _DEFAULT_SETTINGS)


def _kernel_value_and_grad(D2, n, log_sigma):
    """Kernel estimator and its derivative with respect to log sigma."""
    sigma = math.exp(log_sigma)
    K = np.exp(-D2 / (2.0 * sigma**2))
    T = len(K)
    m = T - n
    pi1, pi2 = sample_proportions(n, m)
    value = 0.0
    G = np.zeros_like(K)
    for sl, size, w in ((slice(None), T, -1.0), (slice(0, n), n, pi1), (slice(n, T), m, pi2)):
        lam, vec = np.linalg.eigh(K[sl, sl] / size)
        lam = np.clip(lam, 0.0, None)
        value -= w * entropy_from_eigenvalues(lam)
        # d(-w S(K_b / size)) / dK_b
        G[sl, sl] -= w * entropy_grad(lam, vec) / size
    dK = K * D2 / sigma**2  # dK / dlog(sigma)
    np.fill_diagonal(dK, 0.0)
    return float(value), float(np.sum(G * dK))


BANDWIDTH_GRID = 2.0 ** np.arange(-4, 2)


def standardized_statistic(X, Y, embedding, permutations=20, seed=0):
    """(observed - mean(null)) / sd(null): a cheap power proxy on training data."""
    cfg = TstConfig(permutations=permutations)
    rep = permutation_test(X, Y, embedding, cfg, seed)
    sd = float(np.std(rep.null_samples))
    return (rep.statistic - float(np.mean(rep.null_samples))) / max(sd, 1e-12)


def select_bandwidth(X, Y, make_embedding, grid=BANDWIDTH_GRID, seed=0):
    """Grid point (times the median distance) with the largest power proxy.

    The raw training divergence grows without bound as the bandwidth
    shrinks, so it cannot pick the bandwidth by itself.
    """
    base = median_distance(np.vstack([X, Y]))
    scores = [standardized_statistic(X, Y, make_embedding(base * g), seed=seed) for g in grid]
    return base * float(grid[int(np.argmax(scores))])


def train_kernel(X, Y, cfg, seed=0):
    """Bandwidth for jsd-k: grid search on the power proxy, then Adam on log sigma."""
    X, Y = as_rows(X), as_rows(Y)
    Z = np.vstack([X, Y])
    D2 = np.square(Z[:, None, :] - Z[None, :, :]).sum(-1)
    sigma = select_bandwidth(X, Y, KernelEmbedding, seed=seed)
    params = {"log_sigma": np.array(math.log(sigma))}
    opt = AdamState(lr=cfg.kernel_lr)
    for _ in range(cfg.kernel_steps):
        _, g = _kernel_value_and_grad(D2, len(X), float(params["log_sigma"]))
        params = adam_step(opt, params, {"log_sigma": np.array(g)}, maximize=True)
    return KernelEmbedding(math.exp(float(params["log_sigma"])))


def build_embedding_net(method, d, family, cfg, sigma, seed):
    width_fn, n_ff, _ = _settings(family, d)
    n_ff = cfg.num_fourier_features or n_ff
    if method in ("jsd-ff", "jsd-rff"):
        return build_dffn(d, [], n_ff, sigma=sigma, seed=seed)
    width = cfg.hidden or width_fn(d)
    # four linear layers, softplus between them, linear into the Fourier layer
    return build_dffn(
        d,
        [width] * 4,
        n_ff,
        activation="softplus",
        final_activation="identity",
        sigma=sigma,
        seed=seed,
        combined=True,
        input_fourier=n_ff,
        input_sigma=sigma,
    )


def train_embedding(X, Y, cfg, family="", seed=0):
    """Fit the method's embedding on a training split and return it frozen."""
    X, Y = as_rows(X), as_rows(Y)
    if cfg.method == "jsd-k":
        return train_kernel(X, Y, cfg, seed)
    d = X.shape[1]
    n_ff = cfg.num_fourier_features or _settings(family, d)[1]
    sigma = select_bandwidth(
        X, Y, lambda s: FeatureEmbedding(build_dffn(d, [], n_ff, sigma=s, seed=seed)), seed=seed
    )
    net = build_embedding_net(cfg.method, d, family, cfg, sigma, seed)
    lr = cfg.lr or _settings(family, d)[2][cfg.method]
    est_cfg = EstimatorConfig(
        epochs=cfg.epochs,
        lr=lr,
        seed=seed,
        train_omega=cfg.method != "jsd-rff",
        train_network=cfg.method == "jsd-d",
    )
    fit_divergence(X, Y, est_cfg, net=net)
    return FeatureEmbedding(net)


# dataset families ------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """A synthetic family; ``n`` is samples per blob for blobs, per set otherwise."""

    family: str
    n: int
    d: int = 2
    null: bool = False
    cauchy_location: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown dataset family {self.family!r}")

    @property
    def dim(self):
        if self.family in ("blobs", "8gaussians"):
            return 2
        if self.family == "cauchy":
            return 1
        return self.d

    def draw(self, which, seed, stream):
        """Rows for side ``which`` in {'P', 'Q'}; null specs draw P twice."""
        side = "P" if self.null else which
        if self.family == "blobs":
            return gen_blobs(3, self.n, side, seed, stream).rows
        if self.family == "hdgm":
            return gen_hdgm(self.d, self.n, side, seed, stream).rows
        if self.family == "8gaussians":
            if side == "Q":
                raise ValueError("8gaussians has no alternative; use null=True")
            return gen_8gaussians(self.n, seed, stream).rows
        if self.family == "null-gauss":
            return gen_null_gauss(self.d, self.n, seed, stream).rows
        loc = self.cauchy_location if side == "Q" else 0.0
        return gen_cauchy(CauchySpec(loc), self.n, seed, stream).rows


def _subseed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def draw_pair(spec, seed, trial, phase, index=0):
    """Independent X ~ P and Y ~ Q for one (trial, phase, index); phase selects train/test."""
    sx = _subseed(seed, trial, phase, index, 0)
    sy = _subseed(seed, trial, phase, index, 1)
    return spec.draw("P", sx, phase), spec.draw("Q", sy, phase)


def run_trial(spec, cfg, trial):
    """Train once, then return the rejection rate over ``cfg.n_test_sets`` fresh test sets."""
    Xtr, Ytr = draw_pair(spec, cfg.seed, trial, TRAIN_STREAM)
    emb = train_embedding(Xtr, Ytr, cfg, spec.family, seed=_subseed(cfg.seed, trial, 7))
    rejections = 0
    for k in range(cfg.n_test_sets):
        Xte, Yte = draw_pair(spec, cfg.seed, trial, TEST_STREAM, k)
        rejections += permutation_test(Xte, Yte, emb, cfg, seed=_subseed(cfg.seed, trial, k, 9)).reject
    return rejections / cfg.n_test_sets


def _trial_job(args):
    spec, cfg, trial = args
    return trial, run_trial(spec, cfg, trial)


def run_power_experiment(spec, cfg, grid=None, grid_key="n"):
    """Power table rows {dataset, method, n, d, trial, power} over a grid of ``n`` or ``d``."""
    specs = [spec] if grid is None else [replace(spec, **{grid_key: v}) for v in grid]
    jobs = [(s, cfg, t) for s in specs for t in range(cfg.n_trials)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    rows = []
    for (s, _, _), (trial, power) in zip(jobs, results):
        name = f"{s.family}-null" if s.null else s.family
        rows.append({"dataset": name, "method": cfg.method, "n": s.n, "d": s.dim, "trial": trial, "power": power})
    return rows


def summarize(rows):
    """Collapse trial rows into {dataset, method, n, d, mean_power, sd}."""
    groups = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["method"], r["n"], r["d"]), []).append(r["power"])
    out = []
    for (dataset, method, n, d), powers in groups.items():
        p = np.array(powers)
        sd = float(p.std(ddof=1)) if len(p) > 1 else 0.0
        out.append({"dataset": dataset, "method": method, "n": n, "d": d, "mean_power": float(p.mean()), "sd": sd})
    return out


# file-based data ---------------------------------------------------------------------

def train_test_split(rows, ratio=0.5, seed=0):
    """Disjoint random split of ``rows`` into (train, test)."""
    rows = as_rows(rows)
    n_train = int(round(len(rows) * ratio))
    if n_train < 1 or n_train >= len(rows):
        raise InsufficientData(f"cannot split {len(rows)} rows with ratio {ratio}")
    order = np.random.default_rng(np.random.SeedSequence([int(seed), 0x59])).permutation(len(rows))
    return rows[order[:n_train]], rows[order[n_train:]]


def run_file_power(X, Y, cfg, n, ratio=0.5):
    """Power on file data: train on one split, test sets subsampled from the other."""
    X, Y = as_rows(X), as_rows(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimMismatch("X and Y files differ in column count")
    rows = []
    for trial in range(cfg.n_trials):
        Xtr, Xte = train_test_split(X, ratio, _subseed(cfg.seed, trial, 1))
        Ytr, Yte = train_test_split(Y, ratio, _subseed(cfg.seed, trial, 2))
        if min(len(Xte), len(Yte)) < n:
            raise InsufficientData(f"test split has fewer than {n} rows")
        emb = train_embedding(Xtr, Ytr, cfg, "csv", seed=_subseed(cfg.seed, trial, 7))
        rng = np.random.default_rng(_subseed(cfg.seed, trial, 3))
        hits = 0
        for k in range(cfg.n_test_sets):
            xs = Xte[rng.choice(len(Xte), n, replace=False)]
            ys = Yte[rng.choice(len(Yte), n, replace=False)]
            hits += permutation_test(xs, ys, emb, cfg, seed=_subseed(cfg.seed, trial, k, 9)).reject
        rows.append({"dataset": "csv", "method": cfg.method, "n": n, "d": X.shape[1], "trial": trial, "power": hits / cfg.n_test_sets})
    return rows


def config_dict(cfg):
    return asdict(cfg)
