"""Fourier-feature embeddings and deep Fourier features networks (DFFN).

Every mapping here produces rows of unit Euclidean norm, which is what makes
``Phi.T @ Phi / N`` a unit-trace covariance.

Frequencies are stored at unit bandwidth and divided by ``sigma`` when
applied, so the bandwidth stays a separate trainable scalar.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BadShape, DimMismatch, MissingInputMap

ACTIVATIONS = ("softplus", "leaky_relu", "tanh", "identity")


@dataclass
class FourierFeatureMap:
    omega: np.ndarray  # (d, D/2), unit bandwidth
    sigma: float

    @property
    def d(self):
        return self.omega.shape[0]

    @property
    def dim(self):
        """Embedding dimension D (twice the number of frequencies)."""
        return 2 * self.omega.shape[1]

    @property
    def frequencies(self):
        return self.omega / self.sigma


def sample_rff(d, D, sigma, seed):
    """Draw D/2 Gaussian-spectrum frequencies for a d-dimensional input."""
    if D <= 0 or D % 2:
        raise BadShape(f"feature dimension D must be positive and even, got {D}")
    if d <= 0:
        raise BadShape(f"input dimension must be positive, got {d}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    return FourierFeatureMap(rng.standard_normal((d, D // 2)), float(sigma))


def _fourier_args(f, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != f.d:
        raise DimMismatch(f"input has shape {X.shape}, map expects {f.d} columns")
    return X @ f.omega / f.sigma


def _trig_embed(U):
    n, k = U.shape
    out = np.empty((n, 2 * k))
    out[:, 0::2] = np.cos(U)
    out[:, 1::2] = np.sin(U)
    out *= np.sqrt(1.0 / k)  # sqrt(2/D)
    return out


def map_rff(f, X):
    """sqrt(2/D) [cos(w_1.x), sin(w_1.x), ..., cos(w_k.x), sin(w_k.x)] per row."""
    return _trig_embed(_fourier_args(f, X))


# dense layers ---------------------------------------------------------------

@dataclass
class DenseLayer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "softplus"
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.bias.shape != (self.weight.shape[1],):
            raise BadShape("bias length must match weight output size")


def activate(z, layer):
    kind = layer.activation
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    if kind == "leaky_relu":
        return np.where(z > 0, z, layer.negative_slope * z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def activate_grad(z, layer):
    kind = layer.activation
    if kind == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid, overflow-free
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, layer.negative_slope)
    if kind == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def init_dense(n_in, n_out, activation, rng, negative_slope=0.2):
    # torch.nn.Linear default init
    bound = 1.0 / np.sqrt(n_in)
    return DenseLayer(
        rng.uniform(-bound, bound, (n_in, n_out)),
        rng.uniform(-bound, bound, n_out),
        activation,
        negative_slope,
    )


def init_mlp(sizes, activations, rng, negative_slope=0.2):
    """Dense stack; ``activations`` has one tag per layer (len(sizes) - 1)."""
    if len(activations) != len(sizes) - 1:
        raise BadShape("need one activation per layer")
    return [
        init_dense(a, b, act, rng, negative_slope)
        for a, b, act in zip(sizes[:-1], sizes[1:], activations)
    ]


def mlp_forward(layers, X):
    """Run a dense stack; returns the output and per-layer (input, preact) pairs."""
    a = np.asarray(X, dtype=float)
    cache = []
    for layer in layers:
        if a.shape[1] != layer.weight.shape[0]:
            raise DimMismatch(
                f"layer expects {layer.weight.shape[0]} inputs, got {a.shape[1]}"
            )
        z = a @ layer.weight + layer.bias
        cache.append((a, z))
        a = activate(z, layer)
    return a, cache


# DFFN -----------------------------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class DeepFourierNetwork:
    """Dense layers followed by a Fourier-feature terminal map.

    With no layers this is a plain (trainable) Fourier-feature map. When
    ``input_map`` is set the network produces the combined deep-kernel
    embedding ``[sqrt(1-eps) phi(f(x) (+) x)] (+) [sqrt(eps) psi(x)]`` with
    ``eps = sigmoid(epsilon_logit)``.
    """

    layers: list
    terminal: FourierFeatureMap
    input_map: Optional[FourierFeatureMap] = None
    epsilon_logit: float = 0.0

    @property
    def combined(self):
        return self.input_map is not None

    @property
    def epsilon(self):
        return float(sigmoid(self.epsilon_logit))

    @property
    def input_dim(self):
        if self.layers:
            return self.layers[0].weight.shape[0]
        if self.input_map is not None:
            return self.input_map.d
        return self.terminal.d

    @property
    def output_dim(self):
        extra = self.input_map.dim if self.input_map is not None else 0
        return self.terminal.dim + extra

    def parameters(self):
        """Flat name -> array mapping of every trainable tensor (copies)."""
        p = {}
        for i, layer in enumerate(self.layers):
            p[f"layers.{i}.weight"] = layer.weight.copy()
            p[f"layers.{i}.bias"] = layer.bias.copy()
        p["terminal.omega"] = self.terminal.omega.copy()
        p["terminal.sigma"] = np.array(self.terminal.sigma)
        if self.input_map is not None:
            p["input_map.omega"] = self.input_map.omega.copy()
            p["input_map.sigma"] = np.array(self.input_map.sigma)
            p["epsilon_logit"] = np.array(self.epsilon_logit)
        return p

    def set_parameters(self, params):
        for name, value in params.items():
            parts = name.split(".")
            if parts[0] == "layers":
                layer = self.layers[int(parts[1])]
                target = getattr(layer, parts[2])
                if target.shape != np.shape(value):
                    raise BadShape(f"{name}: shape {np.shape(value)} != {target.shape}")
                setattr(layer, parts[2], np.array(value, dtype=float))
            elif parts[0] in ("terminal", "input_map"):
                fmap = getattr(self, parts[0])
                if parts[1] == "sigma":
                    fmap.sigma = float(value)
                else:
                    if fmap.omega.shape != np.shape(value):
                        raise BadShape(f"{name}: shape mismatch")
                    fmap.omega = np.array(value, dtype=float)
            elif name == "epsilon_logit":
                self.epsilon_logit = float(value)
            else:
                raise KeyError(name)


def build_dffn(d, hidden, n_fourier, *, activation="softplus", sigma=1.0, seed=0,
               final_activation="identity", negative_slope=0.2, combined=False,
               input_fourier=None, input_sigma=None):
    """Dense stack ``d -> hidden[0] -> ... -> hidden[-1]`` then Fourier features.

    Every hidden layer uses ``activation`` except the last, which uses
    ``final_activation`` (the two-sample-test architecture leaves it linear).
    ``n_fourier`` is the number of frequencies, so the embedding has
    ``2 * n_fourier`` dimensions.
    """
    rng = np.random.default_rng(seed)
    hidden = list(hidden)
    acts = [activation] * len(hidden)
    if acts:
        acts[-1] = final_activation
    layers = init_mlp([d] + hidden, acts, rng, negative_slope)
    feat_dim = hidden[-1] if hidden else d
    input_map = None
    if combined:
        feat_dim += d
        k = input_fourier or n_fourier
        input_map = FourierFeatureMap(rng.standard_normal((d, k)), float(input_sigma or sigma))
    terminal = FourierFeatureMap(rng.standard_normal((feat_dim, n_fourier)), float(sigma))
    return DeepFourierNetwork(layers, terminal, input_map)


@dataclass
class GradTape:
    layer_cache: list  # [(input, preact)] per dense layer
    terminal_input: np.ndarray
    terminal_args: np.ndarray
    terminal_out: np.ndarray
    input_args: Optional[np.ndarray] = None
    input_out: Optional[np.ndarray] = None
    epsilon: Optional[float] = None
    x: Optional[np.ndarray] = field(default=None, repr=False)
    output: Optional[np.ndarray] = field(default=None, repr=False)


def dffn_forward(net, X):
    """Embed rows of X; returns ``(Phi, tape)`` with unit-norm rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimMismatch(f"input has shape {X.shape}, network expects {net.input_dim} columns")
    h, cache = mlp_forward(net.layers, X)
    if net.input_map is not None:
        h = np.hstack([h, X])
    U = _fourier_args(net.terminal, h)
    phi = _trig_embed(U)
    tape = GradTape(cache, h, U, phi, x=X)
    if net.input_map is None:
        tape.output = phi
        return phi, tape
    V = _fourier_args(net.input_map, X)
    psi = _trig_embed(V)
    eps = net.epsilon
    out = np.hstack([np.sqrt(1.0 - eps) * phi, np.sqrt(eps) * psi])
    tape.input_args, tape.input_out, tape.epsilon, tape.output = V, psi, eps, out
    return out, tape


def combined_mapping(net, X):
    if net.input_map is None:
        raise MissingInputMap("combined mapping needs an input-space Fourier map")
    return dffn_forward(net, X)[0]


# checkpoints ----------------------------------------------------------------

def save_checkpoint(net, path):
    """Write the network as shape-tagged JSON (see README for the layout)."""
    doc = {
        "format": "repjsd-dffn/1",
        "layers": [
            {
                "activation": layer.activation,
                "negative_slope": layer.negative_slope,
                "weight": {"shape": list(layer.weight.shape), "data": layer.weight.ravel().tolist()},
                "bias": {"shape": list(layer.bias.shape), "data": layer.bias.tolist()},
            }
            for layer in net.layers
        ],
        "terminal": _fmap_doc(net.terminal),
        "input_map": _fmap_doc(net.input_map) if net.input_map is not None else None,
        "epsilon_logit": net.epsilon_logit,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "repjsd-dffn/1":
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    layers = [
        DenseLayer(_tensor(e["weight"]), _tensor(e["bias"]), e["activation"], e["negative_slope"])
        for e in doc["layers"]
    ]
    input_map = _fmap(doc["input_map"]) if doc["input_map"] is not None else None
    return DeepFourierNetwork(layers, _fmap(doc["terminal"]), input_map, doc["epsilon_logit"])


def _fmap_doc(f):
    return {"omega": {"shape": list(f.omega.shape), "data": f.omega.ravel().tolist()}, "sigma": f.sigma}


def _fmap(doc):
    return FourierFeatureMap(_tensor(doc["omega"]), float(doc["sigma"]))


def _tensor(doc):
    return np.asarray(doc["data"], dtype=float).reshape(doc["shape"])
