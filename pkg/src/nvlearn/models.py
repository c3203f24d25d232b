"""Order-quantity models: feature MLP, linear model, and classical baselines.

The MLP's final layer is affine, so orders are not capped at 1 the way a
sigmoid output would cap them. ``demand_scale`` is a target scaling:
the network is fit to ``d * demand_scale`` and predictions are divided
by it again, so callers always see orders in demand units.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import make_rng, std_normal_inv_cdf
from .losses import LossKind, batch_loss

FORMAT_VERSION = 1


def sigmoid(z):
    # exp(-logaddexp(0, -z)) == 1/(1+exp(-z)) without overflow warnings
    return np.exp(-np.logaddexp(0.0, -z))


_ACTIVATIONS = {
    "sigmoid": (sigmoid, lambda a: a * (1.0 - a)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(np.float64)),
}


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Fully connected net: sigmoid hidden layers, identity output.

    ``weights[k]`` has shape ``(fan_out, fan_in)``; ``biases[k]`` has
    shape ``(fan_out,)``.
    """

    weights: tuple
    biases: tuple
    demand_scale: float = 1.0
    hidden_activation: str = "sigmoid"

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        if len(ws) < 2 or len(ws) != len(bs):
            raise ValueError("need at least one hidden layer and one bias per layer")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight {w.shape} vs bias {b.shape}")
            if k and w.shape[1] != ws[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k}: fan_in {w.shape[1]} != previous fan_out {ws[k - 1].shape[0]}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
        if not self.demand_scale > 0:
            raise ValueError(f"demand_scale must be positive, got {self.demand_scale}")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "demand_scale", float(self.demand_scale))

    @classmethod
    def init(cls, layer_sizes, seed=0, demand_scale=1.0, hidden_activation="sigmoid"):
        """Glorot-uniform weights, zero biases, drawn from ``seed``."""
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 3 or min(sizes) < 1:
            raise ValueError(f"layer sizes must be [n_in, h1, ..., m_out], got {sizes}")
        rng = make_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(weights), tuple(biases), demand_scale, hidden_activation)

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self):
        return self.weights[0].shape[1]

    @property
    def n_outputs(self):
        return self.weights[-1].shape[0]

    def _check_inputs(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"expected features of shape (N, {self.n_inputs}), got {X.shape}")
        return X

    def _activations(self, X):
        act, _ = _ACTIVATIONS[self.hidden_activation]
        outs = [X]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            outs.append(act(outs[-1] @ w.T + b))
        raw = outs[-1] @ self.weights[-1].T + self.biases[-1]
        return outs, raw

    def predict(self, X):
        """Orders for each row of ``X`` in demand units, shape ``(N, m)``."""
        _, raw = self._activations(self._check_inputs(X))
        return raw / self.demand_scale

    def params(self):
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def reg_mask(self):
        """True for weight entries, False for biases."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [np.ones(w.size, dtype=bool), np.zeros(b.size, dtype=bool)]
        return np.concatenate(parts)

    def with_params(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[pos : pos + w.size].reshape(w.shape))
            pos += w.size
            biases.append(vec[pos : pos + b.size].copy())
            pos += b.size
        if pos != vec.size:
            raise ValueError(f"expected {pos} parameters, got {vec.size}")
        return MlpModel(tuple(weights), tuple(biases), self.demand_scale, self.hidden_activation)

    def layer_grads(self, X, D, c, kind):
        """Mean loss over rows and its gradient per layer.

        The loss is measured in the scaled space the network is fit in,
        i.e. between ``D * demand_scale`` and the raw network output.
        """
        X = self._check_inputs(X)
        D = np.asarray(D, dtype=np.float64)
        if D.ndim != 2 or D.shape != (X.shape[0], self.n_outputs):
            raise ValueError(f"expected demands of shape {(X.shape[0], self.n_outputs)}, got {D.shape}")
        _, dact = _ACTIVATIONS[self.hidden_activation]
        outs, raw = self._activations(X)
        value, delta = batch_loss(D * self.demand_scale, raw, c, kind)
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = delta.T @ outs[k]
            gb[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k]) * dact(outs[k])
        return value, gw, gb

    def loss_and_grad(self, X, D, c, kind):
        value, gw, gb = self.layer_grads(X, D, c, kind)
        return value, np.concatenate([p.ravel() for wb in zip(gw, gb) for p in wb])

    def to_dict(self):
        return {
            "type": "mlp",
            "format_version": FORMAT_VERSION,
            "layer_sizes": self.layer_sizes,
            "hidden_activation": self.hidden_activation,
            "demand_scale": self.demand_scale,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Single-product order ``q0 + q . x``."""

    intercept: float
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def zeros(cls, n_features):
        return cls(0.0, np.zeros(int(n_features)))

    @property
    def n_inputs(self):
        return self.weights.size

    n_outputs = 1

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"expected features of shape (N, {self.n_inputs}), got {X.shape}")
        return (self.intercept + X @ self.weights).reshape(-1, 1)

    def params(self):
        return np.concatenate([[self.intercept], self.weights])

    def reg_mask(self):
        mask = np.ones(self.n_inputs + 1, dtype=bool)
        mask[0] = False
        return mask

    def with_params(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_inputs + 1:
            raise ValueError(f"expected {self.n_inputs + 1} parameters, got {vec.size}")
        return LinearModel(vec[0], vec[1:].copy())

    def loss_and_grad(self, X, D, c, kind):
        D = np.asarray(D, dtype=np.float64).reshape(-1, 1)
        Y = self.predict(X)
        if D.shape != Y.shape:
            raise ValueError(f"demand shape {D.shape} does not match {Y.shape}")
        value, g = batch_loss(D, Y, c, kind)
        g = g[:, 0]
        return value, np.concatenate([[g.sum()], np.asarray(X, dtype=np.float64).T @ g])

    def to_dict(self):
        return {
            "type": "linear",
            "format_version": FORMAT_VERSION,
            "intercept": self.intercept,
            "weights": self.weights.tolist(),
        }


def mlp_forward(model, x):
    """Orders for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a feature vector, got shape {x.shape}")
    return model.predict(x.reshape(1, -1))[0]


def mlp_backward(model, x, d, c, kind):
    """Per-layer weight and bias gradients for one ``(x, d)`` sample.

    Returns ``(weight_grads, bias_grads)`` shaped like the model's own
    weights and biases.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    d = np.asarray(d, dtype=np.float64).reshape(1, -1)
    _, gw, gb = model.layer_grads(x, d, c, LossKind.parse(kind))
    return gw, gb


def mlp_sample_loss(model, x, d, c, kind):
    """The scalar ``mlp_backward`` differentiates."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    d = np.asarray(d, dtype=np.float64).reshape(1, -1)
    value, _, _ = model.layer_grads(x, d, c, LossKind.parse(kind))
    return value


def linear_forward(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise ValueError(f"feature length {x.shape} does not match weights {model.weights.shape}")
    return float(model.intercept + model.weights @ x)


def classical_normal_order(mu, sigma, c):
    """Critical-fractile order for normally distributed demand."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return mu + sigma * std_normal_inv_cdf(c.critical_fractile)


def empirical_quantile_order(demands, c):
    """Smallest sample value whose empirical CDF reaches ``cp / (cp + ch)``.

    This is the smallest minimiser of the empirical newsvendor cost over
    the sample.
    """
    s = np.sort(np.asarray(demands, dtype=np.float64).reshape(-1))
    if s.size == 0:
        raise ValueError("empty demand sample")
    n = s.size
    # count/n >= cp/(cp+ch)  <=>  count*(cp+ch) >= cp*n, up to rounding
    need = c.cp * n
    total = c.cp + c.ch
    values = np.unique(s)
    counts = np.searchsorted(s, values, side="right")
    ok = counts * total >= need * (1.0 - 1e-12)
    return float(values[np.argmax(ok)])


def model_from_dict(doc):
    kind = doc.get("type")
    if kind == "mlp":
        return MlpModel(
            tuple(np.array(w, dtype=np.float64) for w in doc["weights"]),
            tuple(np.array(b, dtype=np.float64) for b in doc["biases"]),
            doc["demand_scale"],
            doc.get("hidden_activation", "sigmoid"),
        )
    if kind == "linear":
        return LinearModel(doc["intercept"], np.array(doc["weights"], dtype=np.float64))
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path):
    # json writes floats with repr(), which round-trips float64 exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


__all__ = [
    "LinearModel",
    "MlpModel",
    "classical_normal_order",
    "empirical_quantile_order",
    "linear_forward",
    "load_model",
    "mlp_backward",
    "mlp_forward",
    "mlp_sample_loss",
    "save_model",
    "sigmoid",
]
