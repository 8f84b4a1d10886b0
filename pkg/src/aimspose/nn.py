"""Two-layer tanh network with hand-written backprop, Adam, and a JSON file format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class MLP:
    """``logits = tanh(x @ W1 + b1) @ W2 + b2``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    metadata: dict = field(default_factory=dict)

    PARAMS = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, n_in, n_hidden, n_out, rng, metadata=None) -> "MLP":
        a1 = np.sqrt(6.0 / (n_in + n_hidden))
        a2 = np.sqrt(6.0 / (n_hidden + n_out))
        return cls(
            rng.uniform(-a1, a1, (n_in, n_hidden)),
            np.zeros(n_hidden),
            rng.uniform(-a2, a2, (n_hidden, n_out)),
            np.zeros(n_out),
            dict(metadata or {}),
        )

    @classmethod
    def zeros(cls, n_in, n_hidden, n_out) -> "MLP":
        return cls(np.zeros((n_in, n_hidden)), np.zeros(n_hidden), np.zeros((n_hidden, n_out)), np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.W1.shape[0]

    @property
    def n_out(self) -> int:
        return self.W2.shape[1]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "MLP":
        return MLP(*(getattr(self, k).copy() for k in self.PARAMS), metadata=dict(self.metadata))

    def check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_in:
            raise DataError(f"expected {self.n_in} input features, got {X.shape[1]}")
        return X

    def forward(self, X):
        """Returns ``(hidden, logits)``."""
        X = self.check_input(X)
        hidden = np.tanh(X @ self.W1 + self.b1)
        return hidden, hidden @ self.W2 + self.b2

    def backward(self, X, hidden, d_logits, d_hidden=None) -> dict:
        """Parameter gradients given upstream gradients on logits (and optionally on hidden)."""
        grads = {"W2": hidden.T @ d_logits, "b2": d_logits.sum(axis=0)}
        dh = d_logits @ self.W2.T
        if d_hidden is not None:
            dh = dh + d_hidden
        dz = dh * (1.0 - hidden**2)
        grads["W1"] = X.T @ dz
        grads["b1"] = dz.sum(axis=0)
        return grads

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.forward(X)[1])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params().values())

    # -- file format ---------------------------------------------------------

    def to_dict(self) -> dict:
        layers = [
            {"shape": list(self.W1.shape), "weights": self.W1.ravel().tolist(), "bias": self.b1.tolist()},
            {"shape": list(self.W2.shape), "weights": self.W2.ravel().tolist(), "bias": self.b2.tolist()},
        ]
        return {"activation": "tanh", "layers": layers, **self.metadata}

    @classmethod
    def from_dict(cls, doc) -> "MLP":
        try:
            (l1, l2) = doc["layers"]
            W1 = np.array(l1["weights"], dtype=float).reshape(l1["shape"])
            W2 = np.array(l2["weights"], dtype=float).reshape(l2["shape"])
            b1 = np.array(l1["bias"], dtype=float)
            b2 = np.array(l2["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model document: {exc}") from exc
        if W1.shape[1] != W2.shape[0] or b1.shape != (W1.shape[1],) or b2.shape != (W2.shape[1],):
            raise DataError("inconsistent layer shapes in model document")
        meta = {k: v for k, v in doc.items() if k not in ("layers", "activation")}
        model = cls(W1, b1, W2, b2, meta)
        if not model.is_finite():
            raise DataError("model parameters must be finite")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "MLP":
        return cls.from_dict(json.loads(Path(path).read_text()))


class Adam:
    def __init__(self, params: dict, lr=3e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            if self.weight_decay and k.startswith("W"):
                g = g + self.weight_decay * p
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
