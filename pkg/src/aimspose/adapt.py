"""Coarse-level image branch: cross-entropy plus lambda-weighted LMMD.

LMMD compares source and target activations class by class. Source samples
are weighted by their one-hot labels, target samples by the network's current
softmax outputs (treated as constants). With ``V_c = [w_s^c; -w_t^c]`` and a
kernel matrix ``K`` over the stacked activations, the statistic is

    lmmd = (1 / n_c) * sum_c  V_c^T K V_c

summed over the classes present in both domains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .nn import MLP, Adam, config_hash, cross_entropy, softmax


class LmmdWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LmmdConfig:
    bandwidth_multipliers: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    lam: float = 0.5
    activation_layer: str = "hidden"
    kernel: str = "gaussian"
    fixed_bandwidth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "bandwidth_multipliers", tuple(float(m) for m in self.bandwidth_multipliers))
        if not self.bandwidth_multipliers or min(self.bandwidth_multipliers) <= 0:
            raise ConfigError("bandwidth multipliers must be positive")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.activation_layer not in ("hidden", "logits", "both"):
            raise ConfigError(f"unknown activation_layer {self.activation_layer!r}")
        if self.kernel not in ("gaussian", "linear"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.fixed_bandwidth is not None and self.fixed_bandwidth <= 0:
            raise ConfigError("fixed_bandwidth must be positive")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["bandwidth_multipliers"] = list(self.bandwidth_multipliers)
        doc["lambda"] = doc.pop("lam")
        return doc

    @classmethod
    def from_dict(cls, doc) -> "LmmdConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad lmmd config: {exc}") from exc


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    epochs: int = 30
    batch_size: int = 128
    target_batch_size: int = 128
    lr: float = 3e-3
    weight_decay: float = 1e-4
    lambda_schedule: str = "constant"

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 0 or self.batch_size < 1 or self.target_batch_size < 1:
            raise ConfigError("network and batch sizes must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay non-negative")
        if self.lambda_schedule not in ("constant", "ramp"):
            raise ConfigError(f"unknown lambda_schedule {self.lambda_schedule!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "TrainConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Per-sample, per-class weights; ``present[c]`` marks columns that sum to 1."""

    values: np.ndarray
    present: np.ndarray


# ---------------------------------------------------------------------------
# kernels


def squared_distances(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    D = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(D, 0.0)


def median_bandwidth(Z) -> float:
    """Median pairwise squared distance over distinct pairs; 1.0 (with a warning) if zero."""
    Z = np.asarray(Z, dtype=float)
    n = len(Z)
    if n < 2:
        warnings.warn("fewer than two points; using bandwidth 1.0", LmmdWarning, stacklevel=2)
        return 1.0
    iu = np.triu_indices(n, 1)
    med = float(np.median(squared_distances(Z, Z)[iu]))
    if not med > 0:
        warnings.warn("zero median distance; using bandwidth 1.0", LmmdWarning, stacklevel=2)
        return 1.0
    return med


def _bandwidth(Z, config):
    return config.fixed_bandwidth if config.fixed_bandwidth is not None else median_bandwidth(Z)


def gaussian_kernel_matrix(A, B, config: LmmdConfig, bandwidth=None) -> np.ndarray:
    """Multi-bandwidth Gaussian kernel; the median bandwidth is taken over A and B together."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DataError(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if bandwidth is None:
        bandwidth = _bandwidth(np.vstack([A, B]), config)
    D = squared_distances(A, B)
    return sum(np.exp(-D / (m * bandwidth)) for m in config.bandwidth_multipliers)


# ---------------------------------------------------------------------------
# weights


def one_hot(labels, n_classes) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def source_weights(onehot_labels) -> WeightMatrix:
    Y = np.asarray(onehot_labels, dtype=float)
    totals = Y.sum(axis=0)
    present = totals > 0
    values = np.where(present, Y / np.where(present, totals, 1.0), 0.0)
    return WeightMatrix(values, present)


def target_weights(predicted_probs, min_mass=1e-8) -> WeightMatrix:
    P = np.asarray(predicted_probs, dtype=float)
    if P.ndim != 2:
        raise DataError("predicted probabilities must be an (n, C) matrix")
    if not np.all(np.isfinite(P)) or (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-6:
        raise DataError("rows of predicted_probs must be probability vectors")
    totals = P.sum(axis=0)
    present = totals >= min_mass
    values = np.where(present, P / np.where(present, totals, 1.0), 0.0)
    return WeightMatrix(values, present)


# ---------------------------------------------------------------------------
# LMMD


def lmmd_and_grad(src_feats, src_weights, tgt_feats, tgt_weights, config: LmmdConfig, bandwidth=None):
    """LMMD value and its gradients w.r.t. source and target features.

    Weights and the bandwidth are constants. Returns ``(value, grad_src, grad_tgt)``.
    """
    S = np.atleast_2d(np.asarray(src_feats, dtype=float))
    T = np.atleast_2d(np.asarray(tgt_feats, dtype=float))
    if S.shape[1] != T.shape[1]:
        raise DataError(f"feature dimensions differ: {S.shape[1]} vs {T.shape[1]}")
    if src_weights.values.shape != (len(S), tgt_weights.values.shape[1]) or len(tgt_weights.values) != len(T):
        raise DataError("weight matrices do not match their feature sets")
    shared = src_weights.present & tgt_weights.present
    n_c = int(shared.sum())
    if n_c == 0:
        warnings.warn("no class present in both domains; LMMD is 0", LmmdWarning, stacklevel=2)
        return 0.0, np.zeros_like(S), np.zeros_like(T)

    Z = np.vstack([S, T])
    V = np.vstack([src_weights.values[:, shared], -tgt_weights.values[:, shared]])
    M = V @ V.T
    if config.kernel == "linear":
        value = float((M * (Z @ Z.T)).sum()) / n_c
        grad = 2.0 * (M @ Z) / n_c
    else:
        if bandwidth is None:
            bandwidth = _bandwidth(Z, config)
        D = squared_distances(Z, Z)
        np.fill_diagonal(D, 0.0)
        K = np.zeros_like(D)
        dK = np.zeros_like(D)
        for m in config.bandwidth_multipliers:
            E = np.exp(-D / (m * bandwidth))
            K += E
            dK -= E / (m * bandwidth)
        value = float((M * K).sum()) / n_c
        G = M * dK / n_c
        grad = 4.0 * (G.sum(axis=1)[:, None] * Z - G @ Z)
    return value, grad[: len(S)], grad[len(S) :]


def lmmd(src_feats, src_weights, tgt_feats, tgt_weights, config: LmmdConfig, bandwidth=None) -> float:
    return lmmd_and_grad(src_feats, src_weights, tgt_feats, tgt_weights, config, bandwidth)[0]


# ---------------------------------------------------------------------------
# training


def _layer_feats(hidden, logits, layer):
    if layer == "hidden":
        return [hidden]
    if layer == "logits":
        return [logits]
    return [hidden, logits]


def objective(model: MLP, Xs, ys, Xt, config: LmmdConfig, lam=None, frozen=None):
    """Cross-entropy on source plus lam * LMMD, with gradients for every parameter.

    ``frozen`` may carry ``{"weights": WeightMatrix, "bandwidths": [...]}`` to
    hold the detached quantities fixed (used by gradient checks). Returns
    ``(total, ce, lmmd_value, grads, frozen)``.
    """
    lam = config.lam if lam is None else lam
    n_classes = model.n_out
    hs, ls = model.forward(Xs)
    ce, d_ls = cross_entropy(ls, ys)
    grads = model.backward(Xs, hs, d_ls)
    if Xt is None:
        return ce, ce, 0.0, grads, frozen

    ht, lt = model.forward(Xt)
    if frozen is None:
        frozen = {"weights": target_weights(softmax(lt)), "bandwidths": None}
    ws = source_weights(one_hot(ys, n_classes))
    wt = frozen["weights"]
    layers_s = _layer_feats(hs, ls, config.activation_layer)
    layers_t = _layer_feats(ht, lt, config.activation_layer)
    if frozen["bandwidths"] is None:
        frozen["bandwidths"] = [
            None if config.kernel == "linear" else _bandwidth(np.vstack([a, b]), config)
            for a, b in zip(layers_s, layers_t)
        ]
    total_lmmd = 0.0
    g_s = [np.zeros_like(a) for a in layers_s]
    g_t = [np.zeros_like(a) for a in layers_t]
    for i, (a, b) in enumerate(zip(layers_s, layers_t)):
        val, ga, gb = lmmd_and_grad(a, ws, b, wt, config, frozen["bandwidths"][i])
        total_lmmd += val
        g_s[i], g_t[i] = ga, gb
    if lam > 0:
        def split(gs):
            if config.activation_layer == "hidden":
                return gs[0], None
            if config.activation_layer == "logits":
                return None, gs[0]
            return gs[0], gs[1]

        dh_s, dl_s = split(g_s)
        dh_t, dl_t = split(g_t)
        grads = model.backward(
            Xs, hs, d_ls + (lam * dl_s if dl_s is not None else 0.0), None if dh_s is None else lam * dh_s
        )
        g_target = model.backward(
            Xt, ht, lam * dl_t if dl_t is not None else np.zeros_like(lt), None if dh_t is None else lam * dh_t
        )
        for k in grads:
            grads[k] = grads[k] + g_target[k]
    return ce + lam * total_lmmd, ce, total_lmmd, grads, frozen


def _lambda_at(train: TrainConfig, lam, progress):
    if train.lambda_schedule == "ramp":
        return lam * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0)
    return lam


def _balanced_batch(rng, by_class, batch_size):
    present = [idx for idx in by_class if len(idx)]
    per = max(1, batch_size // len(present))
    picks = [rng.choice(idx, size=per, replace=len(idx) < per) for idx in present]
    return np.concatenate(picks)


def train_classifier(source, target, train: TrainConfig, config: LmmdConfig, seed: int = 0, monitor=None, n_classes=4):
    """Train the coarse classifier; returns ``(model, log)``.

    ``source`` is a labeled Dataset; ``target`` is any Dataset (only its
    features are read, through a hidden-label view) or None. ``monitor`` is
    an optional ``model -> float`` evaluated once per epoch for the log's
    target accuracy column.
    """
    Xs = source.features
    ys = source.coarse_indices()
    Xt = None if target is None else target.hidden().features
    if Xt is not None and Xt.shape[1] != Xs.shape[1]:
        raise DataError(f"source and target feature dimensions differ ({Xs.shape[1]} vs {Xt.shape[1]})")

    model = MLP.init(Xs.shape[1], train.hidden, n_classes, np.random.default_rng([seed, 0]))
    model.metadata = {
        "kind": "coarse",
        "seed": int(seed),
        "config_hash": config_hash({"train": train.to_dict(), "lmmd": config.to_dict()}),
    }
    rng_source = np.random.default_rng([seed, 1])
    rng_target = np.random.default_rng([seed, 2])
    opt = Adam(model.params(), lr=train.lr, weight_decay=train.weight_decay)
    by_class = [np.nonzero(ys == c)[0] for c in range(n_classes)]
    steps = max(1, len(Xs) // train.batch_size)
    total_steps = steps * max(1, train.epochs)
    log = []
    for epoch in range(train.epochs):
        ce_sum = adapt_sum = 0.0
        for step in range(steps):
            idx_s = _balanced_batch(rng_source, by_class, train.batch_size)
            idx_t = None
            if Xt is not None:
                idx_t = rng_target.choice(len(Xt), size=min(train.target_batch_size, len(Xt)), replace=False)
            lam = _lambda_at(train, config.lam, (epoch * steps + step) / total_steps)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LmmdWarning)
                total, ce, adapt_val, grads, _ = objective(
                    model, Xs[idx_s], ys[idx_s], None if idx_t is None else Xt[idx_t], config, lam
                )
            if not np.isfinite(total):
                raise NumericalError(
                    f"loss diverged at epoch {epoch} step {step}: ce={ce}, lmmd={adapt_val}, "
                    f"source batch {idx_s[:8].tolist()}..., target batch "
                    f"{None if idx_t is None else idx_t[:8].tolist()}"
                )
            opt.step(model.params(), grads)
            ce_sum += ce
            adapt_sum += adapt_val
        source_acc = float((model.predict_proba(Xs).argmax(1) == ys).mean())
        log.append(
            {
                "epoch": epoch + 1,
                "L_classify": ce_sum / steps,
                "L_adapt": adapt_sum / steps if Xt is not None else float("nan"),
                "source_acc": source_acc,
                "target_acc": float(monitor(model)) if monitor else float("nan"),
            }
        )
    if not model.is_finite():
        raise NumericalError("trained model has non-finite parameters")
    return model, log


def predict_coarse(model: MLP, features):
    """Softmax probabilities and raw logits; a single vector gives 1-D outputs."""
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    _, logits = model.forward(X)
    probs = softmax(logits)
    return (probs[0], logits[0]) if single else (probs, logits)


def write_log_csv(log, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "L_classify", "L_adapt", "source_acc", "target_acc"])
        writer.writeheader()
        for row in log:
            writer.writerow({k: ("" if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()})
