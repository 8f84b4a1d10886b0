"""Fine-level (12-way) classifier over normalized 3D joints and coarse logits.

The input is the flattened 24x3 joint set followed by the softmax of the
coarse logits. The ablation that drops the coarse branch keeps the same
76-wide input and zeroes the last four entries, so both variants share one
architecture and one file format.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .nn import MLP, Adam, config_hash, cross_entropy, softmax
from .skeleton import default_template
from .taxonomy import Taxonomy, default_taxonomy

N_COARSE = 4
N_FINE = 12


@dataclass(frozen=True)
class HipcConfig:
    hidden: int = 64
    epochs: int = 40
    batch_size: int = 128
    lr: float = 3e-3
    weight_decay: float = 1e-4
    use_logits: bool = True
    gated: bool = False
    # Gaussian jitter on the joint block during training; 0.4 is roughly the
    # per-coordinate RMS error of fitted joints that the model sees at test time
    joint_noise: float = 0.4
    train_joints: str = "ground_truth"

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("hidden, epochs and batch_size must be positive")
        if self.lr <= 0 or self.weight_decay < 0 or self.joint_noise < 0:
            raise ConfigError("lr must be positive; weight_decay and joint_noise non-negative")
        if self.train_joints not in ("ground_truth", "fitted"):
            raise ConfigError(f"unknown train_joints {self.train_joints!r}")
        if self.gated and not self.use_logits:
            raise ConfigError("the gated variant needs the coarse logits")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "HipcConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad hipc config: {exc}") from exc


def check_normalized(joints, template=None, tol=1e-6) -> np.ndarray:
    """Validate a (..., 24, 3) joint array; raises DataError naming the failed check."""
    template = template or default_template()
    joints = np.asarray(joints, dtype=float)
    if joints.shape[-2:] != (template.n_joints, 3):
        raise DataError(f"joints must have shape (..., {template.n_joints}, 3), got {joints.shape}")
    if not np.all(np.isfinite(joints)):
        raise DataError("joints must be finite")
    pelvis = np.linalg.norm(joints[..., template.pelvis, :], axis=-1)
    if np.any(pelvis > tol):
        raise DataError(f"joints not normalized: pelvis is {pelvis.max():.3g} from the origin")
    nose = np.linalg.norm(joints[..., template.nose, :] - joints[..., template.pelvis, :], axis=-1)
    if np.any(np.abs(nose - 1.0) > tol):
        worst = nose.flat[np.argmax(np.abs(nose - 1.0))]
        raise DataError(f"joints not normalized: nose-pelvis distance is {worst:.9g}, expected 1")
    return joints


def _check_logits(coarse_logits) -> np.ndarray:
    logits = np.asarray(coarse_logits, dtype=float)
    if logits.shape[-1] != N_COARSE:
        raise DataError(f"coarse logits must have {N_COARSE} entries, got {logits.shape[-1]}")
    if not np.all(np.isfinite(logits)):
        raise DataError("coarse logits must be finite")
    return logits


def hipc_features(joints3d_normalized, coarse_logits, template=None) -> np.ndarray:
    """76-vector (or (n, 76) for batched inputs): flattened joints then softmax(logits)."""
    joints = check_normalized(joints3d_normalized, template)
    logits = _check_logits(coarse_logits)
    flat = joints.reshape(*joints.shape[:-2], -1)
    if flat.shape[:-1] != logits.shape[:-1]:
        raise DataError("joints and logits must have matching batch shapes")
    return np.concatenate([flat, softmax(logits)], axis=-1)


def _inputs(joints, logits, use_logits, template=None) -> np.ndarray:
    X = np.atleast_2d(hipc_features(joints, logits, template))
    if not use_logits:
        X = X.copy()
        X[:, -N_COARSE:] = 0.0
    return X


def train_hipc(joints, coarse_logits, fine_labels, config: HipcConfig | None = None, seed: int = 0,
               template=None) -> MLP:
    """Cross-entropy training with Adam on class-balanced minibatches.

    ``joints`` is (n, 24, 3) normalized, ``coarse_logits`` (n, 4) and
    ``fine_labels`` (n,) integer indices in taxonomy order.
    """
    config = config or HipcConfig()
    template = template or default_template()
    X = _inputs(joints, coarse_logits, config.use_logits, template)
    y = np.asarray(fine_labels, dtype=int)
    if len(y) != len(X) or len(y) == 0:
        raise DataError("need a non-empty training set with one label per sample")
    if y.min() < 0 or y.max() >= N_FINE:
        raise DataError(f"fine labels must lie in [0, {N_FINE})")

    model = MLP.init(X.shape[1], config.hidden, N_FINE, np.random.default_rng([seed, 0]))
    model.metadata = {
        "kind": "hipc",
        "seed": int(seed),
        "use_logits": config.use_logits,
        "gated": config.gated,
        "config_hash": config_hash(config.to_dict()),
    }
    rng = np.random.default_rng([seed, 1])
    opt = Adam(model.params(), lr=config.lr, weight_decay=config.weight_decay)
    by_class = [np.nonzero(y == c)[0] for c in range(N_FINE) if np.any(y == c)]
    steps = max(1, len(X) // config.batch_size)
    for epoch in range(config.epochs):
        for step in range(steps):
            idx = np.concatenate([rng.choice(ix, size=config.batch_size // len(by_class) + 1) for ix in by_class])
            xb = X[idx]
            if config.joint_noise:
                xb = xb.copy()
                xb[:, :-N_COARSE] += rng.normal(0.0, config.joint_noise, (len(idx), X.shape[1] - N_COARSE))
            hidden, logits = model.forward(xb)
            loss, d_logits = cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"hipc loss diverged at epoch {epoch} step {step} (batch {idx[:8].tolist()}...)")
            opt.step(model.params(), model.backward(xb, hidden, d_logits))
    if not model.is_finite():
        raise NumericalError("trained hipc model has non-finite parameters")
    return model


def _gate(fine_logits, coarse_logits, taxonomy: Taxonomy):
    """Mask fine logits whose coarse parent is not the argmax coarse class."""
    parent = taxonomy.fine_to_coarse
    keep = parent[None, :] == np.argmax(coarse_logits, axis=1)[:, None]
    return np.where(keep, fine_logits, -np.inf)


def predict_fine(model: MLP, joints3d_normalized, coarse_logits, taxonomy: Taxonomy | None = None, template=None):
    """``(fine_probs, fine_label)``; batched inputs give ``(n, 12)`` and ``(n,)``.

    Ties in the argmax go to the lowest index.
    """
    joints = np.asarray(joints3d_normalized, dtype=float)
    single = joints.ndim == 2
    meta = model.metadata
    X = _inputs(joints, coarse_logits, meta.get("use_logits", True), template)
    if X.shape[1] != model.n_in or model.n_out != N_FINE:
        raise DataError(f"model expects {model.n_in} inputs and {model.n_out} outputs, hipc needs 76 -> 12")
    _, logits = model.forward(X)
    if meta.get("gated", False):
        logits = _gate(logits, np.atleast_2d(_check_logits(coarse_logits)), taxonomy or default_taxonomy())
    probs = softmax(logits)
    labels = np.argmax(probs, axis=1)
    return (probs[0], int(labels[0])) if single else (probs, labels)
