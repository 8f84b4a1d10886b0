"""Synthetic source domain and shifted target domain.

Each sample runs pose sampling -> forward kinematics -> camera sampling ->
projection -> feature extraction. Target samples additionally pass through
``apply_domain_shift``, the stand-in for the synthetic-to-real gap.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import CameraConfig, CameraParams, KeypointSet2D, project, sample_camera
from .errors import ConfigError, DataError, LabelAccessError
from .prototypes import prototype_poses
from .skeleton import (
    SkeletonTemplate,
    axis_angle_to_matrix,
    canonical_axis_angle,
    default_template,
    forward_kinematics,
    matrix_to_axis_angle,
    rotation_y,
)
from .taxonomy import Taxonomy, default_taxonomy

FEATURE_DIM = 60

# (a, b, c) triples: interior angle at b between a-b and c-b
ANGLE_TRIPLES = (
    ("left_shoulder", "left_elbow", "left_wrist"),
    ("right_shoulder", "right_elbow", "right_wrist"),
    ("left_hip", "left_knee", "left_ankle"),
    ("right_hip", "right_knee", "right_ankle"),
    ("spine3", "left_shoulder", "left_elbow"),
    ("spine3", "right_shoulder", "right_elbow"),
    ("spine1", "left_hip", "left_knee"),
    ("spine1", "right_hip", "right_knee"),
    ("left_knee", "left_ankle", "left_foot"),
    ("right_knee", "right_ankle", "right_foot"),
    ("neck", "head", "nose"),
    ("pelvis", "spine2", "neck"),
)

# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ShiftConfig:
    """Target-domain perturbations. All-zero (with unit bone scale) is the identity."""

    keypoint_noise_px: float = 8.0
    feature_rotation_angle: float = 0.5
    camera_range_override: CameraConfig | None = None
    bone_length_scale_range: tuple = (0.9, 1.1)
    mixing_seed: int = 0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.bone_length_scale_range)
        object.__setattr__(self, "bone_length_scale_range", (lo, hi))
        if self.keypoint_noise_px < 0:
            raise ConfigError("keypoint_noise_px must be non-negative")
        if not 0.0 <= self.feature_rotation_angle <= np.pi:
            raise ConfigError("feature_rotation_angle must lie in [0, pi]")
        if lo <= 0 or lo > hi:
            raise ConfigError(f"bad bone_length_scale_range {self.bone_length_scale_range}")
        if isinstance(self.camera_range_override, dict):
            object.__setattr__(
                self, "camera_range_override", CameraConfig.from_dict(self.camera_range_override)
            )

    @classmethod
    def identity(cls) -> "ShiftConfig":
        return cls(0.0, 0.0, None, (1.0, 1.0))

    @property
    def is_identity(self) -> bool:
        return (
            self.keypoint_noise_px == 0
            and self.feature_rotation_angle == 0
            and self.camera_range_override is None
            and self.bone_length_scale_range == (1.0, 1.0)
        )

    def to_dict(self) -> dict:
        cam = self.camera_range_override
        return {
            "keypoint_noise_px": self.keypoint_noise_px,
            "feature_rotation_angle": self.feature_rotation_angle,
            "camera_range_override": None if cam is None else cam.to_dict(),
            "bone_length_scale_range": list(self.bone_length_scale_range),
            "mixing_seed": self.mixing_seed,
        }

    @classmethod
    def from_dict(cls, doc) -> "ShiftConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad shift config: {exc}") from exc


@dataclass(frozen=True)
class DatasetConfig:
    """Sizes and sampling ranges.

    ``per_class``, when set, overrides both totals. ``test_count`` is capped at
    the target size.
    """

    source_count: int = 4000
    target_count: int = 750
    test_count: int = 198
    per_class: int | None = None
    keypoint_noise_px: float = 2.0
    pose_jitter: float = 0.12
    camera: CameraConfig = field(default_factory=CameraConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    max_retries: int = 20

    def __post_init__(self):
        if isinstance(self.camera, dict):
            object.__setattr__(self, "camera", CameraConfig.from_dict(self.camera))
        if isinstance(self.shift, dict):
            object.__setattr__(self, "shift", ShiftConfig.from_dict(self.shift))
        if self.per_class is not None and self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.per_class is None and (self.source_count < 12 or self.target_count < 12):
            raise ConfigError("each domain needs at least one sample per fine class")
        if self.test_count < 0:
            raise ConfigError("test_count must be non-negative")
        if self.keypoint_noise_px < 0 or self.pose_jitter < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")

    def class_counts(self, domain: str, n_classes: int = 12) -> list:
        if self.per_class is not None:
            return [self.per_class] * n_classes
        total = self.source_count if domain == "source" else self.target_count
        base, extra = divmod(total, n_classes)
        return [base + (1 if i < extra else 0) for i in range(n_classes)]

    def to_dict(self) -> dict:
        return {
            "source_count": self.source_count,
            "target_count": self.target_count,
            "test_count": self.test_count,
            "per_class": self.per_class,
            "keypoint_noise_px": self.keypoint_noise_px,
            "pose_jitter": self.pose_jitter,
            "camera": self.camera.to_dict(),
            "shift": self.shift.to_dict(),
            "max_retries": self.max_retries,
        }

    @classmethod
    def from_dict(cls, doc) -> "DatasetConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad dataset config: {exc}") from exc


@dataclass(frozen=True, eq=False)
class PosePrototype:
    mean_theta: np.ndarray
    jitter: float
    root_yaw_range: tuple = (-np.pi, np.pi)


class PosePrototypeBank(dict):
    """fine label -> PosePrototype."""

    @classmethod
    def default(cls, taxonomy: Taxonomy | None = None, jitter: float = 0.12) -> "PosePrototypeBank":
        taxonomy = taxonomy or default_taxonomy()
        poses = prototype_poses()
        missing = set(taxonomy.fine_labels) - set(poses)
        if missing:
            raise DataError(f"no prototype pose for {sorted(missing)}")
        return cls({f: PosePrototype(poses[f], jitter) for f in taxonomy.fine_labels})


# ---------------------------------------------------------------------------
# samples and datasets


@dataclass(eq=False)
class LabeledSample:
    id: str
    domain: str
    fine: str
    coarse: str
    theta: np.ndarray
    beta: np.ndarray
    joints3d: np.ndarray
    keypoints2d: KeypointSet2D
    camera: CameraParams
    features: np.ndarray
    split: str = "train"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain,
            "split": self.split,
            "fine": self.fine,
            "coarse": self.coarse,
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "joints3d": self.joints3d.tolist(),
            "keypoints2d": self.keypoints2d.x_2d.tolist(),
            "visibility": self.keypoints2d.visibility.tolist(),
            "camera": self.camera.to_dict(),
            "features": self.features.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "LabeledSample":
        try:
            return cls(
                id=doc["id"],
                domain=doc["domain"],
                split=doc.get("split", "train"),
                fine=doc["fine"],
                coarse=doc["coarse"],
                theta=np.array(doc["theta"], dtype=float),
                beta=np.array(doc["beta"], dtype=float),
                joints3d=np.array(doc["joints3d"], dtype=float),
                keypoints2d=KeypointSet2D(doc["keypoints2d"], doc["visibility"]),
                camera=CameraParams.from_dict(doc["camera"]),
                features=np.array(doc["features"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed sample record: {exc}") from exc


class Dataset:
    """An ordered list of samples plus a label-access capability flag.

    Training code reads labels through ``fine_indices`` / ``coarse_indices``;
    those raise LabelAccessError on a hidden-label view. ``evaluation_view``
    returns a view with labels readable, for scoring only.
    """

    def __init__(self, samples, labels_visible=True, taxonomy=None):
        self.samples = list(samples)
        self.labels_visible = bool(labels_visible)
        self.taxonomy = taxonomy or default_taxonomy()
        for s in self.samples:
            if s.coarse != self.taxonomy.coarse_of(s.fine):
                raise DataError(f"sample {s.id}: coarse {s.coarse!r} != parent of {s.fine!r}")
        dims = {s.features.shape for s in self.samples}
        if len(dims) > 1:
            raise DataError(f"inconsistent feature dimensions {sorted(dims)}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def subset(self, predicate) -> "Dataset":
        return Dataset([s for s in self.samples if predicate(s)], self.labels_visible, self.taxonomy)

    def split(self, name: str) -> "Dataset":
        return self.subset(lambda s: s.split == name)

    def hidden(self) -> "Dataset":
        return Dataset(self.samples, False, self.taxonomy)

    def evaluation_view(self) -> "Dataset":
        return Dataset(self.samples, True, self.taxonomy)

    @property
    def features(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples]) if self.samples else np.zeros((0, FEATURE_DIM))

    def _require_labels(self):
        if not self.labels_visible:
            raise LabelAccessError("labels of this split are hidden from training code")

    def fine_indices(self) -> np.ndarray:
        self._require_labels()
        return np.array([self.taxonomy.fine_index(s.fine) for s in self.samples], dtype=np.int64)

    def coarse_indices(self) -> np.ndarray:
        self._require_labels()
        return np.array([self.taxonomy.coarse_index(s.coarse) for s in self.samples], dtype=np.int64)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s.to_dict(), separators=(",", ":")) + "\n" for s in self.samples)

    def save(self, path) -> str:
        text = self.to_jsonl()
        Path(path).write_text(text)
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def load(cls, path, labels_visible=None, taxonomy=None) -> "Dataset":
        """Load a JSON-lines file. By default labels are hidden unless every sample is source."""
        samples = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                samples.append(LabeledSample.from_dict(doc))
        if labels_visible is None:
            labels_visible = all(s.domain == "source" for s in samples)
        return cls(samples, labels_visible, taxonomy)


# ---------------------------------------------------------------------------
# operations


def sample_pose(rng: np.random.Generator, fine: str, bank: PosePrototypeBank, n_shape=10, shape_scale=1.0):
    """Prototype pose plus Gaussian jitter and a random root yaw; truncated-normal shape."""
    if fine not in bank:
        raise DataError(f"unknown fine label: {fine!r}")
    proto = bank[fine]
    theta = proto.mean_theta + rng.normal(0.0, 1.0, proto.mean_theta.shape) * proto.jitter
    yaw = rng.uniform(*proto.root_yaw_range)
    if yaw != 0.0:
        theta[0] = matrix_to_axis_angle(rotation_y(yaw) @ axis_angle_to_matrix(theta[0]))
    theta = canonical_axis_angle(theta)
    beta = rng.normal(size=n_shape)
    bad = np.abs(beta) > 2.0
    while bad.any():
        beta[bad] = rng.normal(size=int(bad.sum()))
        bad = np.abs(beta) > 2.0
    return theta, beta * shape_scale


def _angle(a, b, c):
    u, v = a - b, c - b
    cross = u[0] * v[1] - u[1] * v[0]
    return float(np.arctan2(abs(cross), float(u @ v)))


def extract_features(keypoints2d: KeypointSet2D, template: SkeletonTemplate | None = None) -> np.ndarray:
    """Pelvis-centered, nose-pelvis-scaled 2D keypoints (48) then 12 joint angles."""
    template = template or default_template()
    if not keypoints2d.visibility.all():
        raise DataError("feature extraction needs every keypoint visible")
    x = keypoints2d.x_2d
    centered = x - x[template.pelvis]
    scale = np.linalg.norm(centered[template.nose])
    if scale <= 1e-6:
        raise DataError(f"degenerate 2D nose-pelvis distance {scale:.3g} px")
    angles = [_angle(*(x[template.index(n)] for n in triple)) for triple in ANGLE_TRIPLES]
    return np.concatenate([(centered / scale).ravel(), angles])


def rotation_mixing(dim: int, angle: float, seed: int = 0, basis: np.ndarray | None = None) -> np.ndarray:
    """Orthogonal matrix rotating every plane of a fixed random basis by ``angle``.

    Columns ``2i, 2i+1`` of the basis span the i-th rotation plane; with an odd
    dimension the last basis vector is left fixed.
    """
    if basis is None:
        q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(dim, dim)))
        basis = q * np.sign(np.diag(r))
    c, s = np.cos(angle), np.sin(angle)
    block = np.eye(dim)
    for i in range(0, dim - 1, 2):
        block[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    return basis @ block @ basis.T


def observe(rng, theta, beta, template, camera, noise_px, bone_scale=None):
    """FK and projection with optional per-bone scaling; adds Gaussian pixel noise."""
    if bone_scale is not None:
        template = SkeletonTemplate(
            template.joint_names,
            template.parent_index,
            template.rest_offsets * bone_scale[:, None],
            template.shape_basis * bone_scale[None, :, None],
        )
    joints = forward_kinematics(template, theta, beta)
    kp = project(joints, camera)
    if noise_px > 0:
        kp = KeypointSet2D.all_visible(kp.x_2d + rng.normal(0.0, noise_px, kp.x_2d.shape))
    return joints, kp


def apply_domain_shift(sample: LabeledSample, shift: ShiftConfig, rng, template=None) -> LabeledSample:
    """Rescale bones, optionally re-place the camera, add pixel noise, then mix features."""
    if shift.is_identity:
        return sample
    template = template or default_template()
    lo, hi = shift.bone_length_scale_range
    scale = rng.uniform(lo, hi, template.n_joints)
    camera = sample.camera
    if shift.camera_range_override is not None:
        camera = sample_camera(rng, shift.camera_range_override)
    if lo == hi == 1.0 and shift.camera_range_override is None:
        joints, kp = sample.joints3d, sample.keypoints2d
        if shift.keypoint_noise_px > 0:
            x = kp.x_2d + rng.normal(0.0, shift.keypoint_noise_px, kp.x_2d.shape)
            kp = KeypointSet2D.all_visible(x)
    else:
        # re-render from the noiseless pose, then carry the sample's base noise forward
        base_noise = sample.keypoints2d.x_2d - project(sample.joints3d, sample.camera).x_2d
        joints, kp = observe(rng, sample.theta, sample.beta, template, camera, 0.0, scale)
        x = kp.x_2d + base_noise
        if shift.keypoint_noise_px > 0:
            x = x + rng.normal(0.0, shift.keypoint_noise_px, x.shape)
        kp = KeypointSet2D.all_visible(x)
    features = extract_features(kp, template)
    if shift.feature_rotation_angle > 0:
        Q = rotation_mixing(features.size, shift.feature_rotation_angle, shift.mixing_seed)
        features = Q @ features
    return replace(sample, joints3d=joints, keypoints2d=kp, camera=camera, features=features)


def sample_rng(seed: int, domain: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 0 if domain == "source" else 1, int(index)])


def make_sample(seed, domain, index, fine, config, taxonomy, template, bank) -> LabeledSample:
    rng = sample_rng(seed, domain, index)
    last_error = None
    for _ in range(config.max_retries + 1):
        theta, beta = sample_pose(rng, fine, bank, template.n_shape)
        camera = sample_camera(rng, config.camera)
        try:
            joints, kp = observe(rng, theta, beta, template, camera, config.keypoint_noise_px)
            sample = LabeledSample(
                id=f"{domain}-{index:05d}",
                domain=domain,
                fine=fine,
                coarse=taxonomy.coarse_of(fine),
                theta=theta,
                beta=beta,
                joints3d=joints,
                keypoints2d=kp,
                camera=camera,
                features=extract_features(kp, template),
            )
            if domain == "target":
                sample = apply_domain_shift(sample, config.shift, rng, template)
            return sample
        except DataError as exc:
            last_error = exc
    raise DataError(f"sample {domain}-{index}: gave up after {config.max_retries} retries ({last_error})")


def generate_domain(domain, config, seed, taxonomy=None, template=None, bank=None) -> Dataset:
    taxonomy = taxonomy or default_taxonomy()
    template = template or default_template()
    bank = bank or PosePrototypeBank.default(taxonomy, config.pose_jitter)
    labels = [f for f, n in zip(taxonomy.fine_labels, config.class_counts(domain)) for _ in range(n)]
    samples = [
        make_sample(seed, domain, i, fine, config, taxonomy, template, bank)
        for i, fine in enumerate(labels)
    ]
    if domain == "target":
        order = np.random.default_rng([int(seed), 2]).permutation(len(samples))
        test = set(order[: config.test_count].tolist())
        for i, s in enumerate(samples):
            s.split = "test" if i in test else "train"
    return Dataset(samples, labels_visible=domain == "source", taxonomy=taxonomy)


def generate_dataset(config: DatasetConfig, seed: int, taxonomy=None, template=None, bank=None):
    """Return ``(source, target)``; the target comes back with labels hidden."""
    source = generate_domain("source", config, seed, taxonomy, template, bank)
    target = generate_domain("target", config, seed, taxonomy, template, bank)
    return source, target


def write_dataset(out_dir, source: Dataset, target: Dataset, config: DatasetConfig, seed: int) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {"source.jsonl": source.save(out / "source.jsonl"), "target.jsonl": target.save(out / "target.jsonl")}
    manifest = {
        "config": config.to_dict(),
        "seed": int(seed),
        "counts": {
            "source": len(source),
            "target": len(target),
            "target_test": sum(s.split == "test" for s in target),
        },
        "sha256": hashes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
