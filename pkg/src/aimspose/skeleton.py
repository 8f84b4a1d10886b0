"""Articulated 24-joint kinematic model and nose-pelvis normalization.

Joint rotations compose parent to child in the SMPL convention: the global
rotation of joint ``i`` is ``G[parent(i)] @ R(theta[i])`` and joint ``i`` sits
at ``p[parent(i)] + G[parent(i)] @ bone[i]``. Joint 0 (pelvis) is the root and
its rotation ``theta[0]`` is the global body orientation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError

N_JOINTS = 24
N_SHAPE = 10

# ---------------------------------------------------------------------------
# rotations


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix; works on (..., 3) arrays."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rotation_coefficients(angle):
    # sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3 with series near zero
    small = angle < 1e-4
    safe = np.where(small, 1.0, angle)
    t2 = angle * angle
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / safe**3)
    return a, b, c


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues formula for (..., 3) axis-angle vectors -> (..., 3, 3)."""
    aa = np.asarray(aa, dtype=float)
    angle = np.linalg.norm(aa, axis=-1)
    a, b, _ = _rotation_coefficients(angle)
    K = skew(aa)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def left_jacobian(aa: np.ndarray) -> np.ndarray:
    """SO(3) left Jacobian: dR/d(aa_k) @ R.T == skew(J[:, k])."""
    aa = np.asarray(aa, dtype=float)
    angle = np.linalg.norm(aa, axis=-1)
    _, b, c = _rotation_coefficients(angle)
    K = skew(aa)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + b[..., None, None] * K + c[..., None, None] * (K @ K)


def matrix_to_axis_angle(R: np.ndarray) -> np.ndarray:
    """Inverse of axis_angle_to_matrix for a single rotation, angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    angle = np.arctan2(0.5 * np.linalg.norm(w), 0.5 * (np.trace(R) - 1.0))
    if angle < 1e-6:
        # sin(a) ~ a: w / (2 sin a) * a -> w / 2
        return 0.5 * w * (1.0 + angle**2 / 6.0)
    if np.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        M = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(M), 0.0, None))
        k = int(np.argmax(axis))
        axis = M[k] / np.sqrt(M[k, k])
        return axis / np.linalg.norm(axis) * angle
    return w / (2.0 * np.sin(angle)) * angle


def canonical_axis_angle(aa: np.ndarray) -> np.ndarray:
    """Map (..., 3) axis-angle vectors to the equivalent rotation with angle <= pi."""
    aa = np.array(aa, dtype=float)
    flat = aa.reshape(-1, 3)
    angle = np.linalg.norm(flat, axis=1)
    for i in np.nonzero(angle > np.pi)[0]:
        flat[i] = matrix_to_axis_angle(axis_angle_to_matrix(flat[i]))
    return flat.reshape(aa.shape)


def rotation_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rotation_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rotation_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


# ---------------------------------------------------------------------------
# template


@dataclass(frozen=True, eq=False)
class SkeletonTemplate:
    """Joint tree with rest-pose bone offsets and a linear bone-length basis.

    ``rest_offsets[i]`` is joint ``i`` relative to its parent in meters (the
    root's entry is relative to the root translation). ``shape_basis[k, i]``
    is the offset change per unit of ``beta[k]``.
    """

    joint_names: tuple
    parent_index: tuple
    rest_offsets: np.ndarray
    shape_basis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(
            self, "parent_index", tuple(-1 if p is None else int(p) for p in self.parent_index)
        )
        offsets = np.array(self.rest_offsets, dtype=float)
        basis = np.array(self.shape_basis, dtype=float)
        offsets.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "rest_offsets", offsets)
        object.__setattr__(self, "shape_basis", basis)
        self._validate()
        order, subtree = _tree_tables(self.parent_index)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_subtree", subtree)
        rest = forward_kinematics(self, np.zeros((self.n_joints, 3)), np.zeros(self.n_shape))
        if np.linalg.norm(rest[self.nose] - rest[self.pelvis]) <= 1e-6:
            raise DataError("rest nose-pelvis distance must be positive")

    def _validate(self):
        n = len(self.joint_names)
        if n != N_JOINTS:
            raise DataError(f"template must have {N_JOINTS} joints, got {n}")
        if len(set(self.joint_names)) != n:
            raise DataError("duplicate joint names in template")
        for required in ("pelvis", "nose"):
            if required not in self.joint_names:
                raise DataError(f"template has no {required!r} joint")
        if len(self.parent_index) != n:
            raise DataError("parent_index length mismatch")
        roots = [i for i, p in enumerate(self.parent_index) if p < 0]
        if roots != [self.joint_names.index("pelvis")]:
            raise DataError(f"template must have exactly one root (pelvis), got {roots}")
        for i, p in enumerate(self.parent_index):
            if p >= n:
                raise DataError(f"joint {i} has out-of-range parent {p}")
        # cycle check: every chain must reach the root within n steps
        for i in range(n):
            j, steps = i, 0
            while j >= 0:
                j = self.parent_index[j]
                steps += 1
                if steps > n:
                    raise DataError(f"parent_index contains a cycle through joint {i}")
        if self.rest_offsets.shape != (n, 3):
            raise DataError(f"rest_offsets must be ({n}, 3), got {self.rest_offsets.shape}")
        if self.shape_basis.ndim != 3 or self.shape_basis.shape[1:] != (n, 3):
            raise DataError(f"shape_basis must be (N_s, {n}, 3), got {self.shape_basis.shape}")
        if not (np.all(np.isfinite(self.rest_offsets)) and np.all(np.isfinite(self.shape_basis))):
            raise DataError("template geometry must be finite")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[0]

    @property
    def pelvis(self) -> int:
        return self.joint_names.index("pelvis")

    @property
    def nose(self) -> int:
        return self.joint_names.index("nose")

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    @property
    def topological_order(self) -> tuple:
        return self._order

    @property
    def subtree_mask(self) -> np.ndarray:
        """``mask[j, m]`` is True when joint m is j itself or a descendant of j."""
        return self._subtree

    def bones(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return self.rest_offsets + np.tensordot(beta, self.shape_basis, axes=1)

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joint_names),
            "parents": [None if p < 0 else p for p in self.parent_index],
            "offsets": self.rest_offsets.tolist(),
            "shape_basis": self.shape_basis.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "SkeletonTemplate":
        try:
            return cls(doc["joints"], doc["parents"], doc["offsets"], doc["shape_basis"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed template document: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SkeletonTemplate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _tree_tables(parents):
    n = len(parents)
    order, seen = [], set()
    while len(order) < n:
        for i, p in enumerate(parents):
            if i not in seen and (p < 0 or p in seen):
                order.append(i)
                seen.add(i)
    subtree = np.eye(n, dtype=bool)
    for m in range(n):
        j = parents[m]
        while j >= 0:
            subtree[j, m] = True
            j = parents[j]
    subtree.setflags(write=False)
    return tuple(order), subtree


@lru_cache(maxsize=1)
def default_template() -> SkeletonTemplate:
    text = resources.files("aimspose").joinpath("data/template.json").read_text()
    return SkeletonTemplate.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# kinematics


def _check_params(template, theta, beta):
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if theta.size != 3 * template.n_joints or beta.size != template.n_shape:
        raise DataError(
            f"expected {3 * template.n_joints} pose and {template.n_shape} shape values, got {theta.size} and {beta.size}"
        )
    theta = theta.reshape(template.n_joints, 3)
    beta = beta.reshape(template.n_shape)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(beta))):
        raise DataError("pose and shape parameters must be finite")
    return theta, beta


def _root(root_transform):
    if root_transform is None:
        return np.eye(3), np.zeros(3)
    R, t = root_transform
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
        raise DataError("root transform must be finite")
    return R, t


def _chain(template, theta, beta, root_transform):
    R_root, t = _root(root_transform)
    local = axis_angle_to_matrix(theta)
    bones = template.bones(beta)
    n = template.n_joints
    G = np.empty((n, 3, 3))
    G_parent = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    for i in template.topological_order:
        p = template.parent_index[i]
        if p < 0:
            G_parent[i] = R_root
            pos[i] = t + R_root @ bones[i]
        else:
            G_parent[i] = G[p]
            pos[i] = pos[p] + G[p] @ bones[i]
        G[i] = G_parent[i] @ local[i]
    return pos, G_parent


def forward_kinematics(template, theta, beta, root_transform=None) -> np.ndarray:
    """Joint positions (24, 3) in world coordinates.

    ``root_transform`` is an optional ``(R, t)`` rigid transform placing the
    root; it defaults to the identity.
    """
    theta, beta = _check_params(template, theta, beta)
    pos, _ = _chain(template, theta, beta, root_transform)
    return pos


def forward_kinematics_jacobian(template, theta, beta, root_transform=None):
    """Joint positions and their Jacobian.

    Returns ``(pos, J)`` with ``J`` of shape (24, 3, 72 + N_s + 3) holding
    derivatives with respect to the flattened theta, beta and the root
    translation, in that order.
    """
    theta, beta = _check_params(template, theta, beta)
    pos, G_parent = _chain(template, theta, beta, root_transform)
    n = template.n_joints
    mask = template.subtree_mask

    # rotating joint j about world axis w moves each descendant m by w x (p_m - p_j)
    axes = np.swapaxes(G_parent @ left_jacobian(theta), 1, 2)  # (j, k, 3)
    diff = pos[None, :, :] - pos[:, None, :]  # (j, m, 3)
    d_theta = np.cross(axes[:, :, None, :], diff[:, None, :, :])  # (j, k, m, 3)
    d_theta *= mask[:, None, :, None]
    d_theta = d_theta.transpose(2, 3, 0, 1).reshape(n, 3, 3 * n)

    # bone i's offset enters every joint in its subtree through G_parent[i]
    per_bone = np.einsum("iab,kib->ika", G_parent, template.shape_basis)  # (i, k, 3)
    d_beta = np.einsum("im,ika->mak", mask.astype(float), per_bone)

    d_trans = np.broadcast_to(np.eye(3), (n, 3, 3))
    return pos, np.concatenate([d_theta, d_beta, d_trans], axis=2)


def normalize(joints, template=None, min_distance=1e-6) -> np.ndarray:
    """Translate the pelvis to the origin and scale nose-pelvis distance to 1."""
    template = template or default_template()
    joints = np.asarray(joints, dtype=float)
    if joints.shape != (template.n_joints, 3):
        raise DataError(f"expected ({template.n_joints}, 3) joints, got {joints.shape}")
    if not np.all(np.isfinite(joints)):
        raise DataError("joints must be finite")
    pelvis = joints[template.pelvis]
    dist = np.linalg.norm(joints[template.nose] - pelvis)
    if dist <= min_distance:
        raise DataError(f"degenerate nose-pelvis distance {dist:.3g} m")
    return (joints - pelvis) / dist


def is_normalized(joints, template=None, tol=1e-6) -> bool:
    template = template or default_template()
    joints = np.asarray(joints, dtype=float)
    return bool(
        np.linalg.norm(joints[template.pelvis]) <= tol
        and abs(np.linalg.norm(joints[template.nose] - joints[template.pelvis]) - 1.0) <= tol
    )
