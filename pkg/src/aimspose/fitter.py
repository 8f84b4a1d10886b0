"""Pose branch: recover (theta, beta) from 2D keypoints by minimizing

    L(theta, beta) = sum_j ||proj(FK(theta, beta))_j - x_j||^2
                     + w_pose * ||theta||^2 + w_shape * ||beta||^2

The root translation is optimized jointly (it carries no prior). Steps come
from damped Gauss-Newton or plain gradient descent, both with Armijo
backtracking, so accepted steps never increase the loss.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import CameraParams, DepthError, KeypointSet2D, projection_jacobian, to_camera_frame
from .errors import ConfigError, DataError
from .skeleton import (
    SkeletonTemplate,
    canonical_axis_angle,
    default_template,
    forward_kinematics,
    forward_kinematics_jacobian,
    normalize,
)

BARRIER = 1e6
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class FitConfig:
    pose_prior_weight: float = 1e-3
    shape_prior_weight: float = 1e-2
    max_iters: int = 100
    convergence_tol: float = 1e-8
    multi_start_count: int = 5
    method: str = "gradient_descent"
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 1e-6
    damping: float = 1e-3
    start_jitter: float = 0.1
    rigid_candidates: int = 24
    rigid_iters: int = 15

    def __post_init__(self):
        if self.pose_prior_weight < 0 or self.shape_prior_weight < 0:
            raise ConfigError("prior weights must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.convergence_tol <= 0:
            raise ConfigError("convergence_tol must be positive")
        if self.multi_start_count < 1:
            raise ConfigError("multi_start_count must be >= 1")
        if self.method not in ("gauss_newton", "gradient_descent"):
            raise ConfigError(f"unknown fit method {self.method!r}")
        if not 0 < self.step_shrink < 1 or not 0 < self.armijo_c < 1:
            raise ConfigError("line-search constants must lie in (0, 1)")
        if self.rigid_candidates < self.multi_start_count:
            raise ConfigError("rigid_candidates must be >= multi_start_count")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "FitConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad fit config: {exc}") from exc


@dataclass(eq=False)
class FitResult:
    theta: np.ndarray
    beta: np.ndarray
    translation: np.ndarray
    joints3d_fitted: np.ndarray
    final_loss: float
    losses: dict
    iterations: int
    converged: bool
    start_index: int = 0
    failed: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "translation": self.translation.tolist(),
            "joints3d_fitted": self.joints3d_fitted.tolist(),
            "final_loss": self.final_loss,
            "losses": self.losses,
            "iterations": self.iterations,
            "converged": self.converged,
            "start_index": self.start_index,
            "failed": self.failed,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc) -> "FitResult":
        try:
            return cls(
                theta=np.array(doc["theta"], dtype=float),
                beta=np.array(doc["beta"], dtype=float),
                translation=np.array(doc["translation"], dtype=float),
                joints3d_fitted=np.array(doc["joints3d_fitted"], dtype=float),
                final_loss=float(doc["final_loss"]),
                losses=dict(doc["losses"]),
                iterations=int(doc["iterations"]),
                converged=bool(doc["converged"]),
                start_index=int(doc.get("start_index", 0)),
                failed=bool(doc.get("failed", False)),
                diagnostics=dict(doc.get("diagnostics", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed fit record: {exc}") from exc


# ---------------------------------------------------------------------------
# losses


def _observed_array(observed):
    if isinstance(observed, KeypointSet2D):
        if not observed.visibility.all():
            raise DataError("fitting needs every keypoint visible")
        return observed.x_2d
    return np.asarray(observed, dtype=float)


def reprojection_loss(theta, beta, observed, cam: CameraParams, template=None, translation=None):
    """Sum of squared pixel residuals; ``BARRIER`` if any joint is behind the camera."""
    template = template or default_template()
    obs = _observed_array(observed)
    joints = forward_kinematics(template, theta, beta, _root(translation))
    X = to_camera_frame(joints, cam)
    if not np.all(X[:, 2] > MIN_DEPTH):
        return BARRIER
    p = X @ cam.K.T
    uv = p[:, :2] / p[:, 2:3]
    return float(((uv - obs) ** 2).sum())


def total_loss(theta, beta, observed, cam, template=None, config: FitConfig | None = None, translation=None):
    config = config or FitConfig()
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return (
        reprojection_loss(theta, beta, observed, cam, template, translation)
        + config.pose_prior_weight * pose_prior(theta)
        + config.shape_prior_weight * float((beta**2).sum())
    )


def pose_prior(theta) -> float:
    """Squared norm of the body pose; the root entry is the global orientation and is free."""
    theta = np.asarray(theta, dtype=float).reshape(-1, 3)
    return float((theta[1:] ** 2).sum())


def _root(translation):
    return None if translation is None else (np.eye(3), np.asarray(translation, dtype=float))


class Objective:
    """Loss over the packed vector ``[theta (72), beta (N_s), translation (3)]``."""

    def __init__(self, observed, cam, template, config):
        self.obs = _observed_array(observed)
        self.cam = cam
        self.template = template
        self.config = config
        nj, ns = template.n_joints, template.n_shape
        self.n_theta, self.n_shape = 3 * nj, ns
        self.size = 3 * nj + ns + 3
        prior = np.zeros(self.size)
        prior[3 : self.n_theta] = config.pose_prior_weight
        prior[self.n_theta : self.n_theta + ns] = config.shape_prior_weight
        self.prior = prior

    def unpack(self, x):
        nt, ns = self.n_theta, self.n_shape
        return x[:nt].reshape(-1, 3), x[nt : nt + ns], x[nt + ns :]

    def pack(self, theta, beta, translation):
        return np.concatenate([np.ravel(theta), np.ravel(beta), np.ravel(translation)]).astype(float)

    def terms(self, x):
        theta, beta, t = self.unpack(x)
        reproj = reprojection_loss(theta, beta, self.obs, self.cam, self.template, t)
        return reproj, pose_prior(theta), float((beta**2).sum())

    def value(self, x) -> float:
        reproj, lt, lb = self.terms(x)
        return reproj + self.config.pose_prior_weight * lt + self.config.shape_prior_weight * lb

    def linearize(self, x):
        """``(value, gradient, residuals, residual Jacobian)``; None when in the barrier."""
        theta, beta, t = self.unpack(x)
        joints, J_fk = forward_kinematics_jacobian(self.template, theta, beta, _root(t))
        try:
            uv, J_proj = projection_jacobian(joints, self.cam, MIN_DEPTH)
        except DepthError:
            return None
        r = (uv - self.obs).ravel()
        J = np.einsum("nab,nbk->nak", J_proj, J_fk).reshape(-1, self.size)
        value = float(r @ r) + float(self.prior @ (x * x))
        grad = 2.0 * (J.T @ r) + 2.0 * self.prior * x
        return value, grad, r, J

    def gradient(self, x):
        lin = self.linearize(x)
        return None if lin is None else lin[1]


# ---------------------------------------------------------------------------
# optimization


def _minimize(obj: Objective, x0, config: FitConfig, active=None, max_iters=None):
    """Descent from x0 on the masked coordinates. Returns ``(x, value, iters, converged, history)``."""
    max_iters = config.max_iters if max_iters is None else max_iters
    active = np.ones(obj.size, dtype=bool) if active is None else active
    x = x0.copy()
    lin = obj.linearize(x)
    if lin is None:
        return x, BARRIER, 0, False, [BARRIER]
    value = lin[0]
    history = [value]
    step = config.initial_step
    mu = config.damping
    for it in range(1, max_iters + 1):
        _, grad, r, J = lin
        g = np.where(active, grad, 0.0)
        if config.method == "gauss_newton":
            Ja = J[:, active]
            H = Ja.T @ Ja + np.diag(obj.prior[active])
            scale = np.maximum(np.diag(H), 1e-12)
            direction = np.zeros(obj.size)
        accepted = False
        for _ in range(4 if config.method == "gauss_newton" else 1):
            if config.method == "gauss_newton":
                A = H + mu * np.diag(scale)
                try:
                    direction[active] = -np.linalg.solve(A, 0.5 * g[active])
                except np.linalg.LinAlgError:
                    mu *= 10.0
                    continue
                alpha = 1.0
            else:
                direction = -g
                alpha = step
            slope = float(g @ direction)
            if slope >= 0:
                mu *= 10.0
                continue
            for _ in range(config.max_backtracks):
                candidate = x + alpha * direction
                cand_value = obj.value(candidate)
                if cand_value <= value + config.armijo_c * alpha * slope:
                    accepted = True
                    break
                alpha *= config.step_shrink
            if accepted:
                break
            mu *= 10.0
        if not accepted:
            return x, value, it, True, history
        if config.method == "gauss_newton":
            mu = max(mu / 3.0, 1e-9) if alpha == 1.0 else mu
        else:
            step = alpha * 2.0
        x = candidate
        new_lin = obj.linearize(x)
        if new_lin is None:
            return x, cand_value, it, False, history + [cand_value]
        prev = value
        lin, value = new_lin, new_lin[0]
        history.append(value)
        if abs(prev - value) <= config.convergence_tol * max(prev, 1e-12):
            return x, value, it, True, history
    return x, value, max_iters, False, history


def initial_translation(observed, cam: CameraParams, template: SkeletonTemplate) -> np.ndarray:
    """Root placed on the pelvis pixel's ray, at a depth matching the 2D spread."""
    obs = _observed_array(observed)
    rest = forward_kinematics(template, np.zeros((template.n_joints, 3)), np.zeros(template.n_shape))
    spread3d = np.sqrt(((rest - rest.mean(0)) ** 2).sum(1).mean())
    spread2d = np.sqrt(((obs - obs.mean(0)) ** 2).sum(1).mean())
    focal = 0.5 * (cam.K[0, 0] + cam.K[1, 1])
    depth = focal * spread3d / max(spread2d, 1e-6)
    ray = np.linalg.solve(cam.K, np.append(obs[template.pelvis], 1.0))
    return cam.R.T @ (depth * ray - cam.T)


def _random_rotations(rng, n):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1
    w, v = q[:, :1], q[:, 1:]
    angle = 2.0 * np.arctan2(np.linalg.norm(v, axis=1, keepdims=True), w)
    axis = v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
    return axis * angle


def _result(obj, x, iters, converged, start_index, failed=False, diagnostics=None):
    theta, beta, t = obj.unpack(x)
    theta = canonical_axis_angle(theta)
    x = obj.pack(theta, beta, t)
    reproj, lt, lb = obj.terms(x)
    cfg = obj.config
    final = reproj + cfg.pose_prior_weight * lt + cfg.shape_prior_weight * lb
    joints = forward_kinematics(obj.template, theta, beta, _root(t))
    try:
        fitted = normalize(joints, obj.template)
    except DataError:
        fitted = joints - joints[obj.template.pelvis]
        failed = True
    return FitResult(
        theta=theta,
        beta=np.array(beta),
        translation=np.array(t),
        joints3d_fitted=fitted,
        final_loss=final,
        losses={"L_J2D": reproj, "L_theta": lt, "L_beta": lb},
        iterations=iters,
        converged=converged,
        start_index=start_index,
        failed=failed or reproj >= BARRIER,
        diagnostics=diagnostics or {},
    )


def fit(observed, cam: CameraParams, template=None, config: FitConfig | None = None, init=None, seed=0) -> FitResult:
    """Fit pose and shape to 2D keypoints.

    ``init`` is ``(theta, beta)`` or ``(theta, beta, translation)``. Without
    it, a rigid alignment of the rest pose is tried from ``rigid_candidates``
    random root orientations and the ``multi_start_count`` best seed full
    fits; the lowest final loss wins (ties go to the lower start index).
    """
    template = template or default_template()
    config = config or FitConfig()
    obj = Objective(observed, cam, template, config)

    if init is not None:
        theta0, beta0 = init[0], init[1]
        t0 = init[2] if len(init) > 2 else initial_translation(obj.obs, cam, template)
        x0 = obj.pack(theta0, beta0, t0)
        x, value, iters, conv, _ = _minimize(obj, x0, config)
        res = _result(obj, x, iters, conv, 0)
        if res.failed:
            res.diagnostics = {"reason": "initialization lies in the depth barrier"}
        return res

    rng = np.random.default_rng(seed)
    t0 = initial_translation(obj.obs, cam, template)
    rigid = np.zeros(obj.size, dtype=bool)
    rigid[:3] = True
    rigid[-3:] = True
    starts = []
    for root in _random_rotations(rng, config.rigid_candidates):
        theta = np.zeros((template.n_joints, 3))
        theta[0] = root
        x0 = obj.pack(theta, np.zeros(template.n_shape), t0)
        x, value, _, _, _ = _minimize(obj, x0, config, active=rigid, max_iters=config.rigid_iters)
        starts.append((value, len(starts), x))
    starts.sort(key=lambda s: (s[0], s[1]))

    best = None
    start_losses = []
    for k, (_, _, x_rigid) in enumerate(starts[: config.multi_start_count]):
        x0 = x_rigid.copy()
        x0[3 : obj.n_theta] += rng.normal(0.0, config.start_jitter, obj.n_theta - 3)
        x, value, iters, conv, _ = _minimize(obj, x0, config)
        start_losses.append(value)
        if best is None or value < best[0]:
            best = (value, k, x, iters, conv)
    value, k, x, iters, conv = best
    res = _result(obj, x, iters, conv, k, diagnostics={"start_losses": start_losses})
    if res.failed:
        res.diagnostics["reason"] = "every start ended in the depth barrier"
    return res


def write_fits(results, path) -> None:
    with open(path, "w") as fh:
        for sample_id, res in results:
            fh.write(json.dumps({"id": sample_id, **res.to_dict()}, separators=(",", ":")) + "\n")


def read_fits(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                out[doc["id"]] = FitResult.from_dict(doc)
    return out
