"""Hand-authored mean poses for the 12 fine labels.

Angles are local axis-angle rotations in radians. In the rest frame x is the
body's left, y is up and z is forward, so with the skeleton conventions:

* hip / shoulder / elbow flexion (limb swings forward) is ``(-a, 0, 0)``
* knee flexion (shin swings back) and spine flexion are ``(+a, 0, 0)``
* left-side abduction is ``(0, 0, +a)``, right-side ``(0, 0, -a)``

The root entry is the body orientation before the random yaw about world y:
prone bodies face down, supine bodies face up.
"""

import numpy as np

from .skeleton import N_JOINTS, matrix_to_axis_angle, rotation_x, rotation_y

HALF_PI = np.pi / 2
PRONE = (HALF_PI, 0.0, 0.0)
SUPINE = (-HALF_PI, 0.0, 0.0)


def _pose(root=(0.0, 0.0, 0.0), **joints):
    from .skeleton import default_template

    template = default_template()
    theta = np.zeros((N_JOINTS, 3))
    theta[0] = root
    for name, value in joints.items():
        theta[template.index(name)] = value
    return theta


def _both(side_value, name):
    """Left/right pair from the left-side rotation, mirrored across the body's sagittal plane."""
    x, y, z = side_value
    right = (x, -y, -z)
    return {f"left_{name}": side_value, f"right_{name}": right}


def _compose(*mats):
    R = np.eye(3)
    for m in mats:
        R = R @ m
    return tuple(matrix_to_axis_angle(R))


def prototype_poses() -> dict:
    lean = 0.5
    poses = {
        "ProneLying": _pose(
            PRONE,
            **_both((0.0, 0.0, 1.3), "shoulder"),
            **_both((0.0, 0.0, 0.9), "elbow"),
            **_both((0.0, 0.0, 0.25), "hip"),
            **_both((0.25, 0.0, 0.0), "knee"),
            neck=(-0.4, 0.0, 0.0),
        ),
        "ForearmSupport": _pose(
            (HALF_PI - lean, 0.0, 0.0),
            **_both((-(HALF_PI - lean), 0.0, 0.2), "shoulder"),
            **_both((-1.4, 0.0, 0.0), "elbow"),
            **_both((lean, 0.0, 0.2), "hip"),
            **_both((0.2, 0.0, 0.0), "knee"),
            neck=(-0.6, 0.0, 0.0),
            head=(-0.3, 0.0, 0.0),
        ),
        "ReciprocalCrawling": _pose(
            _compose(rotation_x(HALF_PI + 0.1), rotation_y(0.15)),
            left_shoulder=(-HALF_PI - 0.45, 0.0, 0.1),
            right_shoulder=(-HALF_PI + 0.35, 0.0, -0.1),
            left_hip=(-HALF_PI + 0.45, 0.0, 0.15),
            right_hip=(-HALF_PI - 0.45, 0.0, -0.15),
            **_both((HALF_PI, 0.0, 0.0), "knee"),
            neck=(-0.5, 0.0, 0.0),
        ),
        "FourPointKneeling": _pose(
            (HALF_PI + 0.1, 0.0, 0.0),
            **_both((-HALF_PI - 0.1, 0.0, 0.1), "shoulder"),
            **_both((-HALF_PI, 0.0, 0.15), "hip"),
            **_both((HALF_PI, 0.0, 0.0), "knee"),
            neck=(-0.6, 0.0, 0.0),
        ),
        "SupineLying": _pose(
            SUPINE,
            **_both((-0.2, 0.0, 0.9), "shoulder"),
            **_both((-0.7, 0.0, 0.0), "elbow"),
            **_both((-0.4, 0.0, 0.45), "hip"),
            **_both((0.7, 0.0, 0.0), "knee"),
        ),
        "HandsToKneeFeet": _pose(
            SUPINE,
            **_both((-1.3, 0.0, 0.15), "shoulder"),
            **_both((-0.3, 0.0, 0.0), "elbow"),
            **_both((-1.5, 0.0, 0.25), "hip"),
            **_both((0.5, 0.0, 0.0), "knee"),
            neck=(0.3, 0.0, 0.0),
        ),
        "Rolling": _pose(
            _compose(rotation_x(-HALF_PI), rotation_y(1.3)),
            left_shoulder=(-1.2, 0.0, 0.2),
            right_shoulder=(-0.4, 0.0, -0.5),
            **_both((-0.5, 0.0, 0.0), "elbow"),
            left_hip=(-1.1, 0.0, 0.1),
            right_hip=(-0.4, 0.0, -0.1),
            **_both((0.9, 0.0, 0.0), "knee"),
        ),
        "SittingWithSupport": _pose(
            (0.3, 0.0, 0.0),
            spine1=(0.2, 0.0, 0.0),
            spine2=(0.2, 0.0, 0.0),
            spine3=(0.15, 0.0, 0.0),
            neck=(0.2, 0.0, 0.0),
            **_both((-0.2, 0.0, 0.15), "shoulder"),
            **_both((-0.3, 0.0, 0.0), "elbow"),
            **_both((-HALF_PI - 0.3, 0.0, 0.35), "hip"),
            **_both((0.4, 0.0, 0.0), "knee"),
        ),
        "SittingWithArmSupport": _pose(
            (0.75, 0.0, 0.0),
            spine2=(0.1, 0.0, 0.0),
            neck=(-0.5, 0.0, 0.0),
            **_both((-0.15, 0.0, 0.35), "shoulder"),
            **_both((-0.1, 0.0, 0.0), "elbow"),
            **_both((-HALF_PI - 0.75, 0.0, 0.45), "hip"),
            **_both((0.5, 0.0, 0.0), "knee"),
        ),
        "SittingWithoutSupport": _pose(
            (0.0, 0.0, 0.0),
            **_both((-0.5, 0.0, 0.9), "shoulder"),
            **_both((-0.9, 0.0, 0.0), "elbow"),
            **_both((-HALF_PI, 0.0, 0.4), "hip"),
            **_both((0.3, 0.0, 0.0), "knee"),
        ),
        "FourPointStanding": _pose(
            (HALF_PI + 0.45, 0.0, 0.0),
            **_both((-HALF_PI - 0.45, 0.0, 0.1), "shoulder"),
            **_both((-HALF_PI - 0.45, 0.0, 0.15), "hip"),
            **_both((0.15, 0.0, 0.0), "knee"),
            neck=(-0.7, 0.0, 0.0),
        ),
        "Standing": _pose(
            (0.0, 0.0, 0.0),
            **_both((-0.1, 0.0, 0.35), "shoulder"),
            **_both((-0.5, 0.0, 0.0), "elbow"),
            **_both((0.0, 0.0, 0.08), "hip"),
            **_both((0.05, 0.0, 0.0), "knee"),
        ),
    }
    return poses
