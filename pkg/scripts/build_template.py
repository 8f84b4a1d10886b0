"""Regenerate src/aimspose/data/template.json (the committed infant skeleton).

Axes: x = body left, y = up, z = forward (facing direction). Meters.
"""

import json
from pathlib import Path

import numpy as np

JOINTS = [
    # name, parent, offset from parent
    ("pelvis", None, (0.0, 0.0, 0.0)),
    ("left_hip", 0, (0.042, -0.030, 0.0)),
    ("right_hip", 0, (-0.042, -0.030, 0.0)),
    ("spine1", 0, (0.0, 0.055, -0.008)),
    ("left_knee", 1, (0.004, -0.105, 0.006)),
    ("right_knee", 2, (-0.004, -0.105, 0.006)),
    ("spine2", 3, (0.0, 0.055, 0.0)),
    ("left_ankle", 4, (0.0, -0.095, -0.008)),
    ("right_ankle", 5, (0.0, -0.095, -0.008)),
    ("spine3", 6, (0.0, 0.045, 0.004)),
    ("left_foot", 7, (0.006, -0.022, 0.042)),
    ("right_foot", 8, (-0.006, -0.022, 0.042)),
    ("neck", 9, (0.0, 0.055, 0.0)),
    ("left_collar", 9, (0.025, 0.040, 0.0)),
    ("right_collar", 9, (-0.025, 0.040, 0.0)),
    ("head", 12, (0.0, 0.045, 0.010)),
    ("left_shoulder", 13, (0.048, -0.004, 0.0)),
    ("right_shoulder", 14, (-0.048, -0.004, 0.0)),
    ("left_elbow", 16, (0.018, -0.088, -0.004)),
    ("right_elbow", 17, (-0.018, -0.088, -0.004)),
    ("left_wrist", 18, (0.008, -0.080, 0.010)),
    ("right_wrist", 19, (-0.008, -0.080, 0.010)),
    ("nose", 15, (0.0, 0.010, 0.068)),
    ("head_top", 15, (0.0, 0.125, -0.005)),
]

# bone groups for smooth, left-right symmetric shape directions
GROUPS = {
    "torso": ["spine1", "spine2", "spine3", "neck", "left_collar", "right_collar"],
    "head": ["head", "nose", "head_top"],
    "pelvis": ["left_hip", "right_hip"],
    "thigh": ["left_knee", "right_knee"],
    "shin": ["left_ankle", "right_ankle", "left_foot", "right_foot"],
    "upper_arm": ["left_shoulder", "right_shoulder", "left_elbow", "right_elbow"],
    "forearm": ["left_wrist", "right_wrist"],
}
N_SHAPE = 10
MAX_DELTA = 0.05


def build(seed=20220607):
    rng = np.random.default_rng(seed)
    names = [j[0] for j in JOINTS]
    offsets = np.array([j[2] for j in JOINTS])
    group_of = {n: g for g, members in GROUPS.items() for n in members}
    groups = list(GROUPS)
    basis = np.zeros((N_SHAPE, len(JOINTS), 3))
    for k in range(N_SHAPE):
        # a global scale component first, then smooth mixtures of group factors
        weights = np.ones(len(groups)) if k == 0 else rng.normal(size=len(groups))
        weights = weights / np.max(np.abs(weights)) * MAX_DELTA
        for i, name in enumerate(names):
            if name in group_of:
                basis[k, i] = weights[groups.index(group_of[name])] * offsets[i]
    return {
        "joints": names,
        "parents": [j[1] for j in JOINTS],
        "offsets": offsets.tolist(),
        "shape_basis": basis.tolist(),
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "aimspose" / "data" / "template.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    print(f"wrote {out}")
