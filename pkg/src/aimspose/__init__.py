"""Hierarchical infant pose recognition on synthetic skeletons.

The pipeline: synthesize articulated poses, project them through a pinhole
camera, recover 3D joints by fitting, classify coarse poses with an
LMMD-adapted network, then refine to fine poses with a hierarchical
classifier.
"""

__version__ = "0.1.0"
