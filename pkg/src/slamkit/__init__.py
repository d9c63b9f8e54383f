"""Modular RGB-D SLAM pipeline and benchmark harness.

Decoupled tracker / mapper / monitor stages over bounded queues, a pluggable
algorithm registry with classical reference implementations (point-to-plane
ICP tracking, TSDF fusion mapping), unified dataset ingestion including a
synthetic ground-truth generator, and a standardized evaluation module for
trajectory, rendering, and reconstruction metrics.
"""

from slamkit.geometry import CameraModel, Frame, Pose, RotationKind, Trajectory

__version__ = "0.1.0"

__all__ = ["CameraModel", "Frame", "Pose", "RotationKind", "Trajectory", "__version__"]
