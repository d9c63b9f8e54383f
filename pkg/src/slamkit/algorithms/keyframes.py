"""Keyframe selection policies: cadence, motion threshold, or either."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from slamkit.geometry import Pose, pose_distance

COMBINE_MODES = ("every_n", "motion", "either")


@dataclass
class KeyframePolicyParams:
    every_n: int = 5
    min_translation: float = 0.05  # meters
    min_rotation: float = 0.087  # radians (~5 degrees)
    combine: str = "every_n"

    def __post_init__(self):
        if self.every_n < 1:
            raise ValueError("every_n must be >= 1")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"combine must be one of {COMBINE_MODES}")


def keyframe_decide(params: KeyframePolicyParams, index: int, pose: Pose,
                    last_kf_pose: Optional[Pose]) -> bool:
    """Frame 0 is always a keyframe; afterwards per the configured policy."""
    if index == 0 or last_kf_pose is None:
        return True
    by_cadence = index % params.every_n == 0
    if params.combine == "every_n":
        return by_cadence
    trans, rot = pose_distance(last_kf_pose, pose)
    by_motion = trans > params.min_translation or rot > params.min_rotation
    if params.combine == "motion":
        return by_motion
    return by_cadence or by_motion
