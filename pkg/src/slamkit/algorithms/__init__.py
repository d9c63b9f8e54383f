"""Pluggable algorithm contract and the classical reference implementations.

The pipeline drives every algorithm through the same six operations:
pre_process, track, keyframe_policy, map_update, post_process, and
get_model_outputs. track never mutates the map; map_update is the only map
mutator. The tracker and mapper stages share one algorithm instance under its
lock with fine-grained critical sections.
"""

from __future__ import annotations

import dataclasses
import threading
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from slamkit.algorithms.icp import (IcpParams, IcpStats, estimate_normals,
                                    icp_point_to_plane, predict_constant_velocity)
from slamkit.algorithms.keyframes import KeyframePolicyParams, keyframe_decide
from slamkit.errors import ConfigError, TrackingDivergence
from slamkit.geometry import CameraModel, Frame, Pose
from slamkit.mesh import TriangleMesh, TsdfVolume
from slamkit.mesh.marching import mesh_from_volume


@dataclass
class TsdfParams:
    voxel_size: float = 0.02
    truncation: Optional[float] = None  # defaults to 4 x voxel_size
    max_weight: float = 64.0
    volume_origin: Tuple[float, float, float] = (-3.0, -3.0, -3.0)
    volume_extents: Tuple[float, float, float] = (6.0, 6.0, 6.0)
    with_color: bool = True
    max_range: float = 8.0

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if self.truncation is not None and self.truncation <= self.voxel_size:
            raise ValueError("truncation must exceed voxel_size")
        if any(e <= 0 for e in self.volume_extents):
            raise ValueError("volume extents must be positive")

    @property
    def resolved_truncation(self) -> float:
        return self.truncation if self.truncation is not None else 4.0 * self.voxel_size


def _params_from_table(cls, table: Optional[dict], context: str):
    table = dict(table or {})
    known = {f.name for f in dataclasses.fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key {context}.{key}")
    for key in ("volume_origin", "volume_extents"):
        if key in table:
            table[key] = tuple(float(v) for v in table[key])
    if "max_iters" in table:
        table["max_iters"] = [int(v) for v in table["max_iters"]]
    try:
        return cls(**table)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {context} parameters: {e}") from e


class Algorithm:
    """Base contract; subclasses provide tracking and optional mapping."""

    name = "base"
    has_mapper = False
    param_groups = ()

    def __init__(self, camera: CameraModel, params: Optional[dict] = None,
                 use_gt_pose: bool = False):
        params = dict(params or {})
        for group in params:
            if group not in self.param_groups:
                raise ConfigError(
                    f"algorithm {self.name!r} takes no {group!r} parameter group "
                    f"(known: {sorted(self.param_groups)})"
                )
        self.camera = camera
        self.use_gt_pose = use_gt_pose
        self.lock = threading.RLock()
        self._history: List[Pose] = []  # last two estimated poses
        self.last_track_stats: Optional[IcpStats] = None

    # -- contract ---------------------------------------------------------
    def pre_process(self, frame: Frame) -> Frame:
        if not np.any(frame.depth > 0):
            raise TrackingDivergence(f"frame {frame.index}: no valid depth")
        return frame

    def track(self, frame: Frame) -> Pose:
        if self.use_gt_pose:
            pose = self._gt_pose(frame)
        else:
            pose = self._track_impl(frame)
        self._history = (self._history + [pose])[-2:]
        return pose

    def keyframe_policy(self, frame: Frame, pose: Pose) -> bool:
        return False

    def map_update(self, packet) -> None:
        return None

    def post_process(self) -> Optional[TriangleMesh]:
        return None

    def get_model_outputs(self, pose: Pose, camera: CameraModel):
        """(color, depth) rendered from the current map, or None without one."""
        return None

    # -- helpers ----------------------------------------------------------
    def _gt_pose(self, frame: Frame) -> Pose:
        if frame.gt_pose is None:
            raise TrackingDivergence(
                f"frame {frame.index}: ground-truth mode requires poses"
            )
        return frame.gt_pose

    def _track_impl(self, frame: Frame) -> Pose:
        raise NotImplementedError


class _TsdfMapperMixin:
    """TSDF fusion mapping shared by the reference algorithms."""

    def _init_mapper(self, tsdf_params: TsdfParams, kf_params: KeyframePolicyParams):
        self.tsdf_params = tsdf_params
        self.kf_params = kf_params
        self.volume = TsdfVolume(
            tsdf_params.volume_origin, tsdf_params.volume_extents,
            tsdf_params.voxel_size, with_color=tsdf_params.with_color,
            truncation=tsdf_params.resolved_truncation,
        )
        self._last_kf_pose: Optional[Pose] = None
        self.integrated_frames: List[int] = []

    def keyframe_policy(self, frame: Frame, pose: Pose) -> bool:
        with self.lock:
            take = keyframe_decide(self.kf_params, frame.index, pose, self._last_kf_pose)
            if take:
                self._last_kf_pose = pose
            return take

    def map_update(self, packet) -> None:
        if not packet.is_keyframe:
            return
        frame = packet.frame
        with self.lock:
            self.volume.integrate(
                frame.depth, frame.color, self.camera, frame.est_pose,
                self.tsdf_params.resolved_truncation, self.tsdf_params.max_weight,
            )
            self.integrated_frames.append(frame.index)

    def post_process(self) -> Optional[TriangleMesh]:
        with self.lock:
            if self.volume.weight_sum() == 0:
                return None
            return mesh_from_volume(self.volume)

    def get_model_outputs(self, pose: Pose, camera: CameraModel):
        with self.lock:
            if self.volume.weight_sum() == 0:
                return None
            depth, color = self.volume.raycast(
                camera, pose, self.tsdf_params.max_range, with_color=True
            )
            return color, depth


class GtTsdfAlgorithm(_TsdfMapperMixin, Algorithm):
    """Ground-truth-pose tracking with TSDF fusion (incremental reconstruction)."""

    name = "gt_tsdf"
    has_mapper = True
    param_groups = ("tsdf", "keyframes")

    def __init__(self, camera, params=None, use_gt_pose=False):
        super().__init__(camera, params, use_gt_pose=True)
        params = params or {}
        self._init_mapper(
            _params_from_table(TsdfParams, params.get("tsdf"), "algorithm.tsdf"),
            _params_from_table(KeyframePolicyParams, params.get("keyframes"), "algorithm.keyframes"),
        )


class IcpTsdfAlgorithm(_TsdfMapperMixin, Algorithm):
    """Frame-to-model ICP against the TSDF raycast, plus TSDF fusion."""

    name = "icp_tsdf"
    has_mapper = True
    param_groups = ("icp", "tsdf", "keyframes")

    def __init__(self, camera, params=None, use_gt_pose=False):
        super().__init__(camera, params, use_gt_pose)
        params = params or {}
        self.icp_params = _params_from_table(IcpParams, params.get("icp"), "algorithm.icp")
        self._init_mapper(
            _params_from_table(TsdfParams, params.get("tsdf"), "algorithm.tsdf"),
            _params_from_table(KeyframePolicyParams, params.get("keyframes"), "algorithm.keyframes"),
        )

    def _prediction(self) -> Pose:
        prev = self._history[-1] if self._history else None
        prev2 = self._history[-2] if len(self._history) > 1 else None
        return predict_constant_velocity(prev, prev2)

    def _track_impl(self, frame: Frame) -> Pose:
        with self.lock:
            if not self.integrated_frames:
                return Pose.identity()
            init = self._prediction()
            model_depth, model_normals_w = self.volume.raycast(
                self.camera, init, self.tsdf_params.max_range, with_normals=True
            )
        r_init = init.rotation()
        model_normals_cam = model_normals_w @ r_init  # world -> camera rows
        pose, stats = icp_point_to_plane(
            model_depth, model_normals_cam, frame.depth, self.camera, init, self.icp_params
        )
        self.last_track_stats = stats
        return pose


class IcpOdometryAlgorithm(Algorithm):
    """Frame-to-frame ICP odometry; no map, usable with the mapper skipped."""

    name = "icp_odometry"
    has_mapper = False
    param_groups = ("icp",)

    def __init__(self, camera, params=None, use_gt_pose=False):
        super().__init__(camera, params, use_gt_pose)
        params = params or {}
        self.icp_params = _params_from_table(IcpParams, params.get("icp"), "algorithm.icp")
        self._prev: Optional[Tuple[Frame, Pose, np.ndarray]] = None

    def _track_impl(self, frame: Frame) -> Pose:
        if self._prev is None:
            pose = Pose.identity()
            self._prev = (frame, pose, estimate_normals(frame.depth, self.camera)[0])
            return pose
        prev_frame, prev_pose, prev_normals = self._prev
        prev = self._history[-1] if self._history else None
        prev2 = self._history[-2] if len(self._history) > 1 else None
        init = predict_constant_velocity(prev, prev2)
        pose, stats = icp_point_to_plane(
            prev_frame.depth, prev_normals, frame.depth, self.camera, init,
            self.icp_params, model_pose=prev_pose,
        )
        self.last_track_stats = stats
        self._prev = (frame, pose, estimate_normals(frame.depth, self.camera)[0])
        return pose


REGISTRY = {
    cls.name: cls
    for cls in (GtTsdfAlgorithm, IcpTsdfAlgorithm, IcpOdometryAlgorithm)
}


def registered_algorithms() -> List[str]:
    return sorted(REGISTRY)


def create_algorithm(name: str, camera: CameraModel, params: Optional[dict] = None,
                     use_gt_pose: bool = False) -> Algorithm:
    if name not in REGISTRY:
        raise ConfigError(
            f"unregistered algorithm {name!r}; registered: {registered_algorithms()}"
        )
    return REGISTRY[name](camera, params, use_gt_pose=use_gt_pose)
