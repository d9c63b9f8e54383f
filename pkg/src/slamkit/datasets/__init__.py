"""Unified dataset ingestion: TUM RGB-D, Replica layout, and synthetic scenes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from slamkit.datasets.association import DEFAULT_MAX_DT, associate_three, match_timestamps
from slamkit.datasets.images import read_color, read_depth_raw
from slamkit.errors import DatasetError
from slamkit.geometry import CameraModel, Frame, Pose, RotationKind

TUM_DEPTH_SCALE = 5000.0
REPLICA_DEPTH_SCALE = 6553.5
SYNTHETIC_FPS = 30.0

# Published pinhole intrinsics for the TUM RGB-D sequence families.
TUM_INTRINSICS = {
    "freiburg1": (517.3, 516.5, 318.6, 255.3),
    "freiburg2": (520.9, 521.0, 325.1, 249.7),
    "freiburg3": (535.4, 539.2, 320.1, 247.6),
    "default": (525.0, 525.0, 319.5, 239.5),
}


@dataclass(frozen=True)
class AssociationRecord:
    t_color: float
    t_depth: float
    t_gt: float
    color_path: Path
    depth_path: Path
    gt_pose: Pose
    max_dt: float = DEFAULT_MAX_DT

    def __post_init__(self):
        if abs(self.t_color - self.t_depth) > self.max_dt or abs(self.t_color - self.t_gt) > self.max_dt:
            raise DatasetError(
                f"association at t={self.t_color} exceeds the {self.max_dt}s window"
            )


@dataclass
class DatasetDescriptor:
    kind: str  # "tum" | "replica" | "synthetic"
    root: Path
    camera: CameraModel
    frame_count: int
    downsample: int = 1
    timestamps: List[float] = field(default_factory=list)
    associations: Optional[List[AssociationRecord]] = None  # tum
    color_paths: Optional[List[Path]] = None  # replica / synthetic
    depth_paths: Optional[List[Path]] = None
    gt_poses: Optional[List[Pose]] = None
    meta: Optional[dict] = None  # synthetic

    def effective_camera(self) -> CameraModel:
        return self.camera.scaled(self.downsample)


def open_dataset(kind: str, root, downsample: int = 1, frame_start: int = 0,
                 frame_end: Optional[int] = None, camera_override: Optional[dict] = None,
                 max_dt: float = DEFAULT_MAX_DT) -> DatasetDescriptor:
    """Build a descriptor for one on-disk sequence.

    frame_start/frame_end select a half-open index range after association;
    downsample is an integer factor applied at load time.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    if downsample < 1:
        raise DatasetError("downsample factor must be >= 1")
    kind = kind.lower()
    if kind == "tum":
        desc = _open_tum(root, camera_override, max_dt)
    elif kind in ("replica", "synthetic"):
        desc = _open_replica_layout(root, kind, camera_override)
    else:
        raise DatasetError(f"unknown dataset kind {kind!r} (expected tum, replica, synthetic)")
    desc.downsample = downsample
    _apply_range(desc, frame_start, frame_end)
    if desc.frame_count < 1:
        raise DatasetError(f"dataset {root} has no frames in the selected range")
    return desc


def load_frame(desc: DatasetDescriptor, i: int) -> Frame:
    """Decode frame i: color in [0, 1], depth in meters (0 = invalid),
    optional integer downsampling, ground-truth pose attached when known."""
    if not 0 <= i < desc.frame_count:
        raise IndexError(f"frame index {i} out of range [0, {desc.frame_count})")
    if desc.kind == "tum":
        rec = desc.associations[i]
        color_path, depth_path, gt = rec.color_path, rec.depth_path, rec.gt_pose
    else:
        color_path, depth_path = desc.color_paths[i], desc.depth_paths[i]
        gt = desc.gt_poses[i] if desc.gt_poses else None
    try:
        color = read_color(color_path)
        stored = read_depth_raw(depth_path)
    except DatasetError as e:
        raise DatasetError(f"frame {i}: {e}") from e
    depth = stored / desc.camera.depth_scale
    cam = desc.camera
    if color.shape[:2] != (cam.height, cam.width) or stored.shape != (cam.height, cam.width):
        raise DatasetError(
            f"frame {i}: image size {color.shape[:2]} does not match camera "
            f"{(cam.height, cam.width)}"
        )
    k = desc.downsample
    if k > 1:
        h, w = (cam.height // k) * k, (cam.width // k) * k
        # Color: k x k box average. Depth: nearest sample, so that averaging
        # across depth discontinuities cannot fabricate phantom surfaces.
        color = color[:h, :w].reshape(h // k, k, w // k, k, 3).mean(axis=(1, 3))
        depth = depth[:h:k, :w:k]
    return Frame(index=i, timestamp=desc.timestamps[i], color=color, depth=depth, gt_pose=gt)


def _apply_range(desc: DatasetDescriptor, start: int, end: Optional[int]) -> None:
    stop = desc.frame_count if end is None else min(end, desc.frame_count)
    sl = slice(start, stop)
    desc.timestamps = desc.timestamps[sl]
    for name in ("associations", "color_paths", "depth_paths", "gt_poses"):
        val = getattr(desc, name)
        if val is not None:
            setattr(desc, name, val[sl])
    desc.frame_count = len(desc.timestamps)


def _read_tum_list(path: Path):
    if not path.is_file():
        raise DatasetError(f"missing index file {path}")
    stamps, payloads = [], []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        stamps.append(float(parts[0]))
        payloads.append(parts[1:])
    return stamps, payloads


def _tum_family(root: Path) -> str:
    name = root.name.lower()
    for fam in ("freiburg1", "freiburg2", "freiburg3"):
        if fam in name or fam.replace("freiburg", "fr") in name:
            return fam
    return "default"


def _open_tum(root: Path, camera_override, max_dt: float) -> DatasetDescriptor:
    t_rgb, rgb_rows = _read_tum_list(root / "rgb.txt")
    t_depth, depth_rows = _read_tum_list(root / "depth.txt")
    t_gt, gt_rows = _read_tum_list(root / "groundtruth.txt")
    triples = associate_three(t_rgb, t_depth, t_gt, max_dt)
    records = []
    for i, j, k in triples:
        vals = [float(x) for x in gt_rows[k]]
        tx, ty, tz, qx, qy, qz, qw = vals[:7]
        pose = Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]),
                    kind=RotationKind.QUATERNION)
        records.append(
            AssociationRecord(
                t_color=t_rgb[i], t_depth=t_depth[j], t_gt=t_gt[k],
                color_path=root / rgb_rows[i][0], depth_path=root / depth_rows[j][0],
                gt_pose=pose, max_dt=max_dt,
            )
        )
    fx, fy, cx, cy = TUM_INTRINSICS[_tum_family(root)]
    cam = _camera_from(
        dict(fx=fx, fy=fy, cx=cx, cy=cy, width=640, height=480, depth_scale=TUM_DEPTH_SCALE),
        camera_override,
    )
    return DatasetDescriptor(
        kind="tum", root=root, camera=cam, frame_count=len(records),
        timestamps=[r.t_color for r in records], associations=records,
    )


def _camera_from(base: dict, override: Optional[dict]) -> CameraModel:
    if override:
        base = {**base, **override}
    try:
        return CameraModel(
            fx=float(base["fx"]), fy=float(base["fy"]), cx=float(base["cx"]),
            cy=float(base["cy"]), width=int(base["width"]), height=int(base["height"]),
            depth_scale=float(base.get("depth_scale", 1.0)),
        )
    except (KeyError, ValueError) as e:
        raise DatasetError(f"invalid camera intrinsics: {e}") from e


def _open_replica_layout(root: Path, kind: str, camera_override) -> DatasetDescriptor:
    params_path = root / "cam_params.json"
    if not params_path.is_file():
        raise DatasetError(f"missing intrinsics file {params_path}")
    raw = json.loads(params_path.read_text()).get("camera", {})
    cam = _camera_from(
        dict(fx=raw.get("fx"), fy=raw.get("fy"), cx=raw.get("cx"), cy=raw.get("cy"),
             width=raw.get("w"), height=raw.get("h"),
             depth_scale=raw.get("scale", REPLICA_DEPTH_SCALE)),
        camera_override,
    )
    color_paths, depth_paths = [], []
    i = 0
    while True:
        stem = root / f"frame_{i:06d}"
        color = next((p for p in (stem.with_suffix(".png"), stem.with_suffix(".jpg")) if p.is_file()), None)
        depth = root / f"depth_{i:06d}.png"
        if color is None or not depth.is_file():
            break
        color_paths.append(color)
        depth_paths.append(depth)
        i += 1
    if i == 0:
        raise DatasetError(f"no frame_%06d / depth_%06d pairs found under {root}")
    gt_poses = None
    traj = root / "traj.txt"
    if traj.is_file():
        gt_poses = []
        for line in traj.read_text().splitlines():
            if not line.strip():
                continue
            vals = np.array([float(x) for x in line.split()])
            if vals.size != 16:
                raise DatasetError(f"{traj}: expected 16 values per row, got {vals.size}")
            gt_poses.append(Pose.from_matrix(vals.reshape(4, 4)))
        if len(gt_poses) < i:
            raise DatasetError(f"{traj} has {len(gt_poses)} poses for {i} frames")
        gt_poses = gt_poses[:i]
    meta = None
    if kind == "synthetic":
        meta_path = root / "meta.json"
        if not meta_path.is_file():
            raise DatasetError(f"synthetic dataset lacks {meta_path}")
        meta = json.loads(meta_path.read_text())
    timestamps = [j / SYNTHETIC_FPS for j in range(i)]
    return DatasetDescriptor(
        kind=kind, root=root, camera=cam, frame_count=i, timestamps=timestamps,
        color_paths=color_paths, depth_paths=depth_paths, gt_poses=gt_poses, meta=meta,
    )


__all__ = [
    "AssociationRecord",
    "DatasetDescriptor",
    "DEFAULT_MAX_DT",
    "REPLICA_DEPTH_SCALE",
    "TUM_DEPTH_SCALE",
    "load_frame",
    "match_timestamps",
    "open_dataset",
]
