"""Synthetic SDF-scene sequences with exact ground-truth trajectory, depth,
and mesh, written in the Replica on-disk layout for closed-loop testing."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List

import numpy as np

from slamkit import kernels
from slamkit.datasets import REPLICA_DEPTH_SCALE, SYNTHETIC_FPS, DatasetDescriptor, open_dataset
from slamkit.datasets.images import write_color_png, write_depth_png
from slamkit.errors import DatasetError
from slamkit.geometry import CameraModel, Pose
from slamkit.mesh import TriangleMesh
from slamkit.mesh.marching import DEGENERATE_AREA
from slamkit.mesh.ply import write_ply

MAX_RANGE = 8.0
TRACE_TOL = 1e-4
TRACE_STEPS = 256
NORMAL_EPS = 1e-4
LIGHT_DIR = (0.45, 0.3, 0.85)
AMBIENT = 0.3
GT_MESH_VOXEL = 0.01
GT_MESH_NAME = "gt_mesh.ply"


class SdfScene:
    """Union (min-combined) of an enclosing room and solid primitives.

    Encoded as one row per primitive: kind, center xyz, shape params, albedo
    RGB. The inverted room box supplies the walls.
    """

    def __init__(self, prims: np.ndarray):
        prims = np.asarray(prims, dtype=np.float64).reshape(-1, 10)
        if prims.shape[0] == 0 or int(prims[0, 0]) != kernels.PRIM_ROOM:
            raise ValueError("scene must start with a room primitive")
        half = prims[0, 4:7]
        if np.any(half <= 0):
            raise ValueError("room extents must be positive")
        for row in prims[1:]:
            c = row[1:4]
            ext = np.full(3, row[4]) if int(row[0]) == kernels.PRIM_SPHERE else row[4:7]
            if np.any(np.abs(c - prims[0, 1:4]) + ext > half + 1e-9):
                raise ValueError("all primitives must fit inside the room")
        self.prims = prims

    @staticmethod
    def build(room_half_extents, room_center=(0, 0, 0), room_albedo=(0.75, 0.72, 0.68),
              spheres=(), boxes=()) -> "SdfScene":
        """spheres: (center, radius, albedo) triples; boxes: (center, half_extents, albedo)."""
        rows = [[kernels.PRIM_ROOM, *room_center, *room_half_extents, *room_albedo]]
        for c, r, a in spheres:
            rows.append([kernels.PRIM_SPHERE, *c, r, 0.0, 0.0, *a])
        for c, h, a in boxes:
            rows.append([kernels.PRIM_BOX, *c, *h, *a])
        return SdfScene(np.array(rows, dtype=np.float64))

    def sdf(self, points) -> np.ndarray:
        """Signed distance: negative inside solid matter, positive in free space."""
        return kernels.scene_sdf(self.prims, points)

    def normals(self, points) -> np.ndarray:
        """Unit outward normals by central differences of the SDF."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        g = np.empty_like(p)
        for a in range(3):
            d = np.zeros(3)
            d[a] = NORMAL_EPS
            g[:, a] = self.sdf(p + d) - self.sdf(p - d)
        n = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.maximum(n, 1e-300)

    def albedo_at(self, points) -> np.ndarray:
        """Albedo of the nearest primitive at each point."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dists = np.stack(
            [np.abs(kernels.scene_sdf(self.prims[i:i + 1], p)) for i in range(self.prims.shape[0])]
        )
        return self.prims[np.argmin(dists, axis=0), 7:10]

    def bounds(self, margin: float = 0.0):
        c, h = self.prims[0, 1:4], self.prims[0, 4:7]
        return c - h - margin, c + h + margin

    def to_json(self) -> list:
        return self.prims.tolist()

    @staticmethod
    def from_json(rows) -> "SdfScene":
        return SdfScene(np.asarray(rows, dtype=np.float64))


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose with +z toward the target (x right, y down)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    n = np.linalg.norm(forward)
    if n < 1e-12:
        raise ValueError("cannot look at the camera position itself")
    forward = forward / n
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise ValueError("view direction is parallel to the up vector")
    right /= rn
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=1)
    return Pose.from_rt(R, position)


def trajectory_poses(spec: dict, n_frames: int) -> List[Pose]:
    """Camera poses for an 'orbit' or 'line' trajectory spec."""
    kind = spec.get("type")
    if kind == "orbit":
        radius = float(spec["radius"])
        height = float(spec.get("height", 0.0))
        total = float(spec.get("total_angle", 2.0 * np.pi))
        target = np.asarray(spec.get("target", (0.0, 0.0, 0.0)), dtype=np.float64)
        center = np.asarray(spec.get("center", (0.0, 0.0, 0.0)), dtype=np.float64)
        poses = []
        for i in range(n_frames):
            a = total * i / n_frames
            pos = center + np.array([radius * np.cos(a), radius * np.sin(a), height])
            poses.append(look_at(pos, target))
        return poses
    if kind == "line":
        start = np.asarray(spec["start"], dtype=np.float64)
        end = np.asarray(spec["end"], dtype=np.float64)
        target = np.asarray(spec["look_at"], dtype=np.float64)
        ts = np.linspace(0.0, 1.0, n_frames)
        return [look_at(start + t * (end - start), target) for t in ts]
    raise ValueError(f"unknown trajectory spec type {kind!r} (expected orbit or line)")


def raycast_sdf(scene: SdfScene, cam: CameraModel, pose: Pose,
                max_range: float = MAX_RANGE):
    """Per-pixel z-depth of the scene from a camera pose; 0 on miss or beyond
    max_range. Also returns the hit points (world) and the hit mask."""
    rays_cam = cam.pixel_rays()
    shape = rays_cam.shape[:2]
    flat = rays_cam.reshape(-1, 3)
    dirs = flat @ pose.rotation().T
    t = kernels.sphere_trace(scene.prims, pose.translation, dirs, max_range, TRACE_TOL, TRACE_STEPS)
    hit = np.isfinite(t)
    depth = np.where(hit, t * flat[:, 2], 0.0)
    points = pose.translation + np.where(hit, t, 0.0)[:, None] * dirs
    return depth.reshape(shape), points, hit.reshape(shape)


def shade(scene: SdfScene, points, hit_mask) -> np.ndarray:
    """Lambertian shading under one fixed directional light plus ambient."""
    flat_hit = hit_mask.reshape(-1)
    img = np.zeros((flat_hit.size, 3))
    if flat_hit.any():
        p = points[flat_hit]
        n = scene.normals(p)
        light = np.asarray(LIGHT_DIR, dtype=np.float64)
        light = light / np.linalg.norm(light)
        lam = np.maximum((n * light).sum(axis=1), 0.0)
        img[flat_hit] = scene.albedo_at(p) * (AMBIENT + (1.0 - AMBIENT) * lam)[:, None]
    return np.clip(img.reshape(hit_mask.shape + (3,)), 0.0, 1.0)


def scene_gt_mesh(scene: SdfScene, voxel: float = GT_MESH_VOXEL) -> TriangleMesh:
    """Dense marching cubes of the analytic SDF over the room (chunked in z)."""
    lo, hi = scene.bounds(margin=2 * voxel)
    dims = np.floor((hi - lo) / voxel).astype(np.int64) + 1
    nx, ny, nz = (int(d) for d in dims)
    xs = lo[0] + voxel * np.arange(nx)
    ys = lo[1] + voxel * np.arange(ny)
    all_verts, all_tris = [], []
    nvert = 0
    chunk = max(2, int(np.ceil(4.0e6 / (nx * ny))))
    k0 = 0
    while k0 < nz - 1:
        k1 = min(k0 + chunk, nz - 1)
        zs = lo[2] + voxel * np.arange(k0, k1 + 1)
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.stack([X.reshape(-1), Y.reshape(-1), Z.reshape(-1)], axis=1)
        field = scene.sdf(pts).reshape(nx, ny, k1 + 1 - k0)
        valid = np.ones(field.shape, dtype=bool)
        verts, tris = kernels.marching_cubes(np.ascontiguousarray(field), valid, 0.0)
        if len(verts):
            verts = np.asarray(verts) + np.array([0.0, 0.0, float(k0)])
            all_verts.append(lo + verts * voxel)
            all_tris.append(np.asarray(tris, dtype=np.int64)[:, [0, 2, 1]] + nvert)
            nvert += len(verts)
        k0 = k1
    if not all_verts:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts = np.concatenate(all_verts)
    tris = np.concatenate(all_tris)
    v0 = verts[tris[:, 0]]
    area = 0.5 * np.linalg.norm(np.cross(verts[tris[:, 1]] - v0, verts[tris[:, 2]] - v0), axis=1)
    tris = tris[area > DEGENERATE_AREA]
    used = np.zeros(verts.shape[0], dtype=bool)
    used[tris.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(verts[used], remap[tris])


def generate_synthetic(scene: SdfScene, trajectory_spec: dict, cam: CameraModel,
                       n_frames: int, out_dir, seed: int,
                       gt_mesh_voxel: float = GT_MESH_VOXEL) -> DatasetDescriptor:
    """Render and write a full synthetic sequence plus its ground-truth mesh.

    Replica layout: frame_%06d.png, depth_%06d.png (16-bit), traj.txt with
    row-major 4x4 camera-to-world lines, cam_params.json, meta.json.
    Deterministic for a given seed.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise DatasetError(f"output directory {out} is not writable: {e}") from e

    poses = trajectory_poses(trajectory_spec, n_frames)
    traj_lines = []
    for i, pose in enumerate(poses):
        depth, points, hit = raycast_sdf(scene, cam, pose)
        color = shade(scene, points, hit)
        write_color_png(out / f"frame_{i:06d}.png", color)
        write_depth_png(out / f"depth_{i:06d}.png", depth, REPLICA_DEPTH_SCALE)
        traj_lines.append(" ".join(f"{v:.9f}" for v in pose.to_matrix().reshape(-1)))
    (out / "traj.txt").write_text("\n".join(traj_lines) + "\n")
    (out / "cam_params.json").write_text(json.dumps({
        "camera": {"w": cam.width, "h": cam.height, "fx": cam.fx, "fy": cam.fy,
                   "cx": cam.cx, "cy": cam.cy, "scale": REPLICA_DEPTH_SCALE}
    }, indent=2))

    gt_mesh = scene_gt_mesh(scene, gt_mesh_voxel)
    write_ply(gt_mesh, out / GT_MESH_NAME)

    meta = {
        "kind": "synthetic",
        "seed": int(seed),
        "n_frames": int(n_frames),
        "fps": SYNTHETIC_FPS,
        "scene": scene.to_json(),
        "trajectory": trajectory_spec,
        "light": list(LIGHT_DIR),
        "ambient": AMBIENT,
        "max_range": MAX_RANGE,
        "gt_mesh": GT_MESH_NAME,
        "gt_mesh_voxel": gt_mesh_voxel,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return open_dataset("synthetic", out)


SCENE_PRESETS = {
    "room-sphere": dict(
        scene=dict(
            room_half_extents=(2.0, 2.0, 1.1),
            spheres=[((0.45, 0.0, -0.35), 0.5, (0.85, 0.25, 0.2))],
            boxes=[],
        ),
        trajectory=dict(type="orbit", radius=1.35, height=0.15, total_angle=2.0 * np.pi,
                        target=(0.0, 0.0, 0.0)),
    ),
    "room-boxes": dict(
        scene=dict(
            room_half_extents=(2.0, 2.0, 1.1),
            spheres=[((-0.7, 0.6, -0.5), 0.35, (0.2, 0.45, 0.85))],
            boxes=[
                ((0.6, -0.5, -0.6), (0.4, 0.3, 0.5), (0.9, 0.75, 0.2)),
                ((0.4, 0.8, -0.8), (0.5, 0.35, 0.3), (0.3, 0.8, 0.4)),
            ],
        ),
        trajectory=dict(type="orbit", radius=1.35, height=0.15, total_angle=2.0 * np.pi,
                        target=(0.0, 0.0, 0.0)),
    ),
}

PRESET_CAMERA = CameraModel(fx=140.0, fy=140.0, cx=159.5, cy=119.5, width=320, height=240,
                            depth_scale=REPLICA_DEPTH_SCALE)


def build_preset(name: str):
    """(scene, trajectory spec, camera) for a named preset."""
    if name not in SCENE_PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(SCENE_PRESETS)}")
    p = SCENE_PRESETS[name]
    s = p["scene"]
    scene = SdfScene.build(
        room_half_extents=s["room_half_extents"], spheres=s["spheres"], boxes=s["boxes"]
    )
    return scene, dict(p["trajectory"]), PRESET_CAMERA
