"""Command-line entry point: run, evaluation, replay, and synthetic data.

Exit codes are a stable scripting contract: 0 success, 1 runtime/data error,
2 usage/config error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from slamkit import config as cfg
from slamkit import pipeline
from slamkit.datasets import load_frame, open_dataset
from slamkit.datasets.images import write_color_png, write_depth_png
from slamkit.datasets.synthetic import SCENE_PRESETS, build_preset, generate_synthetic
from slamkit.errors import ConfigError, DatasetError, PipelineError, PlyError, TrackingDivergence
from slamkit.evaluate import (MetricsReport, associate_trajectories, ate_rmse, depth_l1,
                              psnr, read_tum_trajectory, reconstruction_metrics, ssim,
                              write_report)
from slamkit.evaluate.reconstruction import DEFAULT_SAMPLES, DEFAULT_TAU_C, DEFAULT_TAU_F
from slamkit.geometry import CameraModel, Trajectory
from slamkit.mesh import Bvh, raycast_mesh_depth, read_ply


def cmd_run(args) -> int:
    text = Path(args.config).read_text()
    run_config = cfg.parse_config(text, overrides=args.set or [])
    if args.output:
        run_config.output_dir = args.output
    graph = cfg.instantiate(run_config)
    artifacts = pipeline.run(graph, run_config)
    print(f"frames: {artifacts.frame_count}")
    print(f"fps: {artifacts.fps:.3f}")
    print(f"trajectory: {artifacts.trajectory_path}")
    if artifacts.mesh_path:
        print(f"mesh: {artifacts.mesh_path}")
    if artifacts.renders_dir:
        print(f"renders: {artifacts.renders_dir}")
    print(f"stats: {artifacts.stats_path}")
    return 0


def cmd_eval_traj(args) -> int:
    gt = read_tum_trajectory(args.gt)
    est = read_tum_trajectory(args.est)
    gt_poses, est_poses = associate_trajectories(gt, est, max_dt=args.max_dt)
    gt_pos = np.array([p.translation for p in gt_poses])
    est_pos = np.array([p.translation for p in est_poses])
    ate = ate_rmse(gt_pos, est_pos, align=args.align)
    print(f"ATE {ate:.4f} cm ({len(gt_poses)} pairs, align={args.align})")
    if args.report:
        report = MetricsReport(ate_rmse_cm=ate, parameters={
            "align": args.align, "max_dt": args.max_dt, "pairs": len(gt_poses),
        })
        write_report(report, args.report)
        print(f"report: {args.report}")
    return 0


def cmd_eval_recon(args) -> int:
    recon = read_ply(args.recon)
    gt_mesh = read_ply(args.gt_mesh)
    tau_f = args.tau_f / 100.0
    tau_c = args.tau_c / 100.0
    metrics = reconstruction_metrics(recon, gt_mesh, n_samples=args.samples,
                                     tau_f=tau_f, tau_c=tau_c, seed=args.seed)
    dl1 = None
    if args.dataset:
        desc = open_dataset(args.dataset_kind, args.dataset)
        dl1 = depth_l1(recon, desc, stride=args.stride)
    print(f"Accuracy     {metrics.accuracy_cm:.2f} cm")
    print(f"Completion   {metrics.completion_cm:.2f} cm")
    print(f"Comp. Ratio  {metrics.completion_ratio_pct:.2f} % (< {args.tau_c:g} cm)")
    print(f"Precision    {metrics.precision_pct:.2f} % (< {args.tau_f:g} cm)")
    print(f"Recall       {metrics.recall_pct:.2f} %")
    print(f"F1           {metrics.f1_pct:.2f} %")
    print(f"Depth-L1     {f'{dl1.cm:.2f} cm' if dl1 else 'n/a'}")
    if args.report:
        report = MetricsReport(
            precision_pct=metrics.precision_pct, recall_pct=metrics.recall_pct,
            f1_pct=metrics.f1_pct, accuracy_cm=metrics.accuracy_cm,
            completion_cm=metrics.completion_cm,
            completion_ratio_pct=metrics.completion_ratio_pct,
            depth_l1_cm=dl1.cm if dl1 else None,
            parameters=_recon_parameters(args),
        )
        write_report(report, args.report)
        print(f"report: {args.report}")
    return 0


def _recon_parameters(args) -> dict:
    return {
        "tau_f_cm": args.tau_f, "tau_c_cm": args.tau_c,
        "n_samples": args.samples, "seed": args.seed, "depth_l1_stride": args.stride,
    }


def _paired_renders(renders_dir: Path, stride: int):
    pattern = re.compile(r"render_(\d{6})_color\.png$")
    found = sorted(
        (int(m.group(1)), p)
        for p in renders_dir.iterdir()
        if (m := pattern.search(p.name))
    )
    return found[::stride]


def cmd_eval_render(args) -> int:
    renders_dir = Path(args.renders)
    if not renders_dir.is_dir():
        raise DatasetError(f"renders directory does not exist: {renders_dir}")
    pairs = _paired_renders(renders_dir, args.stride)
    if not pairs:
        raise DatasetError(f"no render_*_color.png files under {renders_dir}")
    desc = open_dataset(args.dataset_kind, args.dataset)
    from slamkit.datasets.images import read_color

    psnrs, ssims, capped = [], [], False
    for index, path in pairs:
        if index >= desc.frame_count:
            raise DatasetError(f"render index {index} has no dataset frame")
        frame = load_frame(desc, index)
        rendered = read_color(path)
        if rendered.shape != frame.color.shape:
            raise DatasetError(
                f"render {path.name} size {rendered.shape} != frame {frame.color.shape}"
            )
        p = psnr(rendered, frame.color)
        psnrs.append(p.db)
        capped = capped or p.capped
        ssims.append(ssim(rendered, frame.color))
    mean_psnr = float(np.mean(psnrs))
    mean_ssim = float(np.mean(ssims))
    print(f"PSNR {mean_psnr:.2f} dB{' (capped)' if capped else ''} over {len(pairs)} views")
    print(f"SSIM {mean_ssim:.4f}")
    if args.report:
        report = MetricsReport(psnr_db=mean_psnr, psnr_capped=capped, ssim=mean_ssim,
                               parameters={"views": len(pairs), "stride": args.stride})
        write_report(report, args.report)
        print(f"report: {args.report}")
    return 0


def _read_stats(stats_path: Path):
    fps = None
    peak = None
    if stats_path.is_file():
        for line in stats_path.read_text().splitlines():
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split("\t")
            fps = float(parts[3])
            peak = int(parts[4])
    return fps, peak


def cmd_eval_all(args) -> int:
    run_dir = Path(args.run)
    desc = open_dataset(args.dataset_kind, args.dataset)
    report = MetricsReport(parameters={
        "run_dir": str(run_dir), "dataset": str(args.dataset), "align": args.align,
        "tau_f_cm": args.tau_f, "tau_c_cm": args.tau_c,
        "n_samples": args.samples, "seed": args.seed, "stride": args.stride,
    })

    traj_path = run_dir / "trajectory.txt"
    has_gt = desc.gt_poses is not None or desc.associations is not None
    if traj_path.is_file() and has_gt:
        est = read_tum_trajectory(traj_path)
        gt = Trajectory()
        for i in range(desc.frame_count):
            pose = (desc.gt_poses[i] if desc.gt_poses is not None
                    else desc.associations[i].gt_pose)
            gt.append(desc.timestamps[i], pose)
        gt_poses, est_poses = associate_trajectories(gt, est)
        report.ate_rmse_cm = ate_rmse(
            np.array([p.translation for p in gt_poses]),
            np.array([p.translation for p in est_poses]), align=args.align,
        )
        print(f"ATE {report.ate_rmse_cm:.4f} cm (align={args.align})")

    renders_dir = run_dir / "renders"
    pairs = _paired_renders(renders_dir, 1) if renders_dir.is_dir() else []
    if pairs:
        from slamkit.datasets.images import read_color

        psnrs, ssims, capped = [], [], False
        for index, path in pairs:
            frame = load_frame(desc, index)
            rendered = read_color(path)
            p = psnr(rendered, frame.color)
            psnrs.append(p.db)
            capped = capped or p.capped
            ssims.append(ssim(rendered, frame.color))
        report.psnr_db = float(np.mean(psnrs))
        report.psnr_capped = capped
        report.ssim = float(np.mean(ssims))
        print(f"PSNR {report.psnr_db:.2f} dB  SSIM {report.ssim:.4f} over {len(pairs)} views")

    mesh_path = run_dir / "mesh.ply"
    gt_mesh_path = Path(args.gt_mesh) if args.gt_mesh else Path(args.dataset) / "gt_mesh.ply"
    if mesh_path.is_file() and gt_mesh_path.is_file():
        recon = read_ply(mesh_path)
        gt_mesh = read_ply(gt_mesh_path)
        m = reconstruction_metrics(recon, gt_mesh, n_samples=args.samples,
                                   tau_f=args.tau_f / 100.0, tau_c=args.tau_c / 100.0,
                                   seed=args.seed)
        report.accuracy_cm = m.accuracy_cm
        report.completion_cm = m.completion_cm
        report.completion_ratio_pct = m.completion_ratio_pct
        report.precision_pct = m.precision_pct
        report.recall_pct = m.recall_pct
        report.f1_pct = m.f1_pct
        dl1 = depth_l1(recon, desc, stride=args.stride)
        report.depth_l1_cm = dl1.cm
        print(f"Acc {m.accuracy_cm:.2f} cm  Comp {m.completion_cm:.2f} cm  "
              f"Comp.Ratio {m.completion_ratio_pct:.2f} %  F1 {m.f1_pct:.2f} %  "
              f"Depth-L1 {dl1.cm:.2f} cm")

    report.fps, report.peak_memory_bytes = _read_stats(run_dir / "stats.txt")
    if report.fps is not None:
        print(f"FPS {report.fps:.3f}")
    out = args.report or (run_dir / "report.json")
    write_report(report, out)
    print(f"report: {out}")
    return 0


def _read_intrinsics_file(path) -> CameraModel:
    vals = Path(path).read_text().split()
    if len(vals) != 6:
        raise DatasetError(f"{path}: expected 'fx fy cx cy width height'")
    fx, fy, cx, cy, w, h = (float(v) for v in vals)
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, width=int(w), height=int(h),
                       depth_scale=6553.5)


def cmd_replay(args) -> int:
    mesh = read_ply(args.mesh)
    if mesh.is_empty():
        raise DatasetError(f"mesh {args.mesh} has no triangles")
    cam = _read_intrinsics_file(args.camera)
    traj = read_tum_trajectory(args.trajectory)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bvh = Bvh(mesh)
    normals = mesh.face_normals()
    rays_cam = cam.pixel_rays()
    count = 0
    for k in range(0, len(traj), args.stride):
        _, pose = traj[k]
        depth, tris = raycast_mesh_depth(bvh, cam, pose, return_tris=True)
        write_depth_png(out / f"replay_{k:06d}_depth.png", depth, cam.depth_scale)
        dirs = rays_cam.reshape(-1, 3) @ pose.rotation().T
        hit = tris.reshape(-1) >= 0
        shade = np.zeros(dirs.shape[0])
        if hit.any():
            n = normals[tris.reshape(-1)[hit]]
            shade[hit] = np.abs((n * dirs[hit]).sum(axis=1))
        img = np.repeat(shade.reshape(depth.shape)[..., None], 3, axis=2)
        write_color_png(out / f"replay_{k:06d}_shade.png", img)
        count += 1
    print(f"wrote {count} image pairs to {out}")
    return 0


def cmd_synth(args) -> int:
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    if args.gt_voxel <= 0:
        raise ConfigError("--gt-voxel must be positive")
    try:
        scene, traj_spec, cam = build_preset(args.scene)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    desc = generate_synthetic(scene, traj_spec, cam, args.frames, args.out, args.seed,
                              gt_mesh_voxel=args.gt_voxel)
    print(f"wrote {desc.frame_count} frames to {desc.root}")
    print(f"ground-truth mesh: {desc.root / desc.meta['gt_mesh']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slamkit",
        description="Modular RGB-D SLAM pipeline and benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a configured pipeline run")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--output", help="override output_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval-traj", help="ATE between two TUM trajectory files")
    p.add_argument("--gt", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--align", choices=["none", "se3", "sim3"], default="se3")
    p.add_argument("--max-dt", type=float, default=0.02, dest="max_dt")
    p.add_argument("--report", help="write a JSON metrics report")
    p.set_defaults(func=cmd_eval_traj)

    p = sub.add_parser("eval-recon", help="reconstruction metrics between two meshes")
    p.add_argument("--recon", required=True)
    p.add_argument("--gt-mesh", required=True, dest="gt_mesh")
    p.add_argument("--dataset", help="dataset dir for depth-L1 (omit to skip)")
    p.add_argument("--dataset-kind", default="synthetic", dest="dataset_kind",
                   choices=["tum", "replica", "synthetic"])
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F * 100, dest="tau_f",
                   help="precision/recall threshold in cm")
    p.add_argument("--tau-c", type=float, default=DEFAULT_TAU_C * 100, dest="tau_c",
                   help="completion-ratio threshold in cm")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=50, help="depth-L1 view stride")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_recon)

    p = sub.add_parser("eval-render", help="PSNR/SSIM of exported renders vs dataset frames")
    p.add_argument("--renders", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--dataset-kind", default="synthetic", dest="dataset_kind",
                   choices=["tum", "replica", "synthetic"])
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_render)

    p = sub.add_parser("eval-all", help="merged report over one run's artifacts")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dataset-kind", default="synthetic", dest="dataset_kind",
                   choices=["tum", "replica", "synthetic"])
    p.add_argument("--gt-mesh", dest="gt_mesh", help="default: <dataset>/gt_mesh.ply")
    p.add_argument("--align", choices=["none", "se3", "sim3"], default="se3")
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F * 100, dest="tau_f")
    p.add_argument("--tau-c", type=float, default=DEFAULT_TAU_C * 100, dest="tau_c")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=50)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_all)

    p = sub.add_parser("replay", help="re-render a mesh along a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--camera", required=True, help="text file: fx fy cx cy width height")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a preset")
    p.add_argument("--scene", required=True,
                   help=f"preset name, one of {sorted(SCENE_PRESETS)}")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt-voxel", type=float, default=0.01, dest="gt_voxel",
                   help="ground-truth mesh voxel size in meters")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DatasetError, PipelineError, TrackingDivergence, PlyError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
