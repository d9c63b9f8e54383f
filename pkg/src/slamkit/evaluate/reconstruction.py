"""Reconstruction quality: sampled-surface distances and rendered-depth error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slamkit.datasets import DatasetDescriptor, load_frame
from slamkit.mesh import Bvh, TriangleMesh, nearest_distances, raycast_mesh_depth, sample_points

DEFAULT_SAMPLES = 200_000
DEFAULT_TAU_F = 0.05  # meters; precision/recall threshold
DEFAULT_TAU_C = 0.05  # meters; completion-ratio threshold


@dataclass(frozen=True)
class ReconstructionMetrics:
    accuracy_cm: float
    completion_cm: float
    completion_ratio_pct: float
    precision_pct: float
    recall_pct: float
    f1_pct: float


def reconstruction_metrics(recon: TriangleMesh, gt: TriangleMesh,
                           n_samples: int = DEFAULT_SAMPLES,
                           tau_f: float = DEFAULT_TAU_F, tau_c: float = DEFAULT_TAU_C,
                           seed: int = 0) -> ReconstructionMetrics:
    """Point-sampled surface comparison, deterministic for a given seed.

    Accuracy and Completion are the mean nearest distances recon->gt and
    gt->recon (cm); Completion Ratio is the share of gt samples within tau_c;
    Precision/Recall count samples within tau_f; F1 is their harmonic mean.
    """
    if recon.is_empty() or gt.is_empty():
        raise ValueError("reconstruction metrics need two non-empty meshes")
    pr = sample_points(recon, n_samples, seed)
    pg = sample_points(gt, n_samples, seed)
    d_rg = nearest_distances(pr, pg)
    d_gr = nearest_distances(pg, pr)
    precision = float(np.mean(d_rg < tau_f) * 100.0)
    recall = float(np.mean(d_gr < tau_f) * 100.0)
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return ReconstructionMetrics(
        accuracy_cm=float(d_rg.mean() * 100.0),
        completion_cm=float(d_gr.mean() * 100.0),
        completion_ratio_pct=float(np.mean(d_gr < tau_c) * 100.0),
        precision_pct=precision,
        recall_pct=recall,
        f1_pct=f1,
    )


@dataclass(frozen=True)
class DepthL1Result:
    cm: float
    views_used: int
    views_skipped: int


def depth_l1(recon: TriangleMesh, desc: DatasetDescriptor, stride: int = 50) -> DepthL1Result:
    """Mean |rendered - ground truth| depth in cm at every stride-th frame's
    ground-truth pose, pooled over pixels where both depths are valid.
    Views with no valid overlap are skipped and counted."""
    if recon.is_empty():
        raise ValueError("cannot render depth from an empty mesh")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    bvh = Bvh(recon)
    cam = desc.effective_camera()
    total = 0.0
    count = 0
    used = skipped = 0
    for i in range(0, desc.frame_count, stride):
        frame = load_frame(desc, i)
        if frame.gt_pose is None:
            raise ValueError(f"frame {i} has no ground-truth pose")
        rendered = raycast_mesh_depth(bvh, cam, frame.gt_pose)
        both = (rendered > 0) & (frame.depth > 0)
        if not both.any():
            skipped += 1
            continue
        used += 1
        total += float(np.abs(rendered[both] - frame.depth[both]).sum())
        count += int(both.sum())
    if used == 0:
        raise ValueError("no evaluation view has valid depth overlap")
    return DepthL1Result(cm=total / count * 100.0, views_used=used, views_skipped=skipped)
