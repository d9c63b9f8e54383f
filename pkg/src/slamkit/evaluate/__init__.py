"""Standardized evaluation: trajectory, rendering, and reconstruction metrics."""

from slamkit.evaluate.image import PsnrResult, psnr, ssim
from slamkit.evaluate.reconstruction import (DepthL1Result, ReconstructionMetrics,
                                             depth_l1, reconstruction_metrics)
from slamkit.evaluate.report import MetricsReport, read_report, write_report
from slamkit.evaluate.trajectory import (associate_trajectories, ate_rmse,
                                         read_tum_trajectory, umeyama,
                                         write_tum_trajectory)

__all__ = [
    "DepthL1Result",
    "MetricsReport",
    "PsnrResult",
    "ReconstructionMetrics",
    "associate_trajectories",
    "ate_rmse",
    "depth_l1",
    "psnr",
    "read_report",
    "read_tum_trajectory",
    "reconstruction_metrics",
    "ssim",
    "umeyama",
    "write_report",
    "write_tum_trajectory",
]
