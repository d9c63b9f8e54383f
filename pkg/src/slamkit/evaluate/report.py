"""Structured metrics report with a stable JSON schema.

Absent metrics serialize as explicit nulls so downstream tooling sees the
same key set for every run; the parameters block makes thresholds, sample
counts, seeds, and the alignment mode self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class MetricsReport:
    ate_rmse_cm: Optional[float] = None
    psnr_db: Optional[float] = None
    psnr_capped: Optional[bool] = None
    ssim: Optional[float] = None
    precision_pct: Optional[float] = None
    recall_pct: Optional[float] = None
    f1_pct: Optional[float] = None
    depth_l1_cm: Optional[float] = None
    accuracy_cm: Optional[float] = None
    completion_cm: Optional[float] = None
    completion_ratio_pct: Optional[float] = None
    fps: Optional[float] = None
    peak_memory_bytes: Optional[int] = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("precision_pct", "recall_pct", "f1_pct", "completion_ratio_pct"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100], got {v}")
        if self.ssim is not None and not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"ssim must lie in [-1, 1], got {self.ssim}")

    def to_json_dict(self) -> dict:
        return {
            "trajectory": {"ate_rmse_cm": self.ate_rmse_cm},
            "rendering": {
                "psnr_db": self.psnr_db,
                "psnr_capped": self.psnr_capped,
                "ssim": self.ssim,
            },
            "reconstruction": {
                "precision_pct": self.precision_pct,
                "recall_pct": self.recall_pct,
                "f1_pct": self.f1_pct,
                "depth_l1_cm": self.depth_l1_cm,
                "accuracy_cm": self.accuracy_cm,
                "completion_cm": self.completion_cm,
                "completion_ratio_pct": self.completion_ratio_pct,
            },
            "performance": {
                "fps": self.fps,
                "peak_memory_bytes": self.peak_memory_bytes,
            },
            "parameters": dict(self.parameters),
        }


def write_report(report: MetricsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")


def read_report(path) -> MetricsReport:
    doc = json.loads(Path(path).read_text())
    return MetricsReport(
        ate_rmse_cm=doc["trajectory"]["ate_rmse_cm"],
        psnr_db=doc["rendering"]["psnr_db"],
        psnr_capped=doc["rendering"]["psnr_capped"],
        ssim=doc["rendering"]["ssim"],
        precision_pct=doc["reconstruction"]["precision_pct"],
        recall_pct=doc["reconstruction"]["recall_pct"],
        f1_pct=doc["reconstruction"]["f1_pct"],
        depth_l1_cm=doc["reconstruction"]["depth_l1_cm"],
        accuracy_cm=doc["reconstruction"]["accuracy_cm"],
        completion_cm=doc["reconstruction"]["completion_cm"],
        completion_ratio_pct=doc["reconstruction"]["completion_ratio_pct"],
        fps=doc["performance"]["fps"],
        peak_memory_bytes=doc["performance"]["peak_memory_bytes"],
        parameters=doc.get("parameters", {}),
    )
