"""Declarative run configuration: TOML parsing with unknown-key rejection,
CLI overrides, and instantiation of the component graph."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as toml
else:
    import tomli as toml

from slamkit.algorithms import Algorithm, create_algorithm, registered_algorithms
from slamkit.datasets import DatasetDescriptor, open_dataset
from slamkit.errors import ConfigError

SYNC_MODES = ("lockstep", "pipelined")
ALGORITHM_GROUPS = ("icp", "tsdf", "keyframes")
CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "depth_scale")


@dataclass
class DatasetConfig:
    kind: str
    root: str
    downsample: int = 1
    frame_start: int = 0
    frame_end: Optional[int] = None
    max_dt: float = 0.02
    camera: Optional[dict] = None


@dataclass
class AlgorithmConfig:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class PipelineConfig:
    queue_capacity: int = 8
    sync: str = "lockstep"
    viz_interval: int = 10
    render_eval_interval: int = 50
    odometry_only: bool = False
    use_gt_pose: bool = False


@dataclass
class RunConfig:
    dataset: DatasetConfig
    algorithm: AlgorithmConfig
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    output_dir: str = "output"
    seed: int = 0


@dataclass
class ComponentGraph:
    dataset: DatasetDescriptor
    algorithm: Algorithm
    mapper_enabled: bool


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigError(f"missing required key {context}.{key}" if context else
                          f"missing required key {key}")
    return table[key]


def _typed(value, types, context):
    if types is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{context} must be a boolean, got {value!r}")
        return value
    if types is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{context} must be an integer, got {value!r}")
        return value
    if types is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{context} must be a number, got {value!r}")
        return float(value)
    if types is str:
        if not isinstance(value, str):
            raise ConfigError(f"{context} must be a string, got {value!r}")
        return value
    raise AssertionError(types)


def parse_config(text: str, overrides: Optional[List[str]] = None) -> RunConfig:
    """Parse a TOML run configuration; reject unknown or ill-typed keys.

    `overrides` are "section.key=value" strings applied after parsing the
    document and before validation.
    """
    try:
        doc = toml.loads(text)
    except toml.TOMLDecodeError as e:
        raise ConfigError(f"malformed configuration: {e}") from e
    for ov in overrides or []:
        _apply_override(doc, ov)

    known_top = {"dataset", "algorithm", "pipeline", "output_dir", "seed"}
    for key in doc:
        if key not in known_top:
            raise ConfigError(f"unknown key {key}")

    dtab = _require(doc, "dataset", "")
    known = {"kind", "root", "downsample", "frame_start", "frame_end", "max_dt", "camera"}
    for key in dtab:
        if key not in known:
            raise ConfigError(f"unknown key dataset.{key}")
    camera = dtab.get("camera")
    if camera is not None:
        for key in camera:
            if key not in CAMERA_KEYS:
                raise ConfigError(f"unknown key dataset.camera.{key}")
        camera = {k: _typed(v, float, f"dataset.camera.{k}") for k, v in camera.items()}
        camera["width"] = int(camera["width"]) if "width" in camera else None
        camera["height"] = int(camera["height"]) if "height" in camera else None
        camera = {k: v for k, v in camera.items() if v is not None}
    dataset = DatasetConfig(
        kind=_typed(_require(dtab, "kind", "dataset"), str, "dataset.kind"),
        root=_typed(_require(dtab, "root", "dataset"), str, "dataset.root"),
        downsample=_typed(dtab.get("downsample", 1), int, "dataset.downsample"),
        frame_start=_typed(dtab.get("frame_start", 0), int, "dataset.frame_start"),
        frame_end=(None if dtab.get("frame_end") is None
                   else _typed(dtab["frame_end"], int, "dataset.frame_end")),
        max_dt=_typed(dtab.get("max_dt", 0.02), float, "dataset.max_dt"),
        camera=camera,
    )

    atab = _require(doc, "algorithm", "")
    known = {"name"} | set(ALGORITHM_GROUPS)
    for key in atab:
        if key not in known:
            raise ConfigError(f"unknown key algorithm.{key}")
    algorithm = AlgorithmConfig(
        name=_typed(_require(atab, "name", "algorithm"), str, "algorithm.name"),
        params={g: dict(atab[g]) for g in ALGORITHM_GROUPS if g in atab},
    )

    ptab = doc.get("pipeline", {})
    known = {"queue_capacity", "sync", "viz_interval", "render_eval_interval",
             "odometry_only", "use_gt_pose"}
    for key in ptab:
        if key not in known:
            raise ConfigError(f"unknown key pipeline.{key}")
    pipeline = PipelineConfig(
        queue_capacity=_typed(ptab.get("queue_capacity", 8), int, "pipeline.queue_capacity"),
        sync=_typed(ptab.get("sync", "lockstep"), str, "pipeline.sync"),
        viz_interval=_typed(ptab.get("viz_interval", 10), int, "pipeline.viz_interval"),
        render_eval_interval=_typed(ptab.get("render_eval_interval", 50), int,
                                    "pipeline.render_eval_interval"),
        odometry_only=_typed(ptab.get("odometry_only", False), bool, "pipeline.odometry_only"),
        use_gt_pose=_typed(ptab.get("use_gt_pose", False), bool, "pipeline.use_gt_pose"),
    )

    config = RunConfig(
        dataset=dataset,
        algorithm=algorithm,
        pipeline=pipeline,
        output_dir=_typed(doc.get("output_dir", "output"), str, "output_dir"),
        seed=_typed(doc.get("seed", 0), int, "seed"),
    )
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.pipeline.queue_capacity < 1:
        raise ConfigError("pipeline.queue_capacity must be >= 1")
    if config.pipeline.render_eval_interval < 1:
        raise ConfigError("pipeline.render_eval_interval must be >= 1")
    if config.pipeline.viz_interval < 1:
        raise ConfigError("pipeline.viz_interval must be >= 1")
    if config.pipeline.sync not in SYNC_MODES:
        raise ConfigError(f"pipeline.sync must be one of {SYNC_MODES}")
    if config.algorithm.name not in registered_algorithms():
        raise ConfigError(
            f"unregistered algorithm {config.algorithm.name!r}; "
            f"registered: {registered_algorithms()}"
        )
    if config.dataset.downsample < 1:
        raise ConfigError("dataset.downsample must be >= 1")
    if config.seed < 0:
        raise ConfigError("seed must be non-negative")


def _apply_override(doc: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} must look like section.key=value")
    path, raw = spec.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {spec!r} has an empty key path")
    try:
        value = toml.loads(f"v = {raw.strip()}")["v"]
    except toml.TOMLDecodeError:
        value = raw.strip()
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {spec!r} descends into a non-table value")
    node[keys[-1]] = value


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def serialize_config(config: RunConfig) -> str:
    """Normalized TOML rendering; parse(serialize(c)) == c."""
    lines = [
        f"output_dir = {_toml_value(config.output_dir)}",
        f"seed = {_toml_value(config.seed)}",
        "",
        "[dataset]",
        f"kind = {_toml_value(config.dataset.kind)}",
        f"root = {_toml_value(config.dataset.root)}",
        f"downsample = {_toml_value(config.dataset.downsample)}",
        f"frame_start = {_toml_value(config.dataset.frame_start)}",
    ]
    if config.dataset.frame_end is not None:
        lines.append(f"frame_end = {_toml_value(config.dataset.frame_end)}")
    lines.append(f"max_dt = {_toml_value(config.dataset.max_dt)}")
    if config.dataset.camera:
        lines += ["", "[dataset.camera]"]
        lines += [f"{k} = {_toml_value(v)}" for k, v in sorted(config.dataset.camera.items())]
    lines += ["", "[algorithm]", f"name = {_toml_value(config.algorithm.name)}"]
    for group in ALGORITHM_GROUPS:
        if group in config.algorithm.params:
            lines += ["", f"[algorithm.{group}]"]
            lines += [f"{k} = {_toml_value(v)}"
                      for k, v in sorted(config.algorithm.params[group].items())]
    p = config.pipeline
    lines += [
        "",
        "[pipeline]",
        f"queue_capacity = {_toml_value(p.queue_capacity)}",
        f"sync = {_toml_value(p.sync)}",
        f"viz_interval = {_toml_value(p.viz_interval)}",
        f"render_eval_interval = {_toml_value(p.render_eval_interval)}",
        f"odometry_only = {_toml_value(p.odometry_only)}",
        f"use_gt_pose = {_toml_value(p.use_gt_pose)}",
    ]
    return "\n".join(lines) + "\n"


def _synthetic_volume_bounds(desc: DatasetDescriptor, anchored_at_first_camera: bool,
                             margin: float):
    """Room-derived TSDF bounds; transformed when the world frame is anchored
    at the first camera instead of the dataset frame."""
    from slamkit.datasets.synthetic import SdfScene

    scene = SdfScene.from_json(desc.meta["scene"])
    lo, hi = scene.bounds(margin=margin)
    if not anchored_at_first_camera:
        return lo, hi - lo
    if not desc.gt_poses:
        return None
    t_wc = np.linalg.inv(desc.gt_poses[0].to_matrix())
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                        for z in (lo[2], hi[2])])
    corners = corners @ t_wc[:3, :3].T + t_wc[:3, 3]
    return corners.min(axis=0), corners.max(axis=0) - corners.min(axis=0)


def instantiate(config: RunConfig) -> ComponentGraph:
    """Open the dataset and build the algorithm named by the registry.

    use_gt_pose swaps in ground-truth tracking regardless of the algorithm's
    own tracker; odometry_only disables the mapper stage.
    """
    desc = open_dataset(
        config.dataset.kind, config.dataset.root, downsample=config.dataset.downsample,
        frame_start=config.dataset.frame_start, frame_end=config.dataset.frame_end,
        camera_override=config.dataset.camera, max_dt=config.dataset.max_dt,
    )
    camera = desc.effective_camera()
    params = {g: dict(t) for g, t in config.algorithm.params.items()}

    name = config.algorithm.name
    use_gt = config.pipeline.use_gt_pose
    probe = create_algorithm(name, camera, None, use_gt_pose=use_gt)
    mapper_enabled = probe.has_mapper and not config.pipeline.odometry_only
    if config.pipeline.odometry_only and name == "icp_tsdf" and not use_gt:
        raise ConfigError(
            "algorithm 'icp_tsdf' tracks against its own map and cannot run "
            "odometry-only; use 'icp_odometry' or set pipeline.use_gt_pose"
        )

    # Size the TSDF volume from synthetic scene metadata unless the config
    # pins the bounds explicitly.
    if mapper_enabled and desc.kind == "synthetic" and desc.meta:
        tsdf = params.setdefault("tsdf", {})
        if "volume_origin" not in tsdf and "volume_extents" not in tsdf:
            anchored = not use_gt and name != "gt_tsdf"
            bounds = _synthetic_volume_bounds(desc, anchored, margin=0.3)
            if bounds is not None:
                tsdf["volume_origin"] = [float(v) for v in bounds[0]]
                tsdf["volume_extents"] = [float(v) for v in bounds[1]]

    algorithm = create_algorithm(name, camera, params, use_gt_pose=use_gt)
    return ComponentGraph(dataset=desc, algorithm=algorithm, mapper_enabled=mapper_enabled)
