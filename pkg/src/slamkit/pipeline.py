"""Tracker -> Mapper -> Monitor staging over bounded queues.

Three worker threads share one algorithm instance under its lock. The map
queue is lossless and blocking; the viz queue is lossy (newest wins) so
monitoring can never stall tracking. In lockstep mode the tracker additionally
waits for the mapper's and monitor's per-frame completion signals, which makes
runs bit-for-bit reproducible; in pipelined mode stages free-run subject only
to queue backpressure.
"""

from __future__ import annotations

import logging
import queue
import resource
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from slamkit.config import ComponentGraph, RunConfig
from slamkit.datasets import DatasetDescriptor, load_frame
from slamkit.datasets.images import write_color_png, write_depth_png
from slamkit.errors import PipelineError
from slamkit.evaluate.trajectory import write_tum_trajectory
from slamkit.geometry import Frame, Pose, Trajectory
from slamkit.mesh.ply import write_ply

log = logging.getLogger(__name__)

_SENTINEL = object()


@dataclass
class FramePacket:
    frame: Frame  # est_pose filled
    tracker_time: float
    is_keyframe: bool

    def __post_init__(self):
        if self.frame.est_pose is None:
            raise ValueError("FramePacket requires an estimated pose")


@dataclass
class VizPacket:
    index: int
    est_pose: Pose
    tracker_time: float
    mapper_time: float
    cumulative_fps: float
    map_queue_depth: int
    color: Optional[np.ndarray] = None  # input color, snapshot frames only
    model_depth: Optional[np.ndarray] = None  # rendered from the current map


@dataclass
class RunArtifacts:
    output_dir: Path
    trajectory_path: Path
    stats_path: Path
    mesh_path: Optional[Path] = None
    renders_dir: Optional[Path] = None
    snapshots_dir: Optional[Path] = None
    fps: float = 0.0
    frame_count: int = 0
    integrated_keyframes: List[int] = field(default_factory=list)
    dropped_viz: int = 0
    max_tracker_lead: int = 0
    monitor_write_failures: int = 0


class LossyQueue:
    """Bounded queue that drops the oldest entry when full (newest wins)."""

    def __init__(self, capacity: int):
        self._items = deque()
        self._capacity = capacity
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def put(self, item) -> None:
        with self._cond:
            if len(self._items) >= self._capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._cond.notify()

    def get(self, timeout: float):
        """Next item, or None on timeout; raises EOFError once closed and drained."""
        with self._cond:
            if not self._items:
                if self._closed:
                    raise EOFError
                self._cond.wait(timeout)
            if self._items:
                return self._items.popleft()
            if self._closed:
                raise EOFError
            return None

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


def peak_rss_bytes() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


class _Run:
    """Shared mutable state of one pipeline execution."""

    def __init__(self, graph: ComponentGraph, config: RunConfig, out_dir: Path):
        self.graph = graph
        self.config = config
        self.desc: DatasetDescriptor = graph.dataset
        self.algo = graph.algorithm
        self.camera = graph.dataset.effective_camera()
        self.lockstep = config.pipeline.sync == "lockstep"
        self.out_dir = out_dir
        self.map_q: queue.Queue = queue.Queue(maxsize=config.pipeline.queue_capacity)
        self.viz_q = LossyQueue(config.pipeline.queue_capacity)
        self.cancel = threading.Event()
        self.mapper_done = threading.Event()
        self.monitor_done = threading.Event()
        self.errors: List[PipelineError] = []
        self.err_lock = threading.Lock()
        self.poses: List[Pose] = []
        self.tracker_seconds: List[float] = []
        self.mapper_seconds = {}
        self.max_tracker_lead = 0
        self.monitor_write_failures = 0
        self.last_mapped_index = -1
        self.snapshots_dir = out_dir / "snapshots"

    def _fail(self, stage: str, frame_index, exc: BaseException) -> None:
        with self.err_lock:
            self.errors.append(PipelineError(stage, frame_index, exc))
        self.cancel.set()
        self.mapper_done.set()  # unblock lockstep waits
        self.monitor_done.set()
        self.viz_q.close()

    # ----- tracker -----------------------------------------------------------
    def tracker_worker(self) -> None:
        mapper_on = self.graph.mapper_enabled
        interval = self.config.pipeline.viz_interval
        frame_index = -1
        try:
            for i in range(self.desc.frame_count):
                if self.cancel.is_set():
                    return
                frame_index = i
                t0 = time.perf_counter()
                frame = load_frame(self.desc, i)
                frame = self.algo.pre_process(frame)
                pose = self.algo.track(frame)
                is_kf = self.algo.keyframe_policy(frame, pose) if mapper_on else False
                tracker_time = time.perf_counter() - t0
                frame = frame.with_est_pose(pose)
                self.poses.append(pose)
                self.tracker_seconds.append(tracker_time)
                packet = FramePacket(frame=frame, tracker_time=tracker_time, is_keyframe=is_kf)

                if mapper_on:
                    if self.lockstep:
                        self.mapper_done.clear()
                    self._blocking_put(packet)
                    lead = self.map_q.qsize()
                    if lead > self.max_tracker_lead:
                        self.max_tracker_lead = lead
                    if self.lockstep:
                        self.mapper_done.wait()
                        if self.cancel.is_set():
                            return

                viz = self._build_viz(i, frame, tracker_time, interval, mapper_on)
                if self.lockstep:
                    self.monitor_done.clear()
                self.viz_q.put(viz)
                if self.lockstep:
                    self.monitor_done.wait()
                    if self.cancel.is_set():
                        return
        except Exception as e:  # noqa: BLE001 - surfaced via PipelineError
            self._fail("tracker", frame_index, e)
        finally:
            if self.graph.mapper_enabled:
                self._blocking_put(None)
            self.viz_q.put(_SENTINEL)

    def _blocking_put(self, item) -> None:
        while not self.cancel.is_set():
            try:
                self.map_q.put(item, timeout=0.05)
                return
            except queue.Full:
                continue

    def _build_viz(self, i: int, frame: Frame, tracker_time: float,
                   interval: int, mapper_on: bool) -> VizPacket:
        # In lockstep the mapper already finished frame i, so its time is
        # exact; pipelined stats report the mapper time lazily (0 until known).
        total = sum(self.tracker_seconds) + sum(self.mapper_seconds.values())
        viz = VizPacket(
            index=i, est_pose=frame.est_pose, tracker_time=tracker_time,
            mapper_time=self.mapper_seconds.get(i, 0.0),
            cumulative_fps=(i + 1) / total if total > 0 else 0.0,
            map_queue_depth=self.map_q.qsize(),
        )
        if i % interval == 0:
            viz.color = frame.color
            if mapper_on:
                out = self.algo.get_model_outputs(frame.est_pose, self.camera)
                if out is not None:
                    viz.model_depth = out[1]
        return viz

    # ----- mapper ------------------------------------------------------------
    def mapper_worker(self) -> None:
        while True:
            try:
                packet = self.map_q.get(timeout=0.05)
            except queue.Empty:
                if self.cancel.is_set():
                    return
                continue
            if packet is None:
                return
            index = packet.frame.index
            try:
                if index <= self.last_mapped_index:
                    raise AssertionError(
                        f"frame packets out of order: {index} after {self.last_mapped_index}"
                    )
                self.last_mapped_index = index
                t0 = time.perf_counter()
                self.algo.map_update(packet)
                self.mapper_seconds[index] = time.perf_counter() - t0
            except Exception as e:  # noqa: BLE001
                self._fail("mapper", index, e)
                return
            finally:
                if self.lockstep:
                    self.mapper_done.set()

    # ----- monitor -----------------------------------------------------------
    def monitor_worker(self) -> None:
        stats_path = self.out_dir / "stats.txt"
        try:
            stats = open(stats_path, "w")
        except OSError as e:
            self._fail("monitor", -1, e)
            return
        with stats:
            stats.write("# index\ttracker_s\tmapper_s\tcumulative_fps\tpeak_rss_bytes\n")
            while True:
                try:
                    packet = self.viz_q.get(timeout=0.05)
                except EOFError:
                    return
                if packet is None:
                    if self.cancel.is_set():
                        return
                    continue
                if packet is _SENTINEL:
                    return
                try:
                    self._monitor_step(packet, stats)
                except Exception as e:  # noqa: BLE001 - monitor I/O is non-fatal
                    self.monitor_write_failures += 1
                    log.warning("monitor write failed at frame %d: %s", packet.index, e)
                finally:
                    if self.lockstep:
                        self.monitor_done.set()

    def _monitor_step(self, packet: VizPacket, stats) -> None:
        stats.write(
            f"{packet.index}\t{packet.tracker_time:.6f}\t{packet.mapper_time:.6f}"
            f"\t{packet.cumulative_fps:.4f}\t{peak_rss_bytes()}\n"
        )
        stats.flush()
        if packet.color is not None:
            self.snapshots_dir.mkdir(parents=True, exist_ok=True)
            write_color_png(self.snapshots_dir / f"snap_{packet.index:06d}_color.png",
                            packet.color)
            if packet.model_depth is not None:
                write_depth_png(self.snapshots_dir / f"snap_{packet.index:06d}_depth.png",
                                packet.model_depth, self.desc.camera.depth_scale)


def run(graph: ComponentGraph, config: RunConfig) -> RunArtifacts:
    """Execute the full pipeline over the dataset and export run artifacts.

    Every frame passes through the tracker in input order; the mapper consumes
    frame packets from the lossless map queue; the monitor consumes viz packets
    from the lossy viz queue. Any stage failure cancels its siblings and the
    first error is re-raised with its stage and frame index. Dataset
    exhaustion is normal termination.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = _Run(graph, config, out_dir)

    workers = [threading.Thread(target=state.tracker_worker, name="tracker")]
    if graph.mapper_enabled:
        workers.append(threading.Thread(target=state.mapper_worker, name="mapper"))
    workers.append(threading.Thread(target=state.monitor_worker, name="monitor"))
    for w in workers:
        w.start()
    for w in workers:
        w.join()

    if state.errors:
        raise state.errors[0]
    return export_results(state)


def export_results(state: _Run) -> RunArtifacts:
    """Write the trajectory, the final mesh, and the evaluation-cadence renders."""
    out_dir = state.out_dir
    desc = state.desc
    config = state.config

    traj = Trajectory()
    for t, pose in zip(desc.timestamps, state.poses):
        traj.append(t, pose)
    trajectory_path = out_dir / "trajectory.txt"
    write_tum_trajectory(traj, trajectory_path)

    total = sum(state.tracker_seconds) + sum(state.mapper_seconds.values())
    artifacts = RunArtifacts(
        output_dir=out_dir,
        trajectory_path=trajectory_path,
        stats_path=out_dir / "stats.txt",
        fps=len(state.poses) / total if total > 0 else 0.0,
        frame_count=len(state.poses),
        integrated_keyframes=list(getattr(state.algo, "integrated_frames", [])),
        dropped_viz=state.viz_q.dropped,
        max_tracker_lead=state.max_tracker_lead,
        monitor_write_failures=state.monitor_write_failures,
    )
    if state.snapshots_dir.is_dir():
        artifacts.snapshots_dir = state.snapshots_dir

    if state.graph.mapper_enabled:
        mesh = state.algo.post_process()
        if mesh is not None:
            artifacts.mesh_path = out_dir / "mesh.ply"
            write_ply(mesh, artifacts.mesh_path)
        renders = out_dir / "renders"
        renders.mkdir(parents=True, exist_ok=True)
        for i in range(0, len(state.poses), config.pipeline.render_eval_interval):
            out = state.algo.get_model_outputs(state.poses[i], state.camera)
            if out is None:
                continue
            color, depth = out
            write_color_png(renders / f"render_{i:06d}_color.png", color)
            write_depth_png(renders / f"render_{i:06d}_depth.png", depth,
                            desc.camera.depth_scale)
        artifacts.renders_dir = renders
    return artifacts
