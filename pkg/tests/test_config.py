import numpy as np
import pytest

from slamkit.algorithms import registered_algorithms
from slamkit.config import instantiate, parse_config, serialize_config
from slamkit.errors import ConfigError, DatasetError

MINIMAL = """
[dataset]
kind = "synthetic"
root = "/data/seq"
[algorithm]
name = "gt_tsdf"
"""


class TestParse:
    def test_minimal_document_gets_defaults(self):
        c = parse_config(MINIMAL)
        assert c.pipeline.queue_capacity == 8
        assert c.pipeline.render_eval_interval == 50
        assert c.pipeline.sync == "lockstep"
        assert c.pipeline.viz_interval == 10
        assert c.dataset.downsample == 1
        assert c.seed == 0

    def test_unknown_section_named(self):
        doc = MINIMAL.replace("[algorithm]", "[algorthm]")
        with pytest.raises(ConfigError, match="algorthm"):
            parse_config(doc)

    def test_unknown_nested_key_named(self):
        bad = MINIMAL + "\n[pipeline]\nqueue_cap = 3\n"
        with pytest.raises(ConfigError, match="pipeline.queue_cap"):
            parse_config(bad)

    def test_unknown_dataset_key_named(self):
        bad = MINIMAL.replace('kind = "synthetic"', 'kind = "synthetic"\ndownsmaple = 2')
        with pytest.raises(ConfigError, match="dataset.downsmaple"):
            parse_config(bad)

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="algorithm.name"):
            parse_config("[dataset]\nkind='synthetic'\nroot='/x'\n[algorithm]\n")

    def test_type_mismatch(self):
        bad = MINIMAL + "\n[pipeline]\nqueue_capacity = 'big'\n"
        with pytest.raises(ConfigError, match="queue_capacity"):
            parse_config(bad)

    def test_invariants_validated(self):
        with pytest.raises(ConfigError, match="queue_capacity"):
            parse_config(MINIMAL + "\n[pipeline]\nqueue_capacity = 0\n")
        with pytest.raises(ConfigError, match="render_eval_interval"):
            parse_config(MINIMAL + "\n[pipeline]\nrender_eval_interval = 0\n")
        with pytest.raises(ConfigError, match="unregistered"):
            parse_config(MINIMAL.replace("gt_tsdf", "magic_slam"))

    def test_overrides_applied_before_validation(self):
        c = parse_config(MINIMAL, overrides=["pipeline.queue_capacity=2",
                                             "algorithm.tsdf.voxel_size=0.04",
                                             "pipeline.use_gt_pose=true"])
        assert c.pipeline.queue_capacity == 2
        assert c.algorithm.params["tsdf"]["voxel_size"] == 0.04
        assert c.pipeline.use_gt_pose is True

    def test_override_can_fail_validation(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL, overrides=["pipeline.queue_capacity=0"])

    def test_round_trip_stability(self):
        text = """
output_dir = "runs/a"
seed = 7
[dataset]
kind = "synthetic"
root = "/data/seq"
[algorithm]
name = "gt_tsdf"
[algorithm.tsdf]
voxel_size = 0.03
with_color = false
[algorithm.keyframes]
every_n = 7
[pipeline]
sync = "pipelined"
viz_interval = 3
"""
        c1 = parse_config(text)
        c2 = parse_config(serialize_config(c1))
        assert c1 == c2


class TestInstantiate:
    def config_for(self, root, name, extra=""):
        return parse_config(f"""
[dataset]
kind = "synthetic"
root = "{root}"
[algorithm]
name = "{name}"
{extra}
""")

    def test_every_registered_algorithm_instantiates(self, small_dataset):
        for name in registered_algorithms():
            graph = instantiate(self.config_for(small_dataset.root, name))
            assert graph.algorithm.name == name
            assert graph.dataset.frame_count == 20

    def test_icp_tsdf_graph_has_mapper(self, small_dataset):
        graph = instantiate(self.config_for(small_dataset.root, "icp_tsdf"))
        assert graph.mapper_enabled and graph.algorithm.has_mapper

    def test_gt_pose_mode_overrides_tracker(self, small_dataset):
        graph = instantiate(self.config_for(
            small_dataset.root, "icp_tsdf", "[pipeline]\nuse_gt_pose = true"))
        assert graph.algorithm.use_gt_pose
        assert graph.mapper_enabled  # mapper stays: incremental reconstruction mode

    def test_odometry_only_drops_mapper(self, small_dataset):
        graph = instantiate(self.config_for(
            small_dataset.root, "icp_odometry", "[pipeline]\nodometry_only = true"))
        assert not graph.mapper_enabled

    def test_odometry_only_incompatible_with_frame_to_model(self, small_dataset):
        with pytest.raises(ConfigError, match="odometry"):
            instantiate(self.config_for(
                small_dataset.root, "icp_tsdf", "[pipeline]\nodometry_only = true"))

    def test_unreadable_root_is_io_error(self):
        with pytest.raises(DatasetError):
            instantiate(self.config_for("/nonexistent/path", "gt_tsdf"))

    def test_synthetic_volume_bounds_derived(self, small_dataset):
        graph = instantiate(self.config_for(small_dataset.root, "gt_tsdf"))
        vol = graph.algorithm.volume
        # Room half extents 2.0 x 2.0 x 1.1 plus margin.
        assert np.all(vol.origin <= [-2.0, -2.0, -1.1])
        assert np.all(vol.max_bound >= [2.0, 2.0, 1.1])

    def test_explicit_bounds_not_overridden(self, small_dataset):
        graph = instantiate(self.config_for(
            small_dataset.root, "gt_tsdf",
            "[algorithm.tsdf]\nvolume_origin = [-1.0, -1.0, -1.0]\nvolume_extents = [2.0, 2.0, 2.0]"))
        assert np.allclose(graph.algorithm.volume.origin, [-1.0, -1.0, -1.0])
