import json

import numpy as np
import pytest

from vnfscale import errors
from vnfscale.model import (
    FEATURE_DIM,
    LinkSpec,
    NetworkTopology,
    NodeSpec,
    ScaleAction,
    ScalingGrid,
    SfcRequest,
    VnfType,
    adjacency_and_edge_attrs,
    apply_scaling,
    load_requests,
    load_topology,
    node_features,
    save_requests,
    save_topology,
    topology_from_doc,
    topology_to_doc,
    validate_topology,
    zero_deployment,
)


def test_vnf_type_labels():
    assert VnfType.FIREWALL.label == "Firewall"
    assert VnfType.from_label("LB") is VnfType.LB
    assert [int(v) for v in VnfType] == [0, 1, 2, 3, 4]
    with pytest.raises(errors.FormatError):
        VnfType.from_label("CDN")


def test_scale_action_delta():
    assert [a - 1 for a in (ScaleAction.IN, ScaleAction.KEEP, ScaleAction.OUT)] == [-1, 0, 1]


class TestTopology:
    def test_latency_matrix_symmetric(self, triangle):
        lat = triangle.latency
        assert lat[0, 1] == lat[1, 0] == 5.0
        assert lat[1, 2] == 7.0
        assert np.isinf(lat[0, 0])
        assert (lat == lat.T).all()

    def test_deployable_mask(self, triangle):
        assert list(triangle.deployable_mask) == [True, True, False]
        assert list(triangle.deployable_ids) == [0, 1]
        assert list(triangle.non_deployable_ids) == [2]

    def test_non_dense_ids_rejected(self):
        with pytest.raises(errors.FormatError):
            NetworkTopology((NodeSpec(0, True), NodeSpec(2, True)), (LinkSpec(0, 2, 1.0),))

    def test_unknown_link_endpoint(self):
        with pytest.raises(errors.UnknownNode):
            NetworkTopology((NodeSpec(0, True), NodeSpec(1, True)), (LinkSpec(0, 5, 1.0),))

    def test_validate_self_loop(self):
        t = NetworkTopology(
            (NodeSpec(0, True), NodeSpec(1, True)),
            (LinkSpec(0, 1, 1.0), LinkSpec(1, 1, 2.0)),
        )
        with pytest.raises(errors.SelfLoop):
            validate_topology(t)

    def test_validate_duplicate_link(self):
        t = NetworkTopology(
            (NodeSpec(0, True), NodeSpec(1, True)),
            (LinkSpec(0, 1, 1.0), LinkSpec(1, 0, 3.0)),
        )
        with pytest.raises(errors.DuplicateLink):
            validate_topology(t)

    def test_validate_disconnected(self):
        t = NetworkTopology(
            tuple(NodeSpec(i, True) for i in range(4)),
            (LinkSpec(0, 1, 1.0), LinkSpec(2, 3, 1.0)),
        )
        with pytest.raises(errors.Disconnected):
            validate_topology(t)

    def test_validate_no_deployable(self):
        t = NetworkTopology(
            (NodeSpec(0, False), NodeSpec(1, False)), (LinkSpec(0, 1, 1.0),)
        )
        with pytest.raises(errors.NoDeployableNode):
            validate_topology(t)

    def test_validate_nonpositive_latency(self):
        t = NetworkTopology(
            (NodeSpec(0, True), NodeSpec(1, True)), (LinkSpec(0, 1, 0.0),)
        )
        with pytest.raises(errors.FormatError):
            validate_topology(t)

    def test_parallel_links_take_min(self):
        # duplicate links are a validation error but the matrix stays sane
        t = NetworkTopology(
            (NodeSpec(0, True), NodeSpec(1, True)),
            (LinkSpec(0, 1, 9.0), LinkSpec(0, 1, 4.0)),
        )
        assert t.latency[0, 1] == 4.0

    def test_adjacency_and_edge_attrs(self, triangle):
        adj, ea = adjacency_and_edge_attrs(triangle)
        assert adj[0, 1] == adj[1, 0] == 1.0
        assert adj[0, 0] == 0.0
        assert ea[0, 1] == pytest.approx(1 / 5.0)
        assert ea[2, 2] == 0.0


class TestRequest:
    def test_empty_chain_rejected(self):
        with pytest.raises(errors.FormatError):
            SfcRequest(0, 0, 1, ())

    def test_duplicate_chain_rejected(self):
        with pytest.raises(errors.FormatError):
            SfcRequest(0, 0, 1, (VnfType.NAT, VnfType.NAT))

    def test_bad_sla_rejected(self):
        with pytest.raises(errors.FormatError):
            SfcRequest(0, 0, 1, (VnfType.NAT,), sla_ms=0.0)

    def test_with_sla(self):
        r = SfcRequest(3, 0, 1, (VnfType.IDS,))
        r2 = r.with_sla(12.5)
        assert r.sla_ms is None and r2.sla_ms == 12.5
        assert r2.chain == r.chain


class TestDeployment:
    def test_zero_deployment(self, triangle):
        d = zero_deployment(triangle)
        assert d.counts.shape == (3, 5)
        assert d.total_instances == 0

    def test_counts_readonly(self, triangle):
        d = zero_deployment(triangle)
        with pytest.raises(ValueError):
            d.counts[0, 0] = 1

    def test_negative_counts_rejected(self, triangle):
        d = zero_deployment(triangle)
        bad = d.counts.copy()
        bad[0, 0] = -1
        with pytest.raises(errors.FormatError):
            d.replace_counts(bad)

    def test_nondeployable_counts_rejected(self, triangle):
        d = zero_deployment(triangle)
        bad = d.counts.copy()
        bad[2, 0] = 1  # node 2 is not deployable
        with pytest.raises(errors.FormatError):
            d.replace_counts(bad)


class TestScaling:
    def test_apply_scaling_deltas(self, triangle):
        d = zero_deployment(triangle)
        start = d.counts.copy()
        start[0, 0] = 2
        start[1, 3] = 1
        d = d.replace_counts(start)
        actions = np.full((2, 5), ScaleAction.KEEP, dtype=np.int8)
        actions[0, 0] = ScaleAction.OUT
        actions[1, 3] = ScaleAction.IN
        actions[1, 4] = ScaleAction.IN  # already zero, clamps
        out = apply_scaling(d, ScalingGrid(triangle, actions))
        assert out.counts[0, 0] == 3
        assert out.counts[1, 3] == 0
        assert out.counts[1, 4] == 0

    def test_apply_scaling_never_negative(self, triangle, rng):
        d = zero_deployment(triangle)
        for _ in range(25):
            actions = rng.integers(0, 3, size=(2, 5)).astype(np.int8)
            d = apply_scaling(d, ScalingGrid(triangle, actions))
            assert (d.counts >= 0).all()
            assert (d.counts[2] == 0).all()

    def test_grid_shape_checked(self, triangle):
        with pytest.raises(errors.ShapeMismatch):
            ScalingGrid(triangle, np.zeros((3, 5), dtype=np.int8))

    def test_grid_value_range(self, triangle):
        bad = np.full((2, 5), 3, dtype=np.int8)
        with pytest.raises(errors.FormatError):
            ScalingGrid(triangle, bad)

    def test_all_keep_is_identity(self, triangle, rng):
        d = zero_deployment(triangle)
        counts = d.counts.copy()
        counts[:2] = rng.integers(0, 3, size=(2, 5))
        d = d.replace_counts(counts)
        out = apply_scaling(d, ScalingGrid.all_keep(triangle))
        assert (out.counts == d.counts).all()


class TestNodeFeatures:
    def test_layout(self, triangle):
        d = zero_deployment(triangle)
        counts = d.counts.copy()
        counts[0, 1] = 2  # NAT x2 at node 0
        counts[1, 4] = 1  # LB at node 1 (not in chain below)
        d = d.replace_counts(counts)
        r = SfcRequest(0, 0, 2, (VnfType.NAT, VnfType.IDS))
        x = node_features(triangle, d, r)
        assert x.shape == (3, FEATURE_DIM)
        assert x[0, 0] == 1.0  # ingress flag
        assert x[2, 6] == 1.0  # egress flag
        assert x[0, 1 + VnfType.NAT] == 2.0
        assert x[1, 1 + VnfType.LB] == 0.0  # masked: LB not in the chain
        assert x[2, 0] == 0.0

    def test_bad_endpoint(self, triangle):
        d = zero_deployment(triangle)
        r = SfcRequest(0, 0, 9, (VnfType.NAT,))
        with pytest.raises(errors.UnknownNode):
            node_features(triangle, d, r)


class TestPersistence:
    def test_topology_round_trip(self, tmp_path, internet2):
        p = tmp_path / "topo.json"
        save_topology(internet2, p)
        t2 = load_topology(p)
        assert t2.name == internet2.name
        assert t2.num_nodes == internet2.num_nodes
        assert np.array_equal(t2.latency, internet2.latency)
        assert np.array_equal(t2.deployable_mask, internet2.deployable_mask)

    def test_topology_unknown_field_rejected(self):
        doc = topology_to_doc(
            NetworkTopology((NodeSpec(0, True), NodeSpec(1, True)), (LinkSpec(0, 1, 1.0),))
        )
        doc["color"] = "blue"
        with pytest.raises(errors.FormatError):
            topology_from_doc(doc)

    def test_topology_doc_fields(self, line3):
        doc = topology_to_doc(line3)
        assert set(doc) == {"name", "nodes", "links"}
        assert set(doc["nodes"][0]) == {"id", "deployable"}
        assert set(doc["links"][0]) == {"u", "v", "latency_ms"}

    def test_requests_round_trip(self, tmp_path):
        reqs = [
            SfcRequest(0, 0, 2, (VnfType.NAT, VnfType.IDS), 12.0),
            SfcRequest(1, 2, 0, (VnfType.LB,)),
        ]
        p = tmp_path / "reqs.jsonl"
        save_requests(reqs, p)
        back = load_requests(p)
        assert back == reqs
        # chains serialize as labels, not numbers
        first = json.loads(p.read_text().splitlines()[0])
        assert first["chain"] == ["NAT", "IDS"]

    def test_load_invalid_topology_fails(self, tmp_path):
        doc = {
            "name": "bad",
            "nodes": [{"id": 0, "deployable": True}, {"id": 1, "deployable": True}],
            "links": [],
        }
        p = tmp_path / "t.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(errors.Disconnected):
            load_topology(p)
