import json
import os

import numpy as np
import pytest

from vnfscale.dataset import (
    DatasetEntry,
    build_internet2,
    build_mec,
    entry_from_doc,
    entry_to_doc,
    gen_requests,
    load_dataset,
    make_dataset,
    perturb,
    random_deployment,
    save_dataset,
    zero_deployment,
)
from vnfscale.errors import FormatError
from vnfscale.model import N_VNF_TYPES
from vnfscale.routing import RewardEvaluator
from vnfscale.solver import SolverConfig


class TestTopologies:
    def test_internet2_shape(self, internet2):
        assert internet2.num_nodes == 12
        assert len(internet2.links) == 15
        assert internet2.name == "internet2"

    def test_internet2_default_latency(self, internet2):
        assert all(l.latency_ms == 10.0 for l in internet2.links)

    def test_internet2_latency_overrides(self):
        t = build_internet2(latencies={(0, 1): 25.0})
        lat = {(l.u, l.v): l.latency_ms for l in t.links}
        assert lat[(0, 1)] == 25.0
        assert lat[(0, 3)] == 10.0

    def test_internet2_non_deployable_defaults(self, internet2):
        assert tuple(internet2.non_deployable_ids) == (3, 6, 11)

    def test_mec_shape(self):
        t = build_mec()
        assert t.num_nodes == 14
        assert len(t.links) == 13
        assert tuple(t.non_deployable_ids) == (0, 1, 2, 3, 4)

    def test_mec_latency_spread(self):
        t = build_mec(base_ms=1000.0, span_ms=4000.0)
        lats = [l.latency_ms for l in t.links]
        assert min(lats) == 1000.0
        assert max(lats) == 5000.0
        assert len(set(lats)) == len(lats)  # evenly spaced, all distinct


class TestGenRequests:
    def test_count_and_ids(self, internet2):
        reqs = gen_requests(internet2, 8, seed=0)
        assert [r.id for r in reqs] == list(range(8))

    def test_chain_properties(self, internet2):
        for seed in range(30):
            for r in gen_requests(internet2, 5, seed):
                assert len(r.chain) in (3, 4)
                assert len(set(r.chain)) == len(r.chain)
                assert all(0 <= v < N_VNF_TYPES for v in r.chain)
                assert r.ingress != r.egress
                assert r.sla_ms is None

    def test_both_chain_sizes_occur(self, internet2):
        sizes = {
            len(r.chain) for s in range(20) for r in gen_requests(internet2, 4, s)
        }
        assert sizes == {3, 4}

    def test_deterministic(self, internet2):
        a = gen_requests(internet2, 6, seed=3)
        b = gen_requests(internet2, 6, seed=3)
        assert a == b

    def test_needs_positive_n(self, internet2):
        with pytest.raises(FormatError):
            gen_requests(internet2, 0, seed=0)


class TestInitials:
    def test_perturb_steps_at_most_one(self, internet2):
        base = random_deployment(internet2, 1)
        for seed in range(20):
            p = perturb(base, seed)
            diff = p.counts.astype(int) - base.counts.astype(int)
            assert np.abs(diff).max() <= 1
            assert (p.counts >= 0).all()

    def test_perturb_clamps_at_zero(self, internet2):
        z = zero_deployment(internet2)
        for seed in range(10):
            assert perturb(z, seed).counts.min() == 0

    def test_perturb_deterministic(self, internet2):
        base = random_deployment(internet2, 1)
        assert np.array_equal(perturb(base, 7).counts, perturb(base, 7).counts)

    def test_random_cells_binary(self, internet2):
        for seed in range(20):
            d = random_deployment(internet2, seed)
            assert set(np.unique(d.counts)) <= {0, 1}
            assert d.counts[internet2.non_deployable_ids].sum() == 0

    def test_zero(self, internet2):
        assert zero_deployment(internet2).total_instances == 0


class TestMakeDataset:
    def test_split_sizes(self, tiny_dataset):
        assert len(tiny_dataset.train) == 8
        assert len(tiny_dataset.val) == 1
        assert len(tiny_dataset.test) == 1

    def test_minimum_entries(self, internet2):
        with pytest.raises(FormatError):
            make_dataset(internet2, 9, 3, SolverConfig(mode="local_search"), seed=0)

    def test_bad_init_mode(self, internet2):
        with pytest.raises(FormatError):
            make_dataset(
                internet2, 10, 3, SolverConfig(mode="local_search"), seed=0,
                init_mode="warm",
            )

    def test_splits_disjoint_and_cover(self, tiny_dataset):
        ids = [e.id for s in ("train", "val", "test") for e in tiny_dataset.split(s)]
        assert sorted(ids) == list(range(10))

    def test_unknown_split(self, tiny_dataset):
        with pytest.raises(FormatError):
            tiny_dataset.split("holdout")

    def test_slas_assigned(self, tiny_dataset):
        for e in tiny_dataset.train:
            for r in e.requests:
                assert r.sla_ms is not None and r.sla_ms > 0

    def test_reference_meets_own_slas(self, tiny_dataset):
        # slack 0.95 guarantees reference delay <= 0.95 * sla < sla
        t = tiny_dataset.topology
        for e in tiny_dataset.test + tiny_dataset.val:
            ev = RewardEvaluator(t, e.requests, 0.2)
            m = ev.metrics(e.reference)
            assert m.avg_slav == 0.0

    def test_initials_are_perturbations(self, tiny_dataset):
        for e in tiny_dataset.train:
            diff = e.initial.counts.astype(int) - e.reference.counts.astype(int)
            assert np.abs(diff).max() <= 1

    def test_deterministic(self, internet2):
        cfg = SolverConfig(mode="local_search", alpha=0.2)
        a = make_dataset(internet2, 10, 3, cfg, seed=5)
        b = make_dataset(internet2, 10, 3, cfg, seed=5)
        for ea, eb in zip(a.train + a.val + a.test, b.train + b.val + b.test):
            assert ea.id == eb.id
            assert np.array_equal(ea.reference.counts, eb.reference.counts)
            assert np.array_equal(ea.initial.counts, eb.initial.counts)
            assert ea.requests == eb.requests

    def test_seed_changes_content(self, internet2):
        cfg = SolverConfig(mode="local_search", alpha=0.2)
        a = make_dataset(internet2, 10, 3, cfg, seed=5)
        b = make_dataset(internet2, 10, 3, cfg, seed=6)
        assert any(
            ea.requests != eb.requests
            for ea, eb in zip(a.train, b.train)
        )

    def test_manifest_fields(self, tiny_dataset):
        m = tiny_dataset.manifest
        assert m["n_entries"] == 10
        assert m["requests_per_entry"] == 3
        assert m["alpha"] == 0.2
        assert m["slack"] == 0.95
        assert m["init_mode"] == "perturb"
        assert m["topology_name"] == "internet2"
        assert m["num_nodes"] == 12
        assert m["num_links"] == 15
        assert m["solver"]["mode"] == "local_search"
        assert sorted(m["splits"]) == ["test", "train", "val"]

    def test_zero_init_mode(self, internet2):
        cfg = SolverConfig(mode="local_search", alpha=0.2)
        ds = make_dataset(internet2, 10, 2, cfg, seed=1, init_mode="zero")
        assert all(e.initial.total_instances == 0 for e in ds.train)


class TestPersistence:
    def test_entry_doc_round_trip(self, tiny_dataset):
        t = tiny_dataset.topology
        e = tiny_dataset.train[0]
        back = entry_from_doc(entry_to_doc(e), t)
        assert back == e

    def test_entry_doc_unknown_field(self, tiny_dataset):
        doc = entry_to_doc(tiny_dataset.train[0])
        doc["comment"] = "x"
        with pytest.raises(FormatError):
            entry_from_doc(doc, tiny_dataset.topology)

    def test_entry_doc_missing_field(self, tiny_dataset):
        doc = entry_to_doc(tiny_dataset.train[0])
        del doc["requests"]
        with pytest.raises(FormatError):
            entry_from_doc(doc, tiny_dataset.topology)

    def test_save_load_round_trip(self, tiny_dataset, tmp_path):
        root = str(tmp_path / "ds")
        save_dataset(tiny_dataset, root)
        back = load_dataset(root)
        assert back.manifest == tiny_dataset.manifest
        assert back.topology.name == tiny_dataset.topology.name
        for split in ("train", "val", "test"):
            assert back.split(split) == tiny_dataset.split(split)

    def test_layout_on_disk(self, tiny_dataset, tmp_path):
        root = tmp_path / "ds"
        save_dataset(tiny_dataset, str(root))
        assert (root / "topology.json").exists()
        assert (root / "manifest.json").exists()
        files = list((root / "entries" / "train").glob("*.json"))
        assert len(files) == 8

    def test_save_is_deterministic(self, tiny_dataset, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        save_dataset(tiny_dataset, a)
        save_dataset(tiny_dataset, b)
        for sub in ("topology.json", "manifest.json", "entries/train/0.json"):
            pa, pb = os.path.join(a, sub), os.path.join(b, sub)
            if os.path.exists(pa):
                with open(pa) as fa, open(pb) as fb:
                    assert fa.read() == fb.read()

    def test_corrupt_entry_rejected_on_load(self, tiny_dataset, tmp_path):
        root = tmp_path / "ds"
        save_dataset(tiny_dataset, str(root))
        victim = next((root / "entries" / "train").glob("*.json"))
        doc = json.loads(victim.read_text())
        doc["reference_deployment"][3][0] = -2
        victim.write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_dataset(str(root))
