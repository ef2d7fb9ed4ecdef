"""Experiment topologies, request generation, and train/val/test datasets.

Each dataset entry bundles one request set, a solver reference deployment,
SLAs derived from that reference, and an initial deployment (perturbed,
random, or zero) for the agent to repair.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError
from .model import (
    N_VNF_TYPES,
    Deployment,
    LinkSpec,
    NetworkTopology,
    NodeSpec,
    SfcRequest,
    load_topology,
    request_from_doc,
    request_to_doc,
    save_topology,
    validate_topology,
)
from .model import zero_deployment as _zero
from .routing import assign_sla
from .solver import SolverConfig, solve_reference

_INTERNET2_LINKS = (
    (0, 1), (0, 3), (1, 2), (1, 3), (2, 5), (3, 4), (4, 5), (4, 6),
    (5, 8), (6, 7), (6, 8), (7, 11), (11, 10), (8, 9), (9, 10),
)

_MEC_LINKS = (
    (0, 1), (0, 2), (1, 3), (1, 4), (3, 5), (3, 6), (4, 7), (4, 8),
    (2, 9), (2, 10), (2, 11), (0, 12), (1, 13),
)


def build_internet2(
    latency_ms: float = 10.0,
    non_deployable: Sequence[int] = (3, 6, 11),
    latencies: dict[tuple[int, int], float] | None = None,
) -> NetworkTopology:
    """Continental backbone shape: 12 nodes, 15 links. Latency is uniform
    unless per-link overrides are given (keys as (u, v) with u < v)."""
    nd = set(non_deployable)
    nodes = tuple(NodeSpec(i, i not in nd) for i in range(12))
    overrides = latencies or {}
    links = tuple(
        LinkSpec(u, v, overrides.get((u, v), latency_ms)) for u, v in _INTERNET2_LINKS
    )
    t = NetworkTopology(nodes, links, "internet2")
    validate_topology(t)
    return t


def build_mec(
    base_ms: float = 1000.0,
    span_ms: float = 4000.0,
    non_deployable: Sequence[int] = (0, 1, 2, 3, 4),
) -> NetworkTopology:
    """Edge-cloud tree: 14 nodes, 13 high-latency links (base_ms at one end,
    base_ms + span_ms at the other, evenly spaced in listed link order).
    The 5 interior nodes are non-deployable by default."""
    nd = set(non_deployable)
    nodes = tuple(NodeSpec(i, i not in nd) for i in range(14))
    links = tuple(
        LinkSpec(u, v, base_ms + i * span_ms / (len(_MEC_LINKS) - 1))
        for i, (u, v) in enumerate(_MEC_LINKS)
    )
    t = NetworkTopology(nodes, links, "mec")
    validate_topology(t)
    return t


def gen_requests(t: NetworkTopology, n: int, seed: int) -> list[SfcRequest]:
    """n random requests: distinct uniform endpoints, an ordered random
    chain of 3 or 4 distinct types (sizes equally likely). SLAs stay unset."""
    if n < 1:
        raise FormatError("need n >= 1 requests")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        ingress, egress = rng.choice(t.num_nodes, size=2, replace=False)
        size = int(rng.integers(3, 5))
        chain = tuple(int(v) for v in rng.choice(N_VNF_TYPES, size=size, replace=False))
        out.append(SfcRequest(i, int(ingress), int(egress), chain))
    return out


def perturb(d: Deployment, seed: int) -> Deployment:
    """Add independent uniform {-1, 0, +1} noise per deployable cell,
    clamped at zero."""
    rng = np.random.default_rng(seed)
    dep = d.topology.deployable_ids
    noise = rng.integers(-1, 2, size=(len(dep), N_VNF_TYPES))
    counts = d.counts.copy()
    counts[dep] = np.maximum(counts[dep] + noise, 0)
    return Deployment(d.topology, counts)


def random_deployment(t: NetworkTopology, seed: int) -> Deployment:
    """Each deployable cell hosts 0 or 1 instances, i.i.d. uniform."""
    rng = np.random.default_rng(seed)
    counts = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    counts[t.deployable_ids] = rng.integers(0, 2, size=(len(t.deployable_ids), N_VNF_TYPES))
    return Deployment(t, counts)


def zero_deployment(t: NetworkTopology) -> Deployment:
    return _zero(t)


INIT_MODES = ("perturb", "random", "zero")


@dataclass(frozen=True)
class DatasetEntry:
    id: int
    reference: Deployment
    initial: Deployment
    requests: tuple[SfcRequest, ...]
    seed: int


@dataclass(frozen=True)
class Dataset:
    topology: NetworkTopology
    train: tuple[DatasetEntry, ...]
    val: tuple[DatasetEntry, ...]
    test: tuple[DatasetEntry, ...]
    manifest: dict

    def split(self, name: str) -> tuple[DatasetEntry, ...]:
        if name not in ("train", "val", "test"):
            raise FormatError(f"unknown split {name!r}")
        return getattr(self, name)


def make_dataset(
    t: NetworkTopology,
    n_entries: int,
    requests_per_entry: int,
    cfg: SolverConfig,
    seed: int,
    slack: float = 0.95,
    init_mode: str = "perturb",
) -> Dataset:
    """Build n_entries independent scenarios and split them 8:1:1 by a
    deterministic shuffle (val and test each get n_entries // 10)."""
    if n_entries < 10:
        raise FormatError("need at least 10 entries for an 8:1:1 split")
    if init_mode not in INIT_MODES:
        raise FormatError(f"init_mode must be one of {INIT_MODES}")
    base = np.random.default_rng(seed)
    req_seeds = base.integers(0, 2**62, size=n_entries)
    init_seeds = base.integers(0, 2**62, size=n_entries)
    perm = base.permutation(n_entries)
    entries = []
    for e in range(n_entries):
        requests = gen_requests(t, requests_per_entry, int(req_seeds[e]))
        ref = solve_reference(t, requests, cfg)
        slaed = tuple(assign_sla(t, ref, requests, slack, cfg.proc_ms))
        if init_mode == "perturb":
            initial = perturb(ref, int(init_seeds[e]))
        elif init_mode == "random":
            initial = random_deployment(t, int(init_seeds[e]))
        else:
            initial = zero_deployment(t)
        entries.append(DatasetEntry(e, ref, initial, slaed, int(req_seeds[e])))
    n_hold = n_entries // 10
    val_ids = sorted(int(i) for i in perm[:n_hold])
    test_ids = sorted(int(i) for i in perm[n_hold : 2 * n_hold])
    hold = set(val_ids) | set(test_ids)
    train_ids = [e for e in range(n_entries) if e not in hold]
    manifest = {
        "format_version": 1,
        "seed": seed,
        "n_entries": n_entries,
        "requests_per_entry": requests_per_entry,
        "slack": slack,
        "alpha": cfg.alpha,
        "p_unroutable": cfg.p_unroutable,
        "init_mode": init_mode,
        "solver": asdict(cfg),
        "topology_name": t.name,
        "num_nodes": t.num_nodes,
        "num_links": len(t.links),
        "splits": {"train": train_ids, "val": val_ids, "test": test_ids},
    }
    by_id = {e.id: e for e in entries}
    return Dataset(
        t,
        tuple(by_id[i] for i in train_ids),
        tuple(by_id[i] for i in val_ids),
        tuple(by_id[i] for i in test_ids),
        manifest,
    )


_ENTRY_FIELDS = {"id", "seed", "reference_deployment", "initial_deployment", "requests"}


def entry_to_doc(e: DatasetEntry) -> dict:
    return {
        "id": e.id,
        "seed": e.seed,
        "reference_deployment": e.reference.counts.tolist(),
        "initial_deployment": e.initial.counts.tolist(),
        "requests": [request_to_doc(r) for r in e.requests],
    }


def entry_from_doc(doc: dict, t: NetworkTopology) -> DatasetEntry:
    extra = set(doc) - _ENTRY_FIELDS
    if extra:
        raise FormatError(f"entry: unknown fields {sorted(extra)}")
    missing = _ENTRY_FIELDS - set(doc)
    if missing:
        raise FormatError(f"entry: missing fields {sorted(missing)}")
    ref = Deployment(t, np.array(doc["reference_deployment"], dtype=np.int64))
    init = Deployment(t, np.array(doc["initial_deployment"], dtype=np.int64))
    requests = tuple(request_from_doc(rd) for rd in doc["requests"])
    return DatasetEntry(int(doc["id"]), ref, init, requests, int(doc["seed"]))


def save_dataset(ds: Dataset, root: str) -> None:
    os.makedirs(root, exist_ok=True)
    save_topology(ds.topology, os.path.join(root, "topology.json"))
    with open(os.path.join(root, "manifest.json"), "w") as f:
        json.dump(ds.manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    for split in ("train", "val", "test"):
        d = os.path.join(root, "entries", split)
        os.makedirs(d, exist_ok=True)
        for e in ds.split(split):
            with open(os.path.join(d, f"{e.id}.json"), "w") as f:
                json.dump(entry_to_doc(e), f, sort_keys=True)
                f.write("\n")


def load_dataset(root: str) -> Dataset:
    t = load_topology(os.path.join(root, "topology.json"))
    with open(os.path.join(root, "manifest.json")) as f:
        manifest = json.load(f)
    splits = {}
    for split in ("train", "val", "test"):
        d = os.path.join(root, "entries", split)
        entries = []
        if os.path.isdir(d):
            names = sorted(
                (n for n in os.listdir(d) if n.endswith(".json")),
                key=lambda n: int(n[:-5]),
            )
            for name in names:
                with open(os.path.join(d, name)) as f:
                    entries.append(entry_from_doc(json.load(f), t))
        splits[split] = tuple(entries)
    return Dataset(t, splits["train"], splits["val"], splits["test"], manifest)
