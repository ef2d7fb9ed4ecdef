"""Core domain model: topologies, SFC requests, deployments, scaling actions.

All types are immutable value objects once constructed; operations return
new values instead of mutating. Numpy arrays held by these objects are
flagged read-only so they can be shared across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    Disconnected,
    DuplicateLink,
    FormatError,
    NoDeployableNode,
    SelfLoop,
    ShapeMismatch,
    UnknownNode,
)


class VnfType(IntEnum):
    """The fixed 5-type VNF catalog. Ids are dense and index count matrices."""

    FIREWALL = 0
    NAT = 1
    IDS = 2
    PROXY = 3
    LB = 4

    @property
    def label(self) -> str:
        return _VNF_LABELS[self.value]

    @classmethod
    def from_label(cls, label: str) -> "VnfType":
        try:
            return cls(_VNF_LABELS.index(label))
        except ValueError:
            raise FormatError(f"unknown VNF type name: {label!r}") from None


_VNF_LABELS = ("Firewall", "NAT", "IDS", "Proxy", "LB")
N_VNF_TYPES = len(_VNF_LABELS)

# Node feature layout: [src, count per VnfType (catalog order), dst]
FEATURE_DIM = 2 + N_VNF_TYPES


class ScaleAction(IntEnum):
    """One scaling decision for a (node, VNF type) cell.

    Encoded so that action - 1 is the instance-count delta, and so that
    np.argmax tie-breaking prefers IN over KEEP over OUT.
    """

    IN = 0
    KEEP = 1
    OUT = 2


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class NodeSpec:
    id: int
    deployable: bool


@dataclass(frozen=True)
class LinkSpec:
    u: int
    v: int
    latency_ms: float


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected network graph with per-link latency.

    Node ids must be dense 0..n-1 (matrices are id-indexed). Structural
    invariants (connectivity, no self loops, ...) are checked separately by
    validate_topology so that invalid graphs can still be represented.
    """

    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    name: str = ""
    # derived, filled in __post_init__
    deployable_mask: np.ndarray = field(init=False, repr=False, compare=False)
    latency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = sorted(n.id for n in self.nodes)
        if ids != list(range(len(self.nodes))):
            raise FormatError(f"node ids must be dense 0..n-1, got {ids}")
        object.__setattr__(
            self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id))
        )
        n = len(self.nodes)
        for l in self.links:
            if not (0 <= l.u < n) or not (0 <= l.v < n):
                raise UnknownNode(f"link ({l.u},{l.v}) references a missing node")
        mask = np.zeros(n, dtype=bool)
        for node in self.nodes:
            mask[node.id] = node.deployable
        lat = np.full((n, n), np.inf)
        for l in self.links:
            if l.u != l.v:
                lat[l.u, l.v] = min(lat[l.u, l.v], float(l.latency_ms))
                lat[l.v, l.u] = lat[l.u, l.v]
        object.__setattr__(self, "deployable_mask", _readonly(mask))
        object.__setattr__(self, "latency", _readonly(lat))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def deployable_ids(self) -> np.ndarray:
        return np.flatnonzero(self.deployable_mask)

    @property
    def non_deployable_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.deployable_mask)


def validate_topology(t: NetworkTopology) -> None:
    """Check all structural invariants; raise a TopologyError naming the offender."""
    for l in t.links:
        if l.u == l.v:
            raise SelfLoop(f"link ({l.u},{l.v}) is a self-loop")
        if l.latency_ms <= 0:
            raise FormatError(f"link ({l.u},{l.v}) has non-positive latency")
    seen = set()
    for l in t.links:
        key = (min(l.u, l.v), max(l.u, l.v))
        if key in seen:
            raise DuplicateLink(f"undirected link {key} appears more than once")
        seen.add(key)
    if not t.deployable_mask.any():
        raise NoDeployableNode("topology has no deployable node")
    # connectivity by BFS from node 0
    n = t.num_nodes
    adj = np.isfinite(t.latency)
    visited = np.zeros(n, dtype=bool)
    stack = [0]
    visited[0] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if not visited[v]:
                visited[v] = True
                stack.append(int(v))
    if not visited.all():
        missing = int(np.flatnonzero(~visited)[0])
        raise Disconnected(f"node {missing} is unreachable from node 0")


def adjacency_and_edge_attrs(t: NetworkTopology) -> tuple[np.ndarray, np.ndarray]:
    """0/1 adjacency plus edge attributes: reciprocal latency where linked, else 0."""
    adj = np.isfinite(t.latency).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    attr = np.where(adj > 0, 1.0 / np.where(np.isfinite(t.latency), t.latency, 1.0), 0.0)
    return adj, attr


@dataclass(frozen=True)
class SfcRequest:
    """One service chain request: ingress -> ordered VNF chain -> egress."""

    id: int
    ingress: int
    egress: int
    chain: tuple[VnfType, ...]
    sla_ms: float | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "chain", tuple(VnfType(v) for v in self.chain))
        except ValueError:
            raise FormatError(f"request {self.id}: unknown VNF type in chain")
        if len(self.chain) < 1:
            raise FormatError(f"request {self.id}: empty chain")
        if len(set(self.chain)) != len(self.chain):
            raise FormatError(f"request {self.id}: chain entries must be distinct")
        if self.sla_ms is not None and self.sla_ms <= 0:
            raise FormatError(f"request {self.id}: sla_ms must be positive")

    def with_sla(self, sla_ms: float) -> "SfcRequest":
        return SfcRequest(self.id, self.ingress, self.egress, self.chain, sla_ms)


@dataclass(frozen=True, eq=False)
class Deployment:
    """Non-negative instance counts per (node, VNF type)."""

    topology: NetworkTopology
    counts: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, Deployment)
            and self.topology == other.topology
            and np.array_equal(self.counts, other.counts)
        )

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (self.topology.num_nodes, N_VNF_TYPES):
            raise ShapeMismatch(
                f"counts shape {c.shape} vs expected "
                f"({self.topology.num_nodes}, {N_VNF_TYPES})"
            )
        if (c < 0).any():
            raise FormatError("deployment counts must be non-negative")
        if c[~self.topology.deployable_mask].any():
            bad = int(np.flatnonzero(c.sum(axis=1) * ~self.topology.deployable_mask)[0])
            raise FormatError(f"non-deployable node {bad} has instances")
        object.__setattr__(self, "counts", _readonly(c))

    @property
    def total_instances(self) -> int:
        return int(self.counts.sum())

    def replace_counts(self, counts: np.ndarray) -> "Deployment":
        return Deployment(self.topology, counts)


def zero_deployment(t: NetworkTopology) -> Deployment:
    return Deployment(t, np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64))


@dataclass(frozen=True)
class ScalingGrid:
    """One ScaleAction per (deployable node, VNF type), node-id ascending."""

    topology: NetworkTopology
    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.int8)
        expected = (len(self.topology.deployable_ids), N_VNF_TYPES)
        if a.shape != expected:
            raise ShapeMismatch(f"actions shape {a.shape} vs expected {expected}")
        if ((a < 0) | (a > 2)).any():
            raise FormatError("grid actions must be in {0,1,2}")
        object.__setattr__(self, "actions", _readonly(a))

    @classmethod
    def all_keep(cls, t: NetworkTopology) -> "ScalingGrid":
        shape = (len(t.deployable_ids), N_VNF_TYPES)
        return cls(t, np.full(shape, ScaleAction.KEEP, dtype=np.int8))


def apply_scaling(d: Deployment, g: ScalingGrid) -> Deployment:
    """Apply a scaling grid: OUT adds one instance, IN removes one (clamped at 0),
    KEEP leaves the count. Non-deployable rows are untouched."""
    if g.topology.num_nodes != d.topology.num_nodes or not np.array_equal(
        g.topology.deployable_mask, d.topology.deployable_mask
    ):
        raise ShapeMismatch(
            f"grid for {len(g.topology.deployable_ids)} deployable nodes vs "
            f"deployment with {len(d.topology.deployable_ids)}"
        )
    counts = d.counts.copy()
    dep = d.topology.deployable_ids
    delta = g.actions.astype(np.int64) - 1
    counts[dep] = np.maximum(counts[dep] + delta, 0)
    return Deployment(d.topology, counts)


def node_features(t: NetworkTopology, d: Deployment, r: SfcRequest) -> np.ndarray:
    """Per-node feature rows: [is_ingress, instance counts masked to the
    request's chain (catalog order), is_egress]. Shape (num_nodes, FEATURE_DIM)."""
    n = t.num_nodes
    if not (0 <= r.ingress < n) or not (0 <= r.egress < n):
        raise UnknownNode(f"request {r.id} endpoints ({r.ingress},{r.egress}) not in topology")
    x = np.zeros((n, FEATURE_DIM))
    x[r.ingress, 0] = 1.0
    x[r.egress, FEATURE_DIM - 1] = 1.0
    chain_mask = np.zeros(N_VNF_TYPES)
    for v in r.chain:
        chain_mask[int(v)] = 1.0
    x[:, 1 : 1 + N_VNF_TYPES] = d.counts * chain_mask
    return x


# ---------------------------------------------------------------------------
# Persistence. Topologies are a JSON key/value tree; requests are one JSON
# record per line. Unknown fields are rejected in both formats.
# ---------------------------------------------------------------------------

_TOPO_FIELDS = {"name", "nodes", "links"}
_NODE_FIELDS = {"id", "deployable"}
_LINK_FIELDS = {"u", "v", "latency_ms"}
_REQ_FIELDS = {"id", "ingress", "egress", "chain", "sla_ms"}


def _check_fields(doc: dict, allowed: set, required: set, what: str) -> None:
    extra = set(doc) - allowed
    if extra:
        raise FormatError(f"{what}: unknown fields {sorted(extra)}")
    missing = required - set(doc)
    if missing:
        raise FormatError(f"{what}: missing fields {sorted(missing)}")


def topology_to_doc(t: NetworkTopology) -> dict:
    return {
        "name": t.name,
        "nodes": [{"id": n.id, "deployable": n.deployable} for n in t.nodes],
        "links": [
            {"u": l.u, "v": l.v, "latency_ms": l.latency_ms} for l in t.links
        ],
    }


def topology_from_doc(doc: dict) -> NetworkTopology:
    _check_fields(doc, _TOPO_FIELDS, _TOPO_FIELDS, "topology")
    nodes = []
    for nd in doc["nodes"]:
        _check_fields(nd, _NODE_FIELDS, _NODE_FIELDS, "topology node")
        nodes.append(NodeSpec(int(nd["id"]), bool(nd["deployable"])))
    links = []
    for ld in doc["links"]:
        _check_fields(ld, _LINK_FIELDS, _LINK_FIELDS, "topology link")
        links.append(LinkSpec(int(ld["u"]), int(ld["v"]), float(ld["latency_ms"])))
    return NetworkTopology(tuple(nodes), tuple(links), str(doc["name"]))


def save_topology(t: NetworkTopology, path) -> None:
    with open(path, "w") as f:
        json.dump(topology_to_doc(t), f, indent=1, sort_keys=True)
        f.write("\n")


def load_topology(path) -> NetworkTopology:
    with open(path) as f:
        t = topology_from_doc(json.load(f))
    validate_topology(t)
    return t


def request_to_doc(r: SfcRequest) -> dict:
    return {
        "id": r.id,
        "ingress": r.ingress,
        "egress": r.egress,
        "chain": [v.label for v in r.chain],
        "sla_ms": r.sla_ms,
    }


def request_from_doc(doc: dict) -> SfcRequest:
    _check_fields(doc, _REQ_FIELDS, _REQ_FIELDS, "request")
    chain = tuple(VnfType.from_label(s) for s in doc["chain"])
    sla = doc["sla_ms"]
    return SfcRequest(
        int(doc["id"]),
        int(doc["ingress"]),
        int(doc["egress"]),
        chain,
        None if sla is None else float(sla),
    )


def save_requests(requests: Iterable[SfcRequest], path) -> None:
    with open(path, "w") as f:
        for r in requests:
            f.write(json.dumps(request_to_doc(r), sort_keys=True))
            f.write("\n")


def load_requests(path) -> list[SfcRequest]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(request_from_doc(json.loads(line)))
    return out
