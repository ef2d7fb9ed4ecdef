"""Chain routing over the layered graph, SLA assignment, reward and metrics.

A chain of length L is routed through L+1 copies of the topology; moving to
the next copy is only possible at a node hosting the next VNF in the chain.
The shortest layered path gives the end-to-end delay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import EmptyRequestSet, FormatError, UnknownNode, UnroutableReference
from .model import Deployment, NetworkTopology, SfcRequest

DEFAULT_P_UNROUTABLE = 20.0


@dataclass(frozen=True)
class PathResult:
    """Routing outcome for one request. hops lists the physical nodes
    traversed in order (repeats allowed); placements[i] is the node serving
    chain position i. Both are empty when unroutable."""

    delay_ms: float
    hops: tuple[int, ...]
    placements: tuple[int, ...]

    @property
    def routable(self) -> bool:
        return np.isfinite(self.delay_ms)


def _hosts_matrix(d: Deployment, r: SfcRequest) -> np.ndarray:
    support = d.counts > 0
    types = np.array([int(v) for v in r.chain], dtype=np.int64)
    return support[:, types].T.astype(np.uint8)


def route_chain(
    t: NetworkTopology, d: Deployment, r: SfcRequest, proc_ms: float = 0.0
) -> PathResult:
    """Shortest-delay route for one request under the given deployment.

    Ties are broken canonically: when walking the optimal path back from the
    egress, consuming the pending VNF at the current node wins over moving,
    and otherwise the smallest-id predecessor node is taken.
    """
    n = t.num_nodes
    if not (0 <= r.ingress < n) or not (0 <= r.egress < n):
        raise UnknownNode(f"request {r.id} endpoints outside topology")
    hosts = _hosts_matrix(d, r)
    lat = t.latency
    dist = kernels.layered_distances(lat, hosts, r.ingress, proc_ms)
    L = hosts.shape[0]
    delay = float(dist[L, r.egress])
    if not np.isfinite(delay):
        return PathResult(np.inf, (), ())
    l, j = L, r.egress
    rev_hops = [j]
    rev_placements = []
    while (l, j) != (0, r.ingress):
        cur = dist[l, j]
        if l > 0 and hosts[l - 1, j] and dist[l - 1, j] + proc_ms == cur:
            rev_placements.append(j)
            l -= 1
            continue
        for i in range(n):
            if i != j and np.isfinite(lat[i, j]) and dist[l, i] + lat[i, j] == cur:
                rev_hops.append(i)
                j = i
                break
        else:
            raise AssertionError("finite distance without a predecessor")
    return PathResult(delay, tuple(reversed(rev_hops)), tuple(reversed(rev_placements)))


def assign_sla(
    t: NetworkTopology,
    reference: Deployment,
    requests: Sequence[SfcRequest],
    slack: float = 0.95,
    proc_ms: float = 0.0,
) -> list[SfcRequest]:
    """Set each request's SLA to its delay under the reference deployment
    divided by slack (slack < 1 leaves headroom above the reference delay)."""
    if not 0 < slack <= 1:
        raise FormatError(f"slack must be in (0, 1], got {slack}")
    out = []
    for r in requests:
        res = route_chain(t, reference, r, proc_ms)
        if not res.routable:
            raise UnroutableReference(
                f"request {r.id} is unroutable under the reference deployment"
            )
        out.append(r.with_sla(res.delay_ms / slack))
    return out


def flatten_requests(
    requests: Sequence[SfcRequest], require_sla: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Pack a request list into the flat arrays the kernels consume:
    (req_ptr, chain_types, ingress, egress, slas)."""
    if not requests:
        raise EmptyRequestSet("need at least one request")
    ptr = np.zeros(len(requests) + 1, dtype=np.int64)
    types: list[int] = []
    for k, r in enumerate(requests):
        types.extend(int(v) for v in r.chain)
        ptr[k + 1] = len(types)
        if require_sla and r.sla_ms is None:
            raise FormatError(f"request {r.id} has no SLA assigned")
    ingress = np.array([r.ingress for r in requests], dtype=np.int64)
    egress = np.array([r.egress for r in requests], dtype=np.int64)
    slas = np.array(
        [0.0 if r.sla_ms is None else r.sla_ms for r in requests], dtype=np.float64
    )
    return ptr, np.array(types, dtype=np.int64), ingress, egress, slas


def compute_reward(
    t: NetworkTopology,
    d: Deployment,
    requests: Sequence[SfcRequest],
    alpha: float,
    p_unroutable: float = DEFAULT_P_UNROUTABLE,
    proc_ms: float = 0.0,
) -> float:
    """Negative cost: mean over requests of delay/SLA (p_unroutable for
    requests that cannot be routed) plus alpha times the instance total."""
    ptr, types, ingress, egress, slas = flatten_requests(requests)
    delays = kernels.chain_delays(t.latency, d.counts, ptr, types, ingress, egress, proc_ms)
    return float(
        kernels.reward_from_delays(delays, slas, d.total_instances, alpha, p_unroutable)
    )


@dataclass(frozen=True)
class Metrics:
    reward: float
    avg_vnf: float
    avg_delay_ms: float
    avg_slav: float

    CSV_HEADER = "reward,avg_vnf,avg_delay_ms,avg_slav"

    def csv_row(self) -> str:
        return f"{self.reward},{self.avg_vnf},{self.avg_delay_ms},{self.avg_slav}"


def mean_metrics(items: Sequence[Metrics]) -> Metrics:
    if not items:
        raise EmptyRequestSet("no metrics to aggregate")
    return Metrics(
        reward=float(np.mean([m.reward for m in items])),
        avg_vnf=float(np.mean([m.avg_vnf for m in items])),
        avg_delay_ms=float(np.mean([m.avg_delay_ms for m in items])),
        avg_slav=float(np.mean([m.avg_slav for m in items])),
    )


class RewardEvaluator:
    """Reward/metrics evaluation for one fixed request set.

    Delays depend on the deployment only through which (node, type) cells are
    occupied, so they are memoized per support pattern; reward is then
    recomputed cheaply from the cached delays and the instance total.
    """

    def __init__(
        self,
        t: NetworkTopology,
        requests: Sequence[SfcRequest],
        alpha: float,
        p_unroutable: float = DEFAULT_P_UNROUTABLE,
        proc_ms: float = 0.0,
    ):
        self.topology = t
        self.requests = list(requests)
        self.alpha = float(alpha)
        self.p_unroutable = float(p_unroutable)
        self.proc_ms = float(proc_ms)
        (self._ptr, self._types, self._ingress, self._egress, self._slas) = (
            flatten_requests(self.requests)
        )
        self._used_types = np.unique(self._types)
        self._memo: dict[bytes, np.ndarray] = {}

    def delays_for_counts(self, counts: np.ndarray) -> np.ndarray:
        key = (counts[:, self._used_types] > 0).tobytes()
        cached = self._memo.get(key)
        if cached is None:
            cached = kernels.chain_delays(
                self.topology.latency,
                np.ascontiguousarray(counts),
                self._ptr,
                self._types,
                self._ingress,
                self._egress,
                self.proc_ms,
            )
            self._memo[key] = cached
        return cached

    def reward_for_counts(self, counts: np.ndarray) -> float:
        return float(
            kernels.reward_from_delays(
                self.delays_for_counts(counts),
                self._slas,
                int(counts.sum()),
                self.alpha,
                self.p_unroutable,
            )
        )

    def delays(self, d: Deployment) -> np.ndarray:
        return self.delays_for_counts(d.counts)

    def reward(self, d: Deployment) -> float:
        return self.reward_for_counts(d.counts)

    def metrics(self, d: Deployment) -> Metrics:
        delays = self.delays(d)
        routable = np.isfinite(delays)
        violations = (~routable) | (delays > self._slas)
        avg_delay = float(delays[routable].mean()) if routable.any() else 0.0
        return Metrics(
            reward=self.reward(d),
            avg_vnf=float(d.total_instances),
            avg_delay_ms=avg_delay,
            avg_slav=float(violations.mean()),
        )
