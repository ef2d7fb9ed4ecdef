"""Pure-numpy backend for the routing and search kernels.

Both backends run the same synchronous (Jacobi) relaxation sweeps over the
same float64 sums, so results are bit-identical between them.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def relax_layer(lat: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Single-source shortest distances within one topology layer.

    d holds the seed distances (inf where unreachable); sweeps are synchronous
    so the result does not depend on node visit order.
    """
    n = d.size
    for _ in range(n - 1):
        new = np.minimum(d, (d[:, None] + lat).min(axis=0))
        if np.array_equal(new, d):
            break
        d = new
    return d


def layered_distances(
    lat: np.ndarray, hosts: np.ndarray, ingress: int, proc_ms: float
) -> np.ndarray:
    """Distance field over the layered routing graph.

    hosts[l, i] is true when node i can serve chain position l; crossing a
    layer at such a node costs proc_ms. Returns shape (L+1, n); entry
    [L, egress] is the end-to-end chain delay (inf if unroutable).
    """
    L, n = hosts.shape
    dist = np.full((L + 1, n), np.inf)
    d = np.full(n, np.inf)
    d[ingress] = 0.0
    dist[0] = relax_layer(lat, d)
    for l in range(L):
        seed = np.where(hosts[l] != 0, dist[l] + proc_ms, np.inf)
        dist[l + 1] = relax_layer(lat, seed)
    return dist


def chain_delays(
    lat: np.ndarray,
    counts: np.ndarray,
    req_ptr: np.ndarray,
    chain_types: np.ndarray,
    ingress: np.ndarray,
    egress: np.ndarray,
    proc_ms: float,
) -> np.ndarray:
    """End-to-end delay per request under the given instance counts.

    Requests are flattened: request k's chain types are
    chain_types[req_ptr[k]:req_ptr[k+1]].
    """
    k_total = len(ingress)
    out = np.empty(k_total)
    support = counts > 0
    for k in range(k_total):
        types = chain_types[req_ptr[k] : req_ptr[k + 1]]
        hosts = support[:, types].T.astype(np.uint8)
        dist = layered_distances(lat, hosts, int(ingress[k]), proc_ms)
        out[k] = dist[len(types), int(egress[k])]
    return out


def reward_from_delays(
    delays: np.ndarray,
    slas: np.ndarray,
    total_instances: int,
    alpha: float,
    p_unroutable: float,
) -> float:
    """Mean delay/SLA ratio (penalty ratio when unroutable) plus instance cost,
    negated. Accumulation is a fixed-order scalar loop shared with the numba
    backend so rewards match bitwise."""
    acc = 0.0
    k_total = len(delays)
    for k in range(k_total):
        if np.isfinite(delays[k]):
            acc += delays[k] / slas[k]
        else:
            acc += p_unroutable
    return -(acc / k_total) - alpha * float(total_instances)


def exact_search(
    lat: np.ndarray,
    cell_nodes: np.ndarray,
    cell_types: np.ndarray,
    req_ptr: np.ndarray,
    chain_types: np.ndarray,
    ingress: np.ndarray,
    egress: np.ndarray,
    slas: np.ndarray,
    alpha: float,
    p_unroutable: float,
    max_count: int,
    num_nodes: int,
    num_types: int,
    proc_ms: float,
) -> tuple[float, np.ndarray]:
    """Enumerate every count assignment over the given cells (0..max_count
    each), first cell varying fastest, and return the best reward with the
    first assignment attaining it. With cells ordered node-major ascending,
    ties therefore resolve to the lowest node id, then the lowest type id.
    Delays are memoized per (request, host support) since they do not depend
    on counts beyond presence."""
    n_cells = len(cell_nodes)
    counts = np.zeros((num_nodes, num_types), dtype=np.int64)
    cur = np.zeros(n_cells, dtype=np.int64)
    best = -np.inf
    best_cur = cur.copy()
    k_total = len(ingress)
    memo: list[dict[bytes, float]] = [dict() for _ in range(k_total)]
    while True:
        total = int(cur.sum())
        acc = 0.0
        support = counts > 0
        for k in range(k_total):
            types = chain_types[req_ptr[k] : req_ptr[k + 1]]
            hosts = support[:, types].T.astype(np.uint8)
            key = hosts.tobytes()
            delay = memo[k].get(key)
            if delay is None:
                dist = layered_distances(lat, hosts, int(ingress[k]), proc_ms)
                delay = float(dist[len(types), int(egress[k])])
                memo[k][key] = delay
            if np.isfinite(delay):
                acc += delay / slas[k]
            else:
                acc += p_unroutable
        reward = -(acc / k_total) - alpha * float(total)
        if reward > best:
            best = reward
            best_cur = cur.copy()
        # odometer increment, first cell fastest
        p = 0
        while p < n_cells and cur[p] == max_count:
            cur[p] = 0
            counts[cell_nodes[p], cell_types[p]] = 0
            p += 1
        if p == n_cells:
            break
        cur[p] += 1
        counts[cell_nodes[p], cell_types[p]] = cur[p]
    return float(best), best_cur
