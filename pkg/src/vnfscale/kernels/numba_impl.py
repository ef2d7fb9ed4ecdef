"""Numba backend: same kernels as numpy_impl with @njit loop bodies.

The relaxation sweeps mirror the numpy backend op for op (synchronous
updates, identical float64 sums and min candidates), keeping results
bit-identical across backends.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def relax_layer(lat, d):
    n = d.size
    new = np.empty(n)
    for _ in range(n - 1):
        for j in range(n):
            best = d[j]
            for i in range(n):
                c = d[i] + lat[i, j]
                if c < best:
                    best = c
            new[j] = best
        changed = False
        for j in range(n):
            if new[j] != d[j]:
                changed = True
                d[j] = new[j]
        if not changed:
            break
    return d


@njit(cache=True)
def layered_distances(lat, hosts, ingress, proc_ms):
    L, n = hosts.shape
    dist = np.full((L + 1, n), np.inf)
    d = np.full(n, np.inf)
    d[ingress] = 0.0
    dist[0] = relax_layer(lat, d)
    for l in range(L):
        seed = np.empty(n)
        for i in range(n):
            if hosts[l, i] != 0:
                seed[i] = dist[l, i] + proc_ms
            else:
                seed[i] = np.inf
        dist[l + 1] = relax_layer(lat, seed)
    return dist


@njit(cache=True)
def chain_delays(lat, counts, req_ptr, chain_types, ingress, egress, proc_ms):
    k_total = ingress.size
    n = lat.shape[0]
    out = np.empty(k_total)
    for k in range(k_total):
        L = req_ptr[k + 1] - req_ptr[k]
        hosts = np.zeros((L, n), dtype=np.uint8)
        for l in range(L):
            t = chain_types[req_ptr[k] + l]
            for i in range(n):
                if counts[i, t] > 0:
                    hosts[l, i] = 1
        dist = layered_distances(lat, hosts, ingress[k], proc_ms)
        out[k] = dist[L, egress[k]]
    return out


@njit(cache=True)
def reward_from_delays(delays, slas, total_instances, alpha, p_unroutable):
    acc = 0.0
    k_total = delays.size
    for k in range(k_total):
        if np.isfinite(delays[k]):
            acc += delays[k] / slas[k]
        else:
            acc += p_unroutable
    return -(acc / k_total) - alpha * float(total_instances)


@njit(cache=True)
def exact_search(
    lat,
    cell_nodes,
    cell_types,
    req_ptr,
    chain_types,
    ingress,
    egress,
    slas,
    alpha,
    p_unroutable,
    max_count,
    num_nodes,
    num_types,
    proc_ms,
):
    n_cells = cell_nodes.size
    counts = np.zeros((num_nodes, num_types), dtype=np.int64)
    cur = np.zeros(n_cells, dtype=np.int64)
    best = -np.inf
    best_cur = cur.copy()
    k_total = ingress.size
    while True:
        total = 0
        for c in range(n_cells):
            total += cur[c]
        acc = 0.0
        for k in range(k_total):
            L = req_ptr[k + 1] - req_ptr[k]
            hosts = np.zeros((L, num_nodes), dtype=np.uint8)
            for l in range(L):
                t = chain_types[req_ptr[k] + l]
                for i in range(num_nodes):
                    if counts[i, t] > 0:
                        hosts[l, i] = 1
            dist = layered_distances(lat, hosts, ingress[k], proc_ms)
            delay = dist[L, egress[k]]
            if np.isfinite(delay):
                acc += delay / slas[k]
            else:
                acc += p_unroutable
        reward = -(acc / k_total) - alpha * float(total)
        if reward > best:
            best = reward
            for c in range(n_cells):
                best_cur[c] = cur[c]
        p = 0
        while p < n_cells and cur[p] == max_count:
            cur[p] = 0
            counts[cell_nodes[p], cell_types[p]] = 0
            p += 1
        if p == n_cells:
            break
        cur[p] += 1
        counts[cell_nodes[p], cell_types[p]] = cur[p]
    return best, best_cur
