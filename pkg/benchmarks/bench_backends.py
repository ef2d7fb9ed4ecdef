"""Timing comparison of the numba and numpy kernel backends.

Run: python benchmarks/bench_backends.py [--repeats 50]

Covers the three hot paths: layered-graph distance fields, per-request
chain delays, and the exact reference search. Both backends compute
bit-identical results; this script reports the speed difference.
"""

import argparse
import time

import numpy as np

from vnfscale.dataset import build_internet2, gen_requests
from vnfscale.kernels import get_backend
from vnfscale.model import zero_deployment
from vnfscale.routing import assign_sla, flatten_requests
from vnfscale.solver import SolverConfig, best_achievable_delays, solve_reference


def _bench(fn, repeats):
    fn()  # warm-up (numba compiles here)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--requests", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t = build_internet2()
    reqs = gen_requests(t, args.requests, args.seed)
    floor = best_achievable_delays(t, reqs)
    reqs = [r.with_sla(f / 0.95) for r, f in zip(reqs, floor)]
    ptr, types, ingress, egress, slas = flatten_requests(reqs)
    lat = t.latency
    counts = np.ones((t.num_nodes, 5), dtype=np.int64)
    counts[~t.deployable_mask] = 0
    hosts = (counts > 0).T.astype(np.uint8)

    rows = []
    for name in ("numpy", "numba"):
        try:
            k = get_backend(name)
        except ImportError:
            print(f"{name}: unavailable, skipped")
            continue
        chain0 = types[: int(ptr[1])]
        t_dist = _bench(
            lambda: k.layered_distances(lat, hosts[chain0], int(ingress[0]), 0.0),
            args.repeats,
        )
        t_delay = _bench(
            lambda: k.chain_delays(lat, counts, ptr, types, ingress, egress, 0.0),
            args.repeats,
        )
        cell_nodes = np.repeat(t.deployable_ids[:3], 4).astype(np.int64)
        cell_types = np.tile(np.arange(4), 3).astype(np.int64)
        n3 = int(ptr[3])
        t_exact = _bench(
            lambda: k.exact_search(
                lat, cell_nodes, cell_types, ptr[:4], types[:n3],
                ingress[:3], egress[:3], slas[:3], 0.2, 20.0, 1, t.num_nodes, 5, 0.0,
            ),
            max(1, args.repeats // 10),
        )
        rows.append((k.NAME, t_dist, t_delay, t_exact))

    print(f"{'backend':8s} {'distances':>12s} {'chain_delays':>14s} {'exact_search':>14s}")
    for name, a, b, c in rows:
        print(f"{name:8s} {a * 1e6:>10.1f}us {b * 1e6:>12.1f}us {c * 1e3:>12.2f}ms")
    if len(rows) == 2:
        print(
            f"numba speedup: distances {rows[0][1] / rows[1][1]:.1f}x, "
            f"chain_delays {rows[0][2] / rows[1][2]:.1f}x, "
            f"exact_search {rows[0][3] / rows[1][3]:.1f}x"
        )


if __name__ == "__main__":
    main()
