"""Reference deployment search: bounded-grid exact enumeration and local search.

Both modes maximize the same reward the agent is trained on. When requests
arrive without SLAs (the usual case, since SLAs are derived from the solved
reference), each request's best achievable delay stands in as its SLA so the
routing term is a dimensionless ratio comparable across topologies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ExactModeTooLarge, UnroutableReference
from .model import N_VNF_TYPES, Deployment, NetworkTopology, SfcRequest
from .routing import (
    DEFAULT_P_UNROUTABLE,
    RewardEvaluator,
    flatten_requests,
    route_chain,
)


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "exact"
    alpha: float = 0.2
    max_count_per_cell: int = 2
    search_budget: int = 2000
    kicks: int = 8
    p_unroutable: float = DEFAULT_P_UNROUTABLE
    proc_ms: float = 0.0

    MAX_EXACT_CELLS = 12
    PAIR_SCAN_MAX_CELLS = 24

    def __post_init__(self):
        if self.mode not in ("exact", "local_search"):
            raise ValueError(f"unknown solver mode {self.mode!r}")


def best_achievable_delays(
    t: NetworkTopology, requests: Sequence[SfcRequest], proc_ms: float = 0.0
) -> np.ndarray:
    """Per-request delay lower bound: the chain delay when every deployable
    node hosts every type a chain needs."""
    full = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    full[t.deployable_mask] = 1
    ptr, types, ingress, egress, _ = flatten_requests(requests, require_sla=False)
    return np.asarray(
        kernels.chain_delays(t.latency, full, ptr, types, ingress, egress, proc_ms)
    )


def _effective_requests(
    t: NetworkTopology, requests: Sequence[SfcRequest], proc_ms: float
) -> list[SfcRequest]:
    """Fill missing SLAs with each request's best achievable delay."""
    if all(r.sla_ms is not None for r in requests):
        return list(requests)
    floor = best_achievable_delays(t, requests, proc_ms)
    out = []
    for k, r in enumerate(requests):
        if r.sla_ms is None:
            if not np.isfinite(floor[k]):
                raise UnroutableReference(
                    f"request {r.id} cannot be routed even with every "
                    "deployable node hosting its whole chain"
                )
            out.append(r.with_sla(float(floor[k])))
        else:
            out.append(r)
    return out


def _cells(t: NetworkTopology, requests: Sequence[SfcRequest]) -> tuple[np.ndarray, np.ndarray]:
    """Search cells: deployable nodes crossed with the types any chain uses,
    node-major ascending. Unused types stay pinned at zero."""
    used = sorted({int(v) for r in requests for v in r.chain})
    nodes = []
    types = []
    for i in t.deployable_ids:
        for v in used:
            nodes.append(int(i))
            types.append(v)
    return np.array(nodes, dtype=np.int64), np.array(types, dtype=np.int64)


def solve_reference(
    t: NetworkTopology, requests: Sequence[SfcRequest], cfg: SolverConfig
) -> Deployment:
    """Deployment maximizing the reward over per-cell counts in
    [0, max_count_per_cell]. Exact mode enumerates the full grid (ties go to
    the lowest node id, then lowest type id); local_search seeds a feasible
    deployment constructively, then greedily adds, then hill climbs."""
    reqs = _effective_requests(t, requests, cfg.proc_ms)
    cell_nodes, cell_types = _cells(t, reqs)
    if cfg.mode == "exact":
        if len(cell_nodes) > SolverConfig.MAX_EXACT_CELLS:
            raise ExactModeTooLarge(
                f"{len(cell_nodes)} cells exceed the exact-mode bound of "
                f"{SolverConfig.MAX_EXACT_CELLS}"
            )
        ptr, types, ingress, egress, slas = flatten_requests(reqs)
        _, best = kernels.exact_search(
            t.latency,
            cell_nodes,
            cell_types,
            ptr,
            types,
            ingress,
            egress,
            slas,
            cfg.alpha,
            cfg.p_unroutable,
            cfg.max_count_per_cell,
            t.num_nodes,
            N_VNF_TYPES,
            cfg.proc_ms,
        )
        counts = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
        counts[cell_nodes, cell_types] = best
        return Deployment(t, counts)
    return _local_search(t, reqs, cell_nodes, cell_types, cfg)


def _constructive_seed(
    t: NetworkTopology, reqs: list[SfcRequest], ev: RewardEvaluator, cfg: SolverConfig
) -> np.ndarray:
    """Make each request routable along its relaxed-best path. A bare greedy
    add cannot leave zero (no single instance routes a whole chain)."""
    counts = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    full = counts.copy()
    full[t.deployable_mask] = 1
    for k, r in enumerate(reqs):
        if np.isfinite(ev.delays_for_counts(counts)[k]):
            continue
        relaxed = np.maximum(counts, full)
        res = route_chain(t, Deployment(t, relaxed), r, cfg.proc_ms)
        if not res.routable:
            raise UnroutableReference(f"request {r.id} cannot be routed at all")
        for pos, node in enumerate(res.placements):
            vt = int(r.chain[pos])
            if counts[node, vt] == 0:
                counts[node, vt] = 1
    return counts


def _apply_move(counts, cell_nodes, cell_types, move, sign) -> bool:
    """Apply (or with sign=-1 undo) one (kind, cell) move; False if invalid."""
    kind, c = move
    i, v = cell_nodes[c], cell_types[c]
    delta = (1 if kind == "add" else -1) * sign
    if counts[i, v] + delta < 0:
        return False
    counts[i, v] += delta
    return True


def _climb(
    counts: np.ndarray,
    ev: RewardEvaluator,
    cell_nodes: np.ndarray,
    cell_types: np.ndarray,
    cfg: SolverConfig,
    pairs: bool,
) -> tuple[np.ndarray, float]:
    """Steepest-ascent hill climbing over per-cell counts: best single
    add/remove each step and, when no single move helps and `pairs` is on,
    every ordered move pair (swaps, double adds, double removes)."""
    n_cells = len(cell_nodes)
    cur = ev.reward_for_counts(counts)
    singles = [("rm", c) for c in range(n_cells)] + [("add", c) for c in range(n_cells)]

    def valid(move):
        kind, c = move
        i, v = cell_nodes[c], cell_types[c]
        if kind == "rm":
            return counts[i, v] > 0
        return counts[i, v] < cfg.max_count_per_cell

    for _ in range(cfg.search_budget):
        best_move = None
        best_r = cur
        for move in singles:
            if not valid(move):
                continue
            _apply_move(counts, cell_nodes, cell_types, move, 1)
            r_new = ev.reward_for_counts(counts)
            _apply_move(counts, cell_nodes, cell_types, move, -1)
            if r_new > best_r:
                best_r, best_move = r_new, (move,)
        if best_move is None and pairs:
            for a in singles:
                if not valid(a):
                    continue
                _apply_move(counts, cell_nodes, cell_types, a, 1)
                for b in singles:
                    if not valid(b):
                        continue
                    _apply_move(counts, cell_nodes, cell_types, b, 1)
                    r_new = ev.reward_for_counts(counts)
                    _apply_move(counts, cell_nodes, cell_types, b, -1)
                    if r_new > best_r:
                        best_r, best_move = r_new, (a, b)
                _apply_move(counts, cell_nodes, cell_types, a, -1)
        if best_move is None:
            break
        for move in best_move:
            _apply_move(counts, cell_nodes, cell_types, move, 1)
        cur = best_r
    return counts, cur


def _endpoint_starts(
    t: NetworkTopology, reqs: list[SfcRequest]
) -> list[np.ndarray]:
    """Constructive starts that co-locate each chain at its request's
    endpoints: ingress-heavy, egress-heavy, and both."""
    ing = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    egr = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    for r in reqs:
        for v in r.chain:
            if t.deployable_mask[r.ingress]:
                ing[r.ingress, int(v)] = 1
            if t.deployable_mask[r.egress]:
                egr[r.egress, int(v)] = 1
    return [ing, egr, np.maximum(ing, egr)]


def _local_search(
    t: NetworkTopology,
    reqs: list[SfcRequest],
    cell_nodes: np.ndarray,
    cell_types: np.ndarray,
    cfg: SolverConfig,
) -> Deployment:
    ev = RewardEvaluator(t, reqs, cfg.alpha, cfg.p_unroutable, cfg.proc_ms)
    n_cells = len(cell_nodes)
    # the quadratic pair scan and full restart schedule only pay off (and only
    # stay affordable) on small grids
    small = n_cells <= cfg.PAIR_SCAN_MAX_CELLS
    kicks = cfg.kicks if small else max(cfg.kicks // 4, 1)

    starts = [_constructive_seed(t, reqs, ev, cfg)]
    full = np.zeros((t.num_nodes, N_VNF_TYPES), dtype=np.int64)
    full[cell_nodes, cell_types] = 1
    starts.append(full)
    starts.extend(_endpoint_starts(t, reqs))
    seen: set[bytes] = set()

    best_counts, best_r = None, -np.inf
    for seed in starts:
        key = seed.tobytes()
        if key in seen:
            continue
        seen.add(key)
        counts, r = _climb(seed, ev, cell_nodes, cell_types, cfg, pairs=small)
        if r > best_r or (r == best_r and counts.sum() < best_counts.sum()):
            best_counts, best_r = counts, r
    # iterated restarts: kick a few cells of the incumbent, re-climb, keep
    # improvements; the fixed seed keeps the whole search deterministic
    rng = np.random.default_rng(0)
    for _ in range(kicks):
        counts = best_counts.copy()
        for c in rng.choice(n_cells, size=min(3, n_cells), replace=False):
            counts[cell_nodes[c], cell_types[c]] = rng.integers(
                0, cfg.max_count_per_cell + 1
            )
        counts, r = _climb(counts, ev, cell_nodes, cell_types, cfg, pairs=small)
        if r > best_r or (r == best_r and counts.sum() < best_counts.sum()):
            best_counts, best_r = counts, r
    return Deployment(t, best_counts)
