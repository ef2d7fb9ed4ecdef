"""Node-representation encoders: edge-aware GAT, a GGNN baseline, the shared
embedding module for non-deployable nodes, sinusoidal positional encoding,
and the per-request encode-then-average pipeline.

Requests are batched as one block-diagonal graph so each layer costs a fixed
number of tape ops regardless of the request count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyRequestSet, OddDim, TableMismatch
from .layers import glorot, gru_params, init_gru, init_linear, linear
from .model import (
    FEATURE_DIM,
    Deployment,
    NetworkTopology,
    SfcRequest,
    adjacency_and_edge_attrs,
    node_features,
)
from .params import ParamStore


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "gat"
    hidden_dim: int = 64
    heads: int = 4
    layers: int = 2
    use_node_embedding: bool = True
    node_embedding_dim: int = 8
    ggnn_iters: int = 4
    frozen: bool = False

    def __post_init__(self):
        if self.kind not in ("gat", "ggnn"):
            raise ValueError(f"encoder kind must be gat or ggnn, got {self.kind!r}")
        if self.hidden_dim % self.heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if self.node_embedding_dim >= self.hidden_dim:
            raise ValueError("node_embedding_dim must stay below hidden_dim")
        if self.use_node_embedding and self.layers < 2:
            raise ValueError("node embeddings concat between layers; need layers >= 2")


@dataclass
class NodeRepresentations:
    """Per-request encodings stacked as (K*n, hidden) plus their mean (n, hidden)."""

    per_request: Tensor
    mean: Tensor
    num_requests: int
    num_nodes: int


def positional_encoding(i: int, d: int) -> np.ndarray:
    """Sinusoid position vector: even slots sin(i / 10000^(2m/d)), odd cos."""
    if d % 2:
        raise OddDim(f"positional encoding dim must be even, got {d}")
    m = np.arange(d // 2)
    freq = 1.0 / np.power(10000.0, 2 * m / d)
    out = np.empty(d)
    out[0::2] = np.sin(i * freq)
    out[1::2] = np.cos(i * freq)
    return out


def positional_encoding_table(n: int, d: int) -> np.ndarray:
    return np.stack([positional_encoding(i, d) for i in range(n)])


# ---------------------------------------------------------------------------
# GAT layer. Per head the score for edge (i, j) decomposes as
#   LeakyReLU(a1.Wh_i + a2.Wh_j + (a3.we) * E_ij)
# which keeps every op a plain 2-D matmul or broadcast add.
# ---------------------------------------------------------------------------


def init_gat_layer(
    store: ParamStore,
    prefix: str,
    in_dim: int,
    out_dim: int,
    heads: int,
    rng: np.random.Generator,
) -> None:
    if out_dim % heads:
        raise ValueError(f"out_dim {out_dim} not divisible by heads {heads}")
    hd = out_dim // heads
    for h in range(heads):
        store.add(f"{prefix}/h{h}/w", glorot(rng, in_dim, hd))
        store.add(f"{prefix}/h{h}/a1", glorot(rng, hd, 1))
        store.add(f"{prefix}/h{h}/a2", glorot(rng, hd, 1))
        store.add(f"{prefix}/h{h}/we", glorot(rng, hd, 1))
        store.add(f"{prefix}/h{h}/a3", glorot(rng, hd, 1))


def gat_layer(
    store: ParamStore,
    prefix: str,
    x: Tensor,
    adj: np.ndarray,
    edge_attr: np.ndarray,
    heads: int,
    return_attention: bool = False,
):
    """Multi-head attention over each node's neighborhood plus itself.

    adj/edge_attr are constant (N, N) matrices; the self edge always has a
    zero attribute. Head outputs are concatenated, not averaged."""
    n = adj.shape[0]
    attend = (adj > 0) | np.eye(n, dtype=bool)
    blocked = ~attend
    e_const = Tensor(edge_attr)
    outs = []
    attns = []
    for h in range(heads):
        wh = ad.matmul(x, store[f"{prefix}/h{h}/w"])
        u = ad.matmul(wh, store[f"{prefix}/h{h}/a1"])
        v = ad.matmul(wh, store[f"{prefix}/h{h}/a2"])
        c = ad.tsum(ad.mul(store[f"{prefix}/h{h}/we"], store[f"{prefix}/h{h}/a3"]))
        scores = ad.add(ad.add(u, ad.transpose(v)), ad.mul(c, e_const))
        scores = ad.leaky_relu(scores, 0.2)
        scores = ad.masked_fill(scores, blocked, -1e9)
        attn = ad.softmax(scores, axis=-1)
        outs.append(ad.matmul(attn, wh))
        if return_attention:
            attns.append(attn.data)
    out = ad.concat(outs, axis=1)
    if return_attention:
        return out, attns
    return out


# ---------------------------------------------------------------------------
# GGNN layer: T rounds of h <- GRU(h, sum_j E_ij * W h_j).
# ---------------------------------------------------------------------------


def init_ggnn_layer(
    store: ParamStore, prefix: str, hidden: int, rng: np.random.Generator
) -> None:
    store.add(f"{prefix}/msg_w", glorot(rng, hidden, hidden))
    init_gru(store, f"{prefix}/gru", hidden, hidden, rng)


def ggnn_layer(
    store: ParamStore,
    prefix: str,
    h: Tensor,
    edge_attr: np.ndarray,
    iters: int,
) -> Tensor:
    """edge_attr doubles as the (weighted) adjacency; zero entries carry no
    message, so the neighbor sum is one constant matmul."""
    e_const = Tensor(edge_attr)
    p = gru_params(store, f"{prefix}/gru")
    for _ in range(iters):
        msg = ad.matmul(e_const, ad.matmul(h, store[f"{prefix}/msg_w"]))
        h = ad.gru_cell(msg, h, p)
    return h


# ---------------------------------------------------------------------------
# Embeddings for non-deployable nodes: one shared row for deployable nodes,
# one learned row per non-deployable node, mixed by a small single-head GAT.
# ---------------------------------------------------------------------------


def init_aux_embedding(
    store: ParamStore,
    prefix: str,
    t: NetworkTopology,
    dim: int,
    rng: np.random.Generator,
) -> None:
    n_rows = 1 + len(t.non_deployable_ids)
    store.add(f"{prefix}/table", rng.uniform(-0.1, 0.1, size=(n_rows, dim)))
    init_gat_layer(store, f"{prefix}/gat", dim, dim, 1, rng)


def aux_row_index(t: NetworkTopology) -> np.ndarray:
    """Row of the embedding table used by each node: 0 for deployable nodes,
    1 + rank for non-deployable ones."""
    idx = np.zeros(t.num_nodes, dtype=np.int64)
    for rank, node in enumerate(t.non_deployable_ids):
        idx[node] = 1 + rank
    return idx


def aux_node_embedding(
    store: ParamStore,
    prefix: str,
    t: NetworkTopology,
    adj: np.ndarray,
    edge_attr: np.ndarray,
) -> Tensor:
    table = store[f"{prefix}/table"]
    expected = 1 + len(t.non_deployable_ids)
    if table.data.shape[0] != expected:
        raise TableMismatch(
            f"embedding table has {table.data.shape[0]} rows, topology needs {expected}"
        )
    rows = ad.gather_rows(table, aux_row_index(t))
    return gat_layer(store, f"{prefix}/gat", rows, adj, edge_attr, heads=1)


# ---------------------------------------------------------------------------
# Whole-encoder assembly.
# ---------------------------------------------------------------------------


def init_encoder(
    store: ParamStore,
    cfg: EncoderConfig,
    t: NetworkTopology,
    rng: np.random.Generator,
) -> None:
    aux = cfg.node_embedding_dim if cfg.use_node_embedding else 0
    if cfg.kind == "gat":
        init_gat_layer(store, "encoder/l0", FEATURE_DIM, cfg.hidden_dim, cfg.heads, rng)
        for i in range(1, cfg.layers):
            in_dim = cfg.hidden_dim + (aux if i == 1 else 0)
            init_gat_layer(store, f"encoder/l{i}", in_dim, cfg.hidden_dim, cfg.heads, rng)
    else:
        init_linear(store, "encoder/in_proj", FEATURE_DIM, cfg.hidden_dim, rng)
        for i in range(cfg.layers):
            init_ggnn_layer(store, f"encoder/l{i}", cfg.hidden_dim, rng)
        if aux:
            init_linear(store, "encoder/ne_proj", cfg.hidden_dim + aux, cfg.hidden_dim, rng)
    if aux:
        init_aux_embedding(store, "encoder/aux", t, aux, rng)


def _block_diag(mat: np.ndarray, k: int) -> np.ndarray:
    n = mat.shape[0]
    out = np.zeros((k * n, k * n))
    for b in range(k):
        out[b * n : (b + 1) * n, b * n : (b + 1) * n] = mat
    return out


class GraphCache:
    """Topology-derived constants reused across every encode call."""

    def __init__(self, t: NetworkTopology):
        self.topology = t
        self.adj, self.edge_attr = adjacency_and_edge_attrs(t)
        self._blocks: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def block(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k not in self._blocks:
            self._blocks[k] = (_block_diag(self.adj, k), _block_diag(self.edge_attr, k))
        return self._blocks[k]


def pretrain_encoder(
    store: ParamStore,
    cfg: EncoderConfig,
    cache: GraphCache,
    entries,
    steps: int,
    rng: np.random.Generator,
    lr: float = 3e-4,
    proc_ms: float = 0.0,
) -> tuple[float, ParamStore]:
    """Warm up the encoder on next-hop prediction along oracle routes.

    For each (entry, request) pair the oracle path under the entry's
    reference deployment labels every on-path node with its successor; a
    linear head predicts it over the node's neighbors by cross-entropy.
    Returns (final-step loss, head store); the head is only needed again to
    measure accuracy. Stands in for external routing-knowledge transfer so a
    frozen-encoder regime stays meaningful.
    """
    from .routing import route_chain

    t = cache.topology
    n = t.num_nodes
    head = ParamStore()
    head.add("pretext/w", glorot(rng, cfg.hidden_dim, n))
    head.add("pretext/b", np.zeros(n))
    neighbor_mask = ~(cache.adj > 0)
    pairs = [(e, r) for e in entries for r in e.requests]
    if not pairs:
        raise EmptyRequestSet("pretraining needs at least one entry with requests")
    last = 0.0
    for step in range(steps):
        entry, req = pairs[int(rng.integers(len(pairs)))]
        path = route_chain(t, entry.reference, req, proc_ms)
        hops = [h for h in path.hops] if path.routable else []
        if len(hops) < 2:
            continue
        rep = encode_state(store, cfg, cache, entry.reference, [req])
        logits = ad.add(ad.matmul(rep.mean, head["pretext/w"]), head["pretext/b"])
        logits = ad.masked_fill(logits, neighbor_mask, -1e9)
        log_probs = ad.log_softmax(logits, axis=1)
        pick = np.zeros((n, n))
        count = 0
        for a, b in zip(hops[:-1], hops[1:]):
            pick[a, b] += 1.0
            count += 1
        loss = ad.scale(ad.tsum(ad.mul(log_probs, Tensor(pick))), -1.0 / count)
        store.zero_grads()
        head.zero_grads()
        loss.backward()
        store.adam_step(lr)
        head.adam_step(lr)
        last = float(loss.data)
    return last, head


def next_hop_accuracy(
    store: ParamStore,
    cfg: EncoderConfig,
    cache: GraphCache,
    head: ParamStore,
    entries,
    proc_ms: float = 0.0,
) -> float:
    """Accuracy of the pretext classifier against oracle next-hop labels,
    restricted to each node's neighbors."""
    from .routing import route_chain

    t = cache.topology
    correct = 0
    total = 0
    blocked = ~(cache.adj > 0)
    for entry in entries:
        for req in entry.requests:
            path = route_chain(t, entry.reference, req, proc_ms)
            if not path.routable or len(path.hops) < 2:
                continue
            rep = encode_state(store, cfg, cache, entry.reference, [req])
            scores = rep.mean.data @ head["pretext/w"].data + head["pretext/b"].data
            scores[blocked] = -np.inf
            for a, b in zip(path.hops[:-1], path.hops[1:]):
                total += 1
                if int(np.argmax(scores[a])) == b:
                    correct += 1
    return correct / total if total else 0.0


def encode_state(
    store: ParamStore,
    cfg: EncoderConfig,
    cache: GraphCache,
    d: Deployment,
    requests: Sequence[SfcRequest],
) -> NodeRepresentations:
    """Encode one deployment under each request's features and average.

    All K request graphs run as one block-diagonal batch; the embedding rows
    for non-deployable nodes are computed once and tiled across the batch."""
    if not requests:
        raise EmptyRequestSet("encode_state needs at least one request")
    t = cache.topology
    n = t.num_nodes
    k = len(requests)
    x = np.concatenate([node_features(t, d, r) for r in requests], axis=0)
    adj_b, ea_b = cache.block(k)
    xt = Tensor(x)
    if cfg.kind == "gat":
        h = gat_layer(store, "encoder/l0", xt, adj_b, ea_b, cfg.heads)
    else:
        h = linear(store, "encoder/in_proj", xt)
        h = ggnn_layer(store, "encoder/l0", h, ea_b, cfg.ggnn_iters)
    if cfg.use_node_embedding:
        aux = aux_node_embedding(store, "encoder/aux", t, cache.adj, cache.edge_attr)
        aux_tiled = ad.gather_rows(aux, np.tile(np.arange(n), k))
        h = ad.concat([h, aux_tiled], axis=1)
        if cfg.kind == "ggnn":
            h = linear(store, "encoder/ne_proj", h)
    for i in range(1, cfg.layers):
        if cfg.kind == "gat":
            h = gat_layer(store, f"encoder/l{i}", h, adj_b, ea_b, cfg.heads)
        else:
            h = ggnn_layer(store, f"encoder/l{i}", h, ea_b, cfg.ggnn_iters)
    mean = ad.tmean(ad.reshape(h, (k, n, cfg.hidden_dim)), axis=0)
    return NodeRepresentations(h, mean, k, n)
