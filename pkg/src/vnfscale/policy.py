"""Action decoder, state-value network, and the auxiliary value head.

The decoder runs one GRU sequence per VNF type over deployable nodes in
ascending id order; the 5 type sequences advance together as one GRU batch.
Each step's hidden state feeds a small MLP over the 3 scaling actions.

Besides the node representation, every step sees its own cell's current
instance count directly. Attention pooling blurs per-cell counts, and the
right action at a cell is a correction relative to its standing count, so
the decoder gets that count through a skip past the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncoderConfig, init_encoder, positional_encoding_table
from .errors import ShapeMismatch
from .layers import apply_layer_norm, gru_params, init_gru, init_layer_norm, init_mlp, mlp
from .model import N_VNF_TYPES, Deployment, NetworkTopology, ScalingGrid
from .params import ParamStore


@dataclass(frozen=True)
class PolicyConfig:
    gru_hidden: int = 64
    vnf_emb_dim: int = 5
    pe_dim: int = 4
    mlp_dim: int = 32
    use_positional: bool = True
    value_dims: tuple[int, int] = (128, 64)
    aux_dims: tuple[int, int] = (32, 32)
    keep_bias: float = 1.5

    @property
    def extra_dims(self) -> int:
        # +1 for the cell's current instance count fed past the encoder
        return self.vnf_emb_dim + 1 + (self.pe_dim if self.use_positional else 0)


def init_policy(
    store: ParamStore,
    enc_cfg: EncoderConfig,
    cfg: PolicyConfig,
    rng: np.random.Generator,
) -> None:
    width = enc_cfg.hidden_dim + cfg.extra_dims
    store.add("decoder/emb", rng.uniform(-0.1, 0.1, size=(N_VNF_TYPES, cfg.vnf_emb_dim)))
    init_layer_norm(store, "decoder/ln", width)
    init_gru(store, "decoder/gru", width, cfg.gru_hidden, rng)
    init_mlp(store, "decoder/mlp", [cfg.gru_hidden, cfg.mlp_dim, cfg.mlp_dim, 3], rng)
    # conservative prior: early exploration stays near the current deployment
    store["decoder/mlp/l2/b"].data[1] = cfg.keep_bias
    init_mlp(store, "value/mlp", [enc_cfg.hidden_dim, *cfg.value_dims, 1], rng)
    init_mlp(store, "auxhead/mlp", [cfg.gru_hidden, *cfg.aux_dims, 1], rng)


def build_stores(
    t: NetworkTopology, enc_cfg: EncoderConfig, cfg: PolicyConfig, seed: int
) -> ParamStore:
    store = ParamStore()
    rng = np.random.default_rng(seed)
    init_encoder(store, enc_cfg, t, rng)
    init_policy(store, enc_cfg, cfg, rng)
    return store


@dataclass
class DecodeResult:
    """Everything a trainer needs from one decode pass. Rows of log_probs are
    ordered node-major: row = node_rank * N_VNF_TYPES + type."""

    grid: ScalingGrid
    actions: np.ndarray
    logp: Tensor
    log_probs: Tensor
    probs: np.ndarray
    z_steps: list[Tensor] = field(default_factory=list)

    def onehot(self) -> np.ndarray:
        rows = self.actions.reshape(-1)
        out = np.zeros((rows.size, 3))
        out[np.arange(rows.size), rows] = 1.0
        return out


def decode_actions(
    store: ParamStore,
    cfg: PolicyConfig,
    t: NetworkTopology,
    h_mean: Tensor,
    deployment: Deployment,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
) -> DecodeResult:
    """Per (deployable node, type) action distributions and a chosen grid.

    deployment is the state being rescaled; each step reads its cell's
    current count from it. greedy mode takes the first-max action (ties
    resolve In < Keep < Out); sample mode draws per step from the
    categorical distribution using rng.
    """
    if mode not in ("sample", "greedy"):
        raise ValueError(f"mode must be sample or greedy, got {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    dep = t.deployable_ids
    n_dep = len(dep)
    hidden = store["decoder/gru/uz"].data.shape[0]
    if h_mean.data.ndim != 2 or h_mean.data.shape[0] != t.num_nodes:
        raise ShapeMismatch(
            f"mean representation shape {h_mean.data.shape} vs "
            f"({t.num_nodes}, hidden)"
        )
    counts = deployment.counts
    emb = store["decoder/emb"]
    pe = positional_encoding_table(t.num_nodes, cfg.pe_dim) if cfg.use_positional else None
    gp = gru_params(store, "decoder/gru")
    state = Tensor(np.zeros((N_VNF_TYPES, hidden)))
    logits_steps = []
    z_steps = []
    for node in dep:
        h_row = ad.gather_rows(h_mean, np.full(N_VNF_TYPES, node))
        cell = Tensor(counts[node].reshape(N_VNF_TYPES, 1) / 2.0)
        parts = [h_row, emb, cell]
        if pe is not None:
            parts.append(Tensor(np.tile(pe[node], (N_VNF_TYPES, 1))))
        x = apply_layer_norm(store, "decoder/ln", ad.concat(parts, axis=1))
        state = ad.gru_cell(x, state, gp)
        z_steps.append(state)
        logits_steps.append(mlp(store, "decoder/mlp", state, 3))
    logits = ad.concat(logits_steps, axis=0)
    log_probs = ad.log_softmax(logits, axis=1)
    probs = np.exp(log_probs.data)
    if mode == "greedy":
        flat = np.argmax(probs, axis=1)
    else:
        draws = rng.random(probs.shape[0])
        flat = np.minimum((draws[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), 2)
    actions = flat.reshape(n_dep, N_VNF_TYPES).astype(np.int8)
    grid = ScalingGrid(t, actions)
    onehot = np.zeros_like(probs)
    onehot[np.arange(probs.shape[0]), flat] = 1.0
    logp = ad.tsum(ad.mul(log_probs, Tensor(onehot)))
    return DecodeResult(grid, actions, logp, log_probs, probs, z_steps)


def value(store: ParamStore, h_mean: Tensor) -> Tensor:
    """Scalar state value from the node-averaged representation. Callers
    decide whether h_mean is detached (the trainers detach it so the value
    loss trains only the value MLP)."""
    pooled = ad.reshape(ad.tmean(h_mean, axis=0), (1, -1))
    return ad.reshape(mlp(store, "value/mlp", pooled, 3), ())


def aux_value(store: ParamStore, z_steps: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    """Auxiliary per-node values from the decoder's hidden states: each node's
    type-summed z feeds the aux MLP; their mean is the auxiliary state value."""
    if not z_steps:
        raise ShapeMismatch("aux_value needs at least one decoder step")
    rows = ad.stack_rows([ad.tsum(z, axis=0) for z in z_steps])
    v_nodes = mlp(store, "auxhead/mlp", rows, 3)
    v_aux = ad.reshape(ad.tmean(v_nodes), ())
    return v_aux, v_nodes
