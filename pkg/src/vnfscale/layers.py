"""Parameter initializers and small forward helpers shared by the networks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_linear(
    store: ParamStore, prefix: str, fan_in: int, fan_out: int, rng: np.random.Generator
) -> None:
    store.add(f"{prefix}/w", glorot(rng, fan_in, fan_out))
    store.add(f"{prefix}/b", np.zeros(fan_out))


def linear(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, store[f"{prefix}/w"]), store[f"{prefix}/b"])


def init_mlp(
    store: ParamStore, prefix: str, dims: list[int], rng: np.random.Generator
) -> None:
    """dims = [in, hidden..., out]; relu between layers, linear output."""
    for i in range(len(dims) - 1):
        init_linear(store, f"{prefix}/l{i}", dims[i], dims[i + 1], rng)


def mlp(store: ParamStore, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    h = x
    for i in range(n_layers):
        h = linear(store, f"{prefix}/l{i}", h)
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


_GRU_KEYS = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")


def init_gru(
    store: ParamStore, prefix: str, in_dim: int, hidden: int, rng: np.random.Generator
) -> None:
    for gate in ("z", "r", "h"):
        store.add(f"{prefix}/w{gate}", glorot(rng, in_dim, hidden))
        store.add(f"{prefix}/u{gate}", glorot(rng, hidden, hidden))
        store.add(f"{prefix}/b{gate}", np.zeros(hidden))


def gru_params(store: ParamStore, prefix: str) -> dict[str, Tensor]:
    return {k: store[f"{prefix}/{k}"] for k in _GRU_KEYS}


def init_layer_norm(store: ParamStore, prefix: str, dim: int) -> None:
    store.add(f"{prefix}/gain", np.ones(dim))
    store.add(f"{prefix}/bias", np.zeros(dim))


def apply_layer_norm(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return ad.layer_norm(x, store[f"{prefix}/gain"], store[f"{prefix}/bias"])
