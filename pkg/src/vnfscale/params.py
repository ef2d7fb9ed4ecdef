"""Named trainable parameters, the Adam optimizer, and JSON checkpoints.

One store holds every network's weights, namespaced by prefix (encoder/,
decoder/, value/, auxhead/). Checkpoints serialize float64 exactly (repr
round-trip), so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

import numpy as np

from .autodiff import Tensor
from .errors import CorruptCheckpoint, ShapeMismatch, VersionMismatch

CHECKPOINT_FORMAT = "vnfscale-checkpoint"
CHECKPOINT_VERSION = 1


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._steps: dict[str, int] = {}
        self._frozen: set[str] = set()

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(values, dtype=np.float64).copy(), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        self._steps[name] = 0
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return ((n, self._params[n]) for n in self.names())

    def subset(self, prefix: str) -> dict[str, Tensor]:
        return {n: t for n, t in self.items() if n.startswith(prefix)}

    def grad(self, name: str) -> np.ndarray:
        g = self._params[name].grad
        return np.zeros_like(self._params[name].data) if g is None else g

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def clip_grads(self, max_norm: float) -> float:
        """Rescale all unfrozen gradients so their global L2 norm stays within
        max_norm. Returns the pre-clip norm."""
        sq = 0.0
        live = []
        for n, t in self.items():
            if t.grad is None or self.is_frozen(n):
                continue
            sq += float((t.grad * t.grad).sum())
            live.append(t)
        norm = sq**0.5
        if norm > max_norm > 0:
            scale = max_norm / norm
            for t in live:
                t.grad = t.grad * scale
        return norm

    def freeze(self, prefix: str) -> None:
        self._frozen.add(prefix)

    def unfreeze(self, prefix: str) -> None:
        self._frozen.discard(prefix)

    def is_frozen(self, name: str) -> bool:
        return any(name.startswith(p) for p in self._frozen)

    @property
    def frozen_prefixes(self) -> tuple[str, ...]:
        return tuple(sorted(self._frozen))

    def adam_step(
        self,
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        lr_overrides: dict[str, float] | None = None,
    ) -> None:
        """One adaptive-moment update over every unfrozen parameter.

        Missing gradients count as zero. lr_overrides maps a name prefix to a
        different learning rate (e.g. a slower value network)."""
        b1, b2 = betas
        for name in self.names():
            if self.is_frozen(name):
                continue
            p = self._params[name]
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ShapeMismatch(
                    f"grad shape {g.shape} vs param {name!r} shape {p.data.shape}"
                )
            step = self._steps[name] + 1
            self._steps[name] = step
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**step)
            v_hat = v / (1 - b2**step)
            eff_lr = lr
            if lr_overrides:
                for prefix, rate in lr_overrides.items():
                    if name.startswith(prefix):
                        eff_lr = rate
            p.data -= eff_lr * m_hat / (np.sqrt(v_hat) + eps)

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of the current parameter values (not tracked)."""
        return {n: t.data.copy() for n, t in self.items()}

    def optimizer_state(self) -> dict:
        return {
            "m": {n: a.copy() for n, a in self._m.items()},
            "v": {n: a.copy() for n, a in self._v.items()},
            "steps": dict(self._steps),
        }

    def load_optimizer_state(self, state: dict) -> None:
        for n, a in state["m"].items():
            self._m[n][...] = a
        for n, a in state["v"].items():
            self._v[n][...] = a
        self._steps.update(state["steps"])

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for n, a in values.items():
            if n not in self._params:
                raise ShapeMismatch(f"unknown parameter {n!r}")
            if self._params[n].data.shape != a.shape:
                raise ShapeMismatch(
                    f"parameter {n!r}: shape {a.shape} vs expected "
                    f"{self._params[n].data.shape}"
                )
            self._params[n].data = a.astype(np.float64).copy()


def _pack(arrays: dict[str, np.ndarray]) -> dict:
    return {
        n: {"shape": list(a.shape), "values": a.ravel().tolist()}
        for n, a in sorted(arrays.items())
    }


def _unpack(doc: dict) -> dict[str, np.ndarray]:
    out = {}
    for n, rec in doc.items():
        a = np.array(rec["values"], dtype=np.float64).reshape(rec["shape"])
        out[n] = a
    return out


def save_checkpoint(
    store: ParamStore,
    path,
    config: dict,
    rng_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config,
        "config_hash": config_hash(config),
        "rng_state": rng_state,
        "params": _pack({n: t.data for n, t in store.items()}),
        "adam_m": _pack(dict(store._m)),
        "adam_v": _pack(dict(store._v)),
        "steps": dict(sorted(store._steps.items())),
        "frozen": sorted(store._frozen),
        "extra": extra or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path, expected_config: dict | None = None) -> dict:
    """Parse and validate a checkpoint document. Returns the raw doc with
    params/moments as numpy arrays under 'params', 'adam_m', 'adam_v'."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptCheckpoint(f"{path}: not valid checkpoint JSON ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path}: missing {CHECKPOINT_FORMAT!r} header")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: version {doc.get('version')} vs supported {CHECKPOINT_VERSION}"
        )
    if doc.get("config_hash") != config_hash(doc.get("config", {})):
        raise CorruptCheckpoint(f"{path}: config hash does not match stored config")
    if expected_config is not None and config_hash(expected_config) != doc["config_hash"]:
        raise VersionMismatch(
            f"{path}: checkpoint was written under a different configuration"
        )
    for key in ("params", "adam_m", "adam_v"):
        if key not in doc:
            raise CorruptCheckpoint(f"{path}: missing section {key!r}")
        doc[key] = _unpack(doc[key])
    return doc


def restore_store(doc: dict, store: ParamStore) -> None:
    """Load a checkpoint doc into an already-built store (shapes must match)."""
    store.load_values(doc["params"])
    for n, a in doc["adam_m"].items():
        if n in store._m:
            store._m[n] = a.copy()
    for n, a in doc["adam_v"].items():
        if n in store._v:
            store._v[n] = a.copy()
    for n, s in doc.get("steps", {}).items():
        if n in store._steps:
            store._steps[n] = int(s)
    store._frozen = set(doc.get("frozen", []))
