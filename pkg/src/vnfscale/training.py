"""One-step scaling episodes and the REINFORCE / PPO / PPG trainers.

An episode: encode the entry's initial deployment under its requests, decode
one scaling grid, apply it, score the resulting deployment. The return IS the
reward (horizon 1), so advantages never bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import Dataset, DatasetEntry, random_deployment, zero_deployment
from .encoder import EncoderConfig, GraphCache, encode_state, pretrain_encoder
from .errors import EmptyBuffer, PhaseMisalignment
from .model import Deployment, ScalingGrid, apply_scaling
from .policy import (
    DecodeResult,
    PolicyConfig,
    aux_value,
    build_stores,
    decode_actions,
    value,
)
from .routing import DEFAULT_P_UNROUTABLE, Metrics, RewardEvaluator, mean_metrics

ALGORITHMS = ("reinforce", "ppo", "ppg")


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "ppg"
    alpha: float = 0.2
    lr: float = 3e-4
    lr_value: float = 1.5e-4
    gamma: float = 0.995
    epsilon: float = 0.2
    k_epochs: int = 4
    minibatch: int = 4
    n_ppo: int = 16
    n_ppg: int = 64
    beta_clone: float = 1.0
    episodes: int = 1024
    eval_every: int = 128
    seed: int = 0
    p_unroutable: float = DEFAULT_P_UNROUTABLE
    proc_ms: float = 0.0
    pretrain: bool = True
    pretrain_steps: int = 200
    freeze_encoder: bool = False
    init_mode: str = "mixed"
    entropy_coef: float = 0.0
    normalize_adv: bool = True
    max_grad_norm: float = 0.5
    value_warmup: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.init_mode not in ("entry", "mixed"):
            raise ValueError("init_mode must be 'entry' or 'mixed'")
        if self.n_ppg % self.n_ppo:
            raise PhaseMisalignment(
                f"auxiliary interval {self.n_ppg} must be a multiple of the "
                f"policy interval {self.n_ppo}"
            )


@dataclass
class Transition:
    entry_id: int
    initial: Deployment
    actions: np.ndarray
    onehot: np.ndarray
    logp_old: float
    reward: float
    value_est: float


@dataclass
class TrainResult:
    reward_curve: list[tuple[int, float]]
    loss_curve: list[tuple[int, float, float | None, float | None]]
    val_curve: list[tuple[int, float]]
    best_val_reward: float
    best_state: dict
    final_val_reward: float


def _sum(ts: list[Tensor]) -> Tensor:
    out = ts[0]
    for t in ts[1:]:
        out = ad.add(out, t)
    return out


def _chunks(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i : i + size]


def reinforce_loss(logps: list[Tensor], advantages: list[float]) -> Tensor:
    """-mean(log-prob * advantage) over a batch of episodes."""
    n = len(logps)
    return _sum([ad.scale(lp, -adv / n) for lp, adv in zip(logps, advantages)])


def ppo_surrogate(ratio: Tensor, advantage: float, epsilon: float) -> Tensor:
    """min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A) for one episode."""
    clipped = ad.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    return ad.minimum(ad.scale(ratio, advantage), ad.scale(clipped, advantage))


def policy_entropy(log_probs: Tensor) -> Tensor:
    """Sum over decision rows of the per-row action entropy."""
    return ad.scale(ad.tsum(ad.mul(ad.exp(log_probs), log_probs)), -1.0)


def kl_divergence(p_old: np.ndarray, logp_old: np.ndarray, logp_new: Tensor) -> Tensor:
    """KL(old || new) summed over decision rows; old side held constant."""
    return ad.tsum(ad.mul(Tensor(p_old), ad.sub(Tensor(logp_old), logp_new)))


def _normalized(advs: list[float]) -> list[float]:
    a = np.asarray(advs)
    if a.size < 2:
        return advs
    return list((a - a.mean()) / (a.std() + 1e-8))


class Trainer:
    """Owns the stores, RNG, per-entry caches, and the update rules."""

    def __init__(
        self,
        dataset: Dataset,
        enc_cfg: EncoderConfig,
        pol_cfg: PolicyConfig,
        cfg: TrainConfig,
    ):
        self.dataset = dataset
        self.enc_cfg = enc_cfg
        self.pol_cfg = pol_cfg
        self.cfg = cfg
        self.topology = dataset.topology
        self.cache = GraphCache(self.topology)
        self.store = build_stores(self.topology, enc_cfg, pol_cfg, cfg.seed)
        self.rng = np.random.default_rng(cfg.seed)
        self._evaluators: dict[int, RewardEvaluator] = {}
        self._entries: dict[int, DatasetEntry] = {
            e.id: e for split in ("train", "val", "test") for e in dataset.split(split)
        }
        self._h_cache: dict[tuple[int, str], np.ndarray] = {}
        self._baseline_sum = 0.0
        self._baseline_count = 0
        self._updates = 0

    # -- plumbing ------------------------------------------------------------

    def evaluator(self, entry: DatasetEntry) -> RewardEvaluator:
        ev = self._evaluators.get(entry.id)
        if ev is None:
            ev = RewardEvaluator(
                self.topology,
                entry.requests,
                self.cfg.alpha,
                self.cfg.p_unroutable,
                self.cfg.proc_ms,
            )
            self._evaluators[entry.id] = ev
        return ev

    @property
    def encoder_frozen(self) -> bool:
        return self.store.is_frozen("encoder/")

    def encode_entry(self, entry: DatasetEntry, initial: Deployment | None = None) -> Tensor:
        """Mean node representation for a starting state. With a frozen
        encoder the result is a constant, cached for the two deterministic
        starts (the entry's own initial and the empty deployment)."""
        d = entry.initial if initial is None else initial
        if self.encoder_frozen:
            key = None
            if initial is None or initial is entry.initial:
                key = (entry.id, "entry")
            elif not initial.counts.any():
                key = (entry.id, "zero")
            if key is not None:
                cached = self._h_cache.get(key)
                if cached is None:
                    rep = encode_state(self.store, self.enc_cfg, self.cache, d, entry.requests)
                    cached = rep.mean.data
                    self._h_cache[key] = cached
                return Tensor(cached)
            return Tensor(
                encode_state(self.store, self.enc_cfg, self.cache, d, entry.requests).mean.data
            )
        return encode_state(self.store, self.enc_cfg, self.cache, d, entry.requests).mean

    def pretrain(self) -> float:
        loss, _ = pretrain_encoder(
            self.store,
            self.enc_cfg,
            self.cache,
            list(self.dataset.train),
            self.cfg.pretrain_steps,
            self.rng,
            self.cfg.lr,
            self.cfg.proc_ms,
        )
        if self.cfg.freeze_encoder:
            self.store.freeze("encoder/")
        return loss

    def _step(self) -> None:
        if self.cfg.max_grad_norm:
            self.store.clip_grads(self.cfg.max_grad_norm)
        self.store.adam_step(self.cfg.lr, lr_overrides=self._lr_overrides())

    def warm_up_value(self) -> float:
        """Fit the value net to rewards of the untrained policy before any
        policy update, so early advantages are not dominated by the critic's
        initialization error. Returns the last regression loss."""
        cfg = self.cfg
        train_entries = list(self.dataset.train)
        pairs = []
        for _ in range(cfg.value_warmup):
            entry = train_entries[int(self.rng.integers(len(train_entries)))]
            initial = self._draw_initial(entry)
            h = self.encode_entry(entry, initial)
            res = decode_actions(
                self.store, self.pol_cfg, self.topology, h, initial, "sample", self.rng
            )
            r = self.evaluator(entry).reward(apply_scaling(initial, res.grid))
            pairs.append((np.array(h.data, copy=True), r))
        last = 0.0
        for _ in range(8):
            order = self.rng.permutation(len(pairs))
            for chunk in _chunks(order, 16):
                terms = []
                for idx in chunk:
                    h_data, r = pairs[int(idx)]
                    diff = ad.sub(value(self.store, Tensor(h_data)), r)
                    terms.append(ad.mul(diff, diff))
                loss = ad.scale(_sum(terms), 1.0 / len(terms))
                self.store.zero_grads()
                loss.backward()
                self._step()
                last = float(loss.data)
        return last

    # -- episodes ------------------------------------------------------------

    def _draw_initial(self, entry: DatasetEntry) -> Deployment:
        if self.cfg.init_mode == "entry":
            return entry.initial
        kind = int(self.rng.integers(3))
        if kind == 0:
            return entry.initial
        if kind == 1:
            return random_deployment(self.topology, int(self.rng.integers(2**62)))
        return zero_deployment(self.topology)

    def run_episode(
        self, entry: DatasetEntry, mode: str = "sample"
    ) -> tuple[Transition, DecodeResult]:
        initial = self._draw_initial(entry) if mode == "sample" else entry.initial
        h_mean = self.encode_entry(entry, initial)
        res = decode_actions(
            self.store, self.pol_cfg, self.topology, h_mean, initial, mode,
            self.rng if mode == "sample" else None,
        )
        new_dep = apply_scaling(initial, res.grid)
        reward = self.evaluator(entry).reward(new_dep)
        v = float(value(self.store, Tensor(h_mean.data)).data)
        tr = Transition(
            entry.id, initial, res.actions, res.onehot(), float(res.logp.data), reward, v
        )
        return tr, res

    def _reforward(self, tr: Transition) -> tuple[Tensor, DecodeResult]:
        entry = self._entries[tr.entry_id]
        h_mean = self.encode_entry(entry, tr.initial)
        res = decode_actions(
            self.store, self.pol_cfg, self.topology, h_mean, tr.initial, "greedy"
        )
        return h_mean, res

    # -- update rules ----------------------------------------------------------

    def reinforce_update(
        self, buffer: list[Transition], results: list[DecodeResult]
    ) -> tuple[float, None, None]:
        """Policy-gradient ascent on logp * advantage with a running-mean
        reward baseline; returns the scalar loss actually descended."""
        if not buffer:
            raise EmptyBuffer("reinforce_update on an empty buffer")
        for tr in buffer:
            self._baseline_sum += tr.reward
            self._baseline_count += 1
        baseline = self._baseline_sum / self._baseline_count
        advs = [tr.reward - baseline for tr in buffer]
        loss = reinforce_loss([r.logp for r in results], advs)
        total = loss
        if self.cfg.entropy_coef:
            ent = ad.scale(
                _sum([policy_entropy(r.log_probs) for r in results]), 1.0 / len(results)
            )
            total = ad.sub(total, ad.scale(ent, self.cfg.entropy_coef))
        self.store.zero_grads()
        total.backward()
        if self.cfg.max_grad_norm:
            self.store.clip_grads(self.cfg.max_grad_norm)
        self.store.adam_step(self.cfg.lr)
        self._updates += 1
        return float(loss.data), None, None

    def _lr_overrides(self) -> dict[str, float] | None:
        if self.cfg.algorithm == "ppg":
            return {"value/": self.cfg.lr_value}
        return None

    def ppo_update(self, buffer: list[Transition]) -> tuple[float, float, None]:
        """Clipped-surrogate policy loss plus value MSE, K epochs over
        shuffled episode minibatches. The buffer's own log-probs and value
        estimates (taken at collection) define the ratios and advantages."""
        if not buffer:
            raise EmptyBuffer("ppo_update on an empty buffer")
        cfg = self.cfg
        advs = [tr.reward - tr.value_est for tr in buffer]
        if cfg.normalize_adv:
            advs = _normalized(advs)
        p_losses, v_losses = [], []
        for _ in range(cfg.k_epochs):
            order = self.rng.permutation(len(buffer))
            for chunk in _chunks(order, cfg.minibatch):
                pol_terms, val_terms, ent_terms = [], [], []
                for idx in chunk:
                    tr = buffer[int(idx)]
                    h_mean, res = self._reforward(tr)
                    logp_new = ad.tsum(ad.mul(res.log_probs, Tensor(tr.onehot)))
                    ratio = ad.exp(ad.sub(logp_new, tr.logp_old))
                    pol_terms.append(ppo_surrogate(ratio, advs[int(idx)], cfg.epsilon))
                    ent_terms.append(policy_entropy(res.log_probs))
                    v_new = value(self.store, Tensor(h_mean.data))
                    diff = ad.sub(v_new, tr.reward)
                    val_terms.append(ad.mul(diff, diff))
                m = len(pol_terms)
                policy_loss = ad.scale(_sum(pol_terms), -1.0 / m)
                value_loss = ad.scale(_sum(val_terms), 1.0 / m)
                total = ad.add(policy_loss, value_loss)
                if cfg.entropy_coef:
                    ent = ad.scale(_sum(ent_terms), 1.0 / m)
                    total = ad.sub(total, ad.scale(ent, cfg.entropy_coef))
                self.store.zero_grads()
                total.backward()
                self._step()
                p_losses.append(float(policy_loss.data))
                v_losses.append(float(value_loss.data))
        self._updates += 1
        return float(np.mean(p_losses)), float(np.mean(v_losses)), None

    def ppg_aux_update(self, retained: list[Transition]) -> float:
        """Distill value knowledge into the shared policy trunk: half squared
        error between the auxiliary value and the (detached) value net, plus
        beta_clone * KL(pi_old || pi_new) summed over (node, type) steps.
        pi_old and the value targets are snapshotted at phase start."""
        if not retained:
            raise EmptyBuffer("ppg_aux_update on an empty buffer")
        cfg = self.cfg
        snaps = []
        for tr in retained:
            h_mean, res = self._reforward(tr)
            v_target = float(value(self.store, Tensor(h_mean.data)).data)
            snaps.append((np.exp(res.log_probs.data), res.log_probs.data.copy(), v_target))
        losses = []
        order = self.rng.permutation(len(retained))
        for chunk in _chunks(order, cfg.minibatch):
            terms = []
            for idx in chunk:
                tr = retained[int(idx)]
                p_old, logp_old, v_target = snaps[int(idx)]
                _, res = self._reforward(tr)
                v_aux, _ = aux_value(self.store, res.z_steps)
                err = ad.sub(v_aux, v_target)
                joint = ad.scale(ad.mul(err, err), 0.5)
                kl = kl_divergence(p_old, logp_old, res.log_probs)
                terms.append(ad.add(joint, ad.scale(kl, cfg.beta_clone)))
            aux_loss = ad.scale(_sum(terms), 1.0 / len(terms))
            self.store.zero_grads()
            aux_loss.backward()
            self._step()
            losses.append(float(aux_loss.data))
        return float(np.mean(losses))

    # -- evaluation ------------------------------------------------------------

    def greedy_metrics(self, entry: DatasetEntry, initial: Deployment | None = None) -> Metrics:
        base = entry.initial if initial is None else initial
        h_mean = self.encode_entry(entry, initial)
        res = decode_actions(
            self.store, self.pol_cfg, self.topology, h_mean, base, "greedy"
        )
        return self.evaluator(entry).metrics(apply_scaling(base, res.grid))

    def validate(self, split: str = "val") -> float:
        entries = self.dataset.split(split)
        return float(np.mean([self.greedy_metrics(e).reward for e in entries]))

    def _snapshot_state(self) -> dict:
        return {"params": self.store.snapshot(), "adam": self.store.optimizer_state()}

    def restore_state(self, state: dict) -> None:
        self.store.load_values(state["params"])
        self.store.load_optimizer_state(state["adam"])
        self._h_cache.clear()

    # -- main loop ---------------------------------------------------------------

    def train(self, progress: Callable[[int, float], None] | None = None) -> TrainResult:
        cfg = self.cfg
        if cfg.value_warmup:
            self.warm_up_value()
        train_entries = list(self.dataset.train)
        reward_curve: list[tuple[int, float]] = []
        loss_curve: list[tuple[int, float, float | None, float | None]] = []
        val_curve: list[tuple[int, float]] = []
        best_val = self.validate()
        val_curve.append((0, best_val))
        best_state = self._snapshot_state()
        buffer: list[Transition] = []
        results: list[DecodeResult] = []
        retained: list[Transition] = []
        episode = 0
        order: list[DatasetEntry] = []
        while episode < cfg.episodes:
            if not order:
                order = [train_entries[int(i)] for i in self.rng.permutation(len(train_entries))]
            entry = order.pop()
            tr, res = self.run_episode(entry, "sample")
            episode += 1
            reward_curve.append((episode, tr.reward))
            buffer.append(tr)
            if cfg.algorithm == "reinforce":
                results.append(res)
            if len(buffer) == cfg.n_ppo:
                if cfg.algorithm == "reinforce":
                    pl, vl, al = self.reinforce_update(buffer, results)
                else:
                    pl, vl, al = self.ppo_update(buffer)
                if cfg.algorithm == "ppg":
                    retained.extend(buffer)
                    if episode % cfg.n_ppg == 0:
                        al = self.ppg_aux_update(retained)
                        retained = []
                loss_curve.append((self._updates, pl, vl, al))
                buffer = []
                results = []
            if episode % cfg.eval_every == 0 or episode == cfg.episodes:
                val = self.validate()
                val_curve.append((episode, val))
                if val > best_val:
                    best_val = val
                    best_state = self._snapshot_state()
                if progress is not None:
                    progress(episode, val)
        final_val = val_curve[-1][1] if val_curve else best_val
        return TrainResult(
            reward_curve, loss_curve, val_curve, best_val, best_state, final_val
        )


def initial_for_mode(
    entry: DatasetEntry, mode: str, rng: np.random.Generator, topology
) -> Deployment:
    if mode in ("perturbed", "entry"):
        return entry.initial
    if mode == "random":
        return random_deployment(topology, int(rng.integers(2**62)))
    if mode == "zero":
        return zero_deployment(topology)
    if mode == "reference":
        return entry.reference
    raise ValueError(f"unknown initial-deployment mode {mode!r}")


def evaluate_policy(
    trainer: Trainer,
    split: str = "test",
    init_mode: str = "entry",
    seed: int = 0,
) -> tuple[Metrics, list[Metrics]]:
    """Greedy evaluation over a split from a chosen initial deployment kind;
    returns (mean metrics, per-entry metrics)."""
    rng = np.random.default_rng(seed)
    per_entry = []
    for entry in trainer.dataset.split(split):
        initial = initial_for_mode(entry, init_mode, rng, trainer.topology)
        per_entry.append(trainer.greedy_metrics(entry, initial))
    return mean_metrics(per_entry), per_entry


def random_policy_metrics(
    trainer: Trainer, split: str = "test", seed: int = 0
) -> tuple[Metrics, list[Metrics]]:
    """Baseline that picks each (node, type) action uniformly at random."""
    rng = np.random.default_rng(seed)
    per_entry = []
    for entry in trainer.dataset.split(split):
        actions = rng.integers(0, 3, size=(len(trainer.topology.deployable_ids), 5))
        grid = ScalingGrid(trainer.topology, actions.astype(np.int8))
        dep = apply_scaling(entry.initial, grid)
        per_entry.append(trainer.evaluator(entry).metrics(dep))
    return mean_metrics(per_entry), per_entry
