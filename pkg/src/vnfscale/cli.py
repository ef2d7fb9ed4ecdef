"""Command-line interface.

Subcommands: gen-dataset, train, eval, bench-time, dump-deployment,
export-embeddings. A --config JSON file may supply any long flag; flags
given on the command line win. Exit codes: 0 success, 1 usage error,
2 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .dataset import (
    Dataset,
    DatasetEntry,
    build_internet2,
    build_mec,
    load_dataset,
    make_dataset,
    save_dataset,
)
from .encoder import EncoderConfig, encode_state
from .errors import UnknownEntry, VnfScaleError
from .model import ScaleAction, VnfType, apply_scaling, load_topology
from .params import config_hash, load_checkpoint, restore_store, save_checkpoint
from .policy import PolicyConfig, decode_actions
from .routing import Metrics
from .solver import SolverConfig, solve_reference
from .training import TrainConfig, Trainer, evaluate_policy

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _inject_config(argv: list[str]) -> list[str]:
    """Splice flags from a --config JSON file into argv (argv wins)."""
    path = None
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file argument")
            path = argv[i + 1]
            i += 2
            continue
        if a.startswith("--config="):
            path = a.split("=", 1)[1]
            i += 1
            continue
        out.append(a)
        i += 1
    if path is None:
        return argv
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError("--config file must hold a JSON object")
    for key, val in doc.items():
        flag = "--" + str(key).replace("_", "-").lstrip("-")
        if any(a == flag or a.startswith(flag + "=") for a in out):
            continue
        if val is False or val is None:
            continue
        if val is True:
            out.append(flag)
        else:
            out.append(flag)
            out.append(str(val))
    return out


def _write_run_manifest(out_dir: str, args, outputs: list[str], started: str) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "config": flags,
        "config_hash": config_hash(flags),
        "seeds": [flags.get("seed")] if "seed" in flags else [],
        "started": started,
        "finished": _now(),
        "outputs": sorted(outputs),
        "version": __version__,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def _load_topology_arg(name: str):
    if name == "internet2":
        return build_internet2()
    if name == "mec":
        return build_mec()
    return load_topology(name)


def _find_entry(ds: Dataset, entry_id: int) -> tuple[DatasetEntry, str]:
    for split in ("train", "val", "test"):
        for e in ds.split(split):
            if e.id == entry_id:
                return e, split
    raise UnknownEntry(f"entry {entry_id} not in dataset")


def _trainer_from_checkpoint(
    ds: Dataset, ckpt_path: str, alpha: float | None = None
) -> tuple[Trainer, dict]:
    doc = load_checkpoint(ckpt_path)
    cfg = doc["config"]
    enc_cfg = EncoderConfig(**cfg["encoder"])
    pol_cfg = PolicyConfig(**{
        k: tuple(v) if isinstance(v, list) else v for k, v in cfg["policy"].items()
    })
    train_kw = dict(cfg["train"])
    if alpha is not None:
        train_kw["alpha"] = alpha
    tc = TrainConfig(**train_kw)
    trainer = Trainer(ds, enc_cfg, pol_cfg, tc)
    restore_store(doc, trainer.store)
    return trainer, doc


# -- subcommands ---------------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    started = _now()
    t = _load_topology_arg(args.topology)
    cfg = SolverConfig(mode=args.solver_mode, alpha=args.alpha)
    ds = make_dataset(
        t, args.entries, args.requests_per_entry, cfg, args.seed,
        slack=args.slack, init_mode=args.init_mode,
    )
    save_dataset(ds, args.out)
    outputs = [os.path.join(args.out, p) for p in ("topology.json", "manifest.json", "entries")]
    _write_run_manifest(args.out, args, outputs, started)
    print(
        f"wrote {len(ds.train)}/{len(ds.val)}/{len(ds.test)} train/val/test entries "
        f"on {t.name} ({t.num_nodes} nodes) to {args.out}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    started = _now()
    ds = load_dataset(args.dataset)
    enc_cfg = EncoderConfig(kind=args.encoder, use_node_embedding=args.ne == "on")
    pol_cfg = PolicyConfig(use_positional=args.pe == "on", keep_bias=args.keep_bias)
    tc = TrainConfig(
        algorithm=args.algo,
        alpha=args.alpha,
        lr=args.lr,
        lr_value=args.lr_value,
        n_ppo=args.n_ppo,
        n_ppg=args.n_ppg,
        minibatch=args.minibatch,
        k_epochs=args.k_epochs,
        episodes=args.episodes,
        eval_every=args.eval_every,
        seed=args.seed,
        pretrain=not args.no_pretrain,
        pretrain_steps=args.pretrain_steps,
        freeze_encoder=args.freeze_encoder,
        init_mode=args.init_mode,
        entropy_coef=args.entropy_coef,
        normalize_adv=args.normalize_adv == "on",
        max_grad_norm=args.max_grad_norm,
        value_warmup=args.value_warmup,
    )
    trainer = Trainer(ds, enc_cfg, pol_cfg, tc)
    if tc.pretrain:
        loss = trainer.pretrain()
        print(f"pretrained encoder for {tc.pretrain_steps} steps (loss {loss:.4f})")
    res = trainer.train(
        progress=lambda ep, v: print(f"episode {ep}: validation reward {v:+.4f}", flush=True)
    )
    trainer.restore_state(res.best_state)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.json")
    config = {
        "encoder": asdict(enc_cfg),
        "policy": asdict(pol_cfg),
        "train": asdict(tc),
    }
    save_checkpoint(
        trainer.store,
        ckpt,
        config,
        rng_state=trainer.rng.bit_generator.state,
        extra={
            "best_val_reward": res.best_val_reward,
            "final_val_reward": res.final_val_reward,
        },
    )
    rewards_csv = os.path.join(args.out, "rewards.csv")
    with open(rewards_csv, "w") as f:
        f.write("episode,reward\n")
        for ep, r in res.reward_curve:
            f.write(f"{ep},{r!r}\n")
    losses_csv = os.path.join(args.out, "losses.csv")
    with open(losses_csv, "w") as f:
        f.write("update,policy_loss,value_loss,aux_loss\n")
        for upd, pl, vl, al in res.loss_curve:
            cells = [str(upd)] + [("" if x is None else repr(x)) for x in (pl, vl, al)]
            f.write(",".join(cells) + "\n")
    _write_run_manifest(args.out, args, [ckpt, rewards_csv, losses_csv], started)
    print(f"best validation reward {res.best_val_reward:+.4f}; checkpoint at {ckpt}")
    return EXIT_OK


_INIT_MAP = {"perturbed": "entry", "random": "random", "zero": "zero"}


def cmd_eval(args) -> int:
    started = _now()
    ds = load_dataset(args.dataset)
    trainer, _ = _trainer_from_checkpoint(ds, args.checkpoint, args.alpha)
    if args.reference:
        per_entry = [
            trainer.evaluator(e).metrics(e.reference) for e in ds.split(args.split)
        ]
        from .routing import mean_metrics

        mean = mean_metrics(per_entry)
    else:
        mean, per_entry = evaluate_policy(
            trainer, args.split, _INIT_MAP[args.init], args.seed
        )
    print(Metrics.CSV_HEADER)
    print(mean.csv_row())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        metrics_csv = os.path.join(args.out, "metrics.csv")
        with open(metrics_csv, "w") as f:
            f.write(Metrics.CSV_HEADER + "\n")
            f.write(mean.csv_row() + "\n")
        per_csv = os.path.join(args.out, "per_entry.csv")
        with open(per_csv, "w") as f:
            f.write("entry," + Metrics.CSV_HEADER + "\n")
            for e, m in zip(ds.split(args.split), per_entry):
                f.write(f"{e.id}," + m.csv_row() + "\n")
        _write_run_manifest(args.out, args, [metrics_csv, per_csv], started)
    return EXIT_OK


def cmd_bench_time(args) -> int:
    started = _now()
    ds = load_dataset(args.dataset)
    trainer, _ = _trainer_from_checkpoint(ds, args.checkpoint)
    solver_cfg = SolverConfig(**ds.manifest["solver"])
    pool = ds.split(args.split) or ds.train
    entries = [pool[i % len(pool)] for i in range(args.n)]
    rows = []
    for e in entries:
        ev = trainer.evaluator(e)
        t0 = time.perf_counter()
        rep = encode_state(trainer.store, trainer.enc_cfg, trainer.cache, e.initial, e.requests)
        res = decode_actions(
            trainer.store, trainer.pol_cfg, trainer.topology, rep.mean, e.initial, "greedy"
        )
        dep = apply_scaling(e.initial, res.grid)
        ev.delays(dep)
        policy_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        solve_reference(trainer.topology, list(e.requests), solver_cfg)
        solver_s = time.perf_counter() - t0
        rows.append((e.id, policy_s, solver_s))
    policy_mean = float(np.mean([r[1] for r in rows]))
    solver_mean = float(np.mean([r[2] for r in rows]))
    ratio = solver_mean / policy_mean if policy_mean > 0 else float("inf")
    print("entry,policy_s,solver_s")
    for eid, ps, ss in rows:
        print(f"{eid},{ps:.6f},{ss:.6f}")
    print(f"policy mean {policy_mean:.6f} s, solver mean {solver_mean:.6f} s, ratio {ratio:.2f}x")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        timings_csv = os.path.join(args.out, "timings.csv")
        with open(timings_csv, "w") as f:
            f.write("entry,policy_s,solver_s\n")
            for eid, ps, ss in rows:
                f.write(f"{eid},{ps!r},{ss!r}\n")
            f.write(f"mean,{policy_mean!r},{solver_mean!r}\n")
        _write_run_manifest(args.out, args, [timings_csv], started)
    return EXIT_OK


def cmd_dump_deployment(args) -> int:
    started = _now()
    ds = load_dataset(args.dataset)
    trainer, _ = _trainer_from_checkpoint(ds, args.checkpoint)
    entry, split = _find_entry(ds, args.entry)
    rep = encode_state(
        trainer.store, trainer.enc_cfg, trainer.cache, entry.initial, entry.requests
    )
    res = decode_actions(
        trainer.store, trainer.pol_cfg, trainer.topology, rep.mean, entry.initial, "greedy"
    )
    dep = apply_scaling(entry.initial, res.grid)
    ev = trainer.evaluator(entry)
    delays = ev.delays(dep)
    lines = [f"entry {entry.id} ({split} split), {len(entry.requests)} requests"]
    lines.append("")
    lines.append("scaling grid:")
    lines.append("node_id,vnf,action")
    dep_ids = trainer.topology.deployable_ids
    for rank, node in enumerate(dep_ids):
        for v in range(res.actions.shape[1]):
            act = ScaleAction(int(res.actions[rank, v]))
            lines.append(f"{node},{VnfType(v).label},{act.name.capitalize()}")
    lines.append("")
    lines.append("instances:")
    lines.append("node,vnf,count")
    for node in range(trainer.topology.num_nodes):
        for v in range(dep.counts.shape[1]):
            c = int(dep.counts[node, v])
            if c > 0:
                lines.append(f"{node},{VnfType(v).label},{c}")
    lines.append("")
    lines.append("requests:")
    lines.append("id,delay_ms,sla_ms,violated")
    from .routing import route_chain

    paths = []
    for k, req in enumerate(entry.requests):
        d = float(delays[k])
        violated = not np.isfinite(d) or (req.sla_ms is not None and d > req.sla_ms)
        sla = "" if req.sla_ms is None else repr(float(req.sla_ms))
        shown = "unroutable" if not np.isfinite(d) else repr(d)
        lines.append(f"{req.id},{shown},{sla},{violated}")
        pr = route_chain(trainer.topology, dep, req, trainer.cfg.proc_ms)
        if pr.routable:
            paths.append(f"request {req.id} path: " + "->".join(str(h) for h in pr.hops))
        else:
            paths.append(f"request {req.id} path: unroutable")
    lines.append("")
    lines.extend(paths)
    lines.append("")
    lines.append(f"reward {ev.reward(dep)!r}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "deployment.txt")
        with open(path, "w") as f:
            f.write(text)
        _write_run_manifest(args.out, args, [path], started)
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    started = _now()
    ds = load_dataset(args.dataset)
    trainer, _ = _trainer_from_checkpoint(ds, args.checkpoint)
    entry, _ = _find_entry(ds, args.entry)
    rep = encode_state(
        trainer.store, trainer.enc_cfg, trainer.cache, entry.initial, entry.requests
    )
    h = rep.mean.data
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "embeddings.csv")
    with open(path, "w") as f:
        for node in range(h.shape[0]):
            cells = [str(node)] + [repr(float(x)) for x in h[node]]
            f.write(",".join(cells) + "\n")
    _write_run_manifest(args.out, args, [path], started)
    print(f"wrote {h.shape[0]} rows x {h.shape[1] + 1} cols to {path}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vnfscale", description=__doc__)
    p.add_argument("--version", action="version", version=f"vnfscale {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-dataset", help="generate a solver-labeled dataset")
    g.add_argument("--topology", default="internet2",
                   help="internet2, mec, or a topology JSON file")
    g.add_argument("--entries", type=int, default=100)
    g.add_argument("--requests-per-entry", type=int, default=10)
    g.add_argument("--alpha", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--solver-mode", choices=("exact", "local_search"),
                   default="local_search")
    g.add_argument("--slack", type=float, default=0.95)
    g.add_argument("--init-mode", choices=("perturb", "random", "zero"),
                   default="perturb")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a scaling policy")
    t.add_argument("--dataset", required=True)
    t.add_argument("--algo", choices=("reinforce", "ppo", "ppg"), default="ppg")
    t.add_argument("--encoder", choices=("gat", "ggnn"), default="gat")
    t.add_argument("--pe", choices=("on", "off"), default="on")
    t.add_argument("--ne", choices=("on", "off"), default="on")
    t.add_argument("--alpha", type=float, default=0.2)
    t.add_argument("--episodes", type=int, default=1024)
    t.add_argument("--eval-every", type=int, default=128)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--no-pretrain", action="store_true")
    t.add_argument("--pretrain-steps", type=int, default=200)
    t.add_argument("--freeze-encoder", action="store_true")
    t.add_argument("--init-mode", choices=("entry", "mixed"), default="mixed")
    t.add_argument("--entropy-coef", type=float, default=0.0)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--lr-value", type=float, default=1.5e-4)
    t.add_argument("--n-ppo", type=int, default=16)
    t.add_argument("--n-ppg", type=int, default=64)
    t.add_argument("--minibatch", type=int, default=4)
    t.add_argument("--k-epochs", type=int, default=4)
    t.add_argument("--keep-bias", type=float, default=1.5)
    t.add_argument("--normalize-adv", choices=("on", "off"), default="on")
    t.add_argument("--max-grad-norm", type=float, default=0.5)
    t.add_argument("--value-warmup", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--init", choices=("perturbed", "random", "zero"),
                   default="perturbed")
    e.add_argument("--alpha", type=float, default=None,
                   help="override the checkpoint's instance cost weight")
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--reference", action="store_true",
                   help="score the solver reference deployments instead")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench-time", help="time policy decisions vs the solver")
    b.add_argument("--dataset", required=True)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--n", type=int, default=10)
    b.add_argument("--split", choices=("train", "val", "test"), default="test")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench_time)

    d = sub.add_parser("dump-deployment",
                       help="show the deployment the policy generates for an entry")
    d.add_argument("--dataset", required=True)
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--entry", type=int, required=True)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_dump_deployment)

    x = sub.add_parser("export-embeddings",
                       help="write an entry's node representations as CSV")
    x.add_argument("--dataset", required=True)
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--entry", type=int, required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"vnfscale: {e}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits on --help/--version (0) and bad usage (already 1)
        return int(e.code or 0)
    try:
        return args.func(args)
    except VnfScaleError as e:
        print(f"vnfscale: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as e:
        print(f"vnfscale: {e}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
