"""Command-line entry point: ``train``, ``attack-eval``, ``gain-check``, ``mppd-demo``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .attacks import FGSM, GAUSSIAN, PGD, RFGSM, AttackConfig, accuracy_under_attack
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .data import Dataset, IdxError, load_idx, robustness_blobs
from .demo import DEMO_COLUMNS, constant_scenario, gaussian_scenario, lag1_autocorr
from .network import DLIF, LIF, NetworkDef, init_network
from .neuron import LifParams
from .numerics import ConvergenceError, make_rng, spawn_rng
from .report import line_chart_svg, write_csv, write_svg
from .stability import audit_network, empirical_gain
from .training import EpochRecord, NonFiniteLossError, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

METRIC_COLUMNS = ("epoch", "task_loss", "msmppd", "clean_acc", "pgd_acc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# ---- data and model construction -------------------------------------------


def build_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "idx":
        paths = (cfg.idx_train_images, cfg.idx_train_labels, cfg.idx_test_images, cfg.idx_test_labels)
        if any(p is None for p in paths):
            raise ConfigError("dataset = idx needs idx_train_images, idx_train_labels, idx_test_images, idx_test_labels")
        for p in paths:
            if not Path(p).is_file():
                raise FileNotFoundError(f"data file not found: {p}")
        train = load_idx(paths[0], paths[1], cfg.idx_subset)
        test = load_idx(paths[2], paths[3], cfg.idx_subset)
        return train, test
    kw = dict(
        dim=cfg.layer_sizes[0],
        robust_dims=cfg.blob_robust_dims,
        robust_gap=cfg.blob_robust_gap,
        robust_std=cfg.blob_robust_std,
        weak_gap=cfg.blob_weak_gap,
        weak_std=cfg.blob_weak_std,
        background=cfg.blob_background,
    )
    train = robustness_blobs(cfg.samples_per_class, seed=100 + cfg.seed, **kw)
    test = robustness_blobs(cfg.test_samples_per_class, seed=200 + cfg.seed, **kw)
    return train, test


def build_network(cfg: RunConfig) -> NetworkDef:
    kind = DLIF if cfg.neuron == "dlif" else LIF
    return init_network(
        cfg.layer_sizes, cfg.num_classes, cfg.T, cfg.lif(), spawn_rng(make_rng(cfg.seed), 0), kind=kind, gain=cfg.init_gain
    )


def eval_attack_config(cfg: RunConfig) -> AttackConfig:
    eps = cfg.eval_epsilon_over_255 / 255
    step = None if cfg.eval_step_over_255 is None else cfg.eval_step_over_255 / 255
    return AttackConfig(kind=PGD, epsilon=eps, step=step, iters=cfg.eval_pgd_iters)


def _record_row(rec: EpochRecord):
    return (rec.epoch + 1, rec.task_loss, rec.msmppd, rec.extra["clean_acc"], rec.extra["pgd_acc"])


def _history_from_dicts(items) -> list[EpochRecord]:
    return [EpochRecord(**d) for d in items]


def _record_dict(rec: EpochRecord) -> dict:
    return dict(rec.__dict__)


# ---- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    train, test = build_datasets(cfg)
    tcfg = cfg.train_config()
    n_eval = min(cfg.eval_samples, len(test))
    X_eval, Y_eval = test.X[:n_eval], test.y[:n_eval]
    atk = eval_attack_config(cfg)

    if args.resume:
        state = ckpt_io.load(args.resume)
        if state.config and state.config != cfg.to_dict():
            raise ConfigError("checkpoint was written under a different config")
        net, start, history = state.net, state.epoch, _history_from_dicts(state.history)
        rng = ckpt_io.restore_rng(state.rng_state)
    else:
        net, start, history = build_network(cfg), 0, []
        rng = spawn_rng(make_rng(cfg.seed), 1)

    def on_epoch(net_now, rec: EpochRecord):
        # evaluation draws from its own per-epoch stream so it never shifts training randomness
        eval_rng = spawn_rng(make_rng(cfg.seed + 1000), rec.epoch)
        rec.extra["clean_acc"] = accuracy_under_attack(net_now, X_eval, Y_eval, None, omega=cfg.omega)
        rec.extra["pgd_acc"] = accuracy_under_attack(net_now, X_eval, Y_eval, atk, eval_rng, omega=cfg.omega)
        history.append(rec)
        done = rec.epoch + 1
        if not args.quiet:
            print(
                f"epoch {done:3d}  task {rec.task_loss:.4f}  msmppd {rec.msmppd:.4g}  "
                f"clean {rec.extra['clean_acc']:.3f}  pgd {rec.extra['pgd_acc']:.3f}"
            )
        state = ckpt_io.Checkpoint(
            net=net_now, epoch=done, config=cfg.to_dict(), rng_state=ckpt_io.rng_state(rng),
            history=[_record_dict(r) for r in history],
        )
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            ckpt_io.save(out / f"epoch_{done:04d}.ckpt", state)
        if done == tcfg.epochs:
            ckpt_io.save(out / "final.ckpt", state)
        write_csv(out / "metrics.csv", METRIC_COLUMNS, [_record_row(r) for r in history], cfg.metadata())

    fit(net, train.X, train.y, tcfg, rng, start_epoch=start, callback=on_epoch)
    return EXIT_OK


ATTACK_KINDS = ("clean", FGSM, PGD, RFGSM, GAUSSIAN)


def cmd_attack_eval(args) -> int:
    state = ckpt_io.load(args.checkpoint)
    cfg = load_config(args.config) if args.config else config_from_dict(state.config)
    _, test = build_datasets(cfg)
    n = min(args.samples or cfg.eval_samples, len(test))
    X, Y = test.X[:n], test.y[:n]
    eps = args.epsilon_over_255 / 255
    step = None if args.step_over_255 is None else args.step_over_255 / 255
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    bad = [k for k in kinds if k not in ATTACK_KINDS]
    if bad:
        raise UsageError(f"unknown attack kind(s): {', '.join(bad)}; choose from {', '.join(ATTACK_KINDS)}")
    rows = []
    for i, kind in enumerate(kinds):
        rng = spawn_rng(make_rng(args.seed), i)
        if kind == "clean":
            acc = accuracy_under_attack(state.net, X, Y, None, omega=cfg.omega)
            rows.append((kind, 0.0, 0.0, 0, acc))
        else:
            acfg = AttackConfig(kind=kind, epsilon=eps, step=step, iters=args.iters)
            acc = accuracy_under_attack(state.net, X, Y, acfg, rng, omega=cfg.omega)
            iters = args.iters if kind == PGD else 1
            rows.append((kind, eps, acfg.step_size if kind == PGD else eps, iters, acc))
        print(f"{kind:9s} accuracy {rows[-1][-1]:.4f}")
    meta = dict(cfg.metadata(), seed=args.seed)
    write_csv(args.out, ("attack", "epsilon", "step", "iters", "accuracy"), rows, meta)
    return EXIT_OK


GAIN_COLUMNS = ("layer", "lambda", "spectral", "gamma", "gamma_geometric", "empirical", "gap", "note")


def gain_rows(net: NetworkDef, trials: int, seed: int):
    bounds = audit_network(net, seed=seed)
    rows = []
    for b in bounds:
        W = net.weights[b.layer - 1]
        emp = float("nan")
        if b.applicable:
            # layer 1 sees the real-valued direct-coded image; deeper layers see spike differences
            emp = empirical_gain(W, b.lam, trials, net.T, spawn_rng(make_rng(seed), b.layer), real_valued=b.layer == 1)
        gamma = float("nan") if b.gamma is None else b.gamma
        geo = float("nan") if b.gamma_geometric is None else b.gamma_geometric
        rows.append((b.layer, b.lam, b.spectral, gamma, geo, emp, gamma - emp, b.note))
    return rows


def cmd_gain_check(args) -> int:
    if args.checkpoint:
        state = ckpt_io.load(args.checkpoint)
        net = state.net
        meta = config_from_dict(state.config).metadata() if state.config else {}
    else:
        lif = LifParams(lam=args.lam, u_th=1.0)
        sizes = [int(s) for s in args.layer_sizes.split(",")]
        net = init_network(sizes, args.num_classes, args.T, lif, make_rng(args.seed))
        meta = {"seed": args.seed, "lambda": args.lam, "u_th": 1.0, "T": args.T, "rho": "n/a", "chi": "n/a", "omega": "n/a"}
    rows = gain_rows(net, args.trials, args.seed)
    print(f"{'layer':>5} {'lambda':>8} {'||W||':>10} {'gamma':>10} {'geometric':>10} {'empirical':>10} {'gap':>10}  note")
    for r in rows:
        print(f"{r[0]:5d} {r[1]:8.4f} {r[2]:10.4f} {r[3]:10.4f} {r[4]:10.4f} {r[5]:10.4f} {r[6]:10.4f}  {r[7]}")
    if args.out:
        write_csv(args.out, GAIN_COLUMNS, rows, meta)
    return EXIT_OK


def cmd_mppd_demo(args) -> int:
    lif = LifParams(lam=args.lam, u_th=args.u_th)
    out = Path(args.out)
    meta = {"seed": args.seed, "lambda": lif.lam, "u_th": lif.u_th, "T": args.steps, "rho": "n/a", "chi": "n/a", "omega": "n/a"}
    for sc in (constant_scenario(args.steps, lif), gaussian_scenario(args.steps, lif, seed=args.seed)):
        write_csv(out / f"mppd_{sc.name}.csv", DEMO_COLUMNS, sc.rows(), meta)
        t = list(range(1, sc.steps + 1))
        series = {"simplified": (t, sc.simplified), "unsimplified": (t, sc.unsimplified)}
        if sc.name == "gaussian":
            series["input noise"] = (t, sc.drive)
        else:
            series["closed form"] = (t, sc.closed_form)
        svg = line_chart_svg(series, title=f"MPPD, {sc.name} scenario", xlabel="time step", ylabel="perturbation")
        write_svg(out / f"mppd_{sc.name}.svg", svg)
        print(f"{sc.name}: final TASAD {sc.tasad[-1]:.4f}, final STD {sc.std[-1]:.4f}")
        if sc.name == "gaussian" and sc.steps >= 3:
            print(f"  lag-1 autocorrelation: noise {lag1_autocorr(sc.drive):.3f}, simplified {lag1_autocorr(sc.simplified):.3f}")
    return EXIT_OK


# ---- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mppd-lab", description="Spiking-network MPPD robustness toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="runs/default")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack-eval", help="accuracy under attacks for a checkpoint")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--config", help="override the config stored in the checkpoint")
    a.add_argument("--kinds", default="clean,fgsm,pgd")
    a.add_argument("--epsilon-over-255", type=float, default=8.0)
    a.add_argument("--step-over-255", type=float, default=None, help="PGD step; default epsilon/4")
    a.add_argument("--iters", type=int, default=10)
    a.add_argument("--samples", type=int, default=None)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="attack_eval.csv")
    a.set_defaults(func=cmd_attack_eval)

    g = sub.add_parser("gain-check", help="per-layer L2-gain bound against an empirical estimate")
    g.add_argument("--checkpoint", help="omit to check a fresh random network")
    g.add_argument("--layer-sizes", default="784,128")
    g.add_argument("--num-classes", type=int, default=10)
    g.add_argument("--lambda", dest="lam", type=float, default=0.99)
    g.add_argument("--T", type=int, default=8)
    g.add_argument("--trials", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gain_check)

    d = sub.add_parser("mppd-demo", help="single-neuron MPPD scenarios as CSV and SVG")
    d.add_argument("--steps", type=int, default=30)
    d.add_argument("--lambda", dest="lam", type=float, default=0.99)
    d.add_argument("--u-th", type=float, default=1.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default="mppd_demo")
    d.set_defaults(func=cmd_mppd_demo)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ConfigError, ckpt_io.CheckpointError, IdxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, ConvergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
