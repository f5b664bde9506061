"""Operator entry point: configure a run, execute it, write reports.

Two subcommands: `run` trains one model end to end (optionally sweeping
party counts) and writes a machine report plus a human summary; `verify`
exercises the primitive suites and a small trace-equivalence check.

The machine report (report.json) is byte-identical across reruns with the
same config and seed on the memory transport; wall-clock timing therefore
lives only in the human summary.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fixedpoint as fx
from . import glm, metrics, paillier, protocol, sharing
from . import transport as tp
from .data import (
    VerticalDataset,
    bundled_dataset_path,
    load_csv,
    standardize,
    train_test_split,
    vertical_split,
)
from .fixedpoint import FieldParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROTOCOL = 4

MODEL_FAMILIES = {"lr": "logistic", "pr": "poisson"}
DEFAULT_RATES = {"lr": 0.15, "pr": 0.1}
SPLIT_RATIO = 0.7


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfglm", description="Vertically federated GLM training"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one model end to end")
    run.add_argument("--model", choices=("lr", "pr"), required=True)
    run.add_argument("--dataset", required=True,
                     help="CSV path or bundled dataset name")
    run.add_argument("--label-col", default="label")
    run.add_argument("--parties", type=int, default=2)
    run.add_argument("--key-bits", type=int, choices=(256, 1024, 2048),
                     default=1024)
    run.add_argument("--max-iter", type=int, default=30)
    run.add_argument("--loss-threshold", type=float, default=1e-4)
    run.add_argument("--learning-rate", type=float, default=None,
                     help="default 0.15 for lr, 0.1 for pr")
    run.add_argument("--batch-size", type=int, default=1024)
    run.add_argument("--transport", choices=("memory", "tcp"), default="memory")
    run.add_argument("--cp-policy", choices=("fixed", "random"), default="fixed")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="runs")
    run.add_argument("--no-standardize", action="store_true")
    run.add_argument("--frac-bits", type=int, default=24)
    run.add_argument("--q-bits", type=int, default=64)
    run.add_argument("--sweep-parties", action="store_true",
                     help="run every k from 2 up to --parties")

    verify = sub.add_parser("verify", help="run the primitive check suites")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--corrupt-triples", action="store_true",
                        help="inject a bad triple; the product suite must fail")
    return parser


def _resolve_dataset(path_arg: str) -> Path:
    p = Path(path_arg)
    if p.exists():
        return p
    try:
        return bundled_dataset_path(path_arg)
    except FileNotFoundError:
        raise CliError(f"dataset not found: {path_arg}", EXIT_DATA)


def _load_split(args):
    family = MODEL_FAMILIES[args.model]
    path = _resolve_dataset(args.dataset)
    try:
        table = load_csv(path, args.label_col,
                         binary_labels=(family == "logistic"))
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad dataset: {exc}", EXIT_DATA)
    if args.parties < 2:
        raise CliError("--parties must be at least 2", EXIT_CONFIG)
    ds = vertical_split(table, args.parties)
    train_ds, test_ds = train_test_split(ds, SPLIT_RATIO, seed=args.seed)
    if not args.no_standardize:
        train_ds, test_ds = standardize(train_ds, test_ds)
    return family, train_ds, test_ds


def _train_config(args, family: str) -> protocol.TrainConfig:
    rate = args.learning_rate
    if rate is None:
        rate = DEFAULT_RATES[args.model]
    try:
        ring = FieldParams(args.q_bits, args.frac_bits)
        return protocol.TrainConfig(
            family=family,
            learning_rate=rate,
            max_iterations=args.max_iter,
            tolerance=args.loss_threshold,
            batch_size=args.batch_size,
            key_bits=args.key_bits,
            cp_policy=args.cp_policy,
            seed=args.seed,
            ring=ring,
        )
    except ValueError as exc:
        raise CliError(f"bad config: {exc}", EXIT_CONFIG)


def _run_one(train_ds: VerticalDataset, config: protocol.TrainConfig,
             transport: str):
    endpoints = None
    tcp_eps = []
    if transport == "tcp":
        ledger = tp.TrafficLedger()
        tcp_eps = [tp.TcpEndpoint(p, ledger) for p in range(train_ds.n_parties)]
        addrs = {p: e.address for p, e in enumerate(tcp_eps)}
        for e in tcp_eps:
            e.set_peers(addrs)
        endpoints = tcp_eps
    try:
        return protocol.train(train_ds, config, endpoints=endpoints)
    except (RuntimeError, TimeoutError) as exc:
        raise CliError(f"protocol failure: {exc}", EXIT_PROTOCOL)
    finally:
        for e in tcp_eps:
            e.close()


def _evaluate(family: str, test_ds: VerticalDataset, weights) -> dict:
    if family == "logistic":
        score = glm.predict_linear(test_ds.blocks, weights)
        return {
            "auc": metrics.auc(score, test_ds.labels),
            "ks": metrics.ks(score, test_ds.labels),
        }
    pred = glm.predict_mean(test_ds.blocks, weights, family)
    return {
        "mae": metrics.mae(pred, test_ds.labels),
        "rmse": metrics.rmse(pred, test_ds.labels),
    }


def _summary_text(report: dict, wall_s: float) -> str:
    cfg = report["config"]
    traffic = report["traffic"]
    lines = [
        f"model family:      {cfg['family']}",
        f"parties:           {cfg['parties']}",
        f"iterations run:    {report['iterations']}"
        + (" (stopped early)" if report["stopped_early"] else ""),
        f"final loss:        {report['losses'][-1]:.6f}",
        f"messages sent:     {traffic['messages']}",
        f"traffic total:     {traffic['total_mib']:.2f} MiB",
        f"wall time:         {wall_s:.2f} s",
        "test metrics:      "
        + ", ".join(f"{k}={v:.4f}" for k, v in report["test_metrics"].items()),
    ]
    return "\n".join(lines) + "\n"


def _write_report(out_dir: Path, report: dict, wall_s: float, suffix: str = ""):
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"report{suffix}.json"
    with open(out_dir / name, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    metrics.export_loss_curve(report["losses"], out_dir / f"loss_curve{suffix}.csv")
    with open(out_dir / f"summary{suffix}.txt", "w") as fh:
        fh.write(_summary_text(report, wall_s))


def cmd_run(args) -> int:
    family, train_ds, test_ds = _load_split(args)
    config = _train_config(args, family)
    out_dir = Path(args.out)
    ks = range(2, args.parties + 1) if args.sweep_parties else [args.parties]

    sweep_rows = []
    for k in ks:
        if args.sweep_parties:
            # resplit the same table at this party count
            ns = argparse.Namespace(**vars(args))
            ns.parties = k
            family, train_k, test_k = _load_split(ns)
        else:
            train_k, test_k = train_ds, test_ds
        outcome = _run_one(train_k, config, args.transport)
        report = dict(outcome.report)
        wall_s = report.pop("wall_time_s")
        report["test_metrics"] = _evaluate(family, test_k, outcome.weights)
        report["transport"] = args.transport
        suffix = f"_k{k}" if args.sweep_parties else ""
        _write_report(out_dir, report, wall_s, suffix)
        sweep_rows.append({
            "parties": k,
            "total_bytes": report["traffic"]["total_bytes"],
            "messages": report["traffic"]["messages"],
            "iterations": report["iterations"],
        })
        print(f"k={k}: {report['iterations']} iterations, "
              f"{report['traffic']['total_mib']:.2f} MiB, "
              f"metrics {report['test_metrics']}")

    if args.sweep_parties:
        xs = np.array([r["parties"] for r in sweep_rows], dtype=float)
        ys = np.array([r["total_bytes"] for r in sweep_rows], dtype=float)
        slope, intercept = np.polyfit(xs, ys, 1)
        fitted = slope * xs + intercept
        ss_res = float(np.sum((ys - fitted) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot else 1.0
        sweep = {
            "runs": sweep_rows,
            "bytes_per_party": slope,
            "base_bytes": intercept,
            "r_squared": r2,
        }
        with open(out_dir / "sweep.json", "w") as fh:
            json.dump(sweep, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"sweep: {r2:.5f} R^2, {slope / 2**20:.2f} MiB per extra party")
    return EXIT_OK


def _verify_shares(rng) -> bool:
    params = FieldParams()
    for _ in range(1000):
        z = fx.ring_uniform(8, params, rng)
        s0, s1 = sharing.split(z, params, rng)
        if not np.array_equal(sharing.reconstruct(s0, s1), z):
            return False
    return True


def _verify_paillier(rng) -> bool:
    kp = paillier.keygen(256, rng)
    for _ in range(50):
        a = int(rng.integers(0, 2**40))
        b = int(rng.integers(0, 2**40))
        k = int(rng.integers(1, 1000))
        ca, cb = paillier.encrypt(a, kp.pk, rng), paillier.encrypt(b, kp.pk, rng)
        if paillier.decrypt(paillier.ct_add(ca, cb, kp.pk), kp) != a + b:
            return False
        if paillier.decrypt(paillier.ct_scalar_mul(ca, k, kp.pk), kp) != a * k:
            return False
    return True


def _verify_beaver(rng, corrupt: bool) -> bool:
    params = FieldParams()
    dealer = sharing.TripleDealer(params, rng)
    for trial in range(200):
        t0, t1 = dealer.deal(4)
        if corrupt and trial == 17:
            t0.omega = fx.ring_add(t0.omega, np.uint64(1 << 30), params)
        x = fx.encode(rng.uniform(-4, 4, 4), params)
        y = fx.encode(rng.uniform(-4, 4, 4), params)
        x0, x1 = sharing.split(x, params, rng)
        y0, y1 = sharing.split(y, params, rng)
        z0, z1 = sharing.beaver_mul_pair(x0, x1, y0, y1, t0, t1)
        got = fx.decode(sharing.reconstruct(z0, z1), params)
        want = fx.decode(x, params) * fx.decode(y, params)
        if np.max(np.abs(got - want)) > 2.0 ** (1 - params.frac_bits):
            return False
    return True


def _verify_trace(seed: int) -> bool:
    table = load_csv(bundled_dataset_path("synthetic_logistic_small"), "label",
                     binary_labels=True)
    ds = vertical_split(table, 2)
    config = protocol.TrainConfig(
        "logistic", 0.15, max_iterations=10, batch_size=64,
        key_bits=256, seed=seed,
    )
    out = protocol.train(ds, config)
    ref = glm.reference_train(ds.blocks, ds.labels, config.glm_spec())
    return all(abs(a - b) <= 1e-3 for a, b in zip(out.losses, ref.losses))


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = [
        ("share reconstruction", lambda: _verify_shares(rng)),
        ("paillier identities", lambda: _verify_paillier(rng)),
        ("beaver products", lambda: _verify_beaver(rng, args.corrupt_triples)),
        ("trace equivalence", lambda: _verify_trace(args.seed)),
    ]
    failed = False
    for name, check in checks:
        ok = check()
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed = failed or not ok
    return EXIT_PROTOCOL if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
