"""Command line entry points.

Subcommands: ``synth-data`` (write client dataset files), ``run`` (full
experiment from a config file), ``aggregate`` (offline aggregation over
checkpoint files), ``eval`` (score a checkpoint on a dataset file) and
``report`` (summarize a curves.csv log).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CorruptCheckpointError, load_checkpoint_full, save_checkpoint
from .data import DataError, default_profiles, load_client, ood_client, save_client, synth
from .freq_agg import FEDAVG, PFA, AggregationRequest, fedavg_aggregate, pfa_aggregate
from .metrics import evaluate
from .model import MODEL_SPECS, predict_probs
from .orchestrator import (
    ConfigError,
    emit_report,
    load_config,
    mean_boundary_change,
    run_experiment,
    save_run_checkpoints,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


def _cmd_synth_data(args) -> int:
    profiles = default_profiles(args.scale)
    dataset = synth(profiles, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, client in enumerate(dataset.clients):
        path = out / f"client_{i}.fsd"
        save_client(client, path)
        print(f"wrote {path} ({client.features.shape[0]} samples)")
    if args.ood:
        client = ood_client(profiles, args.seed)
        path = out / "ood.fsd"
        save_client(client, path)
        print(f"wrote {path} ({client.features.shape[0]} samples)")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if not cfg.out_dir:
        raise ConfigError("no output directory: set out_dir in the config or pass --out-dir")
    result = run_experiment(cfg)
    files = emit_report(result.rows, result, cfg.out_dir)
    files += save_run_checkpoints(result, cfg.out_dir)
    for path in files:
        print(f"wrote {path}")
    print(f"macro F1 {result.macro_f1:.4f}  macro AUC {result.macro_auc:.4f}")
    return 0


def _cmd_aggregate(args) -> int:
    loaded = [load_checkpoint_full(p) for p in args.checkpoints]
    model_id = loaded[0][1]
    maps = [params for _, _, params in loaded]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.strategy == PFA:
        aggregates = pfa_aggregate(AggregationRequest(maps, r=args.r, strategy=PFA))
        for src, agg in zip(args.checkpoints, aggregates):
            path = out / f"{Path(src).stem}.agg.ckpt"
            save_checkpoint(agg, path, model_id=model_id)
            print(f"wrote {path}")
    else:
        merged = fedavg_aggregate(AggregationRequest(maps, strategy=FEDAVG))
        path = out / "global.ckpt"
        save_checkpoint(merged, path, model_id=model_id)
        print(f"wrote {path}")
    return 0


def _cmd_eval(args) -> int:
    _, model_id, params = load_checkpoint_full(args.checkpoint)
    if model_id not in MODEL_SPECS:
        raise ConfigError(f"checkpoint has unknown model id {model_id!r}")
    spec = MODEL_SPECS[model_id]
    client = load_client(args.data)
    x, y = client.split_xy(args.split)
    if len(y) == 0:
        raise DataError(f"{args.data}: split {args.split!r} is empty")
    result = evaluate(predict_probs(params, spec, x), y, spec.classes)
    print(
        json.dumps(
            {
                "split": args.split,
                "samples": int(len(y)),
                "macro_f1": result.macro_f1,
                "macro_auc": result.macro_auc,
                "per_class_f1": list(result.f1),
            },
            indent=2,
        )
    )
    return 0


def _cmd_report(args) -> int:
    rows = _read_curves(Path(args.curves))
    clients = sorted({r.client for r in rows})
    print(f"{'client':>6} {'epochs':>6} {'best phi_p':>10} {'final phi_p':>11} {'mean comm delta':>15}")
    for c in clients:
        mine = [r for r in rows if r.client == c]
        phi = [r.phi_p for r in mine if not np.isnan(r.phi_p)]
        try:
            delta = f"{mean_boundary_change(rows, c):+.4f}"
        except ValueError:
            delta = "n/a"
        print(
            f"{c:>6} {len(mine):>6} {max(phi):>10.4f} {phi[-1]:>11.4f} {delta:>15}"
        )
    return 0


def _read_curves(path: Path):
    from .orchestrator import RoundRow

    rows = []
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "epoch,client,phase,ce_loss,kl_loss,phi_d,phi_p,r,comm_event":
        raise DataError(f"{path}: not a curves.csv file")
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            RoundRow(
                epoch=int(parts[0]),
                client=int(parts[1]),
                phase=parts[2],
                ce_loss=float(parts[3]),
                kl_loss=float(parts[4]),
                phi_d=float(parts[5]),
                phi_p=float(parts[6]),
                r=float(parts[7]),
                comm_event=int(parts[8]),
            )
        )
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedfreq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate client dataset files")
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ood", action="store_true", help="also write the held-out client")
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("aggregate", help="aggregate checkpoint files offline")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--strategy", choices=[PFA, FEDAVG], default=PFA)
    p.add_argument("--r", type=float, default=0.35, help="low-frequency threshold for PFA")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="summarize a curves.csv log")
    p.add_argument("--curves", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorruptCheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
