"""Command-line entry point: ``egamtl {gen,train,compare,sweep,report}``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path

import yaml

from . import harness, synth
from .balance import STRATEGIES
from .errors import EGAError
from .metrics import mean_ci, read_rows, write_rows
from .netcore import save_checkpoint

log = logging.getLogger("egamtl")


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "strategy", None):
        cfg.strategy = args.strategy
    if getattr(args, "temperature", None) is not None:
        cfg.temperature = args.temperature
    cfg.validate()
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, text: str) -> None:
    (out / "summary.txt").write_text(text + "\n")
    print(text)


def cmd_gen(args) -> None:
    cfg = _config(args)
    if args.seed is not None:
        cfg.data_seed = args.seed
    out = _out(args)
    for k, rec in enumerate(harness.make_records(cfg)):
        synth.write_record(rec, out / f"record_{k:03d}.txt")
    print(f"wrote {cfg.n_records} records to {out}")


def _loss_table(run: harness.RunRecord) -> str:
    lines = ["epoch,split," + ",".join(harness.TASKS)]
    for split, arr in (("train", run.train_losses), ("val", run.val_losses)):
        for e, row in enumerate(arr, start=1):
            lines.append(f"{e},{split}," + ",".join(repr(float(v)) for v in row))
    lines.append("final,test," + ",".join(repr(float(v)) for v in run.test_losses))
    return "\n".join(lines) + "\n"


def cmd_train(args) -> None:
    cfg = _config(args)
    out = _out(args)
    run = harness.train(cfg)
    write_rows(run.rows(), out / "rows.csv")
    (out / "losses.csv").write_text(_loss_table(run))
    save_checkpoint(run.net, out / "checkpoint.json")
    lines = [f"strategy={run.strategy} seed={run.seed} config={run.config_hash} skipped_updates={run.skipped_updates}"]
    lines += [f"{task:<10}{metric:<18}{value:.6g}" for (task, metric), value in run.metrics.items()]
    _write_summary(out, "\n".join(lines))


def _strategies(args, cfg) -> list:
    if args.strategy:
        return [harness.StrategySpec(args.strategy, cfg.temperature)]
    if cfg.strategies:
        return cfg.strategies
    return [
        harness.StrategySpec("equal_weight"),
        harness.StrategySpec("ortho_only"),
        harness.StrategySpec("ega", cfg.temperature),
    ]


def cmd_compare(args) -> None:
    cfg = _config(args)
    out = _out(args)
    result = harness.compare_strategies(cfg, _strategies(args, cfg), args.baseline)
    write_rows(result.rows, out / "rows.csv")
    _write_summary(out, harness.format_table(result.summary))


def cmd_sweep(args) -> None:
    cfg = _config(args)
    out = _out(args)
    protocols = cfg.noise
    if args.protocol == "constant":
        protocols = harness.constant_protocols()
    elif args.protocol == "abrupt":
        protocols = harness.abrupt_protocols()
    result = harness.noise_sweep(cfg, protocols)
    write_rows(result.rows, out / "rows.csv")
    text = harness.format_table(result.summary)
    if result.monotone is not None:
        text += f"\nconstant-noise delta_m monotone in SNR: {result.monotone}"
    _write_summary(out, text)


def cmd_report(args) -> None:
    groups = defaultdict(list)
    for path in args.rows:
        for r in read_rows(path):
            key = (r.strategy, "" if math.isnan(r.T) else f"{r.T:g}", r.noise_type,
                   "" if math.isnan(r.noise_db) else f"{r.noise_db:g}", r.task, r.metric)
            groups[key].append(r.value)
    header = f"{'strategy':<14}{'T':>6}{'noise':>12}{'dB':>6}  {'task':<10}{'metric':<18}{'n':>4}{'mean':>14}{'ci95':>12}"
    lines = [header, "-" * len(header)]
    for key in sorted(groups):
        vals = [v for v in groups[key] if math.isfinite(v)]
        mean, ci = mean_ci(vals)
        s, t, nt, db, task, metric = key
        lines.append(f"{s:<14}{t:>6}{nt:>12}{db:>6}  {task:<10}{metric:<18}{len(vals):>4}{mean:>14.6g}{ci:>12.4g}")
    text = "\n".join(lines)
    if args.out:
        _write_summary(_out(args), text)
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="egamtl", description="Gradient-balancing experiments on synthetic cardiac data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="run seed (data seed for gen)")
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("gen", help="write synthetic records")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="one training run")
    common(sp)
    sp.add_argument("--strategy", choices=sorted(STRATEGIES))
    sp.add_argument("--temperature", type=float)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("compare", help="repeated runs per strategy against a baseline")
    common(sp)
    sp.add_argument("--strategy", choices=sorted(STRATEGIES),
                    help="compare only this strategy")
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--baseline", help="strategy id or single_task (default from config)")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="noise robustness of clean-trained models")
    common(sp)
    sp.add_argument("--strategy", choices=sorted(STRATEGIES))
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--protocol", choices=["config", "constant", "abrupt"], default="config",
                    help="noise grid: from the config, the constant-SNR grid or the abrupt grid")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="aggregate rows files")
    sp.add_argument("rows", nargs="+", help="rows.csv files")
    sp.add_argument("--out", help="also write summary.txt here")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EGAError, OSError, yaml.YAMLError, KeyError, ValueError) as err:
        print(f"egamtl {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
