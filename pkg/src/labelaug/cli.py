"""Command-line experiment runner.

Subcommands::

    labelaug train    --config cfg.ini [--seed N --out DIR --force]
    labelaug eval     --config cfg.ini          # clean error + calibration
    labelaug corrupt  --config cfg.ini          # corruption sweep
    labelaug attack   --config cfg.ini          # adversarial sweep
    labelaug report   --config cfg.ini [--force]  # full pipeline + report
    labelaug compare  RUN_DIR [RUN_DIR ...] [--out FILE]

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment
from .errors import ConfigError, DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _add_run_flags(sub, force: bool = True):
    sub.add_argument("--config", required=True, help="experiment config (INI)")
    sub.add_argument("--seed", type=int, default=None, help="override [run] seed")
    sub.add_argument("--out", default=None, help="override [run] out directory")
    if force:
        sub.add_argument("--force", action="store_true",
                         help="overwrite artifacts from a previous run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelaug",
                                     description="robust-training experiment runner")
    subs = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(subs.add_parser("train", help="train and checkpoint a model"))
    _add_run_flags(subs.add_parser("eval", help="clean error and calibration"), force=False)
    _add_run_flags(subs.add_parser("corrupt", help="corruption sweep"), force=False)
    attack = subs.add_parser("attack", help="adversarial sweep")
    _add_run_flags(attack, force=False)
    attack.add_argument("--dump", action="store_true",
                        help="also write the adversarial batches as .npy tensor files")
    _add_run_flags(subs.add_parser("report", help="full pipeline: train + all sweeps + report"))

    comp = subs.add_parser("compare", help="tabulate several finished runs")
    comp.add_argument("runs", nargs="+", help="run directories with report.json")
    comp.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    return parser


def _config(args) -> experiment.ExperimentConfig:
    return experiment.load_config(args.config, {"seed": args.seed, "out": args.out})


def _load_eval_inputs(cfg):
    _, test_ds = experiment.load_datasets(cfg)
    model = experiment.load_model(cfg, test_ds.class_count, cfg.run_dir)
    return model, test_ds


def _write_fragment(cfg, name: str, payload: dict):
    path = cfg.run_dir / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_train(args) -> int:
    cfg = _config(args)
    _, log = experiment.run_training(cfg, force=args.force)
    last = log[-1]
    print(f"run {cfg.run_id}: trained {cfg.regime} for {cfg.epochs} epochs, "
          f"final loss {last.mean_loss:.4f}, train accuracy {100 * last.train_accuracy:.2f}%")
    print(f"artifacts in {cfg.run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    model, test_ds = _load_eval_inputs(cfg)
    result = experiment.evaluate_clean(model, test_ds, cfg)
    path = _write_fragment(cfg, "clean_eval.json", result)
    print(f"clean error {result['clean_error']:.2f}%  "
          f"ece {result['ece']:.2f}%  rms {result['rms']:.2f}%  -> {path}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    cfg = _config(args)
    model, test_ds = _load_eval_inputs(cfg)
    result = experiment.evaluate_corruptions(model, test_ds, cfg)
    path = _write_fragment(cfg, "corruptions.json", result)
    for cid in sorted(result["ce"]):
        print(f"{cid}: CE {result['ce'][cid]:.2f}%")
    print(f"mCE {result['mce']:.2f}%  -> {path}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _config(args)
    model, test_ds = _load_eval_inputs(cfg)
    dump_dir = cfg.run_dir / "adversarial" if args.dump else None
    result = experiment.evaluate_attacks(model, test_ds, cfg, dump_dir=dump_dir)
    path = _write_fragment(cfg, "attacks.json", result)
    for key in sorted(result):
        print(f"{key}: error {result[key]:.2f}%")
    print(f"-> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    report = experiment.run_experiment(cfg, force=args.force)
    for metric, value in report.metric_rows():
        print(f"{metric}: {value:.2f}%")
    print(f"report written to {cfg.run_dir / 'report.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    table = experiment.compare_runs(args.runs)
    if args.out:
        Path(args.out).write_text(table)
        print(f"comparison written to {args.out}")
    else:
        sys.stdout.write(table)
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "corrupt": cmd_corrupt,
    "attack": cmd_attack,
    "report": cmd_report,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
