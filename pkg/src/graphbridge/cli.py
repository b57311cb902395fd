"""Command-line entry point: generate, train, evaluate, ablate, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import runner
from .config import expand_sweep, load_config, parse_config
from .datasets import export_dataset
from .errors import ConfigError, DataFormatError, NumericError, SamplingError, TrainingError, ValidationError
from .graphstore import SOURCE, TARGET
from .trainer import MODES

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_VALIDATION = 5
EXIT_TRAINING = 6
EXIT_IO = 7
EXIT_INTERNAL = 8

# most specific first
_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (DataFormatError, EXIT_DATA),
    (TrainingError, EXIT_TRAINING),
    (NumericError, EXIT_TRAINING),
    (SamplingError, EXIT_TRAINING),
    (ValidationError, EXIT_VALIDATION),
    (OSError, EXIT_IO),
)

ABLATION_ORDER = ("full", "gcn_da", "random_link", "no_mi")

log = logging.getLogger("graphbridge")


def _experiment(args):
    exp = load_config(args.config) if args.config else parse_config("")
    if getattr(args, "seed", None) is not None:
        exp = exp.with_seed(args.seed)
    if getattr(args, "mode", None) is not None:
        exp = exp.with_mode(args.mode)
    return exp


def _out(args, exp) -> Path:
    return Path(args.out if args.out is not None else exp.out)


def _final_line(label, result) -> str:
    f, b = result.final, result.best
    if f is None:
        return f"{label}: no epochs run"
    return (
        f"{label}: final epoch {f.epoch} acc={f.target_accuracy} edges={f.inserted_edge_count}"
        + ("" if b is None else f" | best epoch {b.epoch} acc={b.target_accuracy}")
    )


def cmd_generate(args) -> int:
    exp = _experiment(args)
    out = _out(args, exp)
    source, target = runner.load_domains(exp)
    for name, g in ((SOURCE, source), (TARGET, target)):
        manifest = export_dataset(g, out, name)
        print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    exp = _experiment(args)
    out = _out(args, exp)
    result = runner.run_experiment(exp, out)
    print(_final_line(exp.label, result))
    print(f"results in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    exp = _experiment(args)
    source, target = runner.load_domains(exp)
    ev = runner.evaluate_checkpoint(args.checkpoint, source, target)
    text = runner.dumps(ev.to_dict())
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def ablate(exp, out: Path) -> dict:
    """Run all four variants on one config; random_link copies the full run's per-epoch edge counts."""
    graphs = runner.load_domains(exp)
    results = {}
    full = runner.run_experiment(exp.with_mode("full"), out / "full", graphs=graphs)
    results["full"] = full
    budget = [r.inserted_edge_count for r in full.history] or None
    for mode in ABLATION_ORDER[1:]:
        overrides = {"random_link_budget": budget} if mode == "random_link" else {}
        results[mode] = runner.run_experiment(exp.with_mode(mode, **overrides), out / mode, graphs=graphs)
    table = {
        mode: {
            "final_accuracy": None if r.final is None else r.final.target_accuracy,
            "best_accuracy": None if r.best is None else r.best.target_accuracy,
        }
        for mode, r in results.items()
    }
    (out / "ablation.json").write_text(runner.dumps(table) + "\n")
    return results


def cmd_ablate(args) -> int:
    exp = _experiment(args)
    out = _out(args, exp)
    for mode, r in ablate(exp, out).items():
        print(_final_line(mode, r))
    return EXIT_OK


def _run_one(exp, out):
    result = runner.run_experiment(exp, out)
    return _final_line(exp.label, result)


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep needs --config with a 'sweep' section")
    path = Path(args.config)
    runs = expand_sweep(path.read_text(), base_dir=path.parent)
    if args.seed is not None:
        runs = [r.with_seed(args.seed) for r in runs]
    if args.mode is not None:
        runs = [r.with_mode(args.mode) for r in runs]
    out = Path(args.out) if args.out is not None else Path(runs[0].out)
    jobs = [(r, out / r.label) for r in runs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            lines = list(pool.map(_run_one, *zip(*jobs)))
    else:
        lines = [_run_one(r, o) for r, o in jobs]
    for line in lines:
        print(line)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps([r.label for r in runs]) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphbridge", description="Cross-domain edge-bridging GNN for graph domain adaptation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", metavar="{generate,train,evaluate,ablate,sweep}")

    def common(sp, mode=True):
        sp.add_argument("--config", help="YAML experiment config (or a summary.json from an earlier run)")
        sp.add_argument("--seed", type=int, help="override train.seed")
        sp.add_argument("--out", help="output directory (overrides run.out)")
        if mode:
            sp.add_argument("--mode", choices=MODES, help="override train.mode")

    sp = sub.add_parser("generate", help="write the CSBM source/target pair as dataset files")
    common(sp, mode=False)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train one configuration")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="metrics of a checkpoint on the configured datasets")
    common(sp)
    sp.add_argument("--checkpoint", required=True, help="checkpoint .npz written by train")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="run full, gcn_da, random_link and no_mi on one config")
    common(sp, mode=False)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("sweep", help="run every point of the config's sweep grid")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("graphbridge: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # map every failure to its exit code
        for kind, code in _EXIT_CODES:
            if isinstance(exc, kind):
                print(f"graphbridge: error: {exc}", file=sys.stderr)
                return code
        print(f"graphbridge: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
