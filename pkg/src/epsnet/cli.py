"""Command-line entry point: ``epsnet <command> [options]``.

Results are printed to stdout as JSON; diagnostics go to stderr. Exit
status is 0 on success, 1 when the library rejects the data and 2 on
usage errors (argparse's convention).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .adapter import AdapterConfig, adapter_train
from .baselines import SELECTORS, SelectionRequest
from .evaluation import compare_methods, evaluate, render_sweep, tau_sweep
from .exceptions import EpsnetError
from .filter import compression_ratio, novelty_filter
from .synth import crowd_out_benchmark, short_event_benchmark, with_oracle_rerank_space

DEFAULT_SEED = 0
DEFAULT_TAUS = "0.90,0.92,0.94,0.95,0.96"
PRESETS = ("crowd_out", "short_events")


def _tau(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid tau {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"tau must lie strictly between 0 and 1, got {v}")
    return v


def _taus(text: str) -> list:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty tau list")
    return [_tau(p.strip()) for p in parts]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _non_negative_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _holdout(text: str) -> float:
    v = _non_negative_float(text)
    if v > 0.5:
        raise argparse.ArgumentTypeError(f"must be <= 0.5, got {v}")
    return v


def _emit(obj, output=None) -> None:
    if output:
        io.write_json(output, obj)
    else:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


def cmd_filter(args) -> int:
    stream = io.read_stream(args.input)
    index = novelty_filter(stream, args.tau)
    io.write_index(args.output, index)
    _emit({
        "command": "filter",
        "tau": args.tau,
        "n_frames": len(stream),
        "retained": len(index),
        "compression_ratio": compression_ratio(len(stream), index),
        "output": str(args.output),
    })
    return 0


def cmd_select(args) -> int:
    stream = io.read_stream(args.input)
    index = SELECTORS[args.method](SelectionRequest(stream, args.k, args.seed))
    io.write_index(args.output, index)
    _emit({
        "command": "select",
        "method": args.method,
        "k": args.k,
        "seed": args.seed,
        "n_frames": len(stream),
        "retained": len(index),
        "output": str(args.output),
    })
    return 0


def cmd_eval(args) -> int:
    index = io.read_index(args.index)
    events = io.read_annotations(args.events)
    adapter = io.read_adapter(args.adapter) if args.adapter else None
    rerank_space = io.read_stream(args.rerank_embeddings) if args.rerank_embeddings else None
    report = evaluate(index, events, args.k, args.tolerance, adapter, rerank_space, args.candidates)
    _emit(report.to_dict(), args.output)
    return 0


def cmd_compare(args) -> int:
    stream = io.read_stream(args.input)
    events = io.read_annotations(args.events)
    adapter = io.read_adapter(args.adapter) if args.adapter else None
    table = compare_methods(stream, events, args.tau, args.k, args.tolerance, args.seed, adapter, args.bootstrap_trials)
    if args.format == "text":
        print(table.render())
    else:
        _emit(table.to_dict(), args.output)
    return 0


def cmd_sweep(args) -> int:
    stream = io.read_stream(args.input)
    events = io.read_annotations(args.events)
    rows = tau_sweep(stream, events, args.taus, args.k, args.tolerance)
    if args.format == "text":
        print(render_sweep(rows))
    else:
        _emit({"command": "sweep", "k": args.k, "tolerance_s": args.tolerance, "rows": rows}, args.output)
    return 0


def cmd_synth(args) -> int:
    if args.preset == "crowd_out":
        bundle = crowd_out_benchmark(args.seed, rotation_angle=args.rotation_angle, n_adapter_pairs=args.adapter_pairs)
    else:
        bundle = short_event_benchmark(args.seed, n_adapter_pairs=args.adapter_pairs)
    if args.oracle_rerank:
        bundle = with_oracle_rerank_space(bundle)
    files = io.write_bundle(args.output_dir, bundle)
    _emit({
        "command": "synth",
        "preset": args.preset,
        "seed": args.seed,
        "n_frames": len(bundle.stream),
        "n_events": len(bundle.events),
        "attempts": bundle.metadata.get("attempts"),
        "output_dir": str(args.output_dir),
        "files": files,
    })
    return 0


def cmd_train_adapter(args) -> int:
    pairs = io.read_pairs(args.pairs)
    config = AdapterConfig(args.hidden, args.lr, args.epochs, args.seed, args.holdout)
    result = adapter_train(pairs, config)
    io.write_adapter(args.output, result.model)
    _emit({"command": "train-adapter", "seed": args.seed, "learning_rate": args.lr,
           "epochs": args.epochs, "n_pairs": len(pairs), **result.to_dict(), "output": str(args.output)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epsnet", description="Streaming novelty filtering and retrieval evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="run the novelty filter over a stream file")
    p.add_argument("--input", required=True, type=Path, help="embedding stream (.esf)")
    p.add_argument("--tau", type=_tau, default=0.92)
    p.add_argument("--output", required=True, type=Path, help="index file to write (.json)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("select", help="run an offline baseline at a fixed frame count")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--method", required=True, choices=sorted(SELECTORS))
    p.add_argument("--k", required=True, type=_positive_int, help="number of frames to keep")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="Hit@k of an index over annotated events")
    p.add_argument("--index", required=True, type=Path)
    p.add_argument("--events", required=True, type=Path, help="annotations (.jsonl)")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--tolerance", type=_non_negative_float, default=0.5, help="seconds")
    p.add_argument("--adapter", type=Path, help="adapter checkpoint applied to queries")
    p.add_argument("--rerank-embeddings", type=Path, help="second-stage stream for re-ranking")
    p.add_argument("--candidates", type=_positive_int, default=50, help="first-stage shortlist size")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="six strategies at the novelty filter's frame count")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--tau", type=_tau, default=0.92)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--tolerance", type=_non_negative_float, default=0.5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--adapter", type=Path)
    p.add_argument("--bootstrap-trials", type=_positive_int, default=1000)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="novelty vs uniform vs full across thresholds")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--taus", type=_taus, default=_taus(DEFAULT_TAUS), help=f"comma-separated (default {DEFAULT_TAUS})")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--tolerance", type=_non_negative_float, default=0.5)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic benchmark bundle")
    p.add_argument("--preset", choices=PRESETS, default="crowd_out")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output-dir", required=True, type=Path)
    p.add_argument("--rotation-angle", type=float, help="radians; rotates queries away from the image space")
    p.add_argument("--adapter-pairs", type=_non_negative_int, default=0)
    p.add_argument("--oracle-rerank", action="store_true", help="attach a second-stage space that separates events")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-adapter", help="fit the residual query adapter")
    p.add_argument("--pairs", required=True, type=Path, help="training pairs (.jsonl)")
    p.add_argument("--hidden", type=_positive_int, default=64)
    p.add_argument("--lr", type=_non_negative_float, default=1.0)
    p.add_argument("--epochs", type=_non_negative_int, default=3000)
    p.add_argument("--holdout", type=_holdout, default=0.2, help="fraction held out, in [0, 0.5]")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_train_adapter)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EpsnetError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
