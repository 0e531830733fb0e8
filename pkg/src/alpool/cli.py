"""Command-line entry point.

Subcommands: simulate (cross-validated curves on a LIBSVM pool with a
simulated oracle), synth (write a synthetic pool), prep (vectorize a
tokenized corpus), serve (run the annotation service).

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import LibsvmParseError, build_vocabulary, parse_libsvm, parse_token_corpus
from .harness import SynthConfig, generate_synthetic, run_experiment, write_curves
from .learner import AlConfig
from .stopping import StopConfig


class UsageError(Exception):
    """Flag values that violate a config contract."""


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}")


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}")


def _parse_bool(text: str, flag: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise UsageError(f"{flag} expects true or false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpool", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="cross-validated AL-vs-random curves")
    sim.add_argument("--data", required=True, help="LIBSVM pool file")
    sim.add_argument("--out", default="curves.csv", help="curve CSV destination")
    sim.add_argument("--checkpoints", default="20,30,40,100",
                     help="pool percentages, comma separated")
    sim.add_argument("--seeds", default="0", help="comma-separated seed list")
    sim.add_argument("--init-size", type=int, default=None)
    sim.add_argument("--batch-size", type=int, default=None)
    sim.add_argument("--pa-grid", default=None, help="candidate amplifications")
    sim.add_argument("--c-minus", type=float, default=1.0)
    sim.add_argument("--stop-threshold", type=float, default=0.99)
    sim.add_argument("--stop-window", type=int, default=3)
    sim.add_argument("--stop-set-size", type=int, default=2000)

    synth = sub.add_parser("synth", help="write a synthetic imbalanced pool")
    synth.add_argument("--out", required=True, help="LIBSVM destination")
    synth.add_argument("--positive-rate", type=float, default=0.176)
    synth.add_argument("--seeds", default="0", help="generator seed (first is used)")

    prep = sub.add_parser("prep", help="vectorize a `<label> tok ...` corpus")
    prep.add_argument("--data", required=True, help="tokenized corpus file")
    prep.add_argument("--out", required=True, help="LIBSVM destination")
    prep.add_argument("--min-count", type=int, default=3,
                      help="minimum corpus frequency for a token feature")

    serve = sub.add_parser("serve", help="run the annotation service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--state-dir", default="alpool-state")
    serve.add_argument("--halt-on-stop", default="true",
                       help="stop querying once predictions stabilize (true/false)")
    return parser


def cmd_simulate(args) -> int:
    data_path = Path(args.data)
    if not data_path.is_file():
        print(f"error: no such file: {data_path}", file=sys.stderr)
        return 1
    checkpoints = _parse_floats(args.checkpoints, "--checkpoints")
    if not checkpoints:
        raise UsageError("--checkpoints must name at least one percentage")
    seeds = _parse_ints(args.seeds, "--seeds")
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    grid = tuple(_parse_floats(args.pa_grid, "--pa-grid")) if args.pa_grid else None

    try:
        dataset = parse_libsvm(data_path.read_text())
    except LibsvmParseError as exc:
        print(f"error: {data_path}: {exc}", file=sys.stderr)
        return 1

    for seed in seeds:
        try:
            al_kwargs = dict(
                init_size=args.init_size,
                batch_size=args.batch_size,
                c_minus=args.c_minus,
                seed=seed,
            )
            if grid is not None:
                al_kwargs["pa_grid"] = grid
            al_config = AlConfig(**al_kwargs)
            stop_config = StopConfig(
                stop_set_size=args.stop_set_size,
                agreement_threshold=args.stop_threshold,
                window=args.stop_window,
                seed=seed,
            )
        except ValueError as exc:
            raise UsageError(str(exc))

        out = Path(args.out)
        if len(seeds) > 1:
            out = out.with_name(f"{out.stem}-s{seed}{out.suffix}")
        trace_path = out.with_suffix(out.suffix + ".trace.jsonl")
        try:
            with open(trace_path, "w", encoding="utf-8") as trace_handle:

                def sink(fold: int, trace) -> None:
                    rows = trace.to_records()
                    rows[0] = {"fold": fold, **rows[0]}
                    for row in rows:
                        trace_handle.write(json.dumps(row, sort_keys=True) + "\n")

                curves = run_experiment(
                    dataset, al_config, stop_config, checkpoints, trace_sink=sink
                )
            write_curves(curves, out)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {out} and {trace_path}")
    return 0


def cmd_synth(args) -> int:
    from .data import serialize_libsvm

    seeds = _parse_ints(args.seeds, "--seeds")
    try:
        config = SynthConfig(positive_rate=args.positive_rate, seed=seeds[0] if seeds else 0)
    except ValueError as exc:
        raise UsageError(str(exc))
    try:
        Path(args.out).write_text(serialize_libsvm(generate_synthetic(config)))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def cmd_prep(args) -> int:
    data_path = Path(args.data)
    if not data_path.is_file():
        print(f"error: no such file: {data_path}", file=sys.stderr)
        return 1
    if args.min_count < 1:
        raise UsageError("--min-count must be >= 1")
    try:
        labels, docs = parse_token_corpus(data_path.read_text())
    except LibsvmParseError as exc:
        print(f"error: {data_path}: {exc}", file=sys.stderr)
        return 1
    vocab = build_vocabulary(docs, args.min_count)

    from .data import vectorize

    lines = []
    for label, doc in zip(labels, docs):
        vec = vectorize(doc, vocab)
        parts = ["+1" if label == 1 else "-1"]
        parts.extend(f"{i + 1}:1" for i in vec.indices)
        lines.append(" ".join(parts))
    out = Path(args.out)
    vocab_path = out.with_suffix(out.suffix + ".vocab")
    try:
        out.write_text("".join(line + "\n" for line in lines))
        ordered = sorted(vocab.index_of.items(), key=lambda kv: kv[1])
        vocab_path.write_text("".join(f"{tok}\t{idx}\n" for tok, idx in ordered))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out} ({len(lines)} instances, {len(vocab)} features) and {vocab_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    halt = _parse_bool(args.halt_on_stop, "--halt-on-stop")
    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(args.state_dir, halt_on_stop=halt, ui_dir=ui_dir if ui_dir.is_dir() else None)
    if app.state.recovered:
        print(f"recovered {app.state.recovered} session(s) from {args.state_dir}")
    try:
        uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: could not serve on port {args.port}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "synth": cmd_synth,
        "prep": cmd_prep,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
