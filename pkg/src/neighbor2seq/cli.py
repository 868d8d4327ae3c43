"""Command-line entry point.

    neighbor2seq precompute --edges E --features F --hops L --out OUT [--chunk-rows K]
    neighbor2seq train --config CONFIG.json
    neighbor2seq eval --checkpoint C --sequences S --labels Y --split P --part val
    neighbor2seq gen-synth --kind KIND --n N --seed S --out-dir DIR
    neighbor2seq bench --config CONFIG.json --variants VARIANTS.json

Logs and the resolved configuration go to stderr, results to stdout.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import resource
import sys
import time
import warnings
from pathlib import Path

log = logging.getLogger("neighbor2seq")

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit_config(name: str, resolved: dict) -> None:
    log.info("resolved %s config: %s", name, json.dumps(resolved, sort_keys=True))


def _emit_result(result: dict) -> None:
    print(json.dumps(result, sort_keys=True))


def cmd_precompute(args) -> None:
    from .graph import add_self_loops, load_edge_list, load_features
    from .precompute import neighbor2seq_chunked

    x = load_features(args.features)
    chunk_rows = args.chunk_rows if args.chunk_rows is not None else x.n
    if chunk_rows < 1:
        raise UsageError("--chunk-rows must be a positive integer")
    _emit_config("precompute", {"edges": args.edges, "features": args.features,
                                "hops": args.hops, "chunk_rows": chunk_rows, "out": args.out,
                                "threads": args.threads})
    start = time.perf_counter()
    g = add_self_loops(load_edge_list(args.edges, x.n))
    neighbor2seq_chunked(g, x, args.hops, chunk_rows, args.out)
    seconds = time.perf_counter() - start
    estimate = 8 * (2 * x.n * x.d + min(chunk_rows, x.n) * x.d) + 8 * (g.n + 1 + g.m)
    _emit_result({"n": g.n, "m": g.m, "L": args.hops, "d": x.d, "seconds": seconds,
                  "peak_memory_estimate_bytes": estimate,
                  "max_rss_bytes": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
                  "out": args.out})


def cmd_train(args) -> None:
    from .train import TrainConfig, evaluate, load_inputs, train

    try:
        config = TrainConfig.from_json(args.config)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from exc
    if config.metrics_path and not config.figure_path:
        figure = str(Path(config.metrics_path).with_suffix(".png"))
        config = dataclasses.replace(config, figure_path=figure)
    _emit_config("train", {**config.to_dict(), "threads": args.threads})
    result = train(config)
    out = {"best_epoch": result.best_epoch, "best_val_metric": result.best_metric,
           "epochs_run": max((e["epoch"] for e in result.log), default=0),
           "checkpoint": config.checkpoint_path, "metrics": config.metrics_path,
           "figure": config.figure_path}
    seq, labels, split, _ = load_inputs(config)
    if split.test.size:
        out["test"] = evaluate(result.model, seq, labels, split.test).to_dict()
    _emit_result(out)


def cmd_eval(args) -> None:
    from .graph import load_labels, load_split
    from .models import Model
    from .train import TrainingError, evaluate, open_sequence

    _emit_config("eval", {"checkpoint": args.checkpoint, "sequences": args.sequences,
                          "labels": args.labels, "split": args.split, "part": args.part,
                          "threads": args.threads})
    model = Model.load(args.checkpoint)
    seq = open_sequence(args.sequences)
    if seq.L != model.config.L:
        raise TrainingError(f"sequence length mismatch: file has L={seq.L}, "
                            f"checkpoint expects L={model.config.L}")
    if seq.d != model.config.d:
        raise TrainingError(f"feature dimension mismatch: file has d={seq.d}, "
                            f"checkpoint expects d={model.config.d}")
    labels = load_labels(args.labels)
    split = load_split(args.split)
    metrics = evaluate(model, seq, labels, split.part(args.part))
    _emit_result({"part": args.part, **metrics.to_dict(), "metric": metrics.metric})


def write_fixture(out_dir, g, x, labels, split, spec_dict: dict) -> dict:
    from .graph import save_features, save_labels, save_split, write_edge_list

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"edges": out / "edges.txt", "features": out / "features.n2sf",
             "labels": out / "labels.n2sl", "split": out / "split.n2ss",
             "spec": out / "spec.json"}
    write_edge_list(g, paths["edges"])
    save_features(x, paths["features"])
    save_labels(labels, paths["labels"])
    save_split(split, g.n, paths["split"])
    paths["spec"].write_text(json.dumps(spec_dict, sort_keys=True, indent=2) + "\n")
    return {k: str(v) for k, v in paths.items()}


def cmd_gen_synth(args) -> None:
    from .synthetic import SyntheticSpec, gen_synthetic

    spec = SyntheticSpec(kind=args.kind, n=args.n, seed=args.seed, num_classes=args.classes,
                         p_in=args.p_in, p_out=args.p_out, rho=args.rho, hops=args.hops,
                         noise=args.noise)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit_config("gen-synth", {**spec.to_dict(), "out_dir": args.out_dir})
    g, x, labels, split = gen_synthetic(spec)
    paths = write_fixture(args.out_dir, g, x, labels, split, spec.to_dict())
    _emit_result({"n": g.n, "m": g.m, "d": x.d, "num_classes": labels.num_classes,
                  "train": int(split.train.size), "val": int(split.val.size),
                  "test": int(split.test.size), **paths})


def cmd_bench(args) -> None:
    from .bench import Variant, benchmark_epoch_time
    from .graph import load_edge_list, load_features
    from .train import TrainConfig

    try:
        config = TrainConfig.from_json(args.config)
        with open(args.variants, encoding="utf-8") as fh:
            specs = json.load(fh)
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(f"cannot read bench inputs: {exc}") from exc
    if not isinstance(specs, list) or not all({"name", "edges", "features"} <= set(s)
                                               for s in specs):
        raise UsageError("--variants must be a JSON list of {name, edges, features} objects")
    _emit_config("bench", {"config": config.to_dict(), "variants": specs, "out": args.out,
                           "threads": args.threads})
    variants = []
    for s in specs:
        x = load_features(s["features"])
        variants.append(Variant(s["name"], load_edge_list(s["edges"], x.n), x))
    report = benchmark_epoch_time(config.model, variants, config.batch_size, config.seed)
    if args.out:
        from .plotting import plot_benchmark
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        plot_benchmark(report, Path(args.out).with_suffix(".png"))
    _emit_result(report)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neighbor2seq", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for sparse kernels (default: all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("precompute", help="compute hop sequences to an N2SQ file")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--hops", type=int, required=True)
    p.add_argument("--chunk-rows", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("train", help="train a head from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split part")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequences", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--part", choices=("train", "val", "test"), default="val")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-synth", help="write a synthetic graph task")
    p.add_argument("--kind", required=True,
                   choices=("planted-color-denoise", "order-probe", "sbm"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--hops", type=int, default=4, help="order-probe: longest chain")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.05)
    p.add_argument("--p-out", type=float, default=0.005)
    p.add_argument("--rho", type=float, default=0.4)
    p.add_argument("--noise", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("bench", help="time precompute and training epochs per graph variant")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", required=True)
    p.add_argument("--out", default=None, help="report JSON path; a .png is written beside it")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # numba probes TBB first and warns when the installed one is too old;
    # it then falls back to another threading layer on its own
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    from .precompute import set_threads
    set_threads(args.threads)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"neighbor2seq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"neighbor2seq: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
