"""``ranknorm`` command line: synth, normalize, train, predict, rerank, evaluate, stats, repro, run.

Every command is deterministic given its inputs and seed. Failures exit
with status 2 and print a JSON object ``{"error": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .classify import LinearModel, TrainParams, predict_scores, train_ovr_linear
from .core import read_labels, read_matrix, write_labels, write_matrix
from .evaluate import (
    cosine_similarity_stats,
    dump_json,
    feature_report,
    mean_average_precision,
    per_class_average_precision,
    value_histogram,
)
from .experiment import ReproConfig, RunConfig, default_config, run_files, run_repro
from .normalize import (
    L2,
    NormalizationPipeline,
    Power,
    RankApprox,
    RankExact,
    RankReference,
    apply_pipeline,
    fit_apply_split,
    fit_rank_reference,
)
from .rerank import MirParams, mir_rerank, mir_trace
from .synth import SynthParams, benchmark_split, generate_sparse_bursty

PRESETS = {
    "l2": NormalizationPipeline((L2(),)),
    "pn": NormalizationPipeline((Power(0.5), L2())),
    "ran": NormalizationPipeline((RankExact(), L2())),
}


class CliError(Exception):
    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


def _json_arg(text: str):
    """Inline JSON, or a path to a JSON file."""
    candidate = Path(text)
    if not text.lstrip().startswith(("{", "[")) and candidate.exists():
        try:
            return json.loads(candidate.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"invalid JSON: {exc}", str(candidate)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"not a JSON document or existing file: {exc}", text) from None


def _require_file(path: str) -> str:
    if not Path(path).is_file():
        raise CliError("file not found", path)
    return path


def _emit(doc: dict, out: Optional[str]) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _read(path: str, args) -> np.ndarray:
    return read_matrix(_require_file(path), args.format, getattr(args, "header", False))


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> None:
    doc = _json_arg(args.config) if args.config else {}
    if "synth" in doc:
        doc = doc["synth"]
    overrides = {
        "n_per_class": args.n_per_class,
        "K": args.classes,
        "D": args.dims,
        "p_sparse": args.p_sparse,
        "burst_dims": args.burst_dims,
        "burst_scale": args.burst_scale,
        "signal_strength": args.signal_strength,
        "noise_sigma": args.noise_sigma,
        "signal_dims": args.signal_dims,
        "seed": args.seed,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in doc:
        raise CliError("a seed is required: pass --seed or set it in the config")
    params = SynthParams.from_json(doc)
    x, y = generate_sparse_bursty(params)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if args.format == "csv" else ".fmat"
    write_matrix(x, out / f"features{ext}", args.format)
    write_labels(y, out / "labels.txt")
    written = {"features": str(out / f"features{ext}"), "labels": str(out / "labels.txt")}
    if args.train_fraction is not None:
        (xtr, ytr), (xte, yte) = benchmark_split(x, y, args.train_fraction, params.seed)
        for name, (xs, ys) in {"train": (xtr, ytr), "test": (xte, yte)}.items():
            write_matrix(xs, out / f"{name}_features{ext}", args.format)
            write_labels(ys, out / f"{name}_labels.txt")
            written[f"{name}_features"] = str(out / f"{name}_features{ext}")
            written[f"{name}_labels"] = str(out / f"{name}_labels.txt")
    (out / "synth.json").write_text(json.dumps(params.to_json(), sort_keys=True, indent=2) + "\n")
    _emit({"params": params.to_json(), "written": written}, None)


def _pipeline_from_args(args) -> NormalizationPipeline:
    if args.preset and args.pipeline:
        raise CliError("use either --preset or --pipeline, not both")
    if args.preset:
        return PRESETS[args.preset]
    if not args.pipeline:
        raise CliError("a pipeline is required: --pipeline JSON or --preset")
    try:
        pipeline = NormalizationPipeline.from_json(_json_arg(args.pipeline))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"invalid pipeline: {exc}") from None
    fitted = [s for s in pipeline.steps if isinstance(s, RankApprox) and s.size is not None]
    if fitted:
        if args.seed is None:
            raise CliError("pipeline fits a rank reference; --seed is required")
        pipeline = NormalizationPipeline(
            tuple(
                dataclasses.replace(s, seed=args.seed) if s in fitted else s
                for s in pipeline.steps
            )
        )
    return pipeline


def cmd_normalize(args) -> None:
    pipeline = _pipeline_from_args(args)
    m = _read(args.input, args)
    ref = RankReference.load(_require_file(args.reference)) if args.reference else None
    if args.fit_on:
        train = _read(args.fit_on, args)
        train_out, out = fit_apply_split(train, m, pipeline, args.transductive, args.threads)
        if args.fit_out:
            write_matrix(train_out, args.fit_out, args.format)
    else:
        out = apply_pipeline(m, pipeline, ref, args.threads)
    if args.save_reference:
        first = pipeline.steps[0]
        if not (isinstance(first, RankApprox) and first.size is not None):
            raise CliError("--save-reference needs a pipeline starting with rank_approx with S")
        source = _read(args.fit_on, args) if args.fit_on else m
        fit_rank_reference(source, first.size, first.seed).save(args.save_reference)
    write_matrix(out, args.out, args.format)
    _emit({"pipeline": pipeline.to_json(), "shape": list(out.shape), "out": args.out}, None)


def cmd_train(args) -> None:
    x = _read(args.features, args)
    y = read_labels(_require_file(args.labels))
    lr = None if args.lr == "auto" else float(args.lr)
    params = TrainParams(C=args.C, epochs=args.epochs, learning_rate=lr, init_scale=args.init_scale)
    model = train_ovr_linear(x, y, params, args.seed, n_classes=args.classes)
    model.save(args.model_out)
    _emit(
        {
            "model": args.model_out,
            "classes": model.n_classes,
            "dims": model.dims,
            "learning_rate_used": model.learning_rate,
        },
        None,
    )


def cmd_predict(args) -> None:
    model = LinearModel.load(_require_file(args.model))
    x = _read(args.features, args)
    write_matrix(predict_scores(model, x), args.out, args.format)


def cmd_rerank(args) -> None:
    p = _read(args.scores, args)
    params = MirParams(eta=args.eta, beta=args.beta, iters=args.iters)
    if args.trace_out:
        trace = mir_trace(p, params, args.threads)
        trace.save(args.trace_out)
        out = trace.output
    else:
        out = mir_rerank(p, params, args.threads)
    write_matrix(out, args.out, args.format)


def cmd_evaluate(args) -> None:
    p = _read(args.scores, args)
    y = read_labels(_require_file(args.labels))
    aps = per_class_average_precision(p, y)
    _emit({"map": mean_average_precision(p, y), "per_class_ap": aps}, args.out)


def cmd_stats(args) -> None:
    m = _read(args.features, args)
    y = read_labels(_require_file(args.labels)) if args.labels else None
    report = feature_report(m, y, args.bins, args.cls)
    if args.csv_dir:
        d = Path(args.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        value_histogram(m, args.bins).write_csv(d / "value_histogram.csv")
        np.savetxt(d / "column_std.csv", np.asarray(report["column_std"])[None, :], delimiter=",", fmt="%.17g")
        if y is not None:
            cs = cosine_similarity_stats(m, y, args.cls, args.bins)
            cs.pos_pos.write_csv(d / "cosine_pos_pos.csv")
            cs.pos_neg.write_csv(d / "cosine_pos_neg.csv")
    _emit(report, args.out)


def cmd_repro(args) -> None:
    if args.config:
        doc = dict(_json_arg(args.config))
    else:
        doc = default_config().to_json()
    out_dir = args.out or doc.pop("output_dir", None)
    doc.pop("output_dir", None)
    seed = doc.pop("seed", None)
    if args.seed is not None:
        seed = args.seed
    if seed is not None:
        doc.setdefault("synth", {})
        doc["synth"] = dict(doc["synth"], seed=seed)
    elif "seed" not in doc.get("synth", {}):
        raise CliError("a seed is required: pass --seed or set it in the config")
    if args.threads is not None:
        doc["threads"] = args.threads
    if args.repeats is not None:
        doc["approx_repeats"] = args.repeats
    try:
        cfg = ReproConfig.from_json(doc)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid repro config: {exc}") from None
    start = time.perf_counter()
    report = run_repro(cfg)
    elapsed = time.perf_counter() - start
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        dump_json(report, Path(out_dir) / "report.json")
    print(_summary_table(report), file=sys.stderr)
    print(f"elapsed: {elapsed:.1f}s", file=sys.stderr)
    if not out_dir:
        _emit(report, None)


def cmd_run(args) -> None:
    doc = dict(_json_arg(args.config))
    is_file = not args.config.lstrip().startswith(("{", "[")) and Path(args.config).exists()
    base = Path(args.config).parent if is_file else Path(".")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["output_dir"] = args.out
    if "seed" not in doc:
        raise CliError("a seed is required: pass --seed or set it in the config")
    try:
        cfg = RunConfig.from_json(doc, base)
    except (TypeError, KeyError) as exc:
        raise CliError(f"invalid run config: {exc}") from None
    report = run_files(cfg)
    _emit(report, None)


def _summary_table(report: dict) -> str:
    lines = ["pipeline                 mAP      mAP+MIR"]
    for name, row in report["normalization"].items():
        lines.append(f"{row['pipeline']:<24} {row['map']:.4f}   {row['map_mir']:.4f}")
    for row in report["subset_size"]["approx"]:
        lines.append(
            f"{'RaN-approx S=' + str(row['S']):<24} {row['map']['mean']:.4f}   "
            f"{row['map_mir']['mean']:.4f}   (std {row['map']['std']:.4f})"
        )
    return "\n".join(lines)


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranknorm",
        description="Rank normalization and multi-class iterative re-ranking tools.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def io_flags(p, header=True):
        p.add_argument("--format", choices=["csv", "binary"], default=None,
                       help="matrix format (default: csv for .csv/.txt, else binary)")
        if header:
            p.add_argument("--header", action="store_true", help="skip the first CSV line")

    p = sub.add_parser("synth", help="generate sparse, bursty synthetic features")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="synth parameters as JSON or a JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--p-sparse", type=float)
    p.add_argument("--burst-dims", type=int)
    p.add_argument("--burst-scale", type=float)
    p.add_argument("--signal-strength", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--signal-dims", type=int)
    p.add_argument("--train-fraction", type=float, help="also write a stratified train/test split")
    p.add_argument("--format", choices=["csv", "binary"], default="binary")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("normalize", help="apply a normalization pipeline")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--pipeline", help='JSON, e.g. \'{"steps":[{"rank_exact":{}},{"l2":{}}]}\', or a file')
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--reference", help="rank reference for rank_approx steps without S")
    p.add_argument("--save-reference", help="write the reference fitted by a leading rank_approx step")
    p.add_argument("--fit-on", help="fit rank steps on this training matrix and apply them to INPUT")
    p.add_argument("--fit-out", help="with --fit-on, also write the normalized training matrix")
    p.add_argument("--transductive", action="store_true",
                   help="with --fit-on, rank_exact ranks training and input rows jointly")
    p.add_argument("--seed", type=int, help="seed for rank_approx steps that draw seed rows")
    p.add_argument("--threads", type=int, default=1)
    io_flags(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train", help="train one-vs-rest squared-hinge classifiers")
    p.add_argument("features")
    p.add_argument("labels")
    p.add_argument("--model-out", required=True)
    p.add_argument("--C", type=float, default=100.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", default="1e-4", help="learning rate, or 'auto' for 1/L")
    p.add_argument("--init-scale", type=float, default=0.0)
    p.add_argument("--classes", type=int, help="number of classes (default max label + 1)")
    p.add_argument("--seed", type=int, required=True)
    io_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score features with a trained model")
    p.add_argument("model")
    p.add_argument("features")
    p.add_argument("--out", required=True)
    io_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rerank", help="multi-class iterative re-ranking of a score matrix")
    p.add_argument("scores")
    p.add_argument("--out", required=True)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--trace-out", help="write per-iteration snapshots as JSON")
    p.add_argument("--threads", type=int, default=1)
    io_flags(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("evaluate", help="per-class AP and mAP of a score matrix")
    p.add_argument("scores")
    p.add_argument("labels")
    p.add_argument("--out", help="report path (default stdout)")
    io_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="value histogram, column std and cosine diagnostics")
    p.add_argument("features")
    p.add_argument("--labels")
    p.add_argument("--class", dest="cls", type=int, default=0, help="class for cosine statistics")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", help="report path (default stdout)")
    p.add_argument("--csv-dir", help="also write histograms and profiles as CSV here")
    io_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("repro", help="synthetic normalization / subset-size / re-ranking comparison")
    p.add_argument("--config", help="repro config JSON (default: the shipped config)")
    p.add_argument("--seed", type=int, help="generator seed (overrides the config)")
    p.add_argument("--out", help="output directory for report.json (default: print to stdout)")
    p.add_argument("--repeats", type=int, help="repetitions per approximate subset size")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_repro)

    p = sub.add_parser("run", help="normalize, train, predict, re-rank and evaluate from one config")
    p.add_argument("--config", required=True, help="run config as JSON or a JSON file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        _fail("usage", str(exc), exc.path)
        return 2
    except FileNotFoundError as exc:
        _fail("io", exc.strerror or str(exc), exc.filename)
        return 2
    except (ValueError, OSError, KeyError, IndexError, FloatingPointError) as exc:
        _fail(type(exc).__name__, str(exc), None)
        return 2
    return 0


def _fail(kind: str, message: str, path: Optional[str]) -> None:
    doc = {"error": kind, "message": message}
    if path is not None:
        doc["path"] = str(path)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
