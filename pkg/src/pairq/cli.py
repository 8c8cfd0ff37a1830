"""Command line front end.

Subcommands cover the full workflow on vector files:

    pairq synth   draw a synthetic database plus query sets
    pairq train   fit a quantizer (plain rotated, or transform-based)
    pairq encode  compress a database into per-block codes
    pairq eval    score encoded vectors against evaluation queries
    pairq bench   run a method-by-blocks grid and write report files

Vector files use the fvecs/ivecs record layout. The cosine mode is the
scalar mode after L2-normalizing every input; models carry no
normalization state, so pass the same --mode to train, encode and eval.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .datasets import (
    SyntheticSpec,
    gen_synthetic,
    read_fvecs,
    read_ivecs,
    write_fvecs,
    write_ivecs,
)
from .estimator import BiasCorrected, compute_mse_table
from .experiment import (
    ExperimentConfig,
    run_experiment,
    write_report_csv,
    write_report_json,
)
from .metrics import SCALAR, SQDIST, evaluate_method
from .quantizer import opq_encode, train_opq
from .serialize import load_model, save_model
from .transform import (
    PairQModel,
    learn_scalar_transform,
    learn_sqdist_transform,
    pairq_encode,
    train_pairq,
)

MODES = ("scalar", "cosine", "sqdist")


def _kind(mode: str) -> str:
    return SQDIST if mode == "sqdist" else SCALAR


def _normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0.0, norms, 1.0)


def _load_vectors(path, mode: str) -> np.ndarray:
    data = read_fvecs(path).astype(np.float64)
    return _normalize(data) if mode == "cosine" else data


def _add_common_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-M", "--blocks", type=int, default=8,
                   help="number of code blocks (bytes per vector)")
    p.add_argument("-K", "--codebook-size", type=int, default=256,
                   help="centroids per block (max 256)")
    p.add_argument("--outer-iters", type=int, default=20,
                   help="rotation/codebook alternations")
    p.add_argument("--kmeans-iters", type=int, default=25,
                   help="Lloyd iterations per codebook fit")
    p.add_argument("--seed", type=int, default=0)


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        dim=args.dim,
        num_database=args.database_size,
        num_train_queries=args.train_queries,
        num_eval_queries=args.eval_queries,
        database_decay=args.db_decay,
        query_decay=args.query_decay,
    )
    data = gen_synthetic(spec, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "database.fvecs": data.database,
        "train_queries.fvecs": data.train_queries,
        "eval_queries.fvecs": data.eval_queries,
    }
    for name, arr in paths.items():
        path = os.path.join(args.out_dir, name)
        write_fvecs(path, arr)
        print(f"wrote {path} ({arr.shape[0]} x {arr.shape[1]})")
    return 0


def _cmd_train(args) -> int:
    database = _load_vectors(args.database, args.mode)
    mse = None
    if args.method == "pairq":
        if args.train_queries is None:
            print("error: --train-queries is required for the pairq method",
                  file=sys.stderr)
            return 2
        queries = _load_vectors(args.train_queries, args.mode)
        if args.mode == "sqdist":
            transform = learn_sqdist_transform(queries)
        else:
            transform = learn_scalar_transform(queries)
        model = train_pairq(
            transform, database, args.blocks, args.codebook_size,
            outer_iters=args.outer_iters, kmeans_iters=args.kmeans_iters,
            seed=args.seed,
        )
        trace = model.opq.trace
        converged = model.opq.converged
    else:
        model = train_opq(
            database, args.blocks, args.codebook_size,
            outer_iters=args.outer_iters, kmeans_iters=args.kmeans_iters,
            seed=args.seed, pad=True,
        )
        if args.mse:
            if args.mode != "sqdist":
                print("error: --mse only applies to --mode sqdist",
                      file=sys.stderr)
                return 2
            mse = compute_mse_table(model, database)
        trace = model.trace
        converged = model.converged
    save_model(args.out, model, mse_table=mse)
    print(
        f"trained {args.method} (mode={args.mode}, blocks={args.blocks}, "
        f"codebook={args.codebook_size}); objective {trace[0]:.6g} -> "
        f"{trace[-1]:.6g}, converged={converged}"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_encode(args) -> int:
    model, _ = load_model(args.model)
    database = _load_vectors(args.database, args.mode)
    if isinstance(model, PairQModel):
        codes = pairq_encode(model, database)
    else:
        codes = opq_encode(model, database)
    write_ivecs(args.out, codes.astype(np.int32))
    print(f"wrote {args.out} ({codes.shape[0]} codes, {codes.shape[1]} blocks)")
    return 0


def _cmd_eval(args) -> int:
    model, mse = load_model(args.model)
    kind = _kind(args.mode)
    if isinstance(model, PairQModel) and model.mode != kind:
        print(
            f"error: model produces {model.mode!r} estimates, --mode "
            f"{args.mode} needs {kind!r}",
            file=sys.stderr,
        )
        return 2
    method = model
    if args.bias_correct:
        if isinstance(model, PairQModel):
            print("error: --bias-correct applies to plain quantizer models",
                  file=sys.stderr)
            return 2
        if mse is None:
            print("error: model file has no error-mean table; retrain with --mse",
                  file=sys.stderr)
            return 2
        method = BiasCorrected(opq=model, mse=mse)
    database = _load_vectors(args.database, args.mode)
    queries = _load_vectors(args.eval_queries, args.mode)
    codes = read_ivecs(args.codes)
    stats = evaluate_method(
        method, kind, queries, database, codes,
        max_pairs=args.max_pairs, seed=args.seed,
    )
    payload = {
        "kind": stats.kind,
        "num_pairs": stats.num_pairs,
        "mse": stats.mse,
        "mean_signed_error": stats.mean_signed_error,
        "mean_rel_error": stats.mean_rel_error,
        "excluded_pairs": stats.excluded_pairs,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_bench(args) -> int:
    synthetic = None
    if args.synth_dim is not None:
        synthetic = SyntheticSpec(
            dim=args.synth_dim,
            num_database=args.synth_database,
            num_train_queries=args.synth_train_queries,
            num_eval_queries=args.synth_eval_queries,
            database_decay=args.db_decay,
            query_decay=args.query_decay,
        )
    config = ExperimentConfig(
        task=args.task,
        methods=tuple(args.methods.split(",")),
        block_counts=tuple(int(b) for b in args.blocks.split(",")),
        codebook_size=args.codebook_size,
        outer_iters=args.outer_iters,
        kmeans_iters=args.kmeans_iters,
        max_pairs=args.max_pairs,
        seed=args.seed,
        synthetic=synthetic,
        database_path=args.database,
        train_queries_path=args.train_queries,
        eval_queries_path=args.eval_queries,
    )
    report = run_experiment(config)
    failed = False
    for cell in report.cells:
        if cell.error is not None:
            failed = True
            print(f"{cell.method:8s} M={cell.num_blocks:<4d} FAILED: {cell.error}")
            continue
        metric = cell.scalar_mse if cell.scalar_mse is not None else cell.rel_dist_error
        name = "mse" if cell.scalar_mse is not None else "rel_err"
        line = (
            f"{cell.method:8s} M={cell.num_blocks:<4d} {name}={metric:.6g} "
            f"bias={cell.mean_signed_error:+.3e}"
        )
        if cell.error_reduction_vs_opq_pct is not None:
            line += f" vs-opq={cell.error_reduction_vs_opq_pct:+.1f}%"
        print(line)
    if args.out_csv:
        write_report_csv(report, args.out_csv)
        print(f"wrote {args.out_csv}")
    if args.out_json:
        write_report_json(report, args.out_json)
        print(f"wrote {args.out_json}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairq",
        description="Query-aware vector compression and distance estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw synthetic vectors to fvecs files")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--database-size", type=int, required=True)
    p.add_argument("--train-queries", type=int, required=True)
    p.add_argument("--eval-queries", type=int, required=True)
    p.add_argument("--db-decay", type=float, default=0.0,
                   help="log condition number of the database covariance")
    p.add_argument("--query-decay", type=float, default=0.0,
                   help="log condition number of the query covariance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit a quantizer on a database")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--method", choices=("opq", "pairq"), required=True)
    p.add_argument("--database", required=True, help="fvecs file")
    p.add_argument("--train-queries", help="fvecs file (required for pairq)")
    p.add_argument("--mse", action="store_true",
                   help="store the per-codeword error means (opq, sqdist)")
    _add_common_training_flags(p)
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("encode", help="compress a database with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--database", required=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--out", required=True, help="output ivecs code file")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("eval", help="score encoded vectors against queries")
    p.add_argument("--model", required=True)
    p.add_argument("--database", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--eval-queries", required=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--bias-correct", action="store_true")
    p.add_argument("--max-pairs", type=int, default=10**7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="run a methods-by-blocks benchmark grid")
    p.add_argument("--task", choices=MODES, default="scalar")
    p.add_argument("--methods", default="opq,pairq",
                   help="comma list from: opq, opq-bc, pairq")
    p.add_argument("--blocks", default="8", help="comma list of block counts")
    p.add_argument("-K", "--codebook-size", type=int, default=256)
    p.add_argument("--outer-iters", type=int, default=20)
    p.add_argument("--kmeans-iters", type=int, default=25)
    p.add_argument("--max-pairs", type=int, default=10**7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--database", help="fvecs file (omit when --synth-dim is set)")
    p.add_argument("--train-queries", help="fvecs file")
    p.add_argument("--eval-queries", help="fvecs file")
    p.add_argument("--synth-dim", type=int)
    p.add_argument("--synth-database", type=int, default=10000)
    p.add_argument("--synth-train-queries", type=int, default=2048)
    p.add_argument("--synth-eval-queries", type=int, default=256)
    p.add_argument("--db-decay", type=float, default=3.0)
    p.add_argument("--query-decay", type=float, default=3.0)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
