"""Command-line front end.

Subcommands: validate, sort, gram, train, predict, evaluate, synth.
Results go to stdout (or --out) in machine-parseable form; diagnostics go
to stderr. Exit codes: 0 success, 1 parse failure, 2 validation failure,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .estimator import STRATEGY_CHOICES, GroupKernelRegressor
from .geometry import DEBUG_COLUMNS, weight_debug_rows
from .harness import ExperimentConfig, SynthSpec, run_experiment, synth_dataset, synth_schema
from .kernels import (
    KERNEL_KINDS,
    gram,
    psd_check,
    write_gram_csv,
)
from .records import (
    ParseError,
    ValidationError,
    dataset_hash,
    dump_schema,
    load_schema,
    parse_group_records,
    serialize_group_records,
    validate_schema,
)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def _read_dataset(args):
    with open(args.data, encoding="utf-8") as fh:
        text = fh.read()
    schema = None
    if getattr(args, "schema", None):
        with open(args.schema, encoding="utf-8") as fh:
            schema = load_schema(fh)
    records = parse_group_records(text, schema=schema)
    if schema is None:
        schema = validate_schema(records)
    else:
        validate_schema(records, declared=schema)
    return records, schema


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8")
    return sys.stdout


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def _add_data_flags(p, schema_required=False):
    p.add_argument("--data", required=True, help="line-delimited dataset file")
    p.add_argument("--schema", required=schema_required, help="channel schema sidecar")


def _add_kernel_flags(p):
    p.add_argument("--channel", action="append", dest="channels", metavar="NAME",
                   help="channel to use (repeat for several)")
    p.add_argument("--kernel", choices=KERNEL_KINDS, default="gak")
    p.add_argument("--sigma", type=float, default=None,
                   help="override the per-channel bandwidth")
    p.add_argument("--divergence", choices=("sq_euclidean", "chi_square"), default=None,
                   help="override the per-channel divergence")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1,
                   help="weight-sort trade-off factor")
    p.add_argument("--threads", type=int, default=1)


def _add_svr_flags(p):
    p.add_argument("--C", type=float, default=1.0, help="SVR regularization")
    p.add_argument("--epsilon", type=float, default=0.1, help="SVR tube width")
    p.add_argument("--strategy", choices=("single", "sum", "prod", "weighted"),
                   default="single")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupgak",
        description="Alignment-kernel similarity and intensity regression "
        "for variable-size groups of feature vectors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a dataset and report its schema")
    _add_data_flags(p)

    p = sub.add_parser("sort", help="dump per-face weights and the canonical order")
    _add_data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("gram", help="write the kernel matrix for one channel as CSV")
    _add_data_flags(p)
    _add_kernel_flags(p)
    p.add_argument("--check-psd", action="store_true",
                   help="append a minimum-eigenvalue line")
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="fit a regressor and write the model file")
    _add_data_flags(p)
    _add_kernel_flags(p)
    _add_svr_flags(p)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("predict", help="predict intensities with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("evaluate", help="k-fold cross-validation report")
    _add_data_flags(p)
    _add_kernel_flags(p)
    _add_svr_flags(p)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--groups", type=int, default=200)
    p.add_argument("--min-faces", type=int, default=2)
    p.add_argument("--max-faces", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--schema-out", default=None, help="schema sidecar to write")

    return parser


def _cmd_validate(args) -> int:
    records, schema = _read_dataset(args)
    summary = {
        "records": len(records),
        "faces": int(sum(len(r.faces) for r in records)),
        "dataset_hash": dataset_hash(records),
        "schema": schema.to_dict(),
    }
    print(json.dumps(summary))
    return EXIT_OK


def _cmd_sort(args) -> int:
    records, _ = _read_dataset(args)
    out = _open_out(args)
    try:
        out.write("\t".join(DEBUG_COLUMNS) + "\n")
        for record in records:
            for row in weight_debug_rows(record, lam=args.lam):
                out.write(
                    "\t".join(
                        repr(v) if isinstance(v, float) else str(v) for v in row
                    )
                    + "\n"
                )
    finally:
        _close_out(out)
    return EXIT_OK


def _cmd_gram(args) -> int:
    records, schema = _read_dataset(args)
    channels = args.channels or list(schema.names)
    if len(channels) != 1:
        raise ValidationError("gram needs exactly one --channel")
    name = channels[0]
    spec = schema.get(name)
    from .divergences import LocalKernelParams
    from .geometry import sort_channels

    params = LocalKernelParams(
        sigma=args.sigma if args.sigma is not None else spec.sigma,
        divergence=args.divergence if args.divergence is not None else spec.divergence,
    )
    sequences = [sort_channels(r, [name], args.lam)[name] for r in records]
    matrix = gram(
        sequences,
        kind=args.kernel,
        params=params,
        threads=args.threads,
        channel=name,
        dataset_hash=dataset_hash(records),
    )
    out = _open_out(args)
    try:
        write_gram_csv(matrix, out)
        if args.check_psd:
            report = psd_check(matrix)
            out.write(
                f"# is_psd={str(report.is_psd).lower()} "
                f"min_eigenvalue={report.min_eigenvalue!r} "
                f"max_eigenvalue={report.max_eigenvalue!r}\n"
            )
    finally:
        _close_out(out)
    return EXIT_OK


def _make_estimator(args, schema) -> GroupKernelRegressor:
    return GroupKernelRegressor(
        channels=args.channels,
        kernel=args.kernel,
        strategy=args.strategy,
        sigma=args.sigma,
        divergence=args.divergence,
        lam=args.lam,
        C=args.C,
        epsilon=args.epsilon,
        schema=schema,
        threads=args.threads,
    )


def _cmd_train(args) -> int:
    records, schema = _read_dataset(args)
    est = _make_estimator(args, schema)
    est.fit(records)
    est.save(args.out)
    print(json.dumps({
        "model": args.out,
        "train_size": len(records),
        "support_vectors": int(len(est.support_)),
        "converged": est.solution_.converged,
        "beta": None if est.beta_ is None else [float(b) for b in est.beta_],
    }))
    if not est.solution_.converged:
        print("warning: solver hit the iteration cap", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_predict(args) -> int:
    est = GroupKernelRegressor.load(args.model)
    with open(args.data, encoding="utf-8") as fh:
        records = parse_group_records(fh.read())
    predictions = est.predict(records)
    out = _open_out(args)
    try:
        for record, value in zip(records, predictions):
            out.write(f"{record.id},{value!r}\n")
    finally:
        _close_out(out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    records, schema = _read_dataset(args)
    config = ExperimentConfig(
        channels=tuple(args.channels) if args.channels else None,
        kernel=args.kernel,
        strategy=args.strategy,
        sigma=args.sigma,
        divergence=args.divergence,
        C=args.C,
        epsilon=args.epsilon,
        lam=args.lam,
        folds=args.folds,
        seed=args.seed,
        threads=args.threads,
    )
    report = run_experiment(records, config, schema=schema)
    out = _open_out(args)
    try:
        out.write(json.dumps(report.to_dict()) + "\n")
    finally:
        _close_out(out)
    print(report.to_table(), file=sys.stderr)
    if not all(f.converged for f in report.folds):
        print("warning: solver hit the iteration cap in some fold", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_groups=args.groups,
        face_range=(args.min_faces, args.max_faces),
        noise=args.noise,
    )
    records = synth_dataset(spec, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_group_records(records))
    if args.schema_out:
        with open(args.schema_out, "w", encoding="utf-8") as fh:
            fh.write(dump_schema(synth_schema(spec)))
    print(json.dumps({
        "dataset": args.out,
        "records": len(records),
        "dataset_hash": dataset_hash(records),
    }))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "sort": _cmd_sort,
    "gram": _cmd_gram,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
