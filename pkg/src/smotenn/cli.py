"""Command-line surface. Three commands:

  resample     preprocess one dataset, writing a CSV, an audit sidecar,
               and a run manifest
  bench        cross-validated method comparison over a dataset directory,
               or a rank report straight from fixture score matrices
  index-stats  build a spill tree over a dataset and report its shape and
               recall against brute force

Exit codes: 0 success, 1 usage/config/parse errors, 2 violated algorithmic
preconditions, 3 I/O failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ConfigError,
    Dataset,
    DatasetError,
    EngineKind,
    Method,
    ParseError,
    PreconditionError,
    ResampleSpec,
    RngStream,
    compute_imbalance,
)
from .evaluate import (
    build_rank_report,
    cross_validate,
    load_gmean_dir,
    report_to_json,
    report_to_markdown,
)
from .ingest import parse_csv, parse_keel
from .knn import IndexConfig, SpillTreeIndex, recall_at_k
from .partition import plan_partitions, run_partitioned
from .resample import spec_dict, write_result_csv, write_sidecar

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PRECONDITION = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors (exit 1)
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


@dataclass
class RunManifest:
    """Everything needed to audit or reproduce one resample run."""

    spec: dict
    input_path: str
    input_digest: str
    output_digests: dict
    counts: dict
    timings_ms: dict
    version: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_dataset(path: Path, fmt: str | None, label_column: str,
                  minority_value: str | None) -> Dataset:
    if fmt is None:
        fmt = "keel" if path.suffix.lower() == ".dat" else "csv"
    if fmt == "keel":
        return parse_keel(path)
    return parse_csv(path, label_column, minority_value)


def _index_config(args) -> IndexConfig:
    return IndexConfig(
        tau=args.tau, rho=args.rho, leaf_size=args.leaf_size
    )


def _spec_from_args(args) -> ResampleSpec:
    try:
        method = Method(args.method)
    except ValueError:
        raise ConfigError(
            f"unknown method {args.method!r}; choose from "
            f"{[m.value for m in Method]}"
        )
    return ResampleSpec(
        method=method,
        k=args.k,
        n_oversample=args.n,
        p_ratio=args.p,
        seed=args.seed,
        engine=EngineKind(args.engine),
        partitions=args.partitions,
        target_ir=args.target_ir,
    )


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", choices=["exact", "spilltree"], default="exact")
    p.add_argument("--tau", type=float, default=0.1,
                   help="overlap half-width as a fraction of node spread")
    p.add_argument("--rho", type=float, default=0.7, help="balance factor")
    p.add_argument("--leaf-size", type=int, default=32)


def cmd_resample(args) -> int:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    in_path = Path(args.input)
    dataset = _load_dataset(in_path, args.format, args.label_column,
                            args.minority_value)
    timings["parse"] = (time.perf_counter() - t0) * 1000.0

    spec = _spec_from_args(args)
    before = compute_imbalance(dataset)
    print(
        f"input: m={dataset.m} n={dataset.n} minority={before.minority_count} "
        f"majority={before.majority_count} ir={before.ir:.3f}"
    )

    t0 = time.perf_counter()
    plan = plan_partitions(dataset, spec.partitions, RngStream(spec.seed))
    timings["plan"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    block_stats: list = []
    result = run_partitioned(
        dataset, spec, plan,
        index_config=_index_config(args),
        threads=args.threads,
        stats_out=block_stats,
    )
    timings["resample"] = (time.perf_counter() - t0) * 1000.0

    after = compute_imbalance(result.output)
    print(
        f"output: m={result.output.m} minority={after.minority_count} "
        f"majority={after.majority_count} ir={after.ir:.3f} "
        f"(removed {len(result.removed_ids)}, synthetic {result.synthetic_count})"
    )

    t0 = time.perf_counter()
    out_path = Path(args.output)
    write_result_csv(result, out_path)
    sidecar_path = out_path.with_suffix(out_path.suffix + ".sidecar.json")
    write_sidecar(result, spec, sidecar_path)
    timings["write"] = (time.perf_counter() - t0) * 1000.0

    manifest = RunManifest(
        spec=spec_dict(spec),
        input_path=str(in_path),
        input_digest=_sha256(in_path),
        output_digests={
            out_path.name: _sha256(out_path),
            sidecar_path.name: _sha256(sidecar_path),
        },
        counts={
            "before": {"minority": before.minority_count,
                       "majority": before.majority_count},
            "after": {"minority": after.minority_count,
                      "majority": after.majority_count},
            "blocks": block_stats,
        },
        timings_ms=timings,
        version=__version__,
    )
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    print(f"wrote {out_path}, {sidecar_path.name}, {manifest_path.name}")
    return EXIT_OK


def cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.fixtures:
        _, methods, matrix = load_gmean_dir(args.fixtures)
        report = build_rank_report(matrix, methods, alpha=args.alpha)
    else:
        if not args.data:
            raise ConfigError("bench needs a data directory or --fixtures")
        data_dir = Path(args.data)
        files = sorted(
            list(data_dir.glob("*.dat")) + list(data_dir.glob("*.csv"))
        )
        if not files:
            raise ConfigError(f"no .dat or .csv datasets in {data_dir}")
        methods = [m.strip() for m in args.method.split(",")]
        k_grid = [int(v) for v in str(args.k).split(",")]

        rows = []
        labels = []
        failures = 0
        for f in files:
            dataset = _load_dataset(f, args.format, args.label_column,
                                    args.minority_value)
            for k in k_grid:
                row = []
                for mname in methods:
                    spec = ResampleSpec(
                        method=Method(mname),
                        k=k,
                        n_oversample=args.n,
                        p_ratio=args.p,
                        seed=args.seed,
                        engine=EngineKind(args.engine),
                        target_ir=args.target_ir,
                    )
                    try:
                        cv = cross_validate(
                            dataset, spec, folds=args.folds,
                            classify_k=args.classify_k,
                            index_config=_index_config(args),
                        )
                        row.append(cv.mean_gmean * 100.0)
                    except Exception as exc:
                        print(f"failed: {f.name} k={k} {mname}: {exc}",
                              file=sys.stderr)
                        failures += 1
                        row.append(float("nan"))
                rows.append(row)
                labels.append(f"{f.stem}(k={k})")

        matrix = np.array(rows)
        matrix_path = out_dir / "bench_matrix.csv"
        with matrix_path.open("w", encoding="utf-8") as fh:
            fh.write("dataset," + ",".join(methods) + "\n")
            for lab, row in zip(labels, matrix):
                fh.write(lab + "," + ",".join(repr(v) for v in row) + "\n")
        print(f"wrote {matrix_path}")

        # rows with failed cells cannot be ranked; drop them but keep going
        complete = ~np.isnan(matrix).any(axis=1)
        if not complete.any():
            raise PreconditionError("every benchmark run failed")
        if failures:
            print(
                f"{failures} run(s) failed; ranking "
                f"{int(complete.sum())}/{len(matrix)} complete rows",
                file=sys.stderr,
            )
        report = build_rank_report(matrix[complete], methods, alpha=args.alpha)

    if args.report == "json":
        text = report_to_json(report)
        (out_dir / "bench_report.json").write_text(text, encoding="utf-8")
    else:
        text = report_to_markdown(report)
        (out_dir / "bench_report.md").write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_index_stats(args) -> int:
    in_path = Path(args.input)
    dataset = _load_dataset(in_path, args.format, args.label_column,
                            args.minority_value)
    config = _index_config(args)
    index = SpillTreeIndex(
        dataset.features, dataset.ids, config, RngStream(args.seed)
    )
    stats = index.stats()
    if args.k < dataset.m:
        stats["recall_at_k"] = recall_at_k(index, dataset, args.k)
        stats["k"] = args.k
    print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="smotenn", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("resample", help="resample one dataset")
    pr.add_argument("input")
    pr.add_argument("output")
    pr.add_argument("--method", required=True,
                    help="none|rus|enn|smote|rus_smote|enn_smote|smotenn")
    pr.add_argument("--k", type=int, default=5)
    pr.add_argument("--n", type=int, default=1, help="oversampling amount")
    pr.add_argument("--p", type=float, default=1.0,
                    help="majority:minority ratio after undersampling")
    pr.add_argument("--target-ir", type=float, default=None,
                    help="stop ratio for enn (default: run to fixpoint)")
    pr.add_argument("--partitions", type=int, default=1)
    pr.add_argument("--threads", type=int, default=None)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--format", choices=["csv", "keel"], default=None)
    pr.add_argument("--label-column", default="class")
    pr.add_argument("--minority-value", default=None)
    _add_engine_flags(pr)
    pr.set_defaults(func=cmd_resample)

    pb = sub.add_parser("bench", help="method comparison with rank report")
    pb.add_argument("data", nargs="?", default=None,
                    help="directory of .dat/.csv datasets")
    pb.add_argument("--fixtures", default=None,
                    help="directory of g-mean matrix CSVs (skips CV)")
    pb.add_argument("--method", default="none,smotenn",
                    help="comma-separated method list")
    pb.add_argument("--k", default="5", help="comma-separated k grid")
    pb.add_argument("--n", type=int, default=1)
    pb.add_argument("--p", type=float, default=3.0)
    pb.add_argument("--target-ir", type=float, default=None)
    pb.add_argument("--folds", type=int, default=10)
    pb.add_argument("--classify-k", type=int, default=5)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--alpha", type=float, default=0.05)
    pb.add_argument("--report", choices=["md", "json"], default="md")
    pb.add_argument("--out", default=".")
    pb.add_argument("--format", choices=["csv", "keel"], default=None)
    pb.add_argument("--label-column", default="class")
    pb.add_argument("--minority-value", default=None)
    _add_engine_flags(pb)
    pb.set_defaults(func=cmd_bench)

    pi = sub.add_parser("index-stats", help="spill-tree shape and recall")
    pi.add_argument("input")
    pi.add_argument("--k", type=int, default=5)
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--format", choices=["csv", "keel"], default=None)
    pi.add_argument("--label-column", default="class")
    pi.add_argument("--minority-value", default=None)
    _add_engine_flags(pi)
    pi.set_defaults(func=cmd_index_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ParseError, ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
