"""Command-line pipeline: extract, stats, reduce, train, predict, evaluate,
synth, report.

Exit codes: 0 ok, 2 I/O, 3 file format, 4 data/precondition, 5 internal,
64 usage. Every subcommand is deterministic given its inputs, flags and
seed; single-file outputs are written atomically so a failed run leaves no
partial artifact.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import (
    load_manifest_segments,
    parse_annotations,
    read_wav,
    slice_segments,
)
from .embed import TsneParams, export_embedding, pca_fit_transform, standardize, tsne
from .errors import (
    AnnotationError,
    ModelFormatError,
    SwallowkitError,
    TrainingError,
    WavCodecError,
    WavFormatError,
    WavLayoutError,
)
from .evaluate import EvalConfig, repeated_evaluation, summary_rows_from_dict, format_summary_rows
from .features import FeatureMatrix, FrameConfig, MelConfig, extract_feature_matrix
from .forest import (
    ForestParams,
    LabeledDataset,
    load_forest,
    predict_batch,
    save_forest,
    train_forest,
)
from .ioutil import atomic_write_text
from .stats import GROUPINGS, feature_significance_table, write_significance_csv
from .synth import SynthConfig, generate_synthetic_corpus

EXIT_OK = 0
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_DATA = 4
EXIT_INTERNAL = 5
EXIT_USAGE = 64

_FORMAT_ERRORS = (
    WavFormatError,
    WavLayoutError,
    WavCodecError,
    AnnotationError,
    ModelFormatError,
    json.JSONDecodeError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_frame_flags(p):
    p.add_argument("--frame-len", type=float, default=0.025, help="frame length in seconds (default 0.025)")
    p.add_argument("--hop", type=float, default=0.010, help="hop in seconds (default 0.010)")
    p.add_argument("--fft-size", type=int, default=None, help="FFT size (default: next power of two)")
    p.add_argument("--n-filters", type=int, default=20, help="mel filters (default 20)")
    p.add_argument("--f-min", type=float, default=0.0, help="mel filterbank low edge Hz (default 0)")
    p.add_argument("--f-max", type=float, default=None, help="mel filterbank high edge Hz (default Nyquist)")


def _add_forest_flags(p):
    p.add_argument("--n-trees", type=int, default=100, help="trees in the forest (default 100)")
    p.add_argument("--max-features", type=int, default=None, help="candidate features per split (default floor(sqrt(d)))")
    p.add_argument("--min-samples-leaf", type=int, default=1, help="minimum samples per leaf (default 1)")
    p.add_argument("--max-depth", type=int, default=None, help="depth limit (default unlimited)")


def _forest_params(args, seed: int) -> ForestParams:
    return ForestParams(
        n_trees=args.n_trees,
        max_features=args.max_features,
        min_samples_leaf=args.min_samples_leaf,
        max_depth=args.max_depth,
        seed=seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swallowkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"swallowkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="extract the 25-feature matrix from WAV + annotations")
    p.add_argument("--manifest", help="corpus manifest CSV (file,start_s,...)")
    p.add_argument("--wav", help="single recording (use with --annotations)")
    p.add_argument("--annotations", help="annotation CSV for --wav")
    p.add_argument("--out", required=True, help="output feature CSV")
    _add_frame_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="per-feature Kruskal-Wallis significance table")
    p.add_argument("--features", required=True, help="feature CSV from extract")
    p.add_argument("--grouping", choices=GROUPINGS, default="by_label")
    p.add_argument("--out", required=True, help="output CSV (per-label suffix in within-label mode)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("reduce", help="project the feature space to 2-D")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=("pca", "tsne"), default="pca")
    p.add_argument("--out", required=True, help="output embedding CSV")
    p.add_argument("--perplexity", type=float, default=None, help="t-SNE perplexity (default min(30,(n-1)/3))")
    p.add_argument("--iterations", type=int, default=1000, help="t-SNE iterations (default 1000)")
    p.add_argument("--learning-rate", type=float, default=200.0, help="t-SNE learning rate (default 200)")
    p.add_argument("--early-exaggeration", type=float, default=12.0, help="t-SNE early exaggeration (default 12)")
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", help="train a random forest on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output model JSON")
    _add_forest_flags(p)
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify feature rows with a trained model")
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output prediction CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated stratified-split evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--summary-csv", default=None, help="also write the summary table as CSV")
    p.add_argument("--iterations", type=int, default=11, help="split iterations (default 11)")
    p.add_argument("--train-fraction", type=float, default=0.6, help="train fraction (default 0.6)")
    _add_forest_flags(p)
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    p.add_argument("--jobs", type=int, default=1, help="parallel iterations (default 1)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic swallow corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-normal", type=int, default=152)
    p.add_argument("--n-dysphagic", type=int, default=110)
    p.add_argument("--sample-rate", type=int, default=4000)
    p.add_argument("--duration", type=float, default=1.0, help="segment length in seconds (default 1.0)")
    p.add_argument("--separation", type=float, default=1.0, help="class contrast knob (default 1.0)")
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="print the summary table of an evaluation report")
    p.add_argument("--report", required=True, help="report JSON from evaluate")
    p.add_argument("--summary-csv", default=None, help="also write the summary table as CSV")
    p.set_defaults(func=cmd_report)

    return parser


def _frame_mel(args) -> tuple[FrameConfig, MelConfig]:
    frame = FrameConfig(frame_len_s=args.frame_len, hop_s=args.hop, fft_size=args.fft_size)
    mel = MelConfig(n_filters=args.n_filters, f_min_hz=args.f_min, f_max_hz=args.f_max)
    return frame, mel


def cmd_extract(args) -> int:
    frame, mel = _frame_mel(args)
    if args.manifest and not (args.wav or args.annotations):
        segments, ids = load_manifest_segments(args.manifest)
    elif args.wav and args.annotations and not args.manifest:
        signal = read_wav(args.wav)
        annotations = parse_annotations(args.annotations)
        segments = slice_segments(signal, annotations)
        stem = Path(args.wav).stem
        ids = [f"{stem}_{i:04d}" for i in range(len(segments))]
    else:
        raise _UsageError("give either --manifest or both --wav and --annotations")
    matrix = extract_feature_matrix(segments, ids, frame, mel)
    matrix.to_csv(args.out)
    print(f"wrote {matrix.n} feature rows to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args) -> int:
    matrix = FeatureMatrix.from_csv(args.features)
    tables = feature_significance_table(matrix, args.grouping)
    out = Path(args.out)
    if args.grouping == "by_label":
        write_significance_csv(tables["label"], out)
        print(f"wrote {out}", file=sys.stderr)
    else:
        for label, rows in tables.items():
            path = out.with_name(f"{out.stem}_{label}{out.suffix}")
            write_significance_csv(rows, path)
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_reduce(args) -> int:
    matrix = FeatureMatrix.from_csv(args.features)
    Z, _, _ = standardize(matrix.X)
    if args.method == "pca":
        embedding = pca_fit_transform(Z, 2)
    else:
        embedding = tsne(
            Z,
            TsneParams(
                perplexity=args.perplexity,
                iterations=args.iterations,
                learning_rate=args.learning_rate,
                early_exaggeration=args.early_exaggeration,
                seed=args.seed,
            ),
        )
    export_embedding(embedding, matrix.labels, args.out, segment_ids=matrix.segment_ids)
    print(f"wrote {matrix.n} embedded points to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    data = LabeledDataset.from_feature_matrix(FeatureMatrix.from_csv(args.features))
    forest = train_forest(data, _forest_params(args, args.seed))
    save_forest(forest, args.out)
    print(f"trained {forest.n_trees} trees on {data.n} rows; wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    forest = load_forest(args.model)
    matrix = FeatureMatrix.from_csv(args.features)
    labels, fractions = predict_batch(forest, matrix.X)
    lines = ["segment_id,label,predicted,vote_fraction"]
    names = ("normal", "dysphagic")
    for sid, truth, pred, frac in zip(matrix.segment_ids, matrix.labels, labels, fractions):
        lines.append(f"{sid},{truth},{names[pred]},{frac:.9g}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(labels)} predictions to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    data = LabeledDataset.from_feature_matrix(FeatureMatrix.from_csv(args.features))
    counts = data.class_counts()
    if min(counts) == 0:
        raise TrainingError("evaluation needs both classes in the feature CSV")
    config = EvalConfig(
        iterations=args.iterations,
        train_fraction=args.train_fraction,
        forest=_forest_params(args, 0),
        seed=args.seed,
    )
    report = repeated_evaluation(data, config, n_jobs=args.jobs)
    report.write_json(args.out)
    if args.summary_csv:
        report.write_summary_csv(args.summary_csv)
    print(report.format_summary())
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_normal=args.n_normal,
        n_dysphagic=args.n_dysphagic,
        sample_rate_hz=args.sample_rate,
        segment_duration_s=args.duration,
        separation=args.separation,
        seed=args.seed,
    )
    manifest = generate_synthetic_corpus(config, args.out_dir)
    print(f"wrote {config.n_total} events; manifest at {manifest}", file=sys.stderr)
    print(str(manifest))
    return EXIT_OK


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    rows = summary_rows_from_dict(report)
    if args.summary_csv:
        lines = ["attribute,mean,sd"]
        for name, mean, sd in rows:
            lines.append(f"{name},{mean:.9g},{sd:.9g}")
        atomic_write_text(args.summary_csv, "\n".join(lines) + "\n")
    print(format_summary_rows(rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _FORMAT_ERRORS as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SwallowkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
