"""Command-line entry point: ``bqkit {validate,corrupt,train,benchmark}``."""

import argparse
import csv
import logging
import sys
from pathlib import Path

import yaml

from . import bench
from .algorithms import ALGORITHMS


def _seed_list(text):
    return [int(s) for s in text.replace(",", " ").split()]


def build_parser():
    parser = argparse.ArgumentParser(prog="bqkit", description="Biquality learning benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", required=True, help="YAML benchmark configuration")
        p.add_argument("--seed-override", type=_seed_list, default=None,
                       help="comma-separated seeds replacing the config's seeds")
        p.add_argument("--print-config", action="store_true",
                       help="print the resolved configuration and exit")
        if output:
            p.add_argument("--output", required=True)

    common(sub.add_parser("validate", help="check the config and dataset only"), output=False)

    p = sub.add_parser("corrupt", help="write the corrupted dataset of the first seed")
    common(p)

    p = sub.add_parser("train", help="fit one algorithm and write its predictions")
    common(p)
    p.add_argument("--algorithm", default=None,
                   help="algorithm variant label; defaults to the first in the config")
    p.add_argument("--predict", default=None,
                   help="CSV to predict on (same feature columns); defaults to the training data")

    p = sub.add_parser("benchmark", help="run the full algorithm x seed x fold matrix")
    common(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = bench.load_config(args.config, args.seed_override)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    if args.print_config:
        yaml.safe_dump(config, sys.stdout, sort_keys=True)
        return 0
    try:
        return COMMANDS[args.command](args, config)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def cmd_validate(args, config):
    data = config["dataset"]
    clean = bench.ingest_csv(data["path"], data["label_column"], data["quality_column"])
    ds = bench.build_biquality(clean, config, config["seeds"][0])
    print("dataset: %d samples, %d features, %d classes" % (
        ds.n_samples, ds.features.shape[1], ds.n_classes))
    print("trusted: %d, untrusted: %d" % (ds.n_trusted, ds.n_untrusted))
    print("algorithms: %s" % ", ".join(v["label"] for v in config["algorithms"]))
    print("config_hash: %s" % bench.config_hash(config))
    return 0


def cmd_corrupt(args, config):
    data = config["dataset"]
    clean = bench.ingest_csv(data["path"], data["label_column"], data["quality_column"])
    ds = bench.build_biquality(clean, config, config["seeds"][0])
    bench.write_dataset_csv(ds, args.output, data["label_column"])
    print("wrote %d rows (%d trusted) to %s" % (ds.n_samples, ds.n_trusted, args.output))
    return 0


def cmd_train(args, config):
    data = config["dataset"]
    clean = bench.ingest_csv(data["path"], data["label_column"], data["quality_column"])
    ds = bench.build_biquality(clean, config, config["seeds"][0])
    variants = {v["label"]: v for v in config["algorithms"]}
    label = args.algorithm or config["algorithms"][0]["label"]
    if label not in variants:
        raise ValueError("algorithm %r is not in the config (have %s)" % (label, ", ".join(variants)))
    variant = variants[label]
    model = ALGORITHMS[variant["name"]](ds, **variant["params"])

    if args.predict:
        target = bench.ingest_csv(args.predict, data["label_column"], data["quality_column"])
        X = target.features
    else:
        X = ds.features
    proba = model.predict_proba(X)
    pred = model.predict(X)
    names = ds.class_names or [str(k) for k in range(ds.n_classes)]
    with open(args.output, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["row", "prediction", *("proba_%s" % n for n in names)])
        for i, (p, row) in enumerate(zip(pred, proba)):
            out.writerow([i, names[p], *(format(v, ".17g") for v in row)])
    print("wrote %d predictions of %s to %s" % (len(pred), label, args.output))
    return 0


def cmd_benchmark(args, config):
    result = bench.run_benchmark(config, jobs=args.jobs)
    bench.emit_results(result.rows, args.format, args.output)
    out = Path(args.output)
    summary_path = out.with_name(out.stem + ".summary." + args.format)
    bench.emit_summary(result.summary, args.format, summary_path)
    width = max(len(s["algorithm"]) for s in result.summary)
    print("%-*s  %-17s  %-17s  errors" % (width, "algorithm", "accuracy", "balanced_acc"))
    for s in result.summary:
        print("%-*s  %.4f ± %.4f   %.4f ± %.4f   %d" % (
            width, s["algorithm"], s["accuracy_mean"], s["accuracy_sd"],
            s["balanced_accuracy_mean"], s["balanced_accuracy_sd"], s["n_errors"]))
    print("rows: %s, summary: %s" % (out, summary_path))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "corrupt": cmd_corrupt,
    "train": cmd_train,
    "benchmark": cmd_benchmark,
}


if __name__ == "__main__":
    sys.exit(main())
