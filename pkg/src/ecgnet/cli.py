"""``ecgnet`` command line: pipeline stages and experiment recipes as subcommands.

Exit status is 0 on success, 2 for usage or configuration errors, 3 for
data errors and 4 for numeric errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ecgnet import pipeline
from ecgnet.config import load_config
from ecgnet.engine.tensor import precision
from ecgnet.errors import EcgError, InvalidValue, UsageError
from ecgnet.pipeline import EXPERIMENT_TAGS, T2_TARGETS, Layout

log = logging.getLogger("ecgnet")


def _targets(text):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"targets must be comma-separated integers: {text!r}") from None
    if len(values) != 5 or min(values) < 0:
        raise argparse.ArgumentTypeError("need five non-negative targets (N,SVEB,VEB,F,Q)")
    return values


def _indices(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"indices must be comma-separated integers: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="ecgnet", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="overrides train.seed from the config")
    parser.add_argument("--precision", type=int, choices=(32, 64), default=None,
                        help="float width for the engine (default: train.precision)")
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    parser.add_argument("--out-dir", type=Path, default=Path("ecgnet-out"), help="artifact root")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="WFDB header/format-212 signal/annotation text -> ECGREC1")
    p.add_argument("paths", nargs="+", help=".hea files or directories holding them")
    p.add_argument("--db", default="mitdb", help="database label (mitdb, svdb, ...)")
    p.add_argument("--channel", default=None, help="lead name or index (default MLII / ECG1)")
    p.add_argument("--annotations", default=None, help="annotation text for a single header")

    p = sub.add_parser("preprocess", help="baseline removal, smoothing, resampling to 180 Hz")
    p.add_argument("--db", default="mitdb")
    p.add_argument("--records", nargs="*", default=None)

    p = sub.add_parser("segment", help="cut labelled 10 s segments of a split and standardize them")
    p.add_argument("--split", required=True, help="DS1, DST1, DS2, DST2 or a custom name with --records")
    p.add_argument("--db", default=None)
    p.add_argument("--records", nargs="*", default=None)
    p.add_argument("--splits", type=Path, default=None, help="JSON split overrides {split: [ids]}")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--name", default=None, help="output store name (default: the split)")

    p = sub.add_parser("sample", help="balanced non-replacement draw from segment stores")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--targets", type=_targets, default=list(T2_TARGETS), help="N,SVEB,VEB,F,Q")
    p.add_argument("--name", default="sampled")

    p = sub.add_parser("train", help="train a model on segment stores")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--val", type=Path, default=None, help="validation store (default: stratified 10%%)")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--init", type=Path, default=None, help="start from this checkpoint")
    p.add_argument("--as-train", action="store_true", help="accept stores tagged as test data")

    p = sub.add_parser("eval", help="confusion-matrix metrics of a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--tag", default="eval")
    p.add_argument("--model-name", default=None)
    p.add_argument("--per-class", action="store_true", help="all five classes, not only SVEB and VEB")
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("inspect", help="activation maps of selected segments as CSV")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("input", type=Path)
    p.add_argument("--index", type=_indices, default=[0], help="comma-separated segment indices")
    p.add_argument("--normalized", action="store_true", help="add max-normalized rows")

    p = sub.add_parser("experiment", help="run a T1/T2/T3a/T3b/T4 recipe end to end")
    p.add_argument("--tag", required=True, choices=EXPERIMENT_TAGS)
    p.add_argument("--mitdb", default=None, help="directory with mitdb .hea/.dat/annotation text")
    p.add_argument("--svdb", default=None)
    p.add_argument("--splits", type=Path, default=None)
    p.add_argument("--pretrained", type=Path, default=None)
    p.add_argument("--repeats", type=int, default=1, help="number of T2 sample draws")
    return parser


def _overrides(path, config):
    if path is None:
        return config.data.split_overrides
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidValue(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidValue(f"{path}: expected an object of split -> record ids")
    return doc


def _resolve(args):
    config = load_config(args.config)
    train = config.train
    if args.seed is not None:
        train = dataclasses.replace(train, seed=args.seed)
    if args.precision is not None:
        train = dataclasses.replace(train, precision=args.precision)
    return config.replace(train=train)


def _setup_logging(args):
    args.out_dir.mkdir(parents=True, exist_ok=True)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    # errors are already printed once in the plain "error: ..." form
    console.addFilter(lambda record: not getattr(record, "file_only", False))
    run_log = logging.FileHandler(args.out_dir / "run.log")
    run_log.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.setLevel(logging.INFO)
    log.propagate = False
    handlers = [console, run_log]
    for h in handlers:
        log.addHandler(h)
    return handlers


def run(args):
    config = _resolve(args)
    with precision(config.train.precision):
        _run(args, config)


def _run(args, config):
    log.info("%s: resolved config %s", args.command, json.dumps(config.to_dict(), sort_keys=True))
    layout = Layout(args.out_dir)
    seed = config.train.seed
    cmd = args.command
    extra = {"argv": args.argv}

    if cmd == "ingest":
        inputs, written = pipeline.ingest(layout, args.paths, args.db, args.channel, args.annotations)
    elif cmd == "preprocess":
        inputs, written = pipeline.preprocess(layout, args.db, args.records, config.preprocess)
    elif cmd == "segment":
        inputs, written = pipeline.segment(layout, args.split, args.db, args.records,
                                           _overrides(args.splits, config),
                                           not args.no_standardize, args.name)
    elif cmd == "sample":
        inputs, written = pipeline.sample(layout, args.inputs, args.targets, seed, args.name)
    elif cmd == "train":
        ckpt = args.checkpoint or layout.model(args.inputs[0].stem)
        inputs, written, _, history = pipeline.train_stage(
            layout, args.inputs, ckpt, config, args.val, args.init, args.as_train)
        extra.update(best_epoch=history.best_epoch, stop_reason=history.stop_reason)
        print(f"checkpoint {ckpt} (best epoch {history.best_epoch}, {history.stop_reason})")
    elif cmd == "eval":
        inputs, written, text = pipeline.eval_stage(layout, args.checkpoint, args.inputs, args.tag,
                                                    args.model_name, args.per_class, args.csv, config)
        sys.stdout.write(text)
    elif cmd == "inspect":
        inputs, written = pipeline.inspect_stage(layout, args.checkpoint, args.input, args.index,
                                                 args.normalized, config)
        for path in written:
            print(path)
    elif cmd == "experiment":
        if args.repeats < 1:
            raise UsageError("--repeats must be >= 1")
        rows, inputs, written = pipeline.run_experiment(
            layout, args.tag, config, args.mitdb, args.svdb, _overrides(args.splits, config),
            args.pretrained, args.repeats)
        sys.stdout.write("".join(rows))
        cmd = f"experiment-{args.tag}"
    else:  # pragma: no cover - argparse rejects unknown commands
        raise UsageError(f"unknown command {cmd}")

    manifest = pipeline.write_manifest(layout, cmd, config, seed, inputs, written, extra)
    log.info("manifest %s", manifest)


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    handlers = _setup_logging(args)
    try:
        run(args)
    except EcgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.error("%s: %s", type(exc).__name__, exc, extra={"file_only": True})
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    finally:
        for h in handlers:
            log.removeHandler(h)
            h.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
