"""Command-line entry point.

Subcommands chain into the full pipeline::

    strokesig synth    --normals 30 --strokes 32 --seed 7 --out cohort.ssig
    strokesig features --cohort cohort.ssig --out features.csv
    strokesig loo      --features features.csv --classifier cnn --epochs 200 \
                       --repetitions 5 --seeds 1,2,3,4,5 --out report.csv

Progress and the echoed configuration go to stderr; machine-readable
results go to files or stdout. Every random choice flows from explicit
seed flags, so re-running an echoed config reproduces outputs byte for
byte. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import StrokesigError
from .evaluation import (
    ClassifierSpec,
    compute_metrics,
    confusion_from_predictions,
    load_report,
    render_report,
    run_loo,
)
from .features import (
    brain_symmetry_for_recording,
    extract_features,
    read_feature_csv,
    write_feature_csv,
)
from .neuralnet import TrainConfig, build_reference_cnn, build_reference_mlp, save_model, train
from .signal_io import load_cohort, save_cohort
from .synthgen import synth_cohort

_EARLY_STOP = {"none": "none", "test-driven": "test_driven"}


def _echo(text: str) -> None:
    print(text, file=sys.stderr)


def _feature_matrix(path: str):
    rows = read_feature_csv(path)
    if not rows:
        raise StrokesigError(f"feature file {path} holds no rows")
    x = np.stack([r.values for r in rows])
    y = np.array([int(r.label) for r in rows], dtype=np.int64)
    ids = [r.subject_id for r in rows]
    return x, y, ids


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as e:
        raise StrokesigError(f"bad --seeds value {text!r}: {e}") from e


def _resolve_jobs(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("STROKESIG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise StrokesigError(f"bad STROKESIG_JOBS value {env!r}")
    return 1


def _cmd_synth(args) -> int:
    _echo(
        f"config: synth --normals {args.normals} --strokes {args.strokes} "
        f"--seed {args.seed} --duration {args.duration:g} --rate {args.rate:g} "
        f"--severity-lo {args.severity_lo:g} --severity-hi {args.severity_hi:g} "
        f"--out {args.out}"
    )
    cohort = synth_cohort(
        args.normals,
        args.strokes,
        master_seed=args.seed,
        severity_range=(args.severity_lo, args.severity_hi),
        duration_s=args.duration,
        rate_hz=args.rate,
    )
    save_cohort(cohort, args.out)
    _echo(f"wrote {len(cohort)} recordings to {args.out}")
    return 0


def _cmd_features(args) -> int:
    _echo(f"config: features --cohort {args.cohort} --out {args.out}"
          + (f" --bsi-out {args.bsi_out}" if args.bsi_out else ""))
    cohort = load_cohort(args.cohort)
    vectors = [extract_features(rec) for rec in cohort.recordings]
    write_feature_csv(vectors, args.out)
    _echo(f"wrote {len(vectors)} feature rows to {args.out}")
    if args.bsi_out:
        lines = ["subject_id,label,bsi"]
        for rec in cohort.recordings:
            result = brain_symmetry_for_recording(rec)
            cell = "n/a" if result is None else f"{result.value:.9g}"
            lines.append(f"{rec.subject_id},{int(rec.label)},{cell}")
        Path(args.bsi_out).write_text("\n".join(lines) + "\n")
        _echo(f"wrote symmetry indices to {args.bsi_out}")
    return 0


def _cmd_train(args) -> int:
    _echo(
        f"config: train --features {args.features} --model {args.model} "
        f"--epochs {args.epochs} --lr {args.lr:g} --batch-size {args.batch_size} "
        f"--seed {args.seed} --early-stop {args.early_stop} --out {args.out}"
    )
    x, y, _ = _feature_matrix(args.features)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    xs = (x - mu) / sd
    net = build_reference_cnn(args.seed) if args.model == "cnn" else build_reference_mlp(args.seed)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        shuffle=True,
        early_stop=_EARLY_STOP[args.early_stop],
        seed=args.seed,
    )
    history = train(net, xs, y, config)
    save_model(net, args.out)
    _echo(f"trained {args.model} for {history.epochs_run} epochs, "
          f"final loss {history.epoch_losses[-1]:.6f}, model saved to {args.out}")
    return 0


def _cmd_loo(args) -> int:
    seeds = _parse_seeds(args.seeds)
    repetitions = args.repetitions if args.repetitions is not None else len(seeds)
    jobs = _resolve_jobs(args.jobs)
    _echo(
        f"config: loo --features {args.features} --classifier {args.classifier} "
        f"--epochs {args.epochs} --lr {args.lr:g} --batch-size {args.batch_size} "
        f"--repetitions {repetitions} --seeds {','.join(map(str, seeds))} "
        f"--early-stop {args.early_stop} --positive-class {args.positive_class} "
        f"--format {args.format}" + (f" --out {args.out}" if args.out else "")
    )
    x, y, _ = _feature_matrix(args.features)
    spec = ClassifierSpec(
        kind=args.classifier,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        early_stop=_EARLY_STOP[args.early_stop],
    )
    report = run_loo(
        x,
        y,
        spec,
        seeds=seeds,
        repetitions=repetitions,
        positive_class=0 if args.positive_class == "normal" else 1,
        jobs=jobs,
    )
    payload = render_report(report, args.format)
    if args.out:
        Path(args.out).write_bytes(payload)
        _echo(f"wrote report to {args.out}")
    else:
        sys.stdout.buffer.write(payload)
    return 0


def _cmd_baseline(args) -> int:
    _echo(f"config: baseline --features {args.features} --model {args.model}")
    x, y, _ = _feature_matrix(args.features)
    spec = ClassifierSpec(kind=args.model)
    from .evaluation import fit_and_predict  # local import keeps CLI import light

    preds = []
    for i in range(len(y)):
        pred, _ = fit_and_predict(spec, x, y, x[i], seed=0)
        preds.append(pred)
    cm = confusion_from_predictions(y, preds, positive_class=0)
    metrics = compute_metrics(cm)
    print(f"model: {args.model} (training-set fit, normal positive)")
    print(f"confusion (tp fn / fp tn): {cm.tp} {cm.fn} / {cm.fp} {cm.tn}")
    for name, value in metrics.as_dict().items():
        print(f"{name}: " + ("n/a" if value is None else f"{value:.3f}"))
    return 0


def _cmd_report(args) -> int:
    _echo(f"config: report --in {args.infile} --format {args.format}"
          + (f" --out {args.out}" if args.out else ""))
    report = load_report(Path(args.infile).read_bytes())
    payload = render_report(report, args.format)
    if args.out:
        Path(args.out).write_bytes(payload)
        _echo(f"wrote report to {args.out}")
    else:
        sys.stdout.buffer.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokesig",
        description="EEG/EOG stroke-vs-normal classification pipeline",
    )
    parser.add_argument("--version", action="version", version=f"strokesig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--normals", type=int, default=30)
    p.add_argument("--strokes", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--duration", type=float, default=900.0, help="seconds per recording")
    p.add_argument("--rate", type=float, default=64.0, help="sample rate in Hz")
    p.add_argument("--severity-lo", type=float, default=0.2)
    p.add_argument("--severity-hi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("features", help="extract the 24-feature matrix from a cohort")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bsi-out", default=None, help="optional symmetry-index CSV")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train one model on a full feature matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=("cnn", "mlp"), default="cnn")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--early-stop", choices=("none", "test-driven"), default="none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("loo", help="repeated leave-one-out evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--classifier", choices=("cnn", "mlp", "gnb", "knn", "logreg"), required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated repetition seeds")
    p.add_argument("--early-stop", choices=("none", "test-driven"), default="none")
    p.add_argument("--positive-class", choices=("normal", "stroke"), default="normal")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel rounds (default: STROKESIG_JOBS or 1)")
    p.add_argument("--format", choices=("text", "csv", "json-lines"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_loo)

    p = sub.add_parser("baseline", help="fit one shallow model and report training metrics")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=("gnb", "knn", "logreg"), required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("report", help="re-render a json-lines report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("text", "csv", "json-lines"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _echo(f"strokesig {__version__}")
    try:
        return args.func(args)
    except StrokesigError as e:
        _echo(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
