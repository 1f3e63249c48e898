"""Leave-one-out evaluation: plans, metrics, repeated runs, reports.

The harness holds one example out per round, trains from scratch on the
rest, and aggregates a confusion matrix per full pass; the whole pass is
repeated once per seed and metrics are averaged across repetitions.

Normal is scored as the positive class by default (sensitivity then
reads as recall of the healthy class); pass ``positive_class=1`` for
the clinical convention (stroke positive).

Ratios with a zero denominator are reported as None, excluded from the
across-repetition mean, and surfaced as "n/a" in rendered reports.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines, neuralnet
from .errors import (
    EmptyMatrix,
    EmptyReport,
    RoundFailure,
    StrokesigError,
    TooFewExamples,
)

METRIC_FIELDS = ("accuracy", "sensitivity", "specificity", "f1", "precision", "recall")


# --- LOO plan --------------------------------------------------------------------


@dataclass(frozen=True)
class LooRound:
    test_index: int
    train_indices: np.ndarray


@dataclass(frozen=True)
class LooPlan:
    n: int
    rounds: tuple[LooRound, ...]


def make_loo_plan(n: int) -> LooPlan:
    if n < 2:
        raise TooFewExamples(f"leave-one-out needs n >= 2, got {n}")
    indices = np.arange(n)
    rounds = tuple(
        LooRound(i, np.delete(indices, i)) for i in range(n)
    )
    return LooPlan(n, rounds)


# --- confusion matrix and metrics ----------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with an explicit positive class (Normal by default)."""

    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


def confusion_from_predictions(
    y_true: Sequence[int], y_pred: Sequence[int], positive_class: int = 0
) -> ConfusionMatrix:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    pos_t = t == positive_class
    pos_p = p == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(pos_t & pos_p)),
        fn=int(np.sum(pos_t & ~pos_p)),
        fp=int(np.sum(~pos_t & pos_p)),
        tn=int(np.sum(~pos_t & ~pos_p)),
    )


@dataclass(frozen=True)
class MetricSet:
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    f1: float | None
    precision: float | None
    recall: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    """The six headline metrics; zero-denominator ratios come back as None."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix holds no observations")

    def ratio(num: int, den: int) -> float | None:
        return num / den if den > 0 else None

    sensitivity = ratio(cm.tp, cm.tp + cm.fn)
    specificity = ratio(cm.tn, cm.tn + cm.fp)
    precision = ratio(cm.tp, cm.tp + cm.fp)
    if precision is None or sensitivity is None or precision + sensitivity == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
    return MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        sensitivity=sensitivity,
        specificity=specificity,
        f1=f1,
        precision=precision,
        recall=sensitivity,
    )


def mean_metrics(sets: Sequence[MetricSet]) -> tuple[MetricSet, dict[str, int]]:
    """Field-wise arithmetic mean; undefined entries are excluded and counted."""
    if not sets:
        raise EmptyReport("no repetitions to average")
    values: dict[str, float | None] = {}
    excluded: dict[str, int] = {}
    for name in METRIC_FIELDS:
        defined = [getattr(s, name) for s in sets if getattr(s, name) is not None]
        skipped = len(sets) - len(defined)
        if skipped:
            excluded[name] = skipped
        values[name] = sum(defined) / len(defined) if defined else None
    return MetricSet(**values), excluded


# --- classifier wiring ------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierSpec:
    """Picklable recipe: which classifier to train per round, and how."""

    kind: str  # cnn | mlp | gnb | knn | logreg
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 8
    early_stop: str = "none"
    k: int = 5
    l2_cost: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cnn", "mlp", "gnb", "knn", "logreg"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")

    @property
    def uses_test_label(self) -> bool:
        return self.kind in ("cnn", "mlp") and self.early_stop == "test_driven"


def _standardize(train_x: np.ndarray, test_x: np.ndarray):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (train_x - mu) / sd, (test_x - mu) / sd


def fit_and_predict(
    spec: ClassifierSpec,
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    seed: int,
    test_label: int | None = None,
) -> tuple[int, int | None]:
    """Train one model on the given fold and classify the held-out vector.

    Returns (predicted label, effective training epochs or None for
    non-iterative classifiers). ``test_label`` is consulted only in the
    test-driven early-stopping mode, which deliberately lets the stop
    decision see the held-out example (a leaky protocol kept behind an
    explicit flag).
    """
    if spec.kind == "gnb":
        model = baselines.gnb_fit(train_x, train_y)
        return baselines.gnb_predict(model, test_x)[0], None
    if spec.kind == "knn":
        xs, ts = _standardize(train_x, test_x)
        model = baselines.knn_fit(xs, train_y, k=spec.k)
        return baselines.knn_predict(model, ts), None
    if spec.kind == "logreg":
        xs, ts = _standardize(train_x, test_x)
        model = baselines.logreg_fit(xs, train_y, l2_cost=spec.l2_cost)
        return baselines.logreg_predict(model, ts)[0], None

    xs, ts = _standardize(train_x, test_x)
    if spec.kind == "cnn":
        net = neuralnet.build_reference_cnn(seed)
    else:
        net = neuralnet.build_reference_mlp(seed)
    config = neuralnet.TrainConfig(
        epochs=spec.epochs,
        batch_size=spec.batch_size,
        learning_rate=spec.learning_rate,
        shuffle=True,
        early_stop=spec.early_stop,
        seed=seed,
    )
    test_example = None
    if spec.uses_test_label:
        if test_label is None:
            raise ValueError("test_driven early stopping needs the test label")
        test_example = (ts, int(test_label))
    history = neuralnet.train(net, xs, train_y, config, test_example=test_example)
    return net.predict(ts), history.epochs_run


_MASK64 = (1 << 64) - 1


def mix_seed(repetition_seed: int, round_index: int) -> int:
    """Stable splitmix-style hash of (repetition seed, round) to a trainer seed."""
    z = (repetition_seed * 0x9E3779B97F4A7C15 + round_index + 0x632BE59BD9B4E019) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & 0x7FFFFFFFFFFFFFFF


# --- repeated LOO runs ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    classifier: str
    n_examples: int
    seeds: tuple[int, ...]
    positive_class: int
    repetition_metrics: tuple[MetricSet, ...]
    mean: MetricSet
    excluded_counts: dict[str, int]
    predictions: tuple[tuple[int, ...], ...]
    confusions: tuple[ConfusionMatrix, ...]
    stop_epoch_histogram: dict[int, int]
    wall_clock_s: tuple[float, ...]


def _run_round(args) -> tuple[int, int, int | None]:
    spec, train_x, train_y, test_x, seed, test_label, rep_index, round_index = args
    try:
        pred, epochs = fit_and_predict(spec, train_x, train_y, test_x, seed, test_label)
    except StrokesigError as e:
        raise RoundFailure(rep_index, round_index, e) from e
    return round_index, pred, epochs


def run_loo(
    features: np.ndarray,
    labels: Sequence[int],
    spec: ClassifierSpec,
    seeds: Sequence[int],
    repetitions: int | None = None,
    positive_class: int = 0,
    jobs: int = 1,
) -> EvalReport:
    """Repeated leave-one-out evaluation of one classifier spec.

    Each repetition rebuilds the plan, trains a fresh model per round with
    a seed mixed from (repetition seed, round index), and aggregates one
    confusion matrix. ``jobs`` > 1 spreads rounds over worker processes;
    results are merged in round order, so the report does not depend on
    the worker count.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if repetitions is None:
        repetitions = len(seeds)
    if repetitions != len(seeds):
        raise ValueError(f"repetitions={repetitions} but {len(seeds)} seeds given")
    if repetitions < 1:
        raise ValueError("need at least one repetition")
    n = len(y)

    rep_metrics: list[MetricSet] = []
    all_predictions: list[tuple[int, ...]] = []
    confusions: list[ConfusionMatrix] = []
    stop_hist: dict[int, int] = {}
    wall: list[float] = []

    for rep_index, rep_seed in enumerate(seeds):
        t0 = time.perf_counter()
        plan = make_loo_plan(n)
        tested = sorted(r.test_index for r in plan.rounds)
        assert tested == list(range(n)), "plan must test every index exactly once"
        tasks = []
        for rnd in plan.rounds:
            test_label = int(y[rnd.test_index]) if spec.uses_test_label else None
            tasks.append((
                spec,
                x[rnd.train_indices],
                y[rnd.train_indices],
                x[rnd.test_index],
                mix_seed(rep_seed, rnd.test_index),
                test_label,
                rep_index,
                rnd.test_index,
            ))
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_round, tasks, chunksize=4))
        else:
            results = [_run_round(t) for t in tasks]
        results.sort(key=lambda r: r[0])
        preds = tuple(pred for _, pred, _ in results)
        for _, _, epochs in results:
            if epochs is not None:
                stop_hist[epochs] = stop_hist.get(epochs, 0) + 1
        cm = confusion_from_predictions(y, preds, positive_class)
        rep_metrics.append(compute_metrics(cm))
        all_predictions.append(preds)
        confusions.append(cm)
        wall.append(time.perf_counter() - t0)

    mean, excluded = mean_metrics(rep_metrics)
    return EvalReport(
        classifier=spec.kind,
        n_examples=n,
        seeds=tuple(int(s) for s in seeds),
        positive_class=positive_class,
        repetition_metrics=tuple(rep_metrics),
        mean=mean,
        excluded_counts=excluded,
        predictions=tuple(all_predictions),
        confusions=tuple(confusions),
        stop_epoch_histogram=stop_hist,
        wall_clock_s=tuple(wall),
    )


# --- rendering --------------------------------------------------------------------


def _cell(value: float | None, fmt: str = "%.6f") -> str:
    return "n/a" if value is None else fmt % value


def render_report(report: EvalReport, format: str = "text") -> bytes:
    """Stable, diff-friendly rendering; byte-identical for equal reports."""
    if not report.repetition_metrics:
        raise EmptyReport("report has no repetitions")
    if format == "text":
        return _render_text(report)
    if format == "csv":
        return _render_csv(report)
    if format == "json-lines":
        return _render_jsonl(report)
    raise ValueError(f"unknown report format {format!r}")


def _render_text(report: EvalReport) -> bytes:
    pos = "normal" if report.positive_class == 0 else "stroke"
    lines = [
        f"classifier: {report.classifier}   n={report.n_examples}   positive class: {pos}",
        "seeds: " + ",".join(str(s) for s in report.seeds),
        "",
        f"{'rep':<6}{'CA':>8}{'Sens':>8}{'Spec':>8}{'F1':>8}{'Prec':>8}{'Rec':>8}",
    ]
    def row(tag: str, m: MetricSet) -> str:
        cells = "".join(f"{_cell(getattr(m, f), '%.3f'):>8}" for f in METRIC_FIELDS)
        return f"{tag:<6}{cells}"
    for i, m in enumerate(report.repetition_metrics, start=1):
        lines.append(row(str(i), m))
    lines.append(row("mean", report.mean))
    if report.excluded_counts:
        notes = ", ".join(f"{k}: {v}" for k, v in sorted(report.excluded_counts.items()))
        lines.append("")
        lines.append(f"undefined values excluded from the mean ({notes})")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_csv(report: EvalReport) -> bytes:
    lines = ["repetition," + ",".join(METRIC_FIELDS)]
    for i, m in enumerate(report.repetition_metrics, start=1):
        lines.append(f"{i}," + ",".join(_cell(getattr(m, f)) for f in METRIC_FIELDS))
    lines.append("mean," + ",".join(_cell(getattr(report.mean, f)) for f in METRIC_FIELDS))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_jsonl(report: EvalReport) -> bytes:
    lines = [
        json.dumps(
            {
                "type": "meta",
                "classifier": report.classifier,
                "n_examples": report.n_examples,
                "seeds": list(report.seeds),
                "positive_class": report.positive_class,
                "excluded_counts": report.excluded_counts,
                "stop_epoch_histogram": {str(k): v for k, v in sorted(report.stop_epoch_histogram.items())},
            },
            sort_keys=True,
        )
    ]
    for i, (m, cm, preds, secs) in enumerate(
        zip(report.repetition_metrics, report.confusions, report.predictions, report.wall_clock_s),
        start=1,
    ):
        lines.append(
            json.dumps(
                {
                    "type": "repetition",
                    "index": i,
                    "metrics": m.as_dict(),
                    "confusion": {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn},
                    "predictions": list(preds),
                    "wall_clock_s": round(secs, 3),
                },
                sort_keys=True,
            )
        )
    lines.append(json.dumps({"type": "mean", "metrics": report.mean.as_dict()}, sort_keys=True))
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_report(data: bytes) -> EvalReport:
    """Rebuild a report from its json-lines rendering."""
    meta = None
    reps: list[dict] = []
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["type"] == "meta":
            meta = obj
        elif obj["type"] == "repetition":
            reps.append(obj)
    if meta is None or not reps:
        raise EmptyReport("json-lines report is missing meta or repetition lines")
    reps.sort(key=lambda o: o["index"])
    metrics = tuple(MetricSet(**{k: o["metrics"][k] for k in METRIC_FIELDS}) for o in reps)
    confusions = tuple(ConfusionMatrix(**o["confusion"]) for o in reps)
    predictions = tuple(tuple(o["predictions"]) for o in reps)
    wall = tuple(float(o["wall_clock_s"]) for o in reps)
    mean, excluded = mean_metrics(metrics)
    return EvalReport(
        classifier=meta["classifier"],
        n_examples=meta["n_examples"],
        seeds=tuple(meta["seeds"]),
        positive_class=meta["positive_class"],
        repetition_metrics=metrics,
        mean=mean,
        excluded_counts=excluded,
        predictions=predictions,
        confusions=confusions,
        stop_epoch_histogram={int(k): v for k, v in meta["stop_epoch_histogram"].items()},
        wall_clock_s=wall,
    )
