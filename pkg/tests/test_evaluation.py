import numpy as np
import pytest

from strokesig import evaluation as ev
from strokesig.errors import EmptyMatrix, EmptyReport, RoundFailure, TooFewExamples
from strokesig.evaluation import ClassifierSpec, ConfusionMatrix, MetricSet


def toy_features(n=12, seed=0, gap=3.0):
    rng = np.random.default_rng(seed)
    y = np.tile([0, 1], n // 2)
    x = rng.standard_normal((n, 24)) * 0.5
    x[y == 1, :6] += gap
    return x, y


# --- plans -------------------------------------------------------------------


def test_loo_plan_62_rounds_of_61():
    plan = ev.make_loo_plan(62)
    assert plan.n == 62
    assert len(plan.rounds) == 62
    for rnd in plan.rounds:
        assert rnd.train_indices.size == 61
        assert rnd.test_index not in rnd.train_indices


def test_loo_plan_smallest_case():
    plan = ev.make_loo_plan(2)
    assert [r.test_index for r in plan.rounds] == [0, 1]
    assert plan.rounds[0].train_indices.tolist() == [1]
    assert plan.rounds[1].train_indices.tolist() == [0]


def test_loo_plan_partitions_test_indices():
    for n in (2, 5, 62):
        plan = ev.make_loo_plan(n)
        assert sorted(r.test_index for r in plan.rounds) == list(range(n))


def test_loo_plan_too_few():
    with pytest.raises(TooFewExamples):
        ev.make_loo_plan(1)


# --- metrics --------------------------------------------------------------------


def test_reference_nb_confusion_row():
    m = ev.compute_metrics(ConfusionMatrix(tp=25, fn=5, fp=14, tn=18))
    assert m.accuracy == pytest.approx(0.694, abs=1e-3)
    assert m.sensitivity == pytest.approx(0.833, abs=1e-3)
    assert m.specificity == pytest.approx(0.563, abs=1e-3)
    assert m.f1 == pytest.approx(0.725, abs=1e-3)
    assert m.precision == pytest.approx(0.641, abs=1e-3)
    assert m.recall == pytest.approx(0.833, abs=1e-3)


def test_reference_best_cnn_confusion():
    m = ev.compute_metrics(ConfusionMatrix(tp=30, fn=0, fp=5, tn=27))
    assert m.accuracy == pytest.approx(57 / 62)
    assert m.accuracy == pytest.approx(0.919, abs=1e-3)


def test_perfect_predictions_score_one():
    m = ev.compute_metrics(ConfusionMatrix(tp=30, fn=0, fp=0, tn=32))
    for name in ev.METRIC_FIELDS:
        assert getattr(m, name) == 1.0


def test_undefined_ratios_are_none_not_zero():
    m = ev.compute_metrics(ConfusionMatrix(tp=0, fn=0, fp=3, tn=7))
    assert m.sensitivity is None
    assert m.recall is None
    assert m.f1 is None
    assert m.precision == 0.0
    assert m.accuracy == 0.7


def test_recall_equals_sensitivity():
    m = ev.compute_metrics(ConfusionMatrix(tp=9, fn=4, fp=2, tn=6))
    assert m.recall == m.sensitivity
    assert m.f1 == pytest.approx(
        2 * m.precision * m.recall / (m.precision + m.recall)
    )


def test_empty_matrix_rejected():
    with pytest.raises(EmptyMatrix):
        ev.compute_metrics(ConfusionMatrix(0, 0, 0, 0))


def test_confusion_with_normal_positive():
    y_true = [0, 0, 0, 1, 1]
    y_pred = [0, 1, 0, 0, 1]
    cm = ev.confusion_from_predictions(y_true, y_pred, positive_class=0)
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (2, 1, 1, 1)
    flipped = ev.confusion_from_predictions(y_true, y_pred, positive_class=1)
    assert (flipped.tp, flipped.fn, flipped.fp, flipped.tn) == (1, 1, 1, 2)


def test_mean_metrics_is_exact_arithmetic_mean():
    sets = [
        ev.compute_metrics(ConfusionMatrix(tp=25, fn=5, fp=14, tn=18)),
        ev.compute_metrics(ConfusionMatrix(tp=30, fn=0, fp=5, tn=27)),
    ]
    mean, excluded = ev.mean_metrics(sets)
    assert excluded == {}
    for name in ev.METRIC_FIELDS:
        direct = (getattr(sets[0], name) + getattr(sets[1], name)) / 2
        assert abs(getattr(mean, name) - direct) <= 1e-12


def test_mean_metrics_excludes_undefined_with_count():
    defined = ev.compute_metrics(ConfusionMatrix(tp=5, fn=0, fp=0, tn=5))
    partial = ev.compute_metrics(ConfusionMatrix(tp=0, fn=0, fp=3, tn=7))
    mean, excluded = ev.mean_metrics([defined, partial])
    assert excluded["sensitivity"] == 1
    assert mean.sensitivity == 1.0  # only the defined repetition counts


# --- run_loo -----------------------------------------------------------------------


def test_gnb_is_deterministic_across_repetitions():
    x, y = toy_features()
    report = ev.run_loo(x, y, ClassifierSpec("gnb"), seeds=[1, 2, 3, 4, 5])
    first = report.repetition_metrics[0]
    for m in report.repetition_metrics[1:]:
        assert m == first
    assert report.mean.accuracy == pytest.approx(first.accuracy)


def test_constant_predictor_accuracy_is_class_fraction():
    # kNN with k equal to the training size predicts the majority label
    x, y = toy_features(n=4, gap=0.0)
    y = np.array([0, 0, 0, 1])
    report = ev.run_loo(x, y, ClassifierSpec("knn", k=3), seeds=[1])
    # with the lone stroke held out, all 3 train normals vote normal;
    # holding out a normal leaves 2 normals + 1 stroke -> still normal
    assert report.predictions[0] == (0, 0, 0, 0)
    assert report.repetition_metrics[0].accuracy == pytest.approx(0.75)


def test_run_loo_partition_and_report_shape():
    x, y = toy_features()
    report = ev.run_loo(x, y, ClassifierSpec("logreg"), seeds=[3, 4])
    assert report.n_examples == 12
    assert len(report.repetition_metrics) == 2
    assert all(len(p) == 12 for p in report.predictions)
    assert len(report.wall_clock_s) == 2
    assert report.confusions[0].total == 12


def test_run_loo_repetition_seed_count_mismatch():
    x, y = toy_features()
    with pytest.raises(ValueError):
        ev.run_loo(x, y, ClassifierSpec("gnb"), seeds=[1, 2], repetitions=3)


def test_run_loo_cnn_tiny_is_seed_reproducible():
    x, y = toy_features(n=8)
    spec = ClassifierSpec("cnn", epochs=3, batch_size=4)
    a = ev.run_loo(x, y, spec, seeds=[9])
    b = ev.run_loo(x, y, spec, seeds=[9])
    assert a.predictions == b.predictions
    assert a.repetition_metrics == b.repetition_metrics
    assert a.stop_epoch_histogram == b.stop_epoch_histogram


def test_run_loo_results_independent_of_jobs():
    x, y = toy_features()
    spec = ClassifierSpec("gnb")
    seq = ev.run_loo(x, y, spec, seeds=[1, 2])
    par = ev.run_loo(x, y, spec, seeds=[1, 2], jobs=2)
    assert seq.predictions == par.predictions
    assert ev.render_report(seq, "csv") == ev.render_report(par, "csv")


def test_run_loo_test_driven_records_stop_epochs():
    x, y = toy_features(n=8, gap=4.0)
    spec = ClassifierSpec("cnn", epochs=12, batch_size=4, early_stop="test_driven")
    report = ev.run_loo(x, y, spec, seeds=[5])
    assert sum(report.stop_epoch_histogram.values()) == 8
    assert all(1 <= e <= 12 for e in report.stop_epoch_histogram)


def test_run_loo_wraps_classifier_failures_with_context():
    x, y = toy_features(n=6)
    x[:, 5] = np.nan  # poisoned feature makes training diverge
    spec = ClassifierSpec("cnn", epochs=2, batch_size=3)
    with pytest.raises(RoundFailure) as info:
        ev.run_loo(x, y, spec, seeds=[1])
    assert info.value.repetition == 0
    assert info.value.round_index == 0


def test_mix_seed_is_stable_and_spread():
    a = ev.mix_seed(1, 0)
    assert a == ev.mix_seed(1, 0)
    seeds = {ev.mix_seed(rep, rnd) for rep in range(5) for rnd in range(62)}
    assert len(seeds) == 5 * 62


# --- rendering -----------------------------------------------------------------------


@pytest.fixture()
def small_report():
    x, y = toy_features()
    return ev.run_loo(x, y, ClassifierSpec("gnb"), seeds=[1, 2, 3])


def test_render_text_grid(small_report):
    text = ev.render_report(small_report, "text").decode()
    lines = text.splitlines()
    assert "classifier: gnb" in lines[0]
    assert any(line.startswith("mean") for line in lines)
    assert "CA" in text and "Sens" in text and "Spec" in text


def test_render_csv_rows(small_report):
    rows = ev.render_report(small_report, "csv").decode().splitlines()
    assert rows[0] == "repetition," + ",".join(ev.METRIC_FIELDS)
    assert len(rows) == 1 + 3 + 1  # header + reps + mean
    assert rows[-1].startswith("mean,")


def test_render_is_byte_deterministic(small_report):
    for fmt in ("text", "csv", "json-lines"):
        assert ev.render_report(small_report, fmt) == ev.render_report(small_report, fmt)


def test_render_unknown_format(small_report):
    with pytest.raises(ValueError):
        ev.render_report(small_report, "xml")


def test_jsonl_round_trip(small_report):
    payload = ev.render_report(small_report, "json-lines")
    loaded = ev.load_report(payload)
    assert loaded.classifier == small_report.classifier
    assert loaded.predictions == small_report.predictions
    assert loaded.repetition_metrics == small_report.repetition_metrics
    assert ev.render_report(loaded, "csv") == ev.render_report(small_report, "csv")


def test_empty_report_rejected():
    with pytest.raises(EmptyReport):
        ev.mean_metrics([])
    with pytest.raises(EmptyReport):
        ev.load_report(b"")


def test_na_rendering_for_undefined_metrics():
    cm = ConfusionMatrix(tp=0, fn=0, fp=3, tn=9)
    metrics = ev.compute_metrics(cm)
    report = ev.EvalReport(
        classifier="gnb",
        n_examples=12,
        seeds=(1,),
        positive_class=0,
        repetition_metrics=(metrics,),
        mean=ev.mean_metrics([metrics])[0],
        excluded_counts=ev.mean_metrics([metrics])[1],
        predictions=((1,) * 12,),
        confusions=(cm,),
        stop_epoch_histogram={},
        wall_clock_s=(0.0,),
    )
    csv_text = ev.render_report(report, "csv").decode()
    assert "n/a" in csv_text
    text = ev.render_report(report, "text").decode()
    assert "undefined values excluded" in text
