"""Metric oracles, aggregation, the cost ledger, and CSV round trips."""
import numpy as np
import pytest

from qtlbench.errors import (
    AggregationError,
    DataError,
    LabelError,
    UndefinedMetricError,
)
from qtlbench.heads import HeadConfig, build_head
from qtlbench.metrics import (
    ANALYTIC_COUNT_NOTE,
    AggregateReport,
    RunReport,
    _binary_auc_midrank,
    aggregate_runs,
    aggregates_csv,
    aggregates_table,
    classification_metrics,
    cost_ledger,
    roc_auc_ovr,
    run_reports_csv,
    run_reports_from_csv,
)
from qtlbench.verify import _all_pairs_auc, _counting_metrics


def _report(config_id="DQN-n4-d2-C2", seed=42, accuracy=0.9, **kw):
    fields = dict(config_id=config_id, seed=seed, accuracy=accuracy,
                  precision=0.9, recall=0.9, f1=0.9, roc_auc=0.95,
                  total_params=100, quantum_params=24, circuit_width=4,
                  circuit_depth=2, train_time_s=1.0, epochs_completed=10,
                  stop_reason="budget", notes=())
    fields.update(kw)
    return RunReport(**fields)


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 1, 0])
        assert classification_metrics(labels, labels, 3) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_computed_binary_case(self):
        acc, prec, rec, f1 = classification_metrics([1, 1, 1, 1], [1, 1, 0, 0], 2)
        assert acc == 0.5
        assert prec == 0.25      # class 0 gets 0 by the 0/0 rule, class 1 is 0.5
        assert rec == 0.5
        assert f1 == pytest.approx((0.0 + 2 * 0.5 * 1.0 / 1.5) / 2)

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            preds = rng.integers(3, size=30)
            labels = rng.integers(3, size=30)
            got = classification_metrics(preds, labels, 3)
            assert got == _counting_metrics(preds, labels, 3)

    def test_accuracy_equals_micro_precision_recall(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            c = int(rng.integers(2, 6))
            preds = rng.integers(c, size=40)
            labels = rng.integers(c, size=40)
            acc = classification_metrics(preds, labels, c)[0]
            micro_tp = float(np.sum(preds == labels))
            assert acc == micro_tp / 40  # micro precision == micro recall == accuracy

    def test_class_permutation_invariance(self):
        rng = np.random.default_rng(3)
        preds = rng.integers(4, size=50)
        labels = rng.integers(4, size=50)
        perm = np.array([2, 3, 1, 0])
        base = classification_metrics(preds, labels, 4)
        permuted = classification_metrics(perm[preds], perm[labels], 4)
        assert base == pytest.approx(permuted, abs=1e-15)

    def test_empty_input(self):
        with pytest.raises(DataError):
            classification_metrics([], [], 2)

    def test_label_range_checked(self):
        with pytest.raises(LabelError):
            classification_metrics([0, 2], [0, 1], 2)


class TestRocAuc:
    def test_perfect_separation(self):
        scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        labels = np.array([0, 0, 1, 1])
        assert roc_auc_ovr(scores, labels, 2) == 1.0

    def test_full_ties_give_half(self):
        scores = np.full((6, 3), 1.0 / 3.0)
        labels = np.array([0, 1, 2, 0, 1, 2])
        assert roc_auc_ovr(scores, labels, 3) == pytest.approx(0.5)

    def test_matches_all_pairs_oracle_binary(self):
        rng = np.random.default_rng(4)
        p1 = rng.uniform(size=20)
        scores = np.stack([1.0 - p1, p1], axis=1)
        labels = rng.integers(2, size=20)
        got = roc_auc_ovr(scores, labels, 2)
        assert got == pytest.approx(_all_pairs_auc(scores, labels, 2), abs=1e-12)

    def test_matches_all_pairs_oracle_multiclass(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            scores = rng.dirichlet(np.ones(4), size=25)
            labels = rng.integers(4, size=25)
            if np.unique(labels).size < 2:
                continue
            got = roc_auc_ovr(scores, labels, 4)
            assert got == pytest.approx(_all_pairs_auc(scores, labels, 4), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        scores = rng.uniform(size=30)
        positive = rng.integers(2, size=30).astype(bool)
        if positive.all() or not positive.any():
            positive[0] = ~positive[0]
        base = _binary_auc_midrank(scores, positive)
        assert _binary_auc_midrank(np.exp(scores), positive) == pytest.approx(base, abs=1e-15)
        assert _binary_auc_midrank(3.0 * scores + 7.0, positive) == pytest.approx(base, abs=1e-15)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc_ovr(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([1, 1]), 2)

    def test_probability_rows_validated(self):
        with pytest.raises(DataError):
            roc_auc_ovr(np.array([[0.9, 0.3], [0.5, 0.5]]), np.array([0, 1]), 2)

    def test_absent_class_skipped(self):
        rng = np.random.default_rng(7)
        scores = rng.dirichlet(np.ones(3), size=12)
        labels = rng.integers(2, size=12)  # class 2 never appears
        val = roc_auc_ovr(scores, labels, 3)
        assert 0.0 <= val <= 1.0


class TestAggregateRuns:
    def test_single_run_std_zero(self):
        agg = aggregate_runs([_report()])
        assert agg.run_count == 1
        assert agg.stds["accuracy"] == 0.0

    def test_constant_sequence(self):
        agg = aggregate_runs([_report(seed=s, accuracy=0.88) for s in (1, 2, 3)])
        assert agg.means["accuracy"] == pytest.approx(0.88)
        assert agg.stds["accuracy"] == pytest.approx(0.0, abs=1e-15)

    def test_two_point_closed_form(self):
        agg = aggregate_runs([_report(seed=1, accuracy=0.875),
                              _report(seed=2, accuracy=0.885)])
        assert agg.means["accuracy"] == pytest.approx(0.88)
        # sample std of {87.5, 88.5} percent = 1/sqrt(2) percent
        assert 100 * agg.stds["accuracy"] == pytest.approx(0.7071067811865476, abs=1e-9)

    def test_mixed_configs_rejected(self):
        with pytest.raises(AggregationError):
            aggregate_runs([_report(), _report(config_id="QPIE-n4-d2-C2")])
        with pytest.raises(AggregationError):
            aggregate_runs([_report(), _report(total_params=101)])
        with pytest.raises(AggregationError):
            aggregate_runs([])

    def test_identical_reports_mean_is_report(self):
        reports = [_report(seed=s) for s in (1, 2)]
        agg = aggregate_runs(reports)
        for name in ("accuracy", "precision", "recall", "f1", "roc_auc"):
            assert agg.means[name] == getattr(reports[0], name)
            assert agg.stds[name] == 0.0


class TestCostLedger:
    @pytest.mark.parametrize("n,want", [(4, 24), (6, 36)])
    def test_dqn_quantum_counts(self, n, want):
        model = build_head(HeadConfig("DQN", n, depth=2, feature_dim=16, hidden_dim=4))
        fields = cost_ledger(model, 1.5, 10, "budget")
        assert fields["quantum_params"] == want
        assert fields["circuit_width"] == n
        assert fields["circuit_depth"] == 2
        assert fields["total_params"] == model.total_param_count

    @pytest.mark.parametrize("depth,want", [(2, 81), (4, 135), (6, 189)])
    def test_aecqtl_depth_counts(self, depth, want):
        model = build_head(HeadConfig("AECQTL", 9, depth=depth, feature_dim=512))
        assert cost_ledger(model, 0.0, 0, "budget")["quantum_params"] == want

    def test_pvcqtl_variational_flagged(self):
        model = build_head(HeadConfig("PVCQTL_V", 4, depth=1, locality=2,
                                      feature_dim=16, hidden_dim=4))
        fields = cost_ledger(model, 0.0, 0, "saturation")
        assert fields["quantum_params"] == 12
        assert ANALYTIC_COUNT_NOTE in fields["notes"]

    def test_pvcqtl_modified_zero(self):
        model = build_head(HeadConfig("PVCQTL_M", 4, depth=1, locality=2,
                                      feature_dim=16, hidden_dim=4))
        assert cost_ledger(model, 0.0, 0, "manual")["quantum_params"] == 0


class TestReportSerialization:
    def test_run_report_validation(self):
        with pytest.raises(DataError):
            _report(accuracy=1.2)
        with pytest.raises(DataError):
            _report(stop_reason="whenever")
        with pytest.raises(DataError):
            _report(quantum_params=101, total_params=100)

    def test_csv_round_trip(self):
        reports = [_report(seed=s, notes=(ANALYTIC_COUNT_NOTE,)) for s in (1, 2)]
        text = run_reports_csv(reports)
        back = run_reports_from_csv(text)
        assert back == reports

    def test_aggregate_renderers(self):
        agg = aggregate_runs([_report(seed=1), _report(seed=2)])
        csv_text = aggregates_csv([(agg.config_id, agg, "ok")])
        assert csv_text.splitlines()[1].startswith("DQN-n4-d2-C2,ok,2")
        table = aggregates_table([(agg.config_id, agg, "ok"),
                                  ("BROKEN-n2-d0-C2", None, "failed")])
        assert "90.00" in table and "failed" in table
