"""Folds, loss, metric suite, F-beta, epoch selection, aggregation."""
import numpy as np
import pytest

from newsbench.errors import RunError, ValidationError
from newsbench.evaluation import (
    PROFILES,
    Hyperparameters,
    MetricsReport,
    ProtocolWarning,
    SelectionPolicy,
    aggregate_folds,
    compute_metrics,
    f_beta,
    stratified_kfold,
    train_fold,
    weighted_bce,
)
from newsbench.models import ModelConfig, build_model, linear_lr

from oracles import metrics_oracle, random_prediction_set


class TestStratifiedKfold:
    def test_exact_divisibility(self):
        labels = [1] * 50 + [0] * 50
        splits = stratified_kfold(labels, k=10, seed=0)
        y = np.array(labels)
        for split in splits:
            assert y[split.heldout_idx].sum() == 5
            assert len(split.heldout_idx) == 10

    def test_five_positives_over_ten_folds_warns(self):
        labels = [1] * 5 + [0] * 95
        with pytest.warns(ProtocolWarning, match="minority"):
            splits = stratified_kfold(labels, k=10, seed=0)
        y = np.array(labels)
        positive_counts = sorted(int(y[s.heldout_idx].sum()) for s in splits)
        assert positive_counts == [0] * 5 + [1] * 5

    def test_same_seed_identical(self):
        labels = [0, 1] * 30
        a = stratified_kfold(labels, k=10, seed=4)
        b = stratified_kfold(labels, k=10, seed=4)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.heldout_idx, sb.heldout_idx)

    def test_different_seed_differs(self):
        labels = [0, 1] * 30
        a = stratified_kfold(labels, k=10, seed=4)
        b = stratified_kfold(labels, k=10, seed=5)
        assert any(not np.array_equal(sa.heldout_idx, sb.heldout_idx) for sa, sb in zip(a, b))

    def test_disjoint_cover(self):
        rng = np.random.default_rng(0)
        labels = (rng.random(83) < 0.3).astype(int)
        splits = stratified_kfold(labels, k=10, seed=1)
        seen = np.concatenate([s.heldout_idx for s in splits])
        assert sorted(seen.tolist()) == list(range(83))
        for s in splits:
            assert not set(s.train_idx) & set(s.heldout_idx)
            assert len(s.train_idx) + len(s.heldout_idx) == 83

    def test_per_class_counts_within_one(self):
        rng = np.random.default_rng(1)
        labels = (rng.random(137) < 0.4).astype(int)
        splits = stratified_kfold(labels, k=10, seed=2)
        y = np.array(labels)
        for cls in (0, 1):
            counts = [int((y[s.heldout_idx] == cls).sum()) for s in splits]
            assert max(counts) - min(counts) <= 1

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            stratified_kfold([1] * 30, k=10, seed=0)


class TestWeightedBce:
    def test_logit_zero_positive(self):
        assert weighted_bce(0.0, 1, w_pos=1.0) == pytest.approx(np.log(2))

    def test_weight_scales_positive_term(self):
        assert weighted_bce(0.0, 1, w_pos=19.0) == pytest.approx(19 * np.log(2))

    def test_weight_one_equals_unweighted(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal(50)
        y = rng.integers(0, 2, size=50)
        sig = 1 / (1 + np.exp(-z))
        unweighted = -(y * np.log(sig) + (1 - y) * np.log(1 - sig)).mean()
        assert weighted_bce(z, y, w_pos=1.0) == pytest.approx(unweighted)

    def test_stable_at_extreme_logits(self):
        assert np.isfinite(weighted_bce(1000.0, 0))
        assert np.isfinite(weighted_bce(-1000.0, 1))

    def test_bad_weight_rejected(self):
        with pytest.raises(ValidationError):
            weighted_bce(0.0, 1, w_pos=0.0)


class TestComputeMetrics:
    def test_hand_confusion_matrix(self):
        report = compute_metrics([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1], [1, 0, 1, 0])
        assert report.precision == 0.5
        assert report.recall == 0.5
        assert report.f1 == 0.5
        assert report.accuracy == 0.5

    def test_pairwise_auc_example(self):
        report = compute_metrics([0, 0, 0, 1], [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert report.roc_auc == 0.75

    def test_perfect_predictions(self):
        report = compute_metrics([1, 0, 1], [0.9, 0.1, 0.8], [1, 0, 1])
        assert report.values().tolist() == [1.0] * 6

    def test_undefined_ratios_flagged_as_zero(self):
        report = compute_metrics([0, 0], [0.1, 0.2], [1, 1])
        assert report.precision == 0.0
        assert report.roc_auc == 0.0
        assert "precision" in report.degenerate
        assert "roc_auc" in report.degenerate

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            compute_metrics([1], [0.5, 0.5], [1, 0])

    def test_matches_bruteforce_oracle_exactly(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            pred, scores, true = random_prediction_set(rng)
            report = compute_metrics(pred, scores, true)
            expected = metrics_oracle(pred, scores, true)
            for name, value in expected.items():
                assert getattr(report, name) == value, name

    def test_balanced_accuracy_equals_accuracy_on_balanced_sets(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = 20
            true = np.array([0, 1] * (n // 2))
            pred = rng.integers(0, 2, size=n)
            report = compute_metrics(pred, rng.random(n), true)
            assert abs(report.accuracy - report.balanced_accuracy) < 1e-12


class TestFBeta:
    def test_beta_one_reduces_to_f1(self):
        for x in np.linspace(0.05, 1.0, 12):
            assert f_beta(x, x, 1.0) == pytest.approx(x)

    def test_recall_weighted_example(self):
        assert f_beta(0.5, 1.0, 2.0) == pytest.approx(5 * 0.5 * 1.0 / (4 * 0.5 + 1.0))
        assert f_beta(0.5, 1.0, 2.0) == pytest.approx(0.833333333)

    def test_large_beta_approaches_recall(self):
        for p in np.linspace(0.1, 1.0, 10):
            for r in np.linspace(0.05, 1.0, 10):
                assert abs(f_beta(p, r, 100.0) - r) < 0.01

    def test_zero_both_is_zero(self):
        assert f_beta(0.0, 0.0, 2.0) == 0.0

    def test_consistency_with_f1_on_grid(self):
        grid = np.linspace(0.0, 1.0, 21)
        for p in grid:
            for r in grid:
                expected = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
                assert f_beta(p, r, 1.0) == pytest.approx(expected)


class TestAggregate:
    def _report(self, f1):
        return MetricsReport(f1, f1, f1, f1, f1, f1, fold=0)

    def test_single_fold_identity(self):
        agg = aggregate_folds([self._report(0.4)])
        assert agg.mean.f1 == 0.4
        assert agg.std.f1 == 0.0
        assert agg.n_folds == 1

    def test_two_point_arithmetic(self):
        agg = aggregate_folds([self._report(0.5), self._report(0.7)])
        assert agg.mean.f1 == pytest.approx(0.6)
        assert agg.std.f1 == pytest.approx(0.1)

    def test_identical_folds_zero_std(self):
        agg = aggregate_folds([self._report(0.3)] * 10)
        assert agg.std.values().tolist() == [0.0] * 6


def _training_setup(n=60, dim=6, seed=0, prevalence=0.5):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    x = rng.standard_normal((n, dim))
    shift = np.quantile(x @ w, 1 - prevalence)
    y = (x @ w > shift).astype(np.int64)
    arrays = {"x": x}
    labels = y
    splits = stratified_kfold(labels, k=10, seed=seed)
    return arrays, labels, splits


class TestTrainFold:
    def test_scheduler_contract(self):
        arrays, labels, splits = _training_setup()
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.0, dropout=0.0, epochs=8, batch_size=32)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=0))
        result = train_fold(model, arrays, labels, splits[0], hyper)
        for entry in result.trace:
            assert entry.lr == pytest.approx(1e-2 * (1 - entry.epoch / 8))
        assert result.trace[-1].lr <= 1e-2 / 8 + 1e-15

    def test_selection_dominance_and_earliest_tie(self):
        arrays, labels, splits = _training_setup(seed=3)
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.0, dropout=0.0, epochs=10, batch_size=32)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=3))
        result = train_fold(model, arrays, labels, splits[0], hyper)
        best_score = result.checkpoint.selection_score
        scores = [t.selection_score for t in result.trace]
        assert all(best_score >= s for s in scores)
        assert result.checkpoint.epoch == int(np.argmax(scores))  # first occurrence of the max

    def test_divergence_raises_run_error_with_epoch(self):
        arrays, labels, splits = _training_setup(seed=4)
        hyper = Hyperparameters(lr=1e200, weight_decay=0.0, dropout=0.0, epochs=3, batch_size=16)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=4))
        with pytest.raises(RunError, match="epoch"):
            train_fold(model, arrays, labels, splits[0], hyper)

    def test_fixed_seed_reproducible_trajectory(self):
        arrays, labels, splits = _training_setup(seed=5)
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.01, dropout=0.2, epochs=4, batch_size=16)

        def run():
            model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.2, seed=5))
            result = train_fold(model, arrays, labels, splits[0], hyper)
            return result.checkpoint.arrays, [t.train_loss for t in result.trace]

        arrays_a, losses_a = run()
        arrays_b, losses_b = run()
        assert losses_a == losses_b
        for name in arrays_a:
            assert np.array_equal(arrays_a[name], arrays_b[name])

    def test_checkpoint_metrics_match_rescoring(self):
        arrays, labels, splits = _training_setup(seed=6)
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.0, dropout=0.0, epochs=5, batch_size=32)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=6))
        result = train_fold(model, arrays, labels, splits[0], hyper)
        from newsbench.evaluation import evaluate_model

        restored = result.checkpoint.restore()
        rescored = evaluate_model(restored, arrays, labels.astype(float), splits[0].heldout_idx,
                                  fold=splits[0].fold_index)
        assert rescored == result.report

    def test_nested_selection_reports_on_heldout(self):
        arrays, labels, splits = _training_setup(seed=7, n=80)
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.0, dropout=0.0, epochs=3, batch_size=32)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=7))
        result = train_fold(model, arrays, labels, splits[0], hyper, nested_selection_fraction=0.25)
        assert result.protocol.startswith("nested")
        # the trace scored the inner split, the final report the untouched held-out fold
        assert result.report.fold == splits[0].fold_index

    def test_default_positive_weight_is_neg_over_pos(self):
        arrays, labels, splits = _training_setup(seed=8, prevalence=0.25, n=80)
        hyper = Hyperparameters(lr=1e-2, weight_decay=0.0, dropout=0.0, epochs=2, batch_size=32)
        model = build_model(ModelConfig(family="mlp", input_dim=6, head_hidden=4, dropout=0.0, seed=8))
        result = train_fold(model, arrays, labels, splits[0], hyper)
        y = labels[splits[0].train_idx]
        assert result.positive_weight == pytest.approx((y == 0).sum() / (y == 1).sum())


class TestProfiles:
    def test_paper_profiles(self):
        assert PROFILES["evons"].lr == 1e-4
        assert PROFILES["evons"].weight_decay == 0.01
        assert PROFILES["evons"].dropout == 0.1
        assert PROFILES["evons"].epochs == 50
        assert PROFILES["fakenewsnet"].lr == 8e-5
        assert PROFILES["fakenewsnet"].epochs == 100

    def test_linear_lr_bounds(self):
        assert linear_lr(1.0, 0, 10) == 1.0
        assert linear_lr(1.0, 9, 10) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            linear_lr(1.0, 10, 10)


class TestSelectionPolicy:
    def test_f1_policy(self):
        report = MetricsReport(0, 0, 0.6, 0.3, 0.4, 0)
        assert SelectionPolicy("f1").score(report) == 0.4

    def test_f_beta_policy(self):
        report = MetricsReport(0, 0, 0.5, 1.0, 2 * 0.5 * 1.0 / 1.5, 0)
        assert SelectionPolicy("f_beta", beta=2.0).score(report) == pytest.approx(f_beta(0.5, 1.0, 2.0))

    def test_beta_required(self):
        with pytest.raises(ValidationError):
            SelectionPolicy("f_beta")
        with pytest.raises(ValidationError):
            SelectionPolicy("f_beta", beta=-1.0)
