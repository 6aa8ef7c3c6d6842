import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowprobe.core import (
    NUMERIC,
    ContractError,
    DomainError,
    RandomSource,
    make_dataset,
)
from shadowprobe.metrics import (
    ConfusionMatrix,
    confusion_matrix,
    k_fold_cross_validate,
    precision_recall_accuracy,
    stratified_fold_indices,
)


class TestConfusionMatrix:
    def test_perfect_predictor_is_diagonal(self):
        cm = confusion_matrix(["a", "b", "a", "c"], ["a", "b", "a", "c"])
        assert np.array_equal(cm.counts, np.diag([2, 1, 1]))

    def test_all_wrong_zero_diagonal(self):
        cm = confusion_matrix(["a", "b"], ["b", "a"])
        assert np.trace(cm.counts) == 0

    def test_row_is_truth(self):
        cm = confusion_matrix(["a", "a", "b"], ["b", "b", "b"])
        assert cm.labels == ("a", "b")
        assert cm.counts[0, 1] == 2  # true a predicted b

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            confusion_matrix(["a"], ["a", "b"])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")),
                    min_size=1, max_size=30))
    def test_invariants(self, pairs):
        truths = [t for t, _ in pairs]
        preds = [p for _, p in pairs]
        cm = confusion_matrix(truths, preds)
        assert cm.total == len(pairs)
        assert np.all(cm.counts >= 0)
        metrics = precision_recall_accuracy(cm)
        assert 0.0 <= metrics["accuracy"] <= 1.0
        for v in metrics["per_class"].values():
            assert 0.0 <= v["precision"] <= 1.0
            assert 0.0 <= v["recall"] <= 1.0


def cm_from_counts(labels, counts):
    return ConfusionMatrix(labels, np.array(counts))


class TestPrecisionRecall:
    def test_speech_case_study_matrix(self):
        # True Indian: 220 recognized, 22 missed; true NotIndian: 702
        # recognized, 72 taken for Indian.
        cm = cm_from_counts(("Indian", "NotIndian"), [[220, 22], [72, 702]])
        m = precision_recall_accuracy(cm)
        assert abs(m["per_class"]["Indian"]["precision"] - 220 / 292) < 1e-12
        assert abs(m["per_class"]["Indian"]["recall"] - 220 / 242) < 1e-12
        assert abs(m["per_class"]["NotIndian"]["precision"] - 702 / 724) < 1e-12
        assert abs(m["per_class"]["NotIndian"]["recall"] - 702 / 774) < 1e-12
        assert round(m["per_class"]["Indian"]["precision"], 2) == 0.75
        assert round(m["per_class"]["NotIndian"]["precision"], 2) == 0.97
        assert round(m["per_class"]["Indian"]["recall"], 3) == 0.909
        assert round(m["per_class"]["NotIndian"]["recall"], 3) == 0.907

    def test_traffic_case_study_matrix(self):
        cm = cm_from_counts(("Google", "NotGoogle"), [[2312, 101], [92, 2786]])
        m = precision_recall_accuracy(cm)
        assert abs(m["per_class"]["Google"]["precision"] - 2312 / 2404) < 1e-12
        assert abs(m["per_class"]["Google"]["recall"] - 2312 / 2413) < 1e-12

    def test_diagonal_all_ones(self):
        cm = cm_from_counts(("a", "b"), [[3, 0], [0, 4]])
        m = precision_recall_accuracy(cm)
        assert m["accuracy"] == 1.0
        for v in m["per_class"].values():
            assert v["precision"] == 1.0 and v["recall"] == 1.0

    def test_empty_column_flagged_zero(self):
        cm = cm_from_counts(("a", "b"), [[0, 2], [0, 3]])
        m = precision_recall_accuracy(cm)
        assert m["per_class"]["a"]["precision"] == 0.0
        assert m["per_class"]["a"]["empty_column"]

    def test_empty_matrix(self):
        with pytest.raises(DomainError):
            precision_recall_accuracy(cm_from_counts(("a",), [[0]]))


def labeled_dataset(n, rng, classes=("p", "q")):
    labels = [classes[i % len(classes)] for i in range(n)]
    rows = [(rng.uniform(), float(i)) for i in range(n)]
    return make_dataset([("a", NUMERIC), ("b", NUMERIC)], rows, labels)


class TestFolds:
    def test_partition_and_balance(self):
        rng = RandomSource(1)
        labels = ["p"] * 13 + ["q"] * 8
        folds = stratified_fold_indices(labels, 4, rng)
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
        flat = sorted(i for f in folds for i in f)
        assert flat == list(range(21))
        # per-class allocation within one of proportional
        for f in folds:
            n_p = sum(labels[i] == "p" for i in f)
            assert abs(n_p - 13 / 4) <= 1.0

    def test_leave_one_out_structure(self):
        ds = labeled_dataset(6, RandomSource(2))
        seen = []

        def trainer(train_ds, rng):
            return lambda inst: "p"

        result = k_fold_cross_validate(ds, 6, trainer, RandomSource(3))
        assert len(result.fold_accuracies) == 6
        assert result.pooled.total == 6

    def test_memorizing_trainer_on_duplicates(self):
        rows = [(1.0, 1.0), (1.0, 1.0), (2.0, 2.0), (2.0, 2.0),
                (3.0, 3.0), (3.0, 3.0)]
        labels = ["p", "p", "q", "q", "p", "p"]
        ds = make_dataset([("a", NUMERIC), ("b", NUMERIC)], rows, labels)

        def trainer(train_ds, rng):
            table = {r.values: r.label for r in train_ds.rows}
            return lambda inst: table[inst.values]

        result = k_fold_cross_validate(ds, 2, trainer, RandomSource(4))
        assert result.mean_accuracy == 1.0

    def test_k_out_of_range(self):
        ds = labeled_dataset(4, RandomSource(5))
        trainer = lambda d, r: (lambda inst: "p")
        with pytest.raises(ContractError):
            k_fold_cross_validate(ds, 1, trainer, RandomSource(6))
        with pytest.raises(ContractError):
            k_fold_cross_validate(ds, 5, trainer, RandomSource(6))

    def test_cv_close_to_holdout_estimate(self):
        # Estimator consistency: 10-fold CV accuracy should sit near a
        # 70/30 holdout estimate, averaged over seeds, on a learnable
        # synthetic problem.
        from shadowprobe import dtree
        from shadowprobe.core import split_dataset
        from shadowprobe.dtree import TreeParams

        rng = RandomSource(7)
        rows, labels = [], []
        for i in range(200):
            x = rng.normal(0, 1, size=2)
            noisy = x[0] + rng.normal(0, 0.4)
            rows.append(tuple(x))
            labels.append("p" if noisy > 0 else "q")
        ds = make_dataset([("x", NUMERIC), ("y", NUMERIC)], rows, labels)

        def trainer(train_ds, fold_rng):
            tree = dtree.train_tree(train_ds, TreeParams(min_leaf_size=5), fold_rng)
            return lambda inst: dtree.classify(tree, inst)

        cv_scores, ho_scores = [], []
        for seed in range(10):
            cv = k_fold_cross_validate(ds, 10, trainer, RandomSource(100 + seed))
            cv_scores.append(cv.mean_accuracy)
            train, test = split_dataset(ds, 0.7, RandomSource(200 + seed))
            predict = trainer(train, RandomSource(300 + seed))
            ho = np.mean([predict(r) == r.label for r in test.rows])
            ho_scores.append(ho)
        assert abs(np.mean(cv_scores) - np.mean(ho_scores)) < 0.05
