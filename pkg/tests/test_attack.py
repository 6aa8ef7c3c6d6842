import numpy as np
import pytest

from shadowprobe.core import (
    CATEGORICAL,
    NUMERIC,
    ContractError,
    DomainError,
    RandomSource,
    make_dataset,
)
from shadowprobe.attack import (
    NOT_P,
    P,
    PropertyLabel,
    build_meta_training_set,
    extract_features,
    infer_property,
    kl_divergence_scores,
    kl_filter,
    kl_gaussian,
    matched_displacement,
    restrict_to_phonemes,
    run_dp_bypass,
    split_by_property,
    train_meta,
)
from shadowprobe.dtree import TreeParams
from shadowprobe.hmm import AcousticModel, GaussianHmm
from shadowprobe.kmeans import KMeansModel, SulqParams
from shadowprobe.mlp import init_mlp
from shadowprobe.svm import KernelSpec, SvmModel

from oracles import kl_gaussian_numeric


def svm_with(n_sv, dim, seed=0):
    rng = RandomSource(seed)
    return SvmModel(
        sv_indices=np.arange(n_sv),
        sv_y=np.where(rng.uniform(size=n_sv) > 0.5, 1.0, -1.0),
        sv_x=rng.normal(size=(n_sv, dim)),
        sv_alpha=rng.uniform(0.1, 1.0, size=n_sv),
        bias=0.1,
        kernel=KernelSpec("linear"),
        C=1.0,
        converged=True,
    )


def lr_trans(n):
    t = np.zeros((n, n))
    for s in range(n - 1):
        t[s, s] = 0.6
        t[s, s + 1] = 0.4
    t[n - 1, n - 1] = 1.0
    return t


def acoustic_with(phonemes, n_states, dim, seed=0, mean_shift=None):
    rng = RandomSource(seed)
    hmms = {}
    for ph in phonemes:
        means = rng.normal(size=(n_states, dim))
        if mean_shift and ph in mean_shift:
            means = means + mean_shift[ph]
        hmms[ph] = GaussianHmm(lr_trans(n_states), means,
                               rng.uniform(0.5, 1.5, size=(n_states, dim)))
    return AcousticModel(hmms)


class TestExtractFeatures:
    def test_svm_rows_and_schema(self):
        fv = extract_features(svm_with(7, 5))
        assert fv.source_kind == "svm"
        assert fv.data.n_rows == 7
        assert len(fv.data.schema) == 6
        assert all(k == NUMERIC for _, k in fv.data.schema)
        assert fv.data.rows[0].values[0] in (-1.0, 1.0)

    def test_acoustic_rows_and_schema(self):
        am = acoustic_with(["aa", "bb", "cc"], 5, 25)
        fv = extract_features(am)
        assert fv.source_kind == "hmm"
        assert fv.data.n_rows == 15  # 3 phonemes x 5 states
        assert len(fv.data.schema) == 51  # phoneme + 25 means + 25 vars
        assert fv.data.schema[0][1] == CATEGORICAL
        assert fv.data.rows[0].values[0] == "aa"

    def test_kmeans_rows(self):
        m = KMeansModel(np.arange(24, dtype=float).reshape(4, 6), True, 1, [0.0])
        fv = extract_features(m)
        assert fv.source_kind == "kmeans"
        assert fv.data.n_rows == 4
        assert len(fv.data.schema) == 6

    def test_mlp_first_hidden_layer(self):
        net = init_mlp((8, 3, 8), RandomSource(1))
        fv = extract_features(net)
        assert fv.source_kind == "mlp"
        assert fv.data.n_rows == 3
        assert len(fv.data.schema) == 9  # bias + 8 inputs
        assert fv.data.rows[0].values == tuple(net.weights[0][0])

    def test_unsupported_kind(self):
        with pytest.raises(ContractError):
            extract_features("not a model")


class TestBuildMetaTrainingSet:
    def test_row_counts_and_labels(self):
        shadows = [(svm_with(3, 4, seed=1), P), (svm_with(4, 4, seed=2), NOT_P)]
        md = build_meta_training_set(shadows)
        assert md.data.n_rows == 7
        assert sum(r.label == "P" for r in md.data.rows) == 3
        assert md.source_kind == "svm"

    def test_balance_many_shadows(self):
        shadows = [(svm_with(2, 3, seed=i), P if i < 35 else NOT_P) for i in range(70)]
        md = build_meta_training_set(shadows)
        labels = [r.label for r in md.data.rows]
        assert labels.count("P") == labels.count("NotP") == 70

    def test_algorithm_fidelity_row_sum(self):
        shadows = [(svm_with(2 + i, 3, seed=i), P if i % 2 else NOT_P) for i in range(6)]
        md = build_meta_training_set(shadows)
        assert md.data.n_rows == sum(extract_features(m).data.n_rows for m, _ in shadows)
        # Every row's label equals its source shadow's label, in order.
        i = 0
        for m, pl in shadows:
            for _ in range(extract_features(m).data.n_rows):
                assert md.data.rows[i].label == pl.value
                i += 1

    def test_mixed_kinds_rejected(self):
        shadows = [(svm_with(3, 4), P),
                   (KMeansModel(np.zeros((2, 4)), True, 1, [0.0]), NOT_P)]
        with pytest.raises(ContractError):
            build_meta_training_set(shadows)

    def test_single_label_rejected(self):
        with pytest.raises(ContractError):
            build_meta_training_set([(svm_with(3, 4, seed=1), P),
                                     (svm_with(3, 4, seed=2), P)])


class TestTrainAndInfer:
    def separable_shadows(self, n=8):
        # One numeric column fully determines the property label.
        shadows = []
        for i in range(n):
            with_p = i < n // 2
            rng = RandomSource(50 + i)
            base = 5.0 if with_p else -5.0
            m = SvmModel(
                sv_indices=np.arange(4),
                sv_y=np.array([1.0, -1.0, 1.0, -1.0]),
                sv_x=rng.normal(base, 0.5, size=(4, 2)),
                sv_alpha=np.ones(4) * 0.5,
                bias=0.0, kernel=KernelSpec("linear"), C=1.0, converged=True,
            )
            shadows.append((m, P if with_p else NOT_P))
        return shadows

    def test_separable_meta_is_perfect(self):
        md = build_meta_training_set(self.separable_shadows())
        mc = train_meta(md, TreeParams(min_leaf_size=1), RandomSource(0))
        assert mc.train_accuracy == 1.0

    def test_infer_unanimous(self):
        shadows = self.separable_shadows()
        md = build_meta_training_set(shadows)
        mc = train_meta(md, TreeParams(min_leaf_size=1), RandomSource(0))
        target, _ = shadows[0]
        v = infer_property(mc, target, include_rows=True)
        assert v.label == P
        assert (v.votes_p, v.votes_notp) == (4, 0)
        assert not v.tie
        assert v.per_row == ["P"] * 4

    def test_tie_resolves_not_p(self):
        shadows = self.separable_shadows()
        md = build_meta_training_set(shadows)
        mc = train_meta(md, TreeParams(min_leaf_size=1), RandomSource(0))
        rng = RandomSource(99)
        target = SvmModel(
            sv_indices=np.arange(4),
            sv_y=np.array([1.0, -1.0, 1.0, -1.0]),
            sv_x=np.vstack([rng.normal(5, 0.5, size=(2, 2)),
                            rng.normal(-5, 0.5, size=(2, 2))]),
            sv_alpha=np.ones(4) * 0.5,
            bias=0.0, kernel=KernelSpec("linear"), C=1.0, converged=True,
        )
        v = infer_property(mc, target)
        assert v.tie
        assert v.label == NOT_P

    def test_kind_mismatch_rejected(self):
        md = build_meta_training_set(self.separable_shadows())
        mc = train_meta(md, TreeParams(min_leaf_size=1), RandomSource(0))
        with pytest.raises(ContractError):
            infer_property(mc, KMeansModel(np.zeros((2, 2)), True, 1, [0.0]))

    def test_label_shuffle_gives_chance_accuracy(self):
        # Permutation null: with labels detached from the feature
        # distribution, held-out accuracy hovers around 0.5.
        accs = []
        for seed in range(20):
            rng = RandomSource(1000 + seed)
            rows = rng.normal(size=(120, 3)).tolist()
            labels = ["P" if rng.uniform() < 0.5 else "NotP" for _ in range(120)]
            if len(set(labels)) < 2:
                continue
            ds = make_dataset([(f"x{i}", NUMERIC) for i in range(3)], rows, labels,
                              frozenset(("P", "NotP")))
            from shadowprobe.core import split_dataset
            train, test = split_dataset(ds, 0.7, rng)
            from shadowprobe import dtree
            tree = dtree.train_tree(train, TreeParams(min_leaf_size=2), rng)
            acc = np.mean([dtree.classify(tree, r) == r.label for r in test.rows])
            accs.append(acc)
        assert 0.4 <= np.mean(accs) <= 0.6


class TestKlGaussian:
    def test_identical_is_zero(self):
        assert kl_gaussian((1.3, 0.7), (1.3, 0.7)) == 0.0

    def test_unit_variance_shift(self):
        got = kl_gaussian((0.0, 1.0), (1.0, 1.0))
        assert abs(got - 0.5) < 1e-12
        assert abs(got - kl_gaussian_numeric(0.0, 1.0, 1.0, 1.0)) < 1e-6

    def test_variance_ratio(self):
        got = kl_gaussian((0.0, 1.0), (0.0, 4.0))
        assert abs(got - kl_gaussian_numeric(0.0, 1.0, 0.0, 4.0)) < 1e-6

    def test_twenty_pairs_against_integration(self):
        # Random pairs drawn from the family where the implemented
        # formula coincides with the density integral: equal variances
        # or equal means (the formula's first term is normalized by the
        # first argument's variance, so mixed cases differ by design).
        rng = RandomSource(7)
        for i in range(20):
            if i % 2 == 0:
                v = float(rng.uniform(0.2, 3.0))
                p = (float(rng.normal(0, 2)), v)
                q = (float(rng.normal(0, 2)), v)
            else:
                mu = float(rng.normal(0, 2))
                p = (mu, float(rng.uniform(0.2, 3.0)))
                q = (mu, float(rng.uniform(0.2, 3.0)))
            assert abs(kl_gaussian(p, q) - kl_gaussian_numeric(*p, *q)) < 1e-6

    def test_nonpositive_variance(self):
        with pytest.raises(DomainError):
            kl_gaussian((0.0, 0.0), (0.0, 1.0))
        with pytest.raises(DomainError):
            kl_gaussian((0.0, 1.0), (0.0, -2.0))


class TestKlFilter:
    def test_identical_models_zero_scores_name_order(self):
        am = acoustic_with(["cc", "aa", "bb"], 3, 4, seed=1)
        twin = acoustic_with(["cc", "aa", "bb"], 3, 4, seed=1)
        scores = kl_divergence_scores(am, [twin])
        assert all(v == 0.0 for v in scores.values())
        assert kl_filter(am, [twin], 2) == ["aa", "bb"]

    def test_shifted_phoneme_ranks_first(self):
        phonemes = [f"p{i}" for i in range(8)]
        base = acoustic_with(phonemes, 3, 4, seed=2)
        shifted = acoustic_with(phonemes, 3, 4, seed=2, mean_shift={"p3": 5.0})
        top = kl_filter(shifted, [base], 1)
        assert top == ["p3"]

    def test_scores_monotone_in_rank(self):
        phonemes = [f"p{i}" for i in range(10)]
        base = acoustic_with(phonemes, 3, 4, seed=3)
        ref = acoustic_with(phonemes, 3, 4, seed=4)
        scores = kl_divergence_scores(ref, [base])
        ranked = kl_filter(ref, [base], 5)
        vals = [scores[ph] for ph in ranked]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_phoneme_set_mismatch(self):
        a = acoustic_with(["aa", "bb"], 3, 4)
        b = acoustic_with(["aa", "cc"], 3, 4)
        with pytest.raises(ContractError):
            kl_filter(a, [b], 1)

    def test_top_k_bounds(self):
        a = acoustic_with(["aa", "bb"], 3, 4)
        with pytest.raises(ContractError):
            kl_filter(a, [a], 3)

    def test_restrict_rows(self):
        shadows = [(acoustic_with(["aa", "bb"], 2, 3, seed=i), P if i % 2 else NOT_P)
                   for i in range(4)]
        md = build_meta_training_set(shadows)
        sub = restrict_to_phonemes(md, ["aa"])
        assert sub.data.n_rows == md.data.n_rows // 2
        assert all(r.values[0] == "aa" for r in sub.data.rows)


class TestSplitByProperty:
    def test_deterministic_tail_holdout(self):
        labels = ["P"] * 4 + ["NotP"] * 4
        train, hold = split_by_property(labels, 0.25)
        assert hold == [3, 7]
        assert train == [0, 1, 2, 4, 5, 6]

    def test_needs_both_sides(self):
        with pytest.raises(ContractError):
            split_by_property(["P", "NotP"], 0.9)


class TestMatchedDisplacement:
    def test_permutation_invariant(self):
        a = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
        b = a[[2, 0, 1]] + 0.01
        assert matched_displacement(a, b) < 0.02


class TestRunDpBypass:
    def pools(self, seed=0):
        rng = RandomSource(seed)
        p = np.vstack([rng.normal(0, 0.3, size=(300, 2)),
                       rng.normal((0.0, 4.0), 0.3, size=(300, 2))])
        n = np.vstack([rng.normal(2.5, 0.3, size=(300, 2)),
                       rng.normal((2.5, 6.5), 0.3, size=(300, 2))])
        return p, n

    def test_report_shape_and_accuracy(self):
        p, n = self.pools()
        rep = run_dp_bypass(p, n, 2, SulqParams(0.5), 12, RandomSource(1),
                            sample_size=200, holdout_fraction=0.3)
        assert rep["config"]["n_runs_per_arm"] == 12
        assert rep["noiseless"]["n_train_models"] + rep["noiseless"]["n_holdout_models"] == 12
        # 2 arms x 12 runs x k=2 centroids in the scatter
        assert len(rep["scatter"]) == 2 * 12 * 2
        assert rep["noiseless"]["verdict_accuracy"] >= 0.9
        assert rep["sulq"]["verdict_accuracy"] >= 0.9

    def test_vanishing_noise_equalizes_arms(self):
        p, n = self.pools(seed=2)
        rep = run_dp_bypass(p, n, 2, SulqParams(1e-12), 8, RandomSource(3),
                            sample_size=150)
        assert rep["noiseless"]["verdict_accuracy"] == rep["sulq"]["verdict_accuracy"]
        assert rep["noiseless"]["row_accuracy"] == rep["sulq"]["row_accuracy"]
        assert rep["centroid_displacement_mean"] < 1e-6

    def test_deterministic(self):
        p, n = self.pools(seed=4)
        a = run_dp_bypass(p, n, 2, SulqParams(0.5), 8, RandomSource(5), sample_size=150)
        b = run_dp_bypass(p, n, 2, SulqParams(0.5), 8, RandomSource(5), sample_size=150)
        assert a == b

    def test_empty_pool_rejected(self):
        with pytest.raises(ContractError):
            run_dp_bypass(np.zeros((0, 2)), np.zeros((5, 2)), 2, SulqParams(1.0),
                          8, RandomSource(6))


def test_property_label_validation():
    assert PropertyLabel("P").value == "P"
    with pytest.raises(ContractError):
        PropertyLabel("Maybe")
