import numpy as np
import pytest

from bayeshead.fusion import (
    FusionError,
    FusionSpec,
    PredictionTable,
    average_intensities,
    late_fuse,
    load_table,
    majority_vote,
    save_table,
    tune_fusion_weights,
)


def prob_table(rows, ids=None, source=""):
    rows = np.asarray(rows, dtype=np.float64)
    ids = tuple(ids or (f"e{i}" for i in range(len(rows))))
    return PredictionTable(ids, rows, "probabilities", source)


def intensity_table(rows, ids=None):
    rows = np.asarray(rows, dtype=np.float64)
    ids = tuple(ids or (f"e{i}" for i in range(len(rows))))
    return PredictionTable(ids, rows, "intensities")


def random_prob_table(rng, n, k, ids=None):
    raw = rng.uniform(0.01, 1.0, (n, k))
    return prob_table(raw / raw.sum(axis=1, keepdims=True), ids=ids)


class TestLateFuse:
    def test_paper_weight_example(self):
        a = prob_table([[0.6, 0.4]])
        b = prob_table([[0.2, 0.8]])
        fused = late_fuse(FusionSpec((a, b), (1.0, 0.5)))
        # weighted sum [0.7, 0.8] -> class 1; stored row renormalized by 1.5
        assert fused.outputs.argmax(axis=1)[0] == 1
        assert np.allclose(fused.outputs[0], [0.7 / 1.5, 0.8 / 1.5])

    def test_single_table_identity(self):
        a = random_prob_table(np.random.default_rng(0), 5, 3)
        fused = late_fuse(FusionSpec((a,), (1.0,)))
        assert np.allclose(fused.outputs, a.outputs)

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = random_prob_table(rng, 4, 3)
            b = random_prob_table(rng, 4, 3)
            w = rng.uniform(0.1, 2.0, 2)
            c = rng.uniform(0.5, 10.0)
            f1 = late_fuse(FusionSpec((a, b), tuple(w)))
            f2 = late_fuse(FusionSpec((a, b), tuple(c * w)))
            assert np.array_equal(f1.outputs.argmax(axis=1), f2.outputs.argmax(axis=1))
            assert np.allclose(f1.outputs, f2.outputs, atol=1e-12)

    def test_alignment_by_id(self):
        a = prob_table([[0.9, 0.1], [0.2, 0.8]], ids=("x", "y"))
        b = prob_table([[0.7, 0.3], [0.3, 0.7]], ids=("y", "x"))
        fused = late_fuse(FusionSpec((a, b), (1.0, 1.0)))
        assert np.allclose(fused.outputs[0], [(0.9 + 0.3) / 2, (0.1 + 0.7) / 2])

    def test_mismatched_ids(self):
        a = prob_table([[1.0, 0.0]], ids=("x",))
        b = prob_table([[1.0, 0.0]], ids=("z",))
        with pytest.raises(FusionError, match="id"):
            late_fuse(FusionSpec((a, b), (1.0, 1.0)))

    def test_all_zero_weights_rejected(self):
        a = prob_table([[1.0, 0.0]])
        with pytest.raises(FusionError):
            FusionSpec((a, a), (0.0, 0.0))


class TestMajorityVote:
    def test_strict_majority(self):
        tables = [prob_table([[0.9, 0.1]]), prob_table([[0.8, 0.2]]),
                  prob_table([[0.1, 0.9]])]
        out = majority_vote(tables)
        assert out.outputs.argmax(axis=1)[0] == 0
        assert np.allclose(out.outputs[0], [1.0, 0.0])

    def test_tie_broken_by_summed_probability(self):
        a = prob_table([[0.55, 0.45]])
        b = prob_table([[0.1, 0.9]])
        out = majority_vote([a, b])
        # summed probs [0.65, 1.35] favor class 1
        assert out.outputs.argmax(axis=1)[0] == 1

    def test_unanimity(self):
        rng = np.random.default_rng(2)
        t = random_prob_table(rng, 6, 3)
        out = majority_vote([t, t, t, t])
        assert np.array_equal(out.outputs.argmax(axis=1), t.outputs.argmax(axis=1))

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n, k, t = 3, int(rng.integers(2, 5)), int(rng.integers(2, 6))
            tables = [random_prob_table(rng, n, k) for _ in range(t)]
            out = majority_vote(tables)
            for i in range(n):
                votes = [tab.outputs[i].argmax() for tab in tables]
                counts = [votes.count(c) for c in range(k)]
                top = max(counts)
                tied = [c for c in range(k) if counts[c] == top]
                if len(tied) > 1:
                    sums = [sum(tab.outputs[i, c] for tab in tables) for c in tied]
                    best = max(sums)
                    tied = [c for c, s in zip(tied, sums) if s == best]
                assert out.outputs[i].argmax() == tied[0]


class TestAverageIntensities:
    def test_simple_mean(self):
        a = intensity_table([[0.2, 0.6]])
        b = intensity_table([[0.4, 0.2]])
        out = average_intensities([a, b])
        assert np.allclose(out.outputs, [[0.3, 0.4]])

    def test_idempotent_on_identical(self):
        t = intensity_table(np.random.default_rng(4).uniform(0, 1, (5, 2)))
        out = average_intensities([t, t, t])
        assert np.allclose(out.outputs, t.outputs)

    def test_order_invariance_and_range(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            tables = [intensity_table(rng.uniform(0, 1, (4, 3))) for _ in range(3)]
            out = average_intensities(tables)
            ref = np.mean([t.outputs for t in tables], axis=0)
            assert np.allclose(out.outputs, ref, atol=1e-12)
            assert out.outputs.min() >= 0 and out.outputs.max() <= 1

    def test_rejects_probability_tables(self):
        a = prob_table([[0.5, 0.5]])
        with pytest.raises(FusionError):
            average_intensities([a, a])


class TestTableIO:
    def test_round_trip(self, tmp_path):
        t = random_prob_table(np.random.default_rng(6), 4, 3)
        save_table(t, tmp_path / "t.csv")
        back = load_table(tmp_path / "t.csv")
        assert back.ids == t.ids
        assert back.kind == t.kind
        save_table(back, tmp_path / "t2.csv")
        assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()

    def test_invariant_enforced_on_load(self, tmp_path):
        (tmp_path / "bad.csv").write_text("id,p0,p1\ne0,0.9,0.9\n")
        (tmp_path / "bad.manifest.json").write_text('{"kind": "probabilities"}')
        with pytest.raises(FusionError, match="sum to 1"):
            load_table(tmp_path / "bad.csv")


class TestEarlyFuse:
    def _regression_pair(self, signal_in_b, seed=9):
        from bayeshead.dataset import EmbeddingDataset, SyntheticSpec, generate_synthetic

        ds = generate_synthetic(
            SyntheticSpec("planted_regression", 300, 8, 2, noise_std=0.05, seed=seed)
        )
        rng = np.random.default_rng(seed + 1)
        noise = rng.standard_normal((len(ds), 8))
        noise_ds = EmbeddingDataset(
            task_kind="regression", num_features=8, num_outputs=2,
            ids=ds.ids, features=noise, targets=ds.targets.copy(),
        )
        return (noise_ds, ds) if signal_in_b else (ds, noise_ds)

    def test_joint_dimension(self):
        from bayeshead import trainer
        from bayeshead.dataset import split_by_fraction
        from bayeshead.fusion import early_fuse_train

        a, b = self._regression_pair(signal_in_b=False)
        ta, da = split_by_fraction(a, 0.25, 0)
        tb, db = split_by_fraction(b, 0.25, 0)
        cfg = trainer.TrainConfig(epochs=3, selection_metric="spearman", seed=0)
        head, _ = early_fuse_train(ta, tb, da, db, "linear", cfg)
        assert head.num_features == 16

    def test_signal_in_b_beats_a_only(self):
        from bayeshead import trainer
        from bayeshead.dataset import split_by_fraction
        from bayeshead.fusion import early_fuse_train
        from bayeshead.trainer import train

        a, b = self._regression_pair(signal_in_b=True)
        ta, da = split_by_fraction(a, 0.25, 0)
        tb, db = split_by_fraction(b, 0.25, 0)
        cfg = trainer.TrainConfig(epochs=40, learning_rate=0.5,
                                  selection_metric="spearman", seed=0)
        _, rep_a = train("linear", ta, da, cfg)
        _, rep_fused = early_fuse_train(ta, tb, da, db, "linear", cfg)
        assert (
            rep_fused.epochs[rep_fused.best_epoch].dev_metric
            > rep_a.epochs[rep_a.best_epoch].dev_metric
        )

    def test_noise_in_b_changes_little(self):
        from bayeshead import trainer
        from bayeshead.dataset import split_by_fraction
        from bayeshead.fusion import early_fuse_train
        from bayeshead.trainer import train

        a, b = self._regression_pair(signal_in_b=False)
        ta, da = split_by_fraction(a, 0.25, 0)
        tb, db = split_by_fraction(b, 0.25, 0)
        cfg = trainer.TrainConfig(epochs=40, learning_rate=0.5,
                                  selection_metric="spearman", seed=0)
        _, rep_a = train("linear", ta, da, cfg)
        _, rep_fused = early_fuse_train(ta, tb, da, db, "linear", cfg)
        delta = abs(
            rep_fused.epochs[rep_fused.best_epoch].dev_metric
            - rep_a.epochs[rep_a.best_epoch].dev_metric
        )
        assert delta < 0.1


def test_tune_fusion_selects_better_table():
    from bayeshead.dataset import EmbeddingDataset

    rng = np.random.default_rng(10)
    n = 40
    labels = rng.integers(0, 2, n)
    good = np.zeros((n, 2))
    good[np.arange(n), labels] = 0.9
    good[np.arange(n), 1 - labels] = 0.1
    bad = 1.0 - good
    ids = tuple(f"e{i}" for i in range(n))
    dev = EmbeddingDataset(
        task_kind="classification", num_features=1, num_outputs=2,
        ids=ids, features=np.zeros((n, 1)), targets=labels,
    )
    tables = [prob_table(good, ids=ids), prob_table(bad, ids=ids)]
    best_w, best_uar, results = tune_fusion_weights(
        tables, [[0.0, 1.0], [0.0, 1.0]], dev
    )
    assert best_w == (1.0, 0.0)
    assert best_uar == 1.0
