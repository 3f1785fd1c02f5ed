import json

import numpy as np
import pytest

from lorentzheads import data, geometry as G, heads as H, training as T
from lorentzheads.errors import NumericalError, ParameterError
from lorentzheads.heads import BACKGROUND


def strip_wall_clock(d: dict) -> dict:
    d = dict(d)
    d.pop("wall_clock_sec", None)
    return d


def quick_config(**kw) -> T.ExperimentConfig:
    base = dict(epochs=3, batch_size=64, seed=0, eval_every=10)
    base.update(kw)
    return T.ExperimentConfig(**base)


def tiny_dataset(seed=0, **kw):
    base = dict(num_features=8, num_super=2, num_classes=4, num_samples=600, seed=seed)
    base.update(kw)
    return data.generate(**base)


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError):
            T.ExperimentConfig.from_dict({"epochs": 3, "optimizer": "adam"})

    def test_unknown_head_rejected(self):
        with pytest.raises(ParameterError):
            T.ExperimentConfig(head_mode="softmax")

    def test_round_trip(self):
        cfg = quick_config(learning_rate=0.5, unseen_classes=[1])
        assert T.ExperimentConfig.from_dict(cfg.to_dict()) == cfg


class TestEvaluate:
    def tree(self):
        return data.ClassTree(["s0", "s1"], ["l0", "l1", "l2", "l3"], [0, 0, 1, 1])

    def bank(self):
        # one prototype per axis, far from the origin so confidence saturates
        return H.PrototypeBank(
            H.MODE_HYPERBOLIC, G.batch_exp_map_origin(3.0 * np.eye(4)),
            ["l0", "l1", "l2", "l3"],
        )

    def test_all_correct(self):
        feats = 3.0 * np.eye(4)
        rep = T.evaluate(self.bank(), None, feats, np.arange(4), self.tree())
        assert rep.val_accuracy == 1.0
        assert rep.supercategory_accuracy == 1.0

    def test_sibling_confusion_counts_for_supercategory(self):
        # class-0 sample placed exactly at the sibling class-1 prototype
        feats = 3.0 * np.eye(4)[[1]]
        rep = T.evaluate(self.bank(), None, feats, np.array([0]), self.tree())
        assert rep.val_accuracy == 0.0
        assert rep.supercategory_accuracy == 1.0

    def test_background_row_needs_low_confidence(self):
        bank = self.bank()
        at_proto = 3.0 * np.eye(4)[[0]]
        far = np.full((1, 4), 5.0)
        rep_bad = T.evaluate(bank, None, at_proto, np.array([BACKGROUND]), self.tree())
        rep_good = T.evaluate(bank, None, far, np.array([BACKGROUND]), self.tree())
        assert rep_bad.val_accuracy == 0.0
        assert rep_good.val_accuracy == 1.0

    def test_per_class_precision_recall(self):
        # two class-0 rows: one at the prototype (hit), one at class 1 (miss)
        feats = np.stack([3.0 * np.eye(4)[0], 3.0 * np.eye(4)[1]])
        rep = T.evaluate(self.bank(), None, feats, np.array([0, 0]), self.tree())
        pc = rep.per_class
        assert pc["l0"] == {"precision": 1.0, "recall": 0.5, "support": 2}
        assert pc["l1"]["precision"] == 0.0

    def test_chance_level_for_random_labels(self, rng):
        # geometry is independent of the labels, so accuracy ~ Binomial(1/C)
        m, C = 3000, 4
        feats = rng.normal(0.0, 2.0, (m, 4))
        labels = rng.integers(0, C, m)
        rep = T.evaluate(self.bank(), None, feats, labels, self.tree())
        p = 1.0 / C
        tol = 5.0 * np.sqrt(p * (1 - p) / m)
        assert abs(rep.val_accuracy - p) < tol

    def test_harmonic_mean_fields(self):
        feats = 3.0 * np.eye(4)
        rep = T.evaluate(self.bank(), None, feats, np.arange(4), self.tree(),
                         unseen_classes=[3])
        assert rep.seen_accuracy == 1.0
        assert rep.unseen_accuracy == 1.0
        assert rep.harmonic_mean == 1.0
        rep2 = T.evaluate(self.bank(), None, feats, np.arange(4), self.tree())
        assert rep2.harmonic_mean is None

    def test_harmonic_mean_values(self):
        assert T.harmonic_mean(0.5, 1.0) == pytest.approx(2.0 / 3.0)
        assert T.harmonic_mean(0.0, 0.9) == 0.0
        assert T.harmonic_mean(0.9, 0.0) == 0.0


class TestTrain:
    def test_loss_decreases(self):
        ds = tiny_dataset()
        cfg = quick_config(epochs=5, embed_dim=8)
        _, _, rep, _ = T.train(cfg, ds)
        assert rep.train_loss[-1] < rep.train_loss[0]

    def test_bit_identical_reruns(self, tmp_path):
        ds = tiny_dataset()
        cfg = quick_config(embed_dim=8, eval_every=3)
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            T.train(cfg, ds, out_dir=tmp_path / sub)
        ck_a = (tmp_path / "a" / "checkpoint.json").read_bytes()
        ck_b = (tmp_path / "b" / "checkpoint.json").read_bytes()
        assert ck_a == ck_b
        ma = strip_wall_clock(json.loads((tmp_path / "a" / "metrics.json").read_text()))
        mb = strip_wall_clock(json.loads((tmp_path / "b" / "metrics.json").read_text()))
        assert ma == mb

    def test_noiseless_perfect_accuracy(self):
        ds = data.generate(num_samples=1600, sigma_x=0.0, background_fraction=0.0, seed=1)
        cfg = quick_config(epochs=40)
        _, _, rep, _ = T.train(cfg, ds)
        assert rep.val_accuracy == 1.0

    def test_all_head_modes_learn(self):
        ds = tiny_dataset()
        for mode in (H.MODE_HYPERBOLIC, H.MODE_LINEAR, H.MODE_COSINE):
            cfg = quick_config(head_mode=mode, epochs=25, embed_dim=8)
            _, _, rep, _ = T.train(cfg, ds)
            assert rep.val_accuracy > 0.7, mode

    def test_prototypes_stay_on_manifold(self):
        ds = tiny_dataset()
        cfg = quick_config(epochs=4, embed_dim=8)
        bank, _, _, _ = T.train(cfg, ds)
        for row in bank.prototypes:
            assert G.manifold_violation(row) < 1e-9

    def test_no_encoder_requires_matching_dims(self):
        ds = tiny_dataset()
        with pytest.raises(ParameterError):
            T.train(quick_config(encoder=False, embed_dim=16), ds)
        cfg = quick_config(encoder=False, embed_dim=8, epochs=4,
                           prototype_learning_rate=0.1)
        _, encoder, rep, _ = T.train(cfg, ds)
        assert encoder is None
        assert rep.train_loss[-1] < rep.train_loss[0]

    def test_frozen_bank_prototypes_untouched(self):
        ds = tiny_dataset()
        bank = H.PrototypeBank(
            H.MODE_HYPERBOLIC, G.batch_exp_map_origin(2.0 * np.eye(4)),
            list(ds.tree.leaf_classes), frozen=True,
        )
        before = bank.prototypes.copy()
        cfg = quick_config(embed_dim=4)
        bank, _, _, _ = T.train(cfg, ds, bank=bank)
        np.testing.assert_array_equal(bank.prototypes, before)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_aborts_with_diagnostics(self):
        ds = tiny_dataset()
        ds.features[ds.train_idx[0]] = np.nan
        with pytest.raises(NumericalError, match="param_norms"):
            T.train(quick_config(embed_dim=8, batch_size=len(ds.train_idx)), ds)


class TestCheckpoints:
    def test_round_trip_is_byte_stable(self, tmp_path):
        ds = tiny_dataset()
        cfg = quick_config(embed_dim=8, eval_every=3)
        T.train(cfg, ds, out_dir=tmp_path)
        path = tmp_path / "checkpoint.json"
        loaded = T.load_checkpoint(path)
        resaved = tmp_path / "resaved.json"
        T.save_checkpoint(resaved, loaded[0], loaded[1], loaded[2], loaded[3],
                          loaded[4], loaded[5], loaded[6])
        assert path.read_bytes() == resaved.read_bytes()

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        ds = tiny_dataset()
        full_dir, part_dir = tmp_path / "full", tmp_path / "part"
        full_dir.mkdir()
        part_dir.mkdir()
        cfg = quick_config(epochs=6, eval_every=3, embed_dim=8)
        T.train(cfg, ds, out_dir=full_dir)

        cfg_short = quick_config(epochs=3, eval_every=3, embed_dim=8)
        T.train(cfg_short, ds, out_dir=part_dir)
        ck = part_dir / "checkpoint.json"
        payload = json.loads(ck.read_text())
        assert payload["epoch"] == 3
        payload["config"]["epochs"] = 6  # extend the run, then resume
        ck.write_text(json.dumps(payload, sort_keys=True) + "\n")
        T.train(cfg, ds, out_dir=part_dir, resume=ck)

        assert ck.read_bytes() == (full_dir / "checkpoint.json").read_bytes()
        mf = strip_wall_clock(json.loads((full_dir / "metrics.json").read_text()))
        mp = strip_wall_clock(json.loads((part_dir / "metrics.json").read_text()))
        assert mf == mp


class TestZeroShot:
    def make_frozen_bank(self, ds):
        # prototypes at the exp0 image of the per-class feature means
        means = np.stack([
            ds.features[ds.labels == c].mean(axis=0) for c in range(ds.num_classes)
        ])
        return H.PrototypeBank(
            H.MODE_HYPERBOLIC, G.batch_exp_map_origin(means),
            list(ds.tree.leaf_classes), frozen=True,
        )

    def test_requires_frozen_bank(self):
        ds = tiny_dataset()
        bank = H.PrototypeBank(
            H.MODE_HYPERBOLIC, G.batch_exp_map_origin(np.eye(4)),
            list(ds.tree.leaf_classes),
        )
        with pytest.raises(ParameterError):
            T.zero_shot_eval(quick_config(), ds, bank)

    def test_unseen_class_scored(self):
        ds = tiny_dataset(num_samples=1200)
        bank = self.make_frozen_bank(ds)
        # identity embedding: the frozen prototypes sit at the exp0 image of
        # the class means, so the unseen class is recognizable with no
        # trainable parameters at all
        cfg = quick_config(epochs=2, encoder=False, embed_dim=8, unseen_classes=[3])
        _, _, rep, _ = T.zero_shot_eval(cfg, ds, bank)
        assert rep.seen_accuracy is not None
        assert rep.unseen_accuracy is not None
        assert rep.harmonic_mean == pytest.approx(
            T.harmonic_mean(rep.seen_accuracy, rep.unseen_accuracy)
        )
        # frozen prototypes carry enough signal for unseen class recall
        assert rep.unseen_accuracy > 0.5

    def test_bucket_accuracy_reported(self):
        ds = data.imbalance_profile(tiny_dataset(num_samples=2000), 1.0)
        cfg = quick_config(epochs=5, embed_dim=8)
        _, _, rep, _ = T.train(cfg, ds)
        assert set(rep.bucket_accuracy) == {"frequent", "common", "rare"}
