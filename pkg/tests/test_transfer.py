import numpy as np
import pytest

from arcfault import nn, train, transfer
from arcfault.dataio import FeatureDataset
from arcfault.metrics import macro_f1_score
from arcfault.rng import make_rng

from conftest import TINY_ARCH, blob_dataset


@pytest.fixture(scope="module")
def blob_model():
    dataset = blob_dataset(n=400, dim=16, seed=21)
    config = train.TrainConfig(epochs=15, folds=1, split_seed=2, batch_size=32)
    return train.train(dataset, TINY_ARCH, config).model, dataset


def shifted_blobs(seed=22, shift=1.5, n=300):
    base = blob_dataset(n=n, dim=16, seed=seed)
    return FeatureDataset(base.x + shift, base.y, base.config)


class TestReplayBuffer:
    def test_cycles_without_replacement(self):
        x = np.arange(10, dtype=np.float32)[:, None]
        buf = transfer.ReplayBuffer(x, np.zeros(10, np.uint8), seed=1)
        seen = np.concatenate([buf.sample(5)[0], buf.sample(5)[0]]).ravel()
        assert sorted(seen) == list(range(10))

    def test_selection_frequency_uniform(self):
        x = np.arange(16, dtype=np.float32)[:, None]
        buf = transfer.ReplayBuffer(x, np.zeros(16, np.uint8), seed=2)
        counts = np.zeros(16)
        draws = 1000
        for _ in range(draws):
            rows, _ = buf.sample(4)
            for v in rows.ravel():
                counts[int(v)] += 1
        expected = draws * 4 / 16
        assert np.all(np.abs(counts - expected) / expected <= 0.2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            transfer.ReplayBuffer(np.zeros((0, 4), np.float32), np.zeros(0, np.uint8))


class TestMixedBatch:
    def test_zero_ratio_pure_target(self):
        x = np.ones((4, 3), np.float32)
        y = np.zeros(4, np.uint8)
        xb, yb, tags = transfer.mixed_batch(None, x, y, 0.0)
        assert len(xb) == 4 and not tags.any()

    def test_ratio_one_doubles(self):
        buf = transfer.ReplayBuffer(np.zeros((40, 3), np.float32),
                                    np.ones(40, np.uint8), seed=3)
        x = np.ones((16, 3), np.float32)
        y = np.zeros(16, np.uint8)
        xb, yb, tags = transfer.mixed_batch(buf, x, y, 1.0)
        assert len(xb) == 32
        assert int(tags.sum()) == 16
        assert not tags[:16].any()

    def test_ceil_of_fractional_ratio(self):
        buf = transfer.ReplayBuffer(np.zeros((10, 3), np.float32),
                                    np.ones(10, np.uint8), seed=4)
        xb, _, tags = transfer.mixed_batch(buf, np.ones((5, 3), np.float32),
                                           np.zeros(5, np.uint8), 0.5)
        assert int(tags.sum()) == 3  # ceil(0.5 * 5)

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            transfer.mixed_batch(None, np.zeros((0, 3), np.float32),
                                 np.zeros(0, np.uint8), 1.0)


class TestAdapt:
    def test_pure_anchor_stays_at_source(self, blob_model):
        model, source = blob_model
        target = shifted_blobs()
        config = transfer.TransferConfig(alpha=0.0, beta=0.0, lam=1e-3,
                                         max_epochs=5, seed=1)
        adapted, _ = transfer.adapt(model, source, target, config)
        for name in nn.trainable_names(model.params):
            delta = np.abs(adapted.params[name] - model.params[name]).max()
            assert delta <= 1e-3, name

    def test_strong_anchor_limits_displacement(self, blob_model):
        # lambda -> infinity limit: lr must sit inside the stable region
        # lr * 2*lambda / (1 - momentum) < 2, hence the small step size
        model, source = blob_model
        target = shifted_blobs()

        def displacement(lam):
            config = transfer.TransferConfig(lam=lam, max_epochs=8, seed=5,
                                             head_lr=1e-7)
            adapted, _ = transfer.adapt(model, source, target, config)
            total = 0.0
            for name in nn.trainable_names(model.params):
                diff = adapted.params[name].astype(np.float64) - model.params[name]
                total += float(np.sum(diff * diff))
            return np.sqrt(total)

        loose = displacement(0.0)
        tight = displacement(1e6)
        assert loose >= 10.0 * tight

    def test_identical_domains_preserve_source(self, blob_model):
        model, source = blob_model
        target = blob_dataset(n=300, dim=16, seed=23)  # same distribution
        before = macro_f1_score(
            source.y, (nn.predict_proba(model, source.x) > 0.5).astype(np.uint8))
        config = transfer.TransferConfig(max_epochs=8, seed=6)
        adapted, _ = transfer.adapt(model, source, target, config)
        after = macro_f1_score(
            source.y, (nn.predict_proba(adapted, source.x) > 0.5).astype(np.uint8))
        assert after >= before - 0.005

    def test_loss_composition_audit(self, blob_model):
        model, source = blob_model
        target = shifted_blobs(n=120)
        config = transfer.TransferConfig(alpha=1.0, beta=0.5, lam=1e-4,
                                         max_epochs=2, seed=7)
        _, history = transfer.adapt(model, source, target, config)
        assert history.step_terms
        for l_tgt, l_src, penalty, total in history.step_terms:
            expected = config.alpha * l_tgt + config.beta * l_src + config.lam * penalty
            assert total == pytest.approx(expected, rel=1e-12)

    def test_anchor_penalty_zero_at_step_zero(self, blob_model):
        model, source = blob_model
        target = shifted_blobs(n=120)
        config = transfer.TransferConfig(max_epochs=1, seed=8)
        _, history = transfer.adapt(model, source, target, config)
        assert history.step_terms[0][2] == 0.0

    def test_lr_ratio_discipline(self, blob_model):
        model, source = blob_model
        target = shifted_blobs(n=200)
        config = transfer.TransferConfig(max_epochs=12, seed=9,
                                         backbone_lr_ratio=0.1)
        _, history = transfer.adapt(model, source, target, config)
        for head, backbone in zip(history.head_lr, history.backbone_lr):
            assert backbone == pytest.approx(head * 0.1)
        # any plateau halves both rates together
        for i in range(1, len(history.head_lr)):
            ratio = history.head_lr[i] / history.head_lr[i - 1]
            assert ratio in (1.0, 0.5)

    def test_empty_target_rejected(self, blob_model, feat_config):
        model, source = blob_model
        empty = FeatureDataset(np.zeros((0, 16), np.float32),
                               np.zeros(0, np.uint8), feat_config)
        with pytest.raises(ValueError, match="non-empty"):
            transfer.adapt(model, source, empty, transfer.TransferConfig())

    def test_beta_requires_source(self, blob_model):
        model, _ = blob_model
        target = shifted_blobs(n=100)
        with pytest.raises(ValueError, match="source"):
            transfer.adapt(model, None, target, transfer.TransferConfig(beta=0.5))

    def test_single_class_target_rejected(self, blob_model):
        model, source = blob_model
        target = shifted_blobs(n=100)
        target.y[:] = 1
        with pytest.raises(train.SingleClassData):
            transfer.adapt(model, source, target, transfer.TransferConfig())


class TestSweeps:
    def test_source_sweep_shape_and_improvement(self):
        source = blob_dataset(n=600, dim=16, seed=24, separation=1.2)
        config = train.TrainConfig(epochs=6, folds=1, split_seed=3, batch_size=32)
        curve = transfer.source_fraction_sweep(source, [0.1, 0.5, 1.0],
                                               TINY_ARCH, config)
        assert [f for f, _ in curve] == [0.1, 0.5, 1.0]
        assert all(0.0 <= v <= 1.0 for _, v in curve)

    def test_target_sweep_rows_and_skips(self, blob_model):
        model, source = blob_model
        target = shifted_blobs(n=400, seed=25)
        config = transfer.TransferConfig(max_epochs=4, seed=11)
        result = transfer.target_fraction_sweep(
            model, source, target, [0.002, 0.2, 0.6], config)
        skipped_fracs = [f for f, _ in result.skipped]
        assert 0.002 in skipped_fracs  # too small for both classes
        assert [r.fraction for r in result.rows] == [0.2, 0.6]
        for row in result.rows:
            assert 0.0 <= row.target_macro_f1 <= 1.0
            assert 0.0 <= row.target_arc_accuracy <= 1.0

    def test_sweep_result_requires_increasing(self):
        rows = [transfer.SweepRow(0.5, 1, 1, 1), transfer.SweepRow(0.2, 1, 1, 1)]
        with pytest.raises(ValueError, match="increasing"):
            transfer.SweepResult(rows=rows)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="backbone_lr_ratio"):
            transfer.TransferConfig(backbone_lr_ratio=0.0)
        with pytest.raises(ValueError, match="mix_ratio"):
            transfer.TransferConfig(mix_ratio=-1.0)
