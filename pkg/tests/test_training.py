"""
Unit tests for the training loop, cross-validation and ensembling.
"""

import dataclasses

import numpy as np
import pytest

from news_similarity.config import LossConfig, ModelConfig, OptimizerConfig, RunConfig
from news_similarity.corpus import FoldAssignment, Provenance, split_kfold
from news_similarity.exceptions import DataError, NumericError
from news_similarity.models import forward, init_model
from news_similarity.tokenizer import TruncationPolicy, encode_pair
from news_similarity.training import (
    EnsembleModel,
    cross_validate,
    dropout_disagreement,
    ensemble_predict,
    load_metrics_log,
    predict_overall,
    split_fold,
    summarize_metrics,
    train_fold,
    write_metrics_log,
)

MODEL = ModelConfig(
    vocab_size=512, embed_dim=16, num_layers=1, num_heads=2, ff_dim=32, dropout_p=0.1
)


def _encode(records, config=MODEL):
    policy = TruncationPolicy.from_preset()
    return [encode_pair(r.document1, r.document2, policy, config.vocab_size) for r in records]


@pytest.fixture
def folds(synthetic_records):
    return split_kfold(synthetic_records, 3, seed=0)


class TestSplitFold:
    """Test train/validation separation."""

    def test_no_source_leakage(self, synthetic_records, folds, make_record):
        """Test augmented copies of held-out sources never reach training."""
        source = synthetic_records[0]
        copy = make_record(pair_id=source.pair_id + "_bt", provenance=Provenance.BACK_TRANSLATED)
        records = synthetic_records + [copy]
        held_out = folds.fold_for(source.pair_id)
        train, val = split_fold(records, folds, held_out)
        train_sources = {r.source_id for r in train}
        assert not train_sources & {r.source_id for r in val}
        assert copy not in train
        assert copy not in val

    def test_validate_on_augmented(self, synthetic_records, folds, make_record):
        source = synthetic_records[0]
        copy = make_record(pair_id=source.pair_id + "_bt", provenance=Provenance.BACK_TRANSLATED)
        _, val = split_fold(synthetic_records + [copy], folds, folds.fold_for(source.pair_id), True)
        assert copy in val

    def test_empty_validation(self, synthetic_records):
        folds = FoldAssignment({r.pair_id: 0 for r in synthetic_records}, k=2, seed=0)
        with pytest.raises(DataError):
            split_fold(synthetic_records, folds, 1)

    def test_empty_training(self, synthetic_records):
        folds = FoldAssignment({r.pair_id: 0 for r in synthetic_records}, k=2, seed=0)
        with pytest.raises(DataError):
            split_fold(synthetic_records, folds, 0)

    def test_bad_fold_index(self, synthetic_records, folds):
        with pytest.raises(DataError):
            split_fold(synthetic_records, folds, 3)


class TestTrainFold:
    """Test single-fold training."""

    def test_deterministic_replay(
        self, synthetic_records, folds, fast_optimizer_config, baseline_loss_config
    ):
        """Test same seeds give identical curves and checkpoints."""
        args = (synthetic_records, folds, 0, MODEL, baseline_loss_config, fast_optimizer_config)
        a = train_fold(*args, seed=3)
        b = train_fold(*args, seed=3)
        assert a.training_curve == b.training_curve
        assert [m.train_loss for m in a.epoch_metrics] == [m.train_loss for m in b.epoch_metrics]
        for name, tensor in a.best_checkpoint.tensors.items():
            np.testing.assert_array_equal(tensor, b.best_checkpoint.tensors[name])

    def test_curve_and_best(self, synthetic_records, folds, fast_optimizer_config):
        """Test one curve point per epoch and best = max over the curve."""
        loss = LossConfig(overall_weight=0.75, rdrop_alpha=0.3, forwards=2)
        result = train_fold(synthetic_records, folds, 1, MODEL, loss, fast_optimizer_config, seed=0)
        assert [epoch for epoch, _ in result.training_curve] == [1, 2]
        defined = [p for _, p in result.training_curve if p is not None]
        if defined:
            assert result.best_val_pearson == max(defined)
            assert dict(result.training_curve)[result.best_epoch] == result.best_val_pearson
        assert all(np.isfinite(m.train_loss) for m in result.epoch_metrics)

    def test_loss_decreases_and_undefined_pearson(self, make_record):
        """Test constant labels: loss falls, Pearson is undefined and the first epoch is kept."""
        records = [
            make_record(pair_id=f"{i}_{i + 500}", text1=f"w{i} w{i + 1}", overall=3.5)
            for i in range(48)
        ]
        folds = split_kfold(records, 3, seed=0)
        optimizer = OptimizerConfig(learning_rate=3e-3, warmup_rate=0.0, batch_size=8, epochs=4)
        result = train_fold(records, folds, 0, MODEL, LossConfig(), optimizer, seed=1)
        assert result.epoch_metrics[-1].train_loss < result.epoch_metrics[0].train_loss
        assert all(p is None for _, p in result.training_curve)
        assert result.best_val_pearson is None
        assert result.best_epoch == 1

    def test_non_finite_loss(self, synthetic_records, folds):
        """Test a diverging run stops with a numeric error."""
        optimizer = OptimizerConfig(learning_rate=1e200, warmup_rate=0.0, batch_size=4, epochs=1)
        with np.errstate(all="ignore"):
            with pytest.raises(NumericError):
                train_fold(synthetic_records, folds, 0, MODEL, LossConfig(), optimizer, seed=0)


class TestCrossValidate:
    """Test the k-fold driver."""

    def test_results_and_metrics_log(
        self, tmp_path, synthetic_records, folds, fast_optimizer_config
    ):
        """Test K=3 and 2 epochs give 3 results and 6 log lines."""
        config = RunConfig(model=MODEL, optimizer=fast_optimizer_config, folds=3, seed=0)
        path = tmp_path / "metrics.jsonl"
        results = cross_validate(synthetic_records, folds, config, metrics_path=path)
        assert [r.fold_index for r in results] == [0, 1, 2]
        frame = load_metrics_log(path)
        assert len(frame) == 6
        assert list(frame.columns) == ["fold", "epoch", "train_loss", "val_pearson"]

    def test_parallel_matches_serial(
        self, tmp_path, synthetic_records, folds, fast_optimizer_config
    ):
        """Test the metrics log does not depend on the job count."""
        config = RunConfig(model=MODEL, optimizer=fast_optimizer_config, folds=3, seed=4)
        serial, parallel = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
        cross_validate(synthetic_records, folds, config, jobs=1, metrics_path=serial)
        cross_validate(synthetic_records, folds, config, jobs=2, metrics_path=parallel)
        assert serial.read_bytes() == parallel.read_bytes()


class TestMetricsLog:
    """Test metrics log aggregation."""

    def test_summary(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text(
            '{"epoch": 1, "fold": 0, "train_loss": 1.0, "val_pearson": 0.5}\n'
            '{"epoch": 2, "fold": 0, "train_loss": 0.5, "val_pearson": 0.7}\n'
            '{"epoch": 1, "fold": 1, "train_loss": 2.0, "val_pearson": null}\n'
            '{"epoch": 2, "fold": 1, "train_loss": 1.0, "val_pearson": 0.9}\n',
            encoding="utf-8",
        )
        mean_best, per_epoch = summarize_metrics(load_metrics_log(path))
        assert mean_best == pytest.approx(0.8)
        assert per_epoch["train_loss"].tolist() == pytest.approx([1.5, 0.75])
        assert per_epoch["val_pearson"].tolist() == pytest.approx([0.5, 0.8])

    def test_invalid_line(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text('{"fold": 0}\n', encoding="utf-8")
        with pytest.raises(DataError):
            load_metrics_log(path)

    def test_write_orders_by_fold(self, tmp_path, synthetic_records, folds, fast_optimizer_config):
        results = [
            train_fold(
                synthetic_records, folds, f, MODEL, LossConfig(), fast_optimizer_config, seed=0
            )
            for f in (1, 0)
        ]
        assert write_metrics_log(results, tmp_path / "m.jsonl") == 4
        assert load_metrics_log(tmp_path / "m.jsonl")["fold"].tolist() == [0, 0, 1, 1]


class TestEnsemble:
    """Test fold-best ensembling."""

    def test_single_member(self, synthetic_records):
        member = init_model(MODEL, 0)
        pair = _encode(synthetic_records[:1])[0]
        expected = forward(member, pair)
        np.testing.assert_allclose(ensemble_predict(EnsembleModel([member]), pair), expected)

    def test_mean_of_members(self, synthetic_records):
        """Test Overall biases of -0.5 and +0.5 cancel in the mean."""
        low, high = init_model(MODEL, 0), init_model(MODEL, 0)
        low.tensors["head.0.bias"][4] = -0.5
        high.tensors["head.0.bias"][4] = 0.5
        pair = _encode(synthetic_records[:1])[0]
        base = float(forward(init_model(MODEL, 0), pair)[4])
        out = ensemble_predict(EnsembleModel([low, high]), pair)
        assert out[4] == pytest.approx(base, abs=1e-5)
        assert float(forward(low, pair)[4]) == pytest.approx(base - 0.5, abs=1e-5)

    def test_order_invariant(self, synthetic_records):
        members = [init_model(MODEL, s) for s in range(3)]
        pair = _encode(synthetic_records[:1])[0]
        np.testing.assert_allclose(
            ensemble_predict(EnsembleModel(members), pair),
            ensemble_predict(EnsembleModel(members[::-1]), pair),
            rtol=1e-12,
        )

    def test_empty(self, synthetic_records):
        with pytest.raises(DataError):
            ensemble_predict(EnsembleModel([]), _encode(synthetic_records[:1])[0])

    def test_clip_after_average(self, synthetic_records):
        """Test averaged Overall is clipped once into [1, 4]."""
        member = init_model(MODEL, 0)
        member.tensors["head.0.bias"][4] = 10.0
        pairs = _encode(synthetic_records[:3])
        ensemble = EnsembleModel([member])
        np.testing.assert_array_equal(predict_overall(ensemble, pairs), [4.0, 4.0, 4.0])
        assert np.all(predict_overall(ensemble, pairs, clip=False) > 4.0)

    def test_save_load(self, tmp_path, synthetic_records):
        members = [init_model(MODEL, s) for s in range(2)]
        paths = EnsembleModel(members).save(tmp_path / "checkpoints")
        assert [p.name for p in paths] == ["fold_0.nsim", "fold_1.nsim"]
        loaded = EnsembleModel.load(tmp_path / "checkpoints")
        pair = _encode(synthetic_records[:1])[0]
        np.testing.assert_array_equal(
            ensemble_predict(loaded, pair), ensemble_predict(EnsembleModel(members), pair)
        )

    def test_load_empty_directory(self, tmp_path):
        with pytest.raises(DataError):
            EnsembleModel.load(tmp_path)


class TestDropoutDisagreement:
    """Test the forward-pair disagreement measure."""

    def test_zero_without_dropout(self, synthetic_records):
        config = dataclasses.replace(MODEL, dropout_p=0.0)
        pairs = _encode(synthetic_records[:5], config)
        assert dropout_disagreement(init_model(config, 0), pairs, seed=0) == 0.0

    def test_positive_with_dropout(self, synthetic_records):
        pairs = _encode(synthetic_records[:5])
        assert dropout_disagreement(init_model(MODEL, 0), pairs, seed=0) > 0.0
