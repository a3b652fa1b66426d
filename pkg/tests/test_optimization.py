"""
Unit tests for the learning-rate schedule and Adam.
"""

import numpy as np
import pytest

from news_similarity.config import LossConfig, ModelConfig, OptimizerConfig
from news_similarity.exceptions import ConfigError
from news_similarity.losses import rdrop_loss_gradients
from news_similarity.models import Gradients, backward, forward_with_tape, init_model
from news_similarity.optimization import AdamOptimizer, LinearSchedule, lr_at
from news_similarity.tokenizer import EncodedPair


class TestSchedule:
    """Test linear warmup and decay."""

    def test_endpoints(self):
        assert lr_at(0, 100, 10, 2e-5) == 0.0
        assert lr_at(10, 100, 10, 2e-5) == pytest.approx(2e-5)
        assert lr_at(100, 100, 10, 2e-5) == 0.0

    def test_piecewise_linear(self):
        assert lr_at(5, 100, 10, 1.0) == pytest.approx(0.5)
        assert lr_at(55, 100, 10, 1.0) == pytest.approx(0.5)

    def test_no_warmup(self):
        assert lr_at(0, 10, 0, 1.0) == pytest.approx(1.0)

    def test_from_config(self):
        """Test warmup steps = round(warmup_rate * total)."""
        config = OptimizerConfig(learning_rate=1e-3, warmup_rate=0.1)
        schedule = LinearSchedule.from_config(config, 25)
        assert schedule.warmup_steps == 2
        assert schedule(2) == pytest.approx(1e-3)

    def test_defaults(self):
        config = OptimizerConfig()
        assert config.learning_rate == 2e-5
        assert config.weight_decay == 1e-4
        assert config.batch_size == 32
        assert config.epochs == 20

    def test_invalid(self):
        with pytest.raises(ConfigError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            OptimizerConfig(warmup_rate=1.5)


class TestAdam:
    """Test the Adam update."""

    @staticmethod
    def _params():
        config = ModelConfig(vocab_size=32, embed_dim=8, num_layers=1, num_heads=2, ff_dim=8)
        return init_model(config, 0)

    def test_first_step_uses_zero_lr(self):
        """Test step 0 of a warmed-up schedule leaves parameters unchanged."""
        params = self._params()
        before = params.copy()
        schedule = LinearSchedule(1e-2, 10, 2)
        optimizer = AdamOptimizer(params, OptimizerConfig(learning_rate=1e-2), schedule)
        grads = Gradients.zeros_like(params)
        for g in grads.tensors.values():
            g += 1.0
        assert optimizer.step(grads) == 0.0
        for name in params.tensors:
            np.testing.assert_array_equal(params.tensors[name], before.tensors[name])

    def test_bias_corrected_step_size(self):
        """Test the first full step moves each entry by about lr against its gradient sign."""
        params = self._params()
        before = params.copy()
        config = OptimizerConfig(learning_rate=1e-2, weight_decay=0.0)
        optimizer = AdamOptimizer(params, config, LinearSchedule(1e-2, 10, 0))
        grads = Gradients.zeros_like(params)
        for g in grads.tensors.values():
            g += 0.5
        optimizer.step(grads)
        delta = params.tensors["head.0.bias"] - before.tensors["head.0.bias"]
        np.testing.assert_allclose(delta, -1e-2, rtol=1e-4)

    def test_decay_only_on_matrices(self):
        """Test zero gradients shrink matrices and leave vectors alone."""
        params = self._params()
        params.tensors["final_ln.bias"][:] = 1.0
        before = params.copy()
        config = OptimizerConfig(learning_rate=0.1, weight_decay=0.5)
        optimizer = AdamOptimizer(params, config, LinearSchedule(0.1, 10, 0))
        optimizer.step(Gradients.zeros_like(params))
        np.testing.assert_allclose(
            params.tensors["head.0.weight"], before.tensors["head.0.weight"] * 0.95, rtol=1e-6
        )
        np.testing.assert_array_equal(
            params.tensors["final_ln.bias"], before.tensors["final_ln.bias"]
        )

    def test_outputs_finite_after_100_steps(self):
        """Test predictions stay finite after 100 updates on random data."""
        params = self._params()
        config = OptimizerConfig(learning_rate=1e-2)
        optimizer = AdamOptimizer(params, config, LinearSchedule(1e-2, 100, 10))
        loss = LossConfig(overall_weight=0.5)
        rng = np.random.default_rng(0)
        for step in range(100):
            ids = (1,) + tuple(int(i) for i in rng.integers(4, 32, size=6)) + (2,)
            pair = EncodedPair(ids=ids, article_boundaries=(4, 7))
            pred, tape = forward_with_tape(params, pair, train_mode=True, dropout_seed=step)
            label = rng.uniform(1, 4, size=7)
            (grad,) = rdrop_loss_gradients([pred], label, loss)
            optimizer.step(backward(tape, grad))
            assert np.all(np.isfinite(pred))
        assert optimizer.step_count == 100
