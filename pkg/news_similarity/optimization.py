"""
Adam optimizer with decoupled weight decay and a linear warmup/decay schedule.
"""

from dataclasses import dataclass

import numpy as np

from .config import OptimizerConfig
from .models import Gradients, ModelParameters


def lr_at(step: int, total_steps: int, warmup_steps: int, peak: float) -> float:
    """
    Learning rate at an optimizer step.

    Rises linearly from 0 at step 0 to ``peak`` at ``warmup_steps``, then falls linearly
    to 0 at ``total_steps``.
    """
    if total_steps <= 0:
        return 0.0
    if step < warmup_steps:
        return peak * step / warmup_steps
    if step >= total_steps:
        return 0.0
    return peak * (total_steps - step) / max(1, total_steps - warmup_steps)


@dataclass
class LinearSchedule:
    """Linear warmup then linear decay to zero."""

    peak: float
    total_steps: int
    warmup_steps: int

    @classmethod
    def from_config(cls, config: OptimizerConfig, total_steps: int) -> "LinearSchedule":
        return cls(config.learning_rate, total_steps, config.warmup_steps(total_steps))

    def __call__(self, step: int) -> float:
        return lr_at(step, self.total_steps, self.warmup_steps, self.peak)


class AdamOptimizer:
    """Adam with bias correction; weight decay is applied to matrix-shaped tensors only."""

    def __init__(self, params: ModelParameters, config: OptimizerConfig, schedule: LinearSchedule):
        """
        Initialize AdamOptimizer.

        Args:
            params: Parameters updated in place by ``step``
            config: Betas, epsilon and weight decay
            schedule: Learning rate per step
        """
        self.params = params
        self.config = config
        self.schedule = schedule
        self.step_count = 0
        self.exp_avg = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.exp_avg_sq = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    @property
    def current_lr(self) -> float:
        return self.schedule(self.step_count)

    def step(self, grads: Gradients) -> float:
        """
        Apply one update.

        Returns:
            The learning rate that was used
        """
        lr = self.current_lr
        beta1, beta2 = self.config.beta1, self.config.beta2
        t = self.step_count + 1
        step_size = lr * np.sqrt(1.0 - beta2**t) / (1.0 - beta1**t)

        for name, param in self.params.tensors.items():
            grad = grads.tensors[name]
            exp_avg, exp_avg_sq = self.exp_avg[name], self.exp_avg_sq[name]
            exp_avg *= beta1
            exp_avg += (1.0 - beta1) * grad
            exp_avg_sq *= beta2
            exp_avg_sq += (1.0 - beta2) * grad * grad
            denom = np.sqrt(exp_avg_sq) + self.config.eps
            param -= (step_size * exp_avg / denom).astype(param.dtype, copy=False)
            if self.config.weight_decay > 0 and param.ndim >= 2:
                param -= param.dtype.type(lr * self.config.weight_decay) * param

        self.step_count = t
        return lr
