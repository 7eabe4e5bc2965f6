"""Adam optimizer with exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import DTYPE, Tensor


def decayed_lr(initial_lr: float, step: int, decay_rate: float, decay_steps: int) -> float:
    """Continuous exponential decay: initial * rate ** (step / decay_steps)."""
    return initial_lr * decay_rate ** (step / decay_steps)


@dataclass
class Adam:
    """Adam over a named parameter dict; state is keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict)
    _v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
             lr: float) -> None:
        """Apply one update in place.  Parameters without a gradient are skipped."""
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = grads.get(name)
            if g is None or not p.requires_grad:
                continue
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros(p.shape, dtype=DTYPE)
            v = self._v.get(name)
            if v is None:
                v = self._v[name] = np.zeros(p.shape, dtype=DTYPE)
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
