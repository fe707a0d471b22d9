"""Adam optimizer over a :class:`~commonground.autodiff.ParamSet`."""

from __future__ import annotations

import numpy as np

from .autodiff import ParamSet


class Adam:
    """Adam with bias correction.

    Update per parameter: ``p -= lr * m_hat / (sqrt(v_hat) + eps)``.
    Moment buffers are keyed by parameter name and persist across steps.
    """

    def __init__(
        self,
        params: ParamSet,
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, lr: float | None = None) -> None:
        """Apply one update using accumulated gradients.

        Raises ValueError if any parameter is missing its gradient.
        """
        if lr is None:
            lr = self.lr
        missing = [name for name, p in self.params.items() if p.grad is None]
        if missing:
            raise ValueError(f"parameters missing gradients: {missing}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        self.params.zero_grad()
