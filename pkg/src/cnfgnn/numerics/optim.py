"""First-order optimizers over collections of leaf tensors."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self) -> list[np.ndarray]:
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise ContractError(f"parameters {missing} have no gradient; run backward first")
        return [p.grad for p in self.params]

    def reset(self) -> None:
        self.t = 0


class SGD(Optimizer):
    """Plain gradient descent, ``theta <- theta - lr * grad``."""

    def step(self) -> None:
        for p, g in zip(self.params, self._grads()):
            p.data = p.data - self.lr * g
        self.t += 1


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.reset()

    def reset(self) -> None:
        """Drop moment estimates and the step counter."""
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        grads = self._grads()
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params, state: Adam | None = None, lr: float = 1e-3) -> Adam:
    """Apply one Adam update to ``params``, creating moment buffers if needed."""
    if state is None:
        state = Adam(params, lr=lr)
    state.step()
    return state


def make_optimizer(kind: str, params, lr: float) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ContractError(f"unknown optimizer {kind!r}")
