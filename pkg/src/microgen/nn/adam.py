"""Bias-corrected ADAM updates on raw numpy parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    """First/second moment estimates and step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(param: np.ndarray) -> AdamState:
    return AdamState(m=np.zeros_like(param, dtype=np.float64),
                     v=np.zeros_like(param, dtype=np.float64))


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place ADAM update of `param`."""
    if param.shape != grad.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.shape}")
    if state.m.shape != param.shape:
        raise ValueError("optimizer state does not match parameter shape")
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * np.square(grad)
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)


class Adam:
    """ADAM over a list of Param objects (see nn.layers.Param)."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.states = [adam_init(p.value) for p in self.params]

    def step(self) -> None:
        for p, state in zip(self.params, self.states):
            if p.grad is None:
                state.t += 1
                continue
            adam_step(p.value, p.grad, state, self.lr,
                      self.beta1, self.beta2, self.eps)
