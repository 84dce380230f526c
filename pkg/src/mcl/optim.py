"""ADAM with coupled L2 weight decay, and the piecewise-constant schedule."""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = ["AdamState", "adam_step", "LrSchedule"]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@numba.njit(cache=True)
def _adam_kernel(theta, g, m, v, b1, b2, step, root2, eps, wd):
    # one fused pass over flat views; same arithmetic as the textbook update
    t, gf, mf, vf = theta.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1)
    for i in range(t.size):
        gi = gf[i] + wd * t[i]
        mf[i] = b1 * mf[i] + (1.0 - b1) * gi
        vf[i] = b2 * vf[i] + (1.0 - b2) * gi * gi
        t[i] -= step * mf[i] / (np.sqrt(vf[i]) / root2 + eps)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> None:
    """One in-place ADAM update of every array in ``params``.

    The decay term is added to the gradient (``g + wd * theta``) before the
    moment updates, for every parameter including biases. With
    ``c_k = 1 - beta_k**t`` the step is
    ``theta -= (lr / c1) * m / (sqrt(v) / sqrt(c2) + eps)``.
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    step = lr / (1.0 - b1 ** t)
    root2 = float(np.sqrt(1.0 - b2 ** t))
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {theta.shape}")
        if not (theta.flags.c_contiguous and theta.dtype == np.float64):
            raise ValueError(f"{name}: parameters must be C-contiguous float64 arrays")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        g = np.ascontiguousarray(g, dtype=np.float64)
        _adam_kernel(theta, g, m, state.v[name], b1, b2, step, root2, state.eps, float(weight_decay))


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant learning rate over 0-based epochs."""

    rates: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    boundaries: tuple[int, ...] = (80, 120)
    epochs: int = 160

    def __post_init__(self):
        if len(self.rates) != len(self.boundaries) + 1:
            raise ValueError("need exactly one more rate than boundaries")
        if any(r <= 0 for r in self.rates) or any(a < b for a, b in zip(self.rates, self.rates[1:])):
            raise ValueError(f"rates must be positive and non-increasing: {self.rates}")
        if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError(f"boundaries must be strictly increasing: {self.boundaries}")
        if self.boundaries and self.boundaries[-1] >= self.epochs:
            raise ValueError(f"boundaries {self.boundaries} must be < epochs={self.epochs}")

    def rate(self, epoch: int) -> float:
        return self.rates[bisect_right(self.boundaries, epoch)]
