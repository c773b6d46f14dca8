"""Trainable parameters, the AdamW update, and a finite-difference gradient checker.

The reverse pass itself lives on :class:`linpaint.tensor.Tape`; this module adds
the pieces needed to train with it and to validate it.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .tensor import Tape, Tensor, make_rng

__all__ = ["Parameter", "adamw_step", "zero_grads", "finite_diff_check", "Tape"]


class Parameter(Tensor):
    """A trainable tensor: gradient slot plus AdamW first/second moment state."""

    __slots__ = ("name", "adam_m", "adam_v", "step_count")

    def __init__(self, data, name: str = "") -> None:
        super().__init__(data)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def adamw_step(params: Sequence[Parameter], lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """One decoupled-weight-decay Adam update; clears gradients afterwards.

    Decay multiplies the value by (1 - lr*weight_decay) before the Adam term,
    so decay alone never touches the moment estimates.
    """
    for p in params:
        g = p.grad
        p.step_count += 1
        if weight_decay != 0.0:
            p.data *= 1.0 - lr * weight_decay
        p.adam_m *= beta1
        p.adam_v *= beta2
        if g is not None:
            p.adam_m += (1.0 - beta1) * g
            p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1**p.step_count)
        v_hat = p.adam_v / (1.0 - beta2**p.step_count)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Parameter],
                      h: float = 1e-5, coords_per_param: int | None = None,
                      seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` rebuilds its computation from the current parameter values and
    returns a scalar. Every coordinate of every parameter is checked unless
    ``coords_per_param`` limits each parameter to a seeded random subset
    (needed to keep large-model checks tractable).
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_grads(params)

    rng = make_rng(seed)
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if coords_per_param is None or coords_per_param >= n:
            coords = range(n)
        else:
            coords = rng.choice(n, size=coords_per_param, replace=False)
        an_flat = an.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f().item()
            flat[idx] = orig - h
            f_minus = f().item()
            flat[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, _rel_err(fd, float(an_flat[idx])))
    return worst
