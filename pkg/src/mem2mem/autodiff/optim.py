"""Adam with global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.dot(g.ravel().astype(np.float64), g.ravel().astype(np.float64)))
    return float(np.sqrt(total))


def clip_by_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = global_norm(grads)
    if clip_norm is None or norm <= clip_norm or norm == 0.0:
        return grads, norm
    scale = clip_norm / norm
    return {k: (g * scale).astype(g.dtype) for k, g in grads.items()}, norm


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 2e-4,
    clip_norm: float | None = 2.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, Tensor], AdamState, float]:
    """One in-place Adam update. Returns ``(params, state, pre-clip norm)``.

    Parameters whose gradient is exactly zero and whose moments are still
    zero are left bit-for-bit unchanged.
    """
    for name in sorted(grads):
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
    grads, norm = clip_by_global_norm(grads, clip_norm)
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m.astype(p.dtype)
        state.v[name] = v.astype(p.dtype)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = (p.data - update).astype(p.dtype)
    return params, state, norm
