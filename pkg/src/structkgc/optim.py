"""AdamW with decoupled weight decay, global-norm clipping and linear decay."""

from __future__ import annotations

import numpy as np

from .autodiff import Node


def linear_decay(base_lr: float, total_steps: int, step: int) -> float:
    """Learning rate after ``step`` completed updates.

    Non-increasing; exactly zero from the final scheduled step onwards.
    """
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    return base_lr * max(0.0, (total_steps - step) / total_steps)


class AdamW:
    """Decoupled-weight-decay Adam over named parameter nodes.

    Row-vector parameters (biases, layer-norm gains, the log-temperature)
    are excluded from weight decay; matrices and embedding tables decay.
    """

    def __init__(self, params: dict[str, Node], lr: float, total_steps: int,
                 betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01, clip_norm: float = 1.0):
        self.params = dict(params)
        self.lr = lr
        self.total_steps = total_steps
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self._m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    def _decays(self, name: str, node: Node) -> bool:
        return node.value.shape[0] > 1

    def current_lr(self) -> float:
        return linear_decay(self.lr, self.total_steps, self.step_count)

    def step(self):
        grads = {}
        sq_norm = 0.0
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            grads[name] = g
            sq_norm += float((g * g).sum())
        norm = np.sqrt(sq_norm)
        scale = 1.0
        if self.clip_norm > 0 and norm > self.clip_norm:
            scale = self.clip_norm / norm

        lr_t = self.current_lr()
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = grads[name] * scale
            m = self._m[name] = self.beta1 * self._m[name] + (1 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay and self._decays(name, p):
                update = update + self.weight_decay * p.value
            p.value = p.value - lr_t * update
            p.grad = None
