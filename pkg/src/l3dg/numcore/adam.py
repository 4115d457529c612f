"""Adam optimizer with bias correction and per-parameter rate scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter state."""

    m: np.ndarray
    v: np.ndarray
    lr_scale: float = 1.0


def adam_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One in-place Adam step (``step`` counts from 1)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Tracks moments per parameter tensor; zero gradients are skipped.

    ``params`` is a list of tensors or of ``(tensor, lr_scale)`` pairs.
    ``lr_decay`` is the multiplicative factor applied by ``decay_epoch``.
    """

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 lr_decay: float = 1.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.lr_decay = lr_decay
        self.step_count = 0
        self._params: list[Tensor] = []
        self.state: dict[int, AdamState] = {}
        for entry in params:
            if isinstance(entry, tuple):
                self.add_param(entry[0], lr_scale=entry[1])
            else:
                self.add_param(entry)

    def add_param(self, p: Tensor, lr_scale: float = 1.0) -> None:
        self._params.append(p)
        self.state[id(p)] = AdamState(
            m=np.zeros_like(p.data), v=np.zeros_like(p.data), lr_scale=lr_scale
        )

    def replace_param(self, old: Tensor, new: Tensor, keep_rows: np.ndarray | None = None) -> None:
        """Swap a parameter after a structural edit, carrying moment rows over.

        ``keep_rows[i]`` gives the old row feeding new row ``i`` (-1 for fresh
        rows, whose moments start at zero).
        """
        st = self.state.pop(id(old))
        m = np.zeros_like(new.data)
        v = np.zeros_like(new.data)
        if keep_rows is not None:
            keep_rows = np.asarray(keep_rows)
            src = keep_rows >= 0
            m[src] = st.m[keep_rows[src]]
            v[src] = st.v[keep_rows[src]]
        self._params[self._params.index(old)] = new
        self.state[id(new)] = AdamState(m=m, v=v, lr_scale=st.lr_scale)

    def step(self) -> None:
        self.step_count += 1
        for p in self._params:
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {p.grad.shape} does not match parameter {p.data.shape}"
                )
            st = self.state[id(p)]
            adam_update(
                p.data, p.grad, st.m, st.v, self.step_count,
                self.lr * st.lr_scale, self.beta1, self.beta2, self.eps,
            )

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def decay_epoch(self) -> None:
        self.lr *= self.lr_decay
