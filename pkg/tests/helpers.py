"""Shared test utilities: finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from l3dg.numcore import Tensor


def finite_diff_grad(fn, values: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of a scalar-valued fn(list of arrays)."""
    grads = []
    for i, base in enumerate(values):
        g = np.zeros_like(base, dtype=np.float64)
        flat = g.reshape(-1)
        for j in range(base.size):
            hi = [v.copy() for v in values]
            lo = [v.copy() for v in values]
            hi[i].reshape(-1)[j] += h
            lo[i].reshape(-1)[j] -= h
            flat[j] = (fn(hi) - fn(lo)) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, values: list[np.ndarray], rtol: float = 1e-4,
                    h: float = 1e-5, frac_ok: float = 1.0) -> float:
    """Compare autodiff gradients of build_loss against central differences.

    ``build_loss`` maps a list of Tensors (requires_grad, f64) to a scalar
    Tensor. Returns the fraction of coordinates within tolerance and asserts
    it is at least ``frac_ok``.
    """
    params = [Tensor(v, requires_grad=True, dtype=np.float64) for v in values]
    loss = build_loss(params)
    loss.backward()
    auto = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    def scalar(vals):
        ts = [Tensor(v, dtype=np.float64) for v in vals]
        return float(build_loss(ts).data)

    fd = finite_diff_grad(scalar, [v.astype(np.float64) for v in values], h=h)
    total = 0
    good = 0
    for a, f in zip(auto, fd):
        rel = np.abs(a - f) / (np.abs(f) + 1e-8)
        good += int((rel < rtol).sum())
        total += a.size
    frac = good / max(total, 1)
    assert frac >= frac_ok, f"gradient check: only {frac:.4f} of coordinates within rtol"
    return frac
