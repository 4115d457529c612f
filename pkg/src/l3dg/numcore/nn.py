"""Layers and stateless network primitives on top of the autodiff tensors.

Convolutions are implemented as a loop over kernel offsets, each offset being
one strided slice plus an einsum contraction. That keeps both directions of
the gradient free of scatter-adds: the adjoint w.r.t. the input is the same
slice pattern applied in reverse.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    apply_op,
    matmul,
    reshape,
    tmean,
    tsqrt,
    transpose,
)


class Module:
    """Minimal parameter container: introspects attributes recursively."""

    def __init__(self):
        self.training = True
        self._buffers: dict[str, np.ndarray] = {}

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if key.startswith("_") or key == "training":
                continue
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, buf in self._buffers.items():
            yield f"{prefix}{name}", buf
        for key, value in vars(self).items():
            if key.startswith("_") or key == "training":
                continue
            yield from _walk_buffers(value, f"{prefix}{key}")

    def train(self, mode: bool = True):
        self.training = mode
        for value in vars(self).values():
            _walk_train(value, mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            state[f"{name}!buf"] = buf
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter in state dict: {name}")
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)
        for holder, name, buf in _iter_buffer_slots(self, ""):
            key = f"{name}!buf"
            if key in state:
                holder._buffers[name.rsplit(".", 1)[-1]] = state[key].copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _walk_buffers(value, name):
    if isinstance(value, Module):
        yield from value.named_buffers(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_buffers(item, f"{name}.{i}")


def _walk_train(value, mode):
    if isinstance(value, Module):
        value.train(mode)
    elif isinstance(value, (list, tuple)):
        for item in value:
            _walk_train(item, mode)


def _iter_buffer_slots(module: Module, prefix: str):
    for name in module._buffers:
        yield module, f"{prefix}{name}", module._buffers[name]
    for key, value in vars(module).items():
        if key.startswith("_") or key == "training":
            continue
        if isinstance(value, Module):
            yield from _iter_buffer_slots(value, f"{prefix}{key}.")
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                if isinstance(item, Module):
                    yield from _iter_buffer_slots(item, f"{prefix}{key}.{i}.")


def fanin_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> Tensor:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, shape).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng, dtype=DEFAULT_DTYPE, bias=True):
        super().__init__()
        self.weight = fanin_uniform(rng, (in_features, out_features), in_features, dtype)
        self.bias = (
            Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True) if bias else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


def channel_linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """1x1 convolution over the channel axis of (B, C, *spatial)."""
    perm = (0,) + tuple(range(2, x.ndim)) + (1,)
    inv = (0, x.ndim - 1) + tuple(range(1, x.ndim - 1))
    out = matmul(transpose(x, perm), weight)
    if bias is not None:
        out = out + bias
    return transpose(out, inv)


def _offsets(k: int):
    for kx in range(k):
        for ky in range(k):
            for kz in range(k):
                yield kx, ky, kz


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """3D convolution, kernel 3, zero padding 1, stride 1 or 2.

    x: (B, C, D, H, W); weight: (Co, C, 3, 3, 3); output (B, Co, D', H', W').
    """
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    w = weight.data
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    dims_out = tuple((d - 1) // stride + 1 for d in x.shape[2:])

    def sl(k, n_out):
        return slice(k, k + (n_out - 1) * stride + 1, stride)

    out = None
    for kx, ky, kz in _offsets(3):
        xs = xp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1]), sl(kz, dims_out[2])]
        term = np.einsum("bcdhw,oc->bodhw", xs, w[:, :, kx, ky, kz], optimize=True)
        out = term if out is None else out + term
    if bias is not None:
        out = out + bias.data[None, :, None, None, None]

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        for kx, ky, kz in _offsets(3):
            view = gxp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1]), sl(kz, dims_out[2])]
            view += np.einsum("bodhw,oc->bcdhw", g, w[:, :, kx, ky, kz], optimize=True)
            xs = xp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1]), sl(kz, dims_out[2])]
            gw[:, :, kx, ky, kz] = np.einsum("bodhw,bcdhw->oc", g, xs, optimize=True)
        gx = gxp[:, :, 1:-1, 1:-1, 1:-1]
        gb = g.sum(axis=(0, 2, 3, 4)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return apply_op(out, parents, vjp)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """2D convolution, kernel 3, zero padding 1; layout (B, C, H, W)."""
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    w = weight.data
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dims_out = tuple((d - 1) // stride + 1 for d in x.shape[2:])

    def sl(k, n_out):
        return slice(k, k + (n_out - 1) * stride + 1, stride)

    out = None
    for kx in range(3):
        for ky in range(3):
            xs = xp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1])]
            term = np.einsum("bchw,oc->bohw", xs, w[:, :, kx, ky], optimize=True)
            out = term if out is None else out + term
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        for kx in range(3):
            for ky in range(3):
                view = gxp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1])]
                view += np.einsum("bohw,oc->bchw", g, w[:, :, kx, ky], optimize=True)
                xs = xp[:, :, sl(kx, dims_out[0]), sl(ky, dims_out[1])]
                gw[:, :, kx, ky] = np.einsum("bohw,bchw->oc", g, xs, optimize=True)
        gx = gxp[:, :, 1:-1, 1:-1]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return apply_op(out, parents, vjp)


def conv2d_window(x: Tensor, window: np.ndarray) -> Tensor:
    """Valid-mode correlation of an (H, W, C) image with a constant 2D window."""
    k = window.shape[0]
    win = window.astype(x.dtype)
    views = np.lib.stride_tricks.sliding_window_view(x.data, (k, k), axis=(0, 1))
    out = np.einsum("hwcxy,xy->hwc", views, win, optimize=True)

    def vjp(g):
        gp = np.pad(g, ((k - 1, k - 1), (k - 1, k - 1), (0, 0)))
        gv = np.lib.stride_tricks.sliding_window_view(gp, (k, k), axis=(0, 1))
        return (np.einsum("hwcxy,xy->hwc", gv, win[::-1, ::-1], optimize=True),)

    return apply_op(out, (x,), vjp)


def upsample_nearest3d(x: Tensor) -> Tensor:
    """Double each spatial dim of (B, C, D, H, W) by nearest neighbour."""
    out = x.data.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)
    b, c, d, h, w = x.shape

    def vjp(g):
        return (g.reshape(b, c, d, 2, h, 2, w, 2).sum(axis=(3, 5, 7)),)

    return apply_op(out, (x,), vjp)


def avg_pool2d(x: Tensor) -> Tensor:
    """2x2 average pooling of (B, C, H, W); H and W must be even."""
    b, c, h, w = x.shape
    xr = reshape(x, (b, c, h // 2, 2, w // 2, 2))
    return tmean(xr, axis=(3, 5))


def group_norm(x: Tensor, num_groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Group normalization over (B, C, *spatial)."""
    b, c = x.shape[:2]
    if c % num_groups:
        raise ValueError(f"channels {c} not divisible by {num_groups} groups")
    xg = reshape(x, (b, num_groups, -1))
    mu = tmean(xg, axis=2, keepdims=True)
    var = tmean((xg - mu) ** 2, axis=2, keepdims=True)
    xn = (xg - mu) / tsqrt(var + eps)
    xn = reshape(xn, x.shape)
    pshape = (1, c) + (1,) * (x.ndim - 2)
    return xn * reshape(gamma, pshape) + reshape(beta, pshape)


def silu(x: Tensor) -> Tensor:
    from .tensor import sigmoid

    return x * sigmoid(x)


def timestep_embedding(t: np.ndarray, dim: int, dtype=DEFAULT_DTYPE, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=-1)
    return emb.astype(dtype)
