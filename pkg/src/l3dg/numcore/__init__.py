from .adam import Adam, AdamState, adam_update
from .checkpoint import load_tensors, save_tensors
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    apply_op,
    bce_with_logits,
    clip,
    concat,
    gather_rows,
    getitem,
    grad_enabled,
    l2_normalize,
    matmul,
    no_grad,
    ones,
    randn,
    relu,
    reshape,
    scatter_rows_add,
    sigmoid,
    softmax,
    softplus,
    square,
    stack,
    tabs,
    tanh,
    tensor,
    texp,
    tlog,
    tmean,
    transpose,
    tsqrt,
    tsum,
    zeros,
)

__all__ = [
    "Adam",
    "AdamState",
    "adam_update",
    "load_tensors",
    "save_tensors",
    "DEFAULT_DTYPE",
    "Tensor",
    "apply_op",
    "bce_with_logits",
    "clip",
    "concat",
    "gather_rows",
    "getitem",
    "grad_enabled",
    "l2_normalize",
    "matmul",
    "no_grad",
    "ones",
    "randn",
    "relu",
    "reshape",
    "scatter_rows_add",
    "sigmoid",
    "softmax",
    "softplus",
    "square",
    "stack",
    "tabs",
    "tanh",
    "tensor",
    "texp",
    "tlog",
    "tmean",
    "transpose",
    "tsqrt",
    "tsum",
    "zeros",
]
