from .checkpoint import load_arrays, save_arrays
from .optim import AdamState, NonFiniteGradientError, adam_step, clip_by_global_norm, global_norm
from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    embedding,
    exp,
    expand,
    frobenius_norm_sq,
    getitem,
    grad,
    grad_enabled,
    l2_norm,
    log,
    mask_fill,
    matmul,
    mean,
    minimum,
    mul,
    no_grad,
    pick,
    reshape,
    scatter_add,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    take,
    tanh,
    transpose,
)
from .params import ParamStore
