from .core import (
    ComputeGraph,
    Tensor,
    add,
    avg_pool2d,
    compose_conv_bias,
    compose_conv_kernels,
    conv2d,
    cross_entropy,
    elu,
    mul,
    mul_const,
    reshape,
    select_column,
    soft_cross_entropy,
    softmax,
    sum_all,
    take_rows,
)
from .gradcheck import finite_diff_gradcheck
from .kernels import active_backend
from .optim import Adam

__all__ = [
    "Adam",
    "ComputeGraph",
    "Tensor",
    "active_backend",
    "add",
    "avg_pool2d",
    "compose_conv_bias",
    "compose_conv_kernels",
    "conv2d",
    "cross_entropy",
    "elu",
    "finite_diff_gradcheck",
    "mul",
    "mul_const",
    "reshape",
    "select_column",
    "soft_cross_entropy",
    "softmax",
    "sum_all",
    "take_rows",
]
