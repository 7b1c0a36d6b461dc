"""Minimal reverse-mode autodiff over numpy arrays."""

from .node import EngineError, Node, as_node, backward, constant, no_grad, param
from .conv import SAME, VALID, conv2d, conv_output_shape, transposed_conv2d
from .gradcheck import finite_diff_check
from .kernels import BACKEND, HAVE_COMPILED
from .ops import (
    add,
    clip,
    concat,
    dense,
    div,
    dropout,
    elu,
    exp,
    getitem,
    log,
    log_softmax,
    logsumexp,
    matmul,
    maximum,
    mean,
    mul,
    neg,
    pow_scalar,
    reshape,
    sigmoid,
    softplus,
    split,
    sqrt,
    stop_gradient,
    sub,
    sum,
    tanh,
    transpose,
    where,
)
