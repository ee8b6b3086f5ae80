from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    elementwise,
    make_op,
    matmul,
    matmul_grads,
    mean,
    mul,
    relu,
    reshape,
    row_scatter,
    segment_sum,
    sigmoid,
    slice_last,
    sorted_sum,
    square,
    sub,
    take,
    tanh,
    unbroadcast,
)
from .tensor import sum as tsum
from .optim import SGD, Adam, Optimizer, adam_step, make_optimizer
from .gradcheck import check_gradients, max_rel_error, numerical_grad
