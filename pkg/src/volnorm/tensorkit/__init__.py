"""Small differentiable-array engine used to train the slice generator."""
from .checkpoint import load_params, save_params
from .functional import concat, conv2d, conv2d_transpose, dense, leaky_relu, relu, sigmoid
from .gradcheck import finite_difference_check
from .optim import OptimizerState, adam_step, sgd_step, step, zero_grad
from .tensor import Tensor, as_tensor

__all__ = [
    "Tensor",
    "as_tensor",
    "conv2d",
    "conv2d_transpose",
    "dense",
    "relu",
    "leaky_relu",
    "sigmoid",
    "concat",
    "OptimizerState",
    "sgd_step",
    "adam_step",
    "step",
    "zero_grad",
    "finite_difference_check",
    "save_params",
    "load_params",
]
