from .gradcheck import check_gradients, max_rel_error, numeric_grad
from .layers import (
    LSTM,
    Conv1d,
    Dense,
    LayerSpec,
    LSTMCell,
    Module,
    ReLU,
    Sequential,
    build_layer,
    build_sequential,
)
from .optim import (
    ModelParams,
    NonFiniteGradientError,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    state_digest,
)
from .tensor import TapeError, Tensor, concat, conv1d, no_grad, stack, tensor, where

__all__ = [
    "LSTM",
    "Conv1d",
    "Dense",
    "LSTMCell",
    "LayerSpec",
    "ModelParams",
    "Module",
    "NonFiniteGradientError",
    "ReLU",
    "Sequential",
    "TapeError",
    "Tensor",
    "adam_step",
    "build_layer",
    "build_sequential",
    "check_gradients",
    "concat",
    "conv1d",
    "load_checkpoint",
    "max_rel_error",
    "no_grad",
    "numeric_grad",
    "save_checkpoint",
    "stack",
    "state_digest",
    "tensor",
    "where",
]
