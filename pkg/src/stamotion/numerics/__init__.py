from . import autodiff
from .autodiff import Tensor, as_tensor
from .checkpoint import CKPT_VERSION, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    LSTM,
    MLP,
    ContractError,
    Linear,
    Module,
    Parameter,
    lstm_cell_step,
    linear_forward,
    softmax_rows,
)
from .optim import Adam, AdamState, OptimizerError, PlateauSchedule, adam_step

__all__ = [
    "Adam", "AdamState", "CKPT_VERSION", "ContractError", "GradCheckReport", "LSTM",
    "Linear", "MLP", "Module", "OptimizerError", "Parameter", "PlateauSchedule", "Tensor",
    "adam_step", "as_tensor", "autodiff", "grad_check", "linear_forward", "load_checkpoint",
    "lstm_cell_step", "save_checkpoint", "softmax_rows",
]
