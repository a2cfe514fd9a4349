"""Dense float64 tensor math with taped reverse-mode differentiation."""

from .params import ParameterStore, load_checkpoint
from .tensor import GradientMap, Tape, Tensor, as_tensor, no_grad

__all__ = [
    "GradientMap",
    "ParameterStore",
    "Tape",
    "Tensor",
    "as_tensor",
    "load_checkpoint",
    "no_grad",
]
