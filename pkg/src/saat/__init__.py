"""SAAT image super-resolution on a small numpy autodiff engine."""
from .model import SAAT, ModelConfig, build, forward, upscale
from .tensor import Tensor, no_grad

__all__ = ["SAAT", "ModelConfig", "Tensor", "build", "forward", "no_grad", "upscale"]
__version__ = "0.1.0"
