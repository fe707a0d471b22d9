"""Weakly-supervised phrase grounding in a multi-level common semantic space."""

from .autodiff import ParamSet, ShapeError, Tensor

__version__ = "0.1.0"

__all__ = ["ParamSet", "ShapeError", "Tensor", "__version__"]
