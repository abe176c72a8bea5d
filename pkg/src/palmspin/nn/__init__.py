from . import tensor
from .blocks import (
    ConvDepthSpec,
    MLPSpec,
    PointSetSpec,
    TransformerSpec,
    conv_encode_depth,
    init_conv_depth,
    init_linear,
    init_mlp,
    init_pointset,
    init_transformer,
    linear,
    mlp_forward,
    pointset_encode,
    transformer_encode,
)
from .gradcheck import check_all_blocks, gradient_check
from .params import ParameterSet, adam_step, clip_grad_norm
from .tensor import Tensor, no_grad

__all__ = [
    "tensor",
    "Tensor",
    "no_grad",
    "ParameterSet",
    "adam_step",
    "clip_grad_norm",
    "MLPSpec",
    "PointSetSpec",
    "ConvDepthSpec",
    "TransformerSpec",
    "init_mlp",
    "init_pointset",
    "init_conv_depth",
    "init_transformer",
    "init_linear",
    "linear",
    "mlp_forward",
    "pointset_encode",
    "conv_encode_depth",
    "transformer_encode",
    "gradient_check",
    "check_all_blocks",
]
