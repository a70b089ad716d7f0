"""From-scratch 4D tensor kernels, layers, optimizer and weight file I/O."""

from .ops import (
    ConvSpec,
    conv_out_len,
    convt_out_len,
    conv3d_forward,
    conv3d_backward,
    convt3d_forward,
    convt3d_backward,
    batchnorm_forward,
    batchnorm_backward,
    relu,
    relu_backward,
    leaky_relu,
    leaky_relu_backward,
    sigmoid,
    sigmoid_backward,
    softmax_channels,
    softmax_channels_backward,
)
from .adam import AdamState, adam_init, adam_step, Adam
from .layers import (
    Param,
    ConvLayer,
    ConvTransposeLayer,
    BatchNormLayer,
    Block,
    Sequential,
)
from .weights import (
    LayerRecord,
    read_mgw1,
    write_mgw1,
    split_records,
    KIND_CONV,
    KIND_CONVT,
    KIND_BATCHNORM,
)

__all__ = [
    "ConvSpec", "conv_out_len", "convt_out_len",
    "conv3d_forward", "conv3d_backward",
    "convt3d_forward", "convt3d_backward",
    "batchnorm_forward", "batchnorm_backward",
    "relu", "relu_backward", "leaky_relu", "leaky_relu_backward",
    "sigmoid", "sigmoid_backward",
    "softmax_channels", "softmax_channels_backward",
    "AdamState", "adam_init", "adam_step", "Adam",
    "Param", "ConvLayer", "ConvTransposeLayer", "BatchNormLayer",
    "Block", "Sequential",
    "LayerRecord", "read_mgw1", "write_mgw1", "split_records",
    "KIND_CONV", "KIND_CONVT", "KIND_BATCHNORM",
]
