from .layers import (
    BatchNorm2d,
    ChannelGram,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerNorm2d,
    Parameter,
    ReLU,
    concat_channels,
    one_hot,
    softmax,
    softmax_cross_entropy,
    split_channels,
)
from .adam import Adam, AdamState, adam_step
from .gradcheck import GradCheckReport, gradient_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam", "AdamState", "BatchNorm2d", "ChannelGram", "Conv2d", "Dense",
    "GlobalAvgPool", "GradCheckReport", "LayerNorm2d", "Parameter", "ReLU",
    "adam_step", "concat_channels", "gradient_check", "load_checkpoint",
    "one_hot", "save_checkpoint", "softmax", "softmax_cross_entropy",
    "split_channels",
]
