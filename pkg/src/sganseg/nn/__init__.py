"""Minimal numpy neural-network core: layers, networks, Adam, checkpoints."""

from .checkpoint import load_network, save_network
from .gradcheck import grad_check
from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    LeakyReLU,
    MaxPool2d,
    PixelShuffle,
    PReLU,
    ResBegin,
    ResEnd,
    Sigmoid,
    conv2d_backward,
    conv2d_forward,
    inverse_pixel_shuffle,
    mse_loss,
    pixel_shuffle,
    sigmoid,
)
from .network import Network
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BatchNorm", "Conv2d", "Dense", "Flatten", "LeakyReLU", "MaxPool2d",
    "Network", "PReLU", "PixelShuffle", "ResBegin", "ResEnd", "Sigmoid", "adam_step",
    "conv2d_backward", "conv2d_forward", "grad_check", "inverse_pixel_shuffle", "load_network",
    "mse_loss", "pixel_shuffle", "save_network", "sigmoid",
]
