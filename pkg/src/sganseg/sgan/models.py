"""Generator, discriminator and frozen feature-extractor builders."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError
from ..nn import layers as L
from ..nn.network import Network


@dataclass(frozen=True)
class GeneratorConfig:
    n_res_blocks: int = 3
    base_channels: int = 16
    subpixel_layers: int = 0
    in_channels: int = 1
    identity_init: bool = True
    preset: str = "desk"


@dataclass(frozen=True)
class DiscriminatorConfig:
    strides: tuple[int, ...] = (1, 2, 1, 2)
    channels: tuple[int, ...] = (32, 32, 64, 64)
    leaky_slope: float = 0.2
    dense_width: int = 64
    in_channels: int = 1
    preset: str = "desk"


GENERATOR_PRESETS = {
    "desk": GeneratorConfig(),
    "full_g1": GeneratorConfig(n_res_blocks=9, base_channels=64, preset="full_g1"),
    "full_g2": GeneratorConfig(n_res_blocks=16, base_channels=64, preset="full_g2"),
    # the super-resolution generator this family derives from
    "srgan": GeneratorConfig(n_res_blocks=16, base_channels=64, subpixel_layers=2, identity_init=False, preset="srgan"),
}

DISCRIMINATOR_PRESETS = {
    "desk": DiscriminatorConfig(),
    "full": DiscriminatorConfig(
        strides=(1, 2, 1, 2, 1, 2, 1, 2),
        channels=(64, 64, 128, 128, 256, 256, 512, 512),
        dense_width=1024,
        preset="full",
    ),
}


def generator_preset(preset: str, stage: int) -> GeneratorConfig:
    if preset == "full":
        return GENERATOR_PRESETS["full_g1" if stage == 1 else "full_g2"]
    try:
        return GENERATOR_PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown generator preset {preset!r}") from None


def discriminator_preset(preset: str) -> DiscriminatorConfig:
    try:
        return DISCRIMINATOR_PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown discriminator preset {preset!r}") from None


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> Network:
    """Fully convolutional residual generator.

    Input conv and PReLU, ``n_res_blocks`` blocks of conv-BN-PReLU-conv-BN with
    an additive skip, optional conv/pixel-shuffle/PReLU upscaling sections and
    an output conv.  Without upscaling the whole chain is wrapped in a global
    skip, so a zero output conv (``identity_init``) makes the network the
    identity map.
    """
    if cfg.n_res_blocks < 0 or cfg.base_channels < 1 or cfg.subpixel_layers < 0:
        raise ParameterError(f"invalid generator config {cfg}")
    rng = np.random.default_rng(seed)
    c = cfg.base_channels
    body: list[L.Layer] = [L.Conv2d(cfg.in_channels, c, rng=rng), L.PReLU(c)]
    for _ in range(cfg.n_res_blocks):
        body += [
            L.ResBegin(),
            L.Conv2d(c, c, rng=rng), L.BatchNorm(c), L.PReLU(c),
            L.Conv2d(c, c, rng=rng), L.BatchNorm(c),
            L.ResEnd(),
        ]
    for _ in range(cfg.subpixel_layers):
        body += [L.Conv2d(c, 4 * c, rng=rng), L.PixelShuffle(2), L.PReLU(c)]
    out_conv = L.Conv2d(c, cfg.in_channels, rng=rng)
    if cfg.identity_init:
        out_conv.params["weight"][:] = 0
    body.append(out_conv)
    if cfg.subpixel_layers == 0:
        body = [L.ResBegin(), *body, L.ResEnd()]
    return Network(body, input_shape=(1, cfg.in_channels, 8, 8), name=f"generator[{cfg.preset}]")


def build_discriminator(cfg: DiscriminatorConfig, patch: int, seed: int = 0) -> Network:
    """Strided conv/LeakyReLU stack, dense-LeakyReLU-dense head and a sigmoid score."""
    if len(cfg.strides) != len(cfg.channels) or not cfg.strides:
        raise ParameterError("discriminator strides and channels must be equal-length and non-empty")
    rng = np.random.default_rng(seed)
    layers: list[L.Layer] = []
    ch, size = cfg.in_channels, patch
    for stride, out in zip(cfg.strides, cfg.channels):
        layers += [L.Conv2d(ch, out, stride=stride, rng=rng), L.LeakyReLU(cfg.leaky_slope)]
        ch, size = out, L.conv_out_size(size, 3, stride, 1)
    if size < 1:
        raise ShapeError(f"patch {patch} vanishes under strides {cfg.strides}")
    layers += [
        L.Flatten(),
        L.Dense(ch * size * size, cfg.dense_width, rng=rng),
        L.LeakyReLU(cfg.leaky_slope),
        L.Dense(cfg.dense_width, 1, rng=rng),
        L.Sigmoid(),
    ]
    return Network(layers, input_shape=(1, cfg.in_channels, patch, patch), name=f"discriminator[{cfg.preset}]")


class FeatureExtractor:
    """Five frozen conv-LeakyReLU-maxpool blocks with seeded random weights.

    Stands in for a pretrained perceptual network.  Anything with the same
    ``features``/``backward`` pair can be passed to the losses instead.
    """

    def __init__(self, channels=(8, 16, 16, 32, 32), in_channels: int = 1, seed: int = 1234):
        rng = np.random.default_rng(seed)
        self.blocks = []
        ch = in_channels
        for out in channels:
            self.blocks.append(
                Network([L.Conv2d(ch, out, rng=rng), L.LeakyReLU(0.2), L.MaxPool2d()]).freeze()
            )
            ch = out
        self.min_size = 2 ** len(channels)

    def features(self, x: np.ndarray) -> list[np.ndarray]:
        if min(x.shape[2:]) < self.min_size:
            raise ShapeError(f"feature extractor needs inputs of at least {self.min_size} px, got {x.shape}")
        feats = []
        for block in self.blocks:
            x = block.forward(x)
            feats.append(x)
        return feats

    def backward(self, grads: list[np.ndarray]) -> np.ndarray:
        """Input gradient given a gradient for every block output (of the last ``features`` call)."""
        g = np.zeros_like(grads[-1])
        for block, gb in zip(reversed(self.blocks), reversed(grads)):
            g = block.backward(g + gb)
        return g

    def astype(self, dtype) -> "FeatureExtractor":
        out = copy.copy(self)
        out.blocks = [b.astype(dtype) for b in self.blocks]
        return out
