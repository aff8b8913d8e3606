"""Alternating adversarial training of one enhancement stage."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ParameterError
from ..imaging import seed_sequence, write_csv_atomic
from ..nn.network import Network
from ..nn.optim import Adam
from ..synth import DenoisePair, EnhancePair
from .losses import LossWeights, loss_discriminator, loss_generator
from .models import (
    DiscriminatorConfig,
    FeatureExtractor,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("step", "l_diff", "l_vgg", "l_adv", "l_p", "l_d")
DEFAULT_PATCH = {1: 32, 2: 128}


@dataclass
class TrainConfig:
    epochs: int = 5
    batch: int = 16
    lr: float = 1e-4
    beta1: float = 0.5
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    d_patch: int | None = None


@dataclass
class TrainResult:
    generator: Network
    discriminator: Network
    history: list[dict] = field(default_factory=list)


def pairs_to_arrays(pairs: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Stack pairs into (N, 1, H, W) input and target arrays."""
    if not pairs:
        raise ParameterError("empty pair dataset")
    if isinstance(pairs[0], DenoisePair):
        xs = [p.noisy for p in pairs]
    elif isinstance(pairs[0], EnhancePair):
        xs = [p.degraded for p in pairs]
    else:
        raise ParameterError(f"unsupported pair type {type(pairs[0]).__name__}")
    x = np.stack(xs)[:, None].astype(np.float32)
    y = np.stack([p.clean for p in pairs])[:, None].astype(np.float32)
    return x, y


def _d_view(batch: np.ndarray, patch: int, rng: np.random.Generator) -> tuple[slice, slice]:
    h, w = batch.shape[2:]
    if h == patch and w == patch:
        return slice(None), slice(None)
    if h < patch or w < patch:
        raise ParameterError(f"images {h}x{w} smaller than discriminator patch {patch}")
    y0 = int(rng.integers(0, h - patch + 1))
    x0 = int(rng.integers(0, w - patch + 1))
    return slice(y0, y0 + patch), slice(x0, x0 + patch)


def train_stage(
    stage: int,
    pairs: Sequence | tuple[np.ndarray, np.ndarray],
    g_cfg: GeneratorConfig,
    d_cfg: DiscriminatorConfig,
    cfg: TrainConfig = TrainConfig(),
    feat: FeatureExtractor | None = None,
    generator: Network | None = None,
    discriminator: Network | None = None,
    cascade: Network | None = None,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train one stage: per batch, one discriminator step then one generator step.

    ``pairs`` is a list of :class:`DenoisePair` (stage 1) or
    :class:`EnhancePair` (stage 2), or a ready ``(inputs, targets)`` array
    tuple.  Passing ``generator``/``discriminator`` continues training those
    networks.  With ``cascade`` (a frozen stage-1 generator) the stage-2
    inputs are first passed through it.
    """
    if stage not in (1, 2):
        raise ParameterError(f"stage must be 1 or 2, got {stage}")
    if isinstance(pairs, tuple):
        x_all, y_all = (np.asarray(a, dtype=np.float32) for a in pairs)
    else:
        x_all, y_all = pairs_to_arrays(pairs)
    if len(x_all) == 0:
        raise ParameterError("empty pair dataset")
    if cfg.epochs < 0 or cfg.batch < 1:
        raise ParameterError(f"invalid epochs/batch: {cfg.epochs}/{cfg.batch}")
    if cascade is not None:
        x_all = cascade(x_all).astype(np.float32)

    patch = cfg.d_patch or DEFAULT_PATCH[stage]
    seeds = seed_sequence(cfg.seed).spawn(4)
    gen = generator or build_generator(g_cfg, seed=int(seeds[0].generate_state(1)[0]))
    disc = discriminator or build_discriminator(d_cfg, patch, seed=int(seeds[1].generate_state(1)[0]))
    feat = feat if feat is not None else FeatureExtractor()
    order_rng = np.random.default_rng(seeds[2])
    crop_rng = np.random.default_rng(seeds[3])
    g_opt = Adam(gen, lr=cfg.lr, beta1=cfg.beta1)
    d_opt = Adam(disc, lr=cfg.lr, beta1=cfg.beta1)

    history: list[dict] = []
    n = len(x_all)
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            x, y = x_all[idx], y_all[idx]
            sy, sx = _d_view(y, patch, crop_rng)

            # discriminator step on real and generated batches together
            fake = gen.forward(x, train=True)
            scores = disc.forward(np.concatenate([y[:, :, sy, sx], fake[:, :, sy, sx]]), train=True)
            k = len(idx)
            l_d, g_real, g_fake = loss_discriminator(scores[:k], scores[k:])
            disc.zero_grad()
            disc.backward(np.concatenate([g_real, g_fake]).astype(scores.dtype))
            d_opt.step()

            # generator step through the updated discriminator
            fake = gen.forward(x, train=True)
            score = disc.forward(fake[:, :, sy, sx], train=True)
            lg = loss_generator(fake, y, score, feat, cfg.weights)
            grad_fake = lg.grad_out.copy()
            disc.zero_grad()
            grad_fake[:, :, sy, sx] += disc.backward(lg.grad_score.astype(score.dtype))
            disc.zero_grad()
            gen.zero_grad()
            gen.backward(grad_fake.astype(np.float32))
            g_opt.step()

            rec = {
                "step": len(history) + 1,
                "l_diff": lg.diff,
                "l_vgg": lg.vgg,
                "l_adv": lg.adv,
                "l_p": lg.total,
                "l_d": l_d,
            }
            history.append(rec)
            if on_step is not None:
                on_step(rec)
        log.info("stage %d epoch %d: L_P=%.6f L_D=%.6f", stage, epoch + 1, history[-1]["l_p"], history[-1]["l_d"])
    return TrainResult(gen, disc, history)


def write_history_csv(history: list[dict], path) -> None:
    write_csv_atomic(
        path, HISTORY_FIELDS, ([rec["step"]] + [f"{rec[k]:.9g}" for k in HISTORY_FIELDS[1:]] for rec in history)
    )
