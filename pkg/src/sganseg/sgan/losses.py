"""Perceptual, adversarial and discriminator losses with their gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..nn.layers import mse_loss

log = logging.getLogger(__name__)

SCORE_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    w_vgg: float = 1e-5
    w_adv: float = 1e-3
    vgg_reduce: str = "sum"  # or "mean" over the feature blocks


@dataclass
class GeneratorLoss:
    total: float
    diff: float
    vgg: float
    adv: float
    grad_out: np.ndarray  # d total / d gen_out, excluding the adversarial path
    grad_score: np.ndarray  # d total / d score


def _clamp_scores(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    bad = d < SCORE_EPS
    if bad.any():
        log.warning("clamping %d score(s) to %g before log", int(bad.sum()), SCORE_EPS)
        d = np.maximum(d, SCORE_EPS)
    return d


def perceptual_loss(l_diff: float, l_vgg: float, l_adv: float, weights: LossWeights = LossWeights()) -> float:
    return l_diff + weights.w_vgg * l_vgg + weights.w_adv * l_adv


def adversarial_loss(d_score) -> tuple[float, np.ndarray]:
    """Batch mean of -log D(G(x)) and its gradient w.r.t. the scores."""
    raw = np.asarray(d_score, dtype=np.float64)
    d = _clamp_scores(raw)
    value = float(np.mean(-np.log(d)))
    grad = np.where(raw == d, -1.0 / (d * d.size), 0.0)
    return value, grad


def feature_loss(gen_out: np.ndarray, target: np.ndarray, feat, reduce: str = "sum") -> tuple[float, np.ndarray]:
    """Summed (or averaged) per-block feature MSE and its gradient w.r.t. ``gen_out``."""
    target_feats = feat.features(target)
    gen_feats = feat.features(gen_out)  # last call; backward uses this cache
    total, grads = 0.0, []
    scale = 1.0 if reduce == "sum" else 1.0 / len(gen_feats)
    for g, t in zip(gen_feats, target_feats):
        value, grad = mse_loss(g, t)
        total += value
        grads.append(grad * scale)
    return total * scale, feat.backward(grads)


def loss_generator(gen_out, target, d_score, feat, weights: LossWeights = LossWeights()) -> GeneratorLoss:
    if gen_out.shape != target.shape:
        raise ShapeError(f"generator output {gen_out.shape} vs target {target.shape}")
    l_diff, g_diff = mse_loss(gen_out, target)
    if feat is not None and weights.w_vgg:
        l_vgg, g_vgg = feature_loss(gen_out, target, feat, weights.vgg_reduce)
    else:
        l_vgg, g_vgg = 0.0, np.zeros_like(gen_out)
    l_adv, g_score = adversarial_loss(d_score)
    total = perceptual_loss(l_diff, l_vgg, l_adv, weights)
    return GeneratorLoss(
        total=total,
        diff=l_diff,
        vgg=l_vgg,
        adv=l_adv,
        grad_out=(g_diff + weights.w_vgg * g_vgg).astype(gen_out.dtype, copy=False),
        grad_score=weights.w_adv * g_score,
    )


def loss_discriminator(d_real, d_fake) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch mean of -log D(y) - log(1 - D(G(x))) and gradients w.r.t. both score arrays."""
    raw_r = np.asarray(d_real, dtype=np.float64)
    raw_f = np.asarray(d_fake, dtype=np.float64)
    r = _clamp_scores(raw_r)
    one_minus_f = _clamp_scores(1.0 - raw_f)
    value = float(np.mean(-np.log(r) - np.log(one_minus_f)))
    n = r.size
    grad_r = np.where(raw_r == r, -1.0 / (r * n), 0.0)
    grad_f = np.where(1.0 - raw_f == one_minus_f, 1.0 / (one_minus_f * n), 0.0)
    return value, grad_r, grad_f
