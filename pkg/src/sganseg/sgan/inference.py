"""Running trained generators, and picking images worth adding to fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .. import imaging

Generator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Enhanced:
    denoised: np.ndarray
    enhanced: np.ndarray
    stacked: np.ndarray  # (3, H, W): original, denoised, enhanced, clamped to [0, 1]


def _apply(gen: Generator, img: np.ndarray) -> np.ndarray:
    return np.asarray(gen(img[None, None].astype(np.float32)), dtype=np.float32)[0, 0]


def enhance(img, g1: Generator, g2: Generator) -> Enhanced:
    """Denoise with ``g1``, enhance the result with ``g2``, and stack all three."""
    img = imaging.as_gray(img)
    denoised = _apply(g1, img)
    enhanced = _apply(g2, denoised)
    stacked = imaging.stack_channels(img, imaging.clamp01(denoised), imaging.clamp01(enhanced))
    stacked = np.clip(stacked, 0.0, 1.0)
    return Enhanced(denoised, enhanced, stacked)


def edge_contrast(img) -> float:
    """Mean Sobel gradient magnitude."""
    arr = np.asarray(img, dtype=np.float64)
    gx = ndimage.sobel(arr, axis=1, mode="nearest")
    gy = ndimage.sobel(arr, axis=0, mode="nearest")
    return float(np.mean(np.hypot(gx, gy)))


_LAPLACE_DIFF = np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]], dtype=np.float64)


def noise_estimate(img) -> float:
    """Immerkaer's fast estimate of additive Gaussian noise std."""
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    if h < 3 or w < 3:
        return 0.0
    resp = ndimage.correlate(arr, _LAPLACE_DIFF)[1:-1, 1:-1]
    return float(np.sqrt(np.pi / 2) * np.abs(resp).sum() / (6 * (w - 2) * (h - 2)))


def improvement_score(original, enhanced, lam: float = 1.0) -> float:
    """Edge-contrast gain minus ``lam`` times noise gain; 0 when nothing changed."""
    return (edge_contrast(enhanced) - edge_contrast(original)) - lam * (
        noise_estimate(enhanced) - noise_estimate(original)
    )


def finetune_select(
    candidates: Sequence[np.ndarray],
    g1: Generator,
    g2: Generator,
    max_n: int = 1000,
    lam: float = 1.0,
) -> list[int]:
    """Indices of up to ``max_n`` candidates whose enhancement scores above zero, best first."""
    if max_n <= 0:
        return []
    scored = []
    for i, img in enumerate(candidates):
        img = imaging.as_gray(img)
        out = enhance(img, g1, g2).stacked[2]
        score = improvement_score(img, out, lam)
        if score > 0:
            scored.append((-score, i))
    scored.sort()
    return [i for _, i in scored[:max_n]]
