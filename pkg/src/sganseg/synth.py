"""Paired training data for both enhancement stages, and lesion phantoms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import imaging
from .errors import ParameterError
from .segment.trimap import RecistAnnotation

DENOISE_PATCH = 32
ENHANCE_PATCH = 128

SIGMA_RANGE = (0.0, 50.0)  # open at 0
SCALE_RANGE = (1.0, 4.0)
BLUR_RANGE = (0.0, 3.0)  # open at 0
KAPPA_RANGE = (1.0, 3.0)

CATEGORIES = (
    "abdomen",
    "bone",
    "kidney",
    "liver",
    "lung",
    "mediastinum",
    "pelvis",
    "soft_tissue",
)


@dataclass(frozen=True)
class DenoisePair:
    noisy: np.ndarray
    clean: np.ndarray
    sigma_255: float


@dataclass(frozen=True)
class EnhancePair:
    degraded: np.ndarray
    clean: np.ndarray
    s: float
    sigma_s: float
    kappa: float


def _spawn(seed, n: int) -> list[np.random.SeedSequence]:
    return imaging.seed_sequence(seed).spawn(n)


def make_denoise_pair(src, sigma_255: float, seed) -> DenoisePair:
    src = imaging.as_gray(src)
    if src.shape[0] < DENOISE_PATCH or src.shape[1] < DENOISE_PATCH:
        raise ParameterError(f"source {src.shape} smaller than {DENOISE_PATCH}x{DENOISE_PATCH}")
    crop_seed, noise_seed = _spawn(seed, 2)
    clean = imaging.random_crop(src, DENOISE_PATCH, DENOISE_PATCH, crop_seed)
    noisy = imaging.add_gaussian_noise(clean, sigma_255, noise_seed)
    return DenoisePair(noisy, clean, float(sigma_255))


def degrade(clean, s: float, sigma_s: float, kappa: float) -> np.ndarray:
    """Down-sample, blur, compress contrast, then up-sample back to the input size."""
    if not SCALE_RANGE[0] <= s <= SCALE_RANGE[1]:
        raise ParameterError(f"scale s must be in [1, 4], got {s}")
    if not BLUR_RANGE[0] < sigma_s <= BLUR_RANGE[1]:
        raise ParameterError(f"blur sigma must be in (0, 3], got {sigma_s}")
    clean = imaging.as_gray(clean)
    h, w = clean.shape
    small = imaging.resample(clean, 1.0 / s)
    small = imaging.gaussian_blur(small, sigma_s)
    small = imaging.contrast_compress(small, kappa)
    return imaging.resize(small, h, w)


def make_enhance_pair(src, s: float, sigma_s: float, kappa: float, seed) -> EnhancePair:
    src = imaging.as_gray(src)
    if src.shape[0] < ENHANCE_PATCH or src.shape[1] < ENHANCE_PATCH:
        raise ParameterError(f"source {src.shape} smaller than {ENHANCE_PATCH}x{ENHANCE_PATCH}")
    if not KAPPA_RANGE[0] <= kappa <= KAPPA_RANGE[1]:
        raise ParameterError(f"kappa must be in [1, 3], got {kappa}")
    clean = imaging.random_crop(src, ENHANCE_PATCH, ENHANCE_PATCH, seed)
    return EnhancePair(degrade(clean, s, sigma_s, kappa), clean, float(s), float(sigma_s), float(kappa))


DEFAULT_RANGES = (SIGMA_RANGE, SCALE_RANGE, BLUR_RANGE, KAPPA_RANGE)


def sample_degradation(seed, ranges=DEFAULT_RANGES) -> tuple[float, float, float, float]:
    """Independent uniform draws of (sigma_255, s, sigma_s, kappa).

    Noise and blur are drawn from half-open intervals (lo, hi], scale and
    kappa from closed ones.  ``ranges`` may narrow the default intervals.
    """
    u = np.random.default_rng(seed).random(4)
    (n_lo, n_hi), (s_lo, s_hi), (b_lo, b_hi), (k_lo, k_hi) = ranges
    sigma_255 = n_hi - (n_hi - n_lo) * u[0]
    s = s_lo + (s_hi - s_lo) * u[1]
    sigma_s = b_hi - (b_hi - b_lo) * u[2]
    kappa = k_lo + (k_hi - k_lo) * u[3]
    return float(sigma_255), float(s), float(sigma_s), float(kappa)


# ---------------------------------------------------------------------------
# phantoms


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 96
    eccentricity: float = 0.6
    contrast: float = 0.5
    texture_sigma: float = 0.03
    noise_sigma: float = 0.0  # on the 0-255 scale; 0 disables noise
    category: str = "liver"
    lobes: int = 1
    long_radius: tuple[float, float] = (0.10, 0.18)  # fraction of size


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray
    mask: np.ndarray
    recist: RecistAnnotation
    category: str


def _lobe_geometry(px, py, cx, cy, a, b, theta):
    u = (px - cx) * math.cos(theta) + (py - cy) * math.sin(theta)
    v = -(px - cx) * math.sin(theta) + (py - cy) * math.cos(theta)
    r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    grad = np.sqrt((u / a**2) ** 2 + (v / b**2) ** 2) / np.maximum(r, 1e-9)
    # first-order signed distance to the ellipse outline, positive outside
    dist = (r - 1.0) / np.maximum(grad, 1e-9)
    return dist


def _farthest_pair(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    return points[i], points[j]


def recist_from_mask(mask: np.ndarray) -> RecistAnnotation:
    """Longest chord of the mask and the perpendicular chord through its midpoint."""
    mask = np.asarray(mask, dtype=bool)
    boundary = mask & ~ndimage.binary_erosion(mask, border_value=0)
    ys, xs = np.nonzero(boundary)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    p1, p2 = _farthest_pair(pts)
    if (p1[0], p1[1]) > (p2[0], p2[1]):
        p1, p2 = p2, p1
    mid = (p1 + p2) / 2
    d = (p2 - p1) / np.linalg.norm(p2 - p1)
    normal = np.array([-d[1], d[0]])
    # short axis: extreme mask pixels within half a pixel of the perpendicular
    ys, xs = np.nonzero(mask)
    rel = np.stack([xs, ys], axis=1) - mid
    slab = np.abs(rel @ d) <= 0.5
    if slab.any():
        across = rel[slab] @ normal
        cand = np.stack([xs, ys], axis=1)[slab].astype(np.float64)
        p3, p4 = cand[np.argmax(across)], cand[np.argmin(across)]
    else:
        p3 = p4 = np.round(mid)
    return RecistAnnotation(
        (float(p1[0]), float(p1[1])),
        (float(p2[0]), float(p2[1])),
        (float(p3[0]), float(p3[1])),
        (float(p4[0]), float(p4[1])),
    )


def gen_phantom(spec: PhantomSpec, seed) -> Phantom:
    """Textured background with a feathered elliptical lesion of known extent."""
    if not 0 <= spec.contrast <= 1:
        raise ParameterError(f"contrast must be in [0, 1], got {spec.contrast}")
    if not 0 <= spec.eccentricity < 1:
        raise ParameterError(f"eccentricity must be in [0, 1), got {spec.eccentricity}")
    if spec.category not in CATEGORIES:
        raise ParameterError(f"unknown category {spec.category!r}")
    if not 1 <= spec.lobes <= 3:
        raise ParameterError(f"lobes must be 1, 2 or 3, got {spec.lobes}")
    size = spec.size
    lo, hi = spec.long_radius
    if not 0 < lo <= hi or hi * size * (2.0 if spec.lobes > 1 else 1.0) >= size / 2 - 2:
        raise ParameterError("lesion does not fit inside the image with margin")

    geo_seed, tex_seed, noise_seed = _spawn(seed, 3)
    rng = np.random.default_rng(geo_seed)
    py, px = np.mgrid[0:size, 0:size].astype(np.float64)

    a = rng.uniform(lo, hi) * size
    b = a * math.sqrt(1 - spec.eccentricity**2)
    theta = rng.uniform(0, math.pi)
    extent = a * (2.0 if spec.lobes > 1 else 1.0)
    margin = extent + 2
    cx = rng.uniform(margin, size - 1 - margin)
    cy = rng.uniform(margin, size - 1 - margin)

    dist = _lobe_geometry(px, py, cx, cy, a, b, theta)
    for _ in range(spec.lobes - 1):
        # extra lobes are centred inside the main ellipse so the union stays connected
        t = rng.uniform(0, 2 * math.pi)
        rr = rng.uniform(0.4, 0.8)
        lx = cx + rr * (a * math.cos(t) * math.cos(theta) - b * math.sin(t) * math.sin(theta))
        ly = cy + rr * (a * math.cos(t) * math.sin(theta) + b * math.sin(t) * math.cos(theta))
        la = a * rng.uniform(0.5, 0.9)
        lb = la * rng.uniform(0.5, 1.0)
        dist = np.minimum(dist, _lobe_geometry(px, py, lx, ly, la, lb, rng.uniform(0, math.pi)))

    mask = dist <= 0
    if not mask.any() or ndimage.label(mask)[1] != 1:
        raise ParameterError("phantom geometry produced an empty or disconnected lesion")
    alpha = np.clip(0.5 - dist, 0.0, 1.0)

    base = 0.5 - spec.contrast / 2
    tex_rng = np.random.default_rng(tex_seed)
    texture = ndimage.gaussian_filter(tex_rng.standard_normal((size, size)), 2.0, mode="nearest")
    texture *= spec.texture_sigma / max(texture.std(), 1e-12)
    img = base + spec.contrast * alpha + texture
    if spec.noise_sigma > 0:
        img = img + np.random.default_rng(noise_seed).standard_normal(img.shape) * (
            spec.noise_sigma / 255.0
        )
    img = np.clip(img, 0.0, 1.0).astype(imaging.DTYPE)
    return Phantom(img, mask, recist_from_mask(mask), spec.category)
