"""RECIST annotations, ROI cropping and four-region trimaps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..errors import ParameterError


class Label(IntEnum):
    BG = 0
    FG = 1
    PBG = 2
    PFG = 3


Point = tuple[float, float]


@dataclass(frozen=True)
class RecistAnnotation:
    """Long axis p1-p2 and short axis p3-p4, as (x, y) pixel coordinates."""

    p1: Point
    p2: Point
    p3: Point
    p4: Point

    @property
    def long_length(self) -> float:
        return math.dist(self.p1, self.p2)

    @property
    def short_length(self) -> float:
        return math.dist(self.p3, self.p4)

    @property
    def long_midpoint(self) -> Point:
        return ((self.p1[0] + self.p2[0]) / 2, (self.p1[1] + self.p2[1]) / 2)

    @property
    def angle(self) -> float:
        """Orientation of the long axis in radians."""
        return math.atan2(self.p2[1] - self.p1[1], self.p2[0] - self.p1[0])

    def intersection(self) -> Point:
        """Crossing point of the two axis lines; the long-axis midpoint if they are parallel."""
        (x1, y1), (x2, y2), (x3, y3), (x4, y4) = self.p1, self.p2, self.p3, self.p4
        den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
        if abs(den) < 1e-12:
            return self.long_midpoint
        a = x1 * y2 - y1 * x2
        b = x3 * y4 - y3 * x4
        return ((a * (x3 - x4) - (x1 - x2) * b) / den, (a * (y3 - y4) - (y1 - y2) * b) / den)

    def shifted(self, dx: float, dy: float) -> "RecistAnnotation":
        return RecistAnnotation(
            *((p[0] + dx, p[1] + dy) for p in (self.p1, self.p2, self.p3, self.p4))
        )

    def as_row(self) -> list[float]:
        return [c for p in (self.p1, self.p2, self.p3, self.p4) for c in p]

    @classmethod
    def from_row(cls, values) -> "RecistAnnotation":
        v = [float(x) for x in values]
        if len(v) != 8:
            raise ParameterError(f"RECIST row needs 8 coordinates, got {len(v)}")
        return cls((v[0], v[1]), (v[2], v[3]), (v[4], v[5]), (v[6], v[7]))


def roi_rect(shape: tuple[int, int], recist: RecistAnnotation) -> tuple[int, int, int, int]:
    """(x0, y0, x1, y1) of the square ROI twice the long diameter, clipped to ``shape``."""
    length = recist.long_length
    if length < 2:
        raise ParameterError(f"long diameter {length:.2f} px is too small for an ROI")
    h, w = shape
    side = int(round(2 * length))
    cx, cy = recist.long_midpoint
    x0 = int(round(cx - side / 2))
    y0 = int(round(cy - side / 2))
    return max(x0, 0), max(y0, 0), min(x0 + side, w), min(y0 + side, h)


def crop_roi(img, recist: RecistAnnotation):
    """Crop the lesion ROI from a (H, W) or (C, H, W) image.

    Returns the ROI, the annotation in ROI coordinates, and the (x0, y0)
    offset of the ROI inside the image.
    """
    arr = np.asarray(img)
    h, w = arr.shape[-2:]
    for x, y in (recist.p1, recist.p2, recist.p3, recist.p4):
        if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
            raise ParameterError(f"RECIST point ({x}, {y}) outside a {w}x{h} image")
    x0, y0, x1, y1 = roi_rect((h, w), recist)
    roi = arr[..., y0:y1, x0:x1].copy()
    return roi, recist.shifted(-x0, -y0), (x0, y0)


def _segment_distance(px, py, a: Point, b: Point) -> np.ndarray:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    den = dx * dx + dy * dy
    if den == 0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / den, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def build_trimap(
    shape: tuple[int, int],
    recist: RecistAnnotation,
    fg_dilation: float = 0.1,
    inner_scale: float = 1.0,
    outer_scale: float = 1.5,
) -> np.ndarray:
    """Four-region trimap (values from :class:`Label`) derived from the two diameters.

    Diameter segments dilated by ``max(1, fg_dilation * a)`` are definite
    foreground, the inner ellipse probable foreground, the ring out to
    ``outer_scale`` probable background, and the rest definite background.
    """
    h, w = shape
    a = recist.long_length / 2
    b = recist.short_length / 2
    if a <= 0 or b <= 0:
        raise ParameterError("RECIST diameters must have positive length")
    cx, cy = recist.intersection()
    theta = recist.angle
    py, px = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (px - cx) * math.cos(theta) + (py - cy) * math.sin(theta)
    v = -(px - cx) * math.sin(theta) + (py - cy) * math.cos(theta)
    r2 = (u / a) ** 2 + (v / b) ** 2

    trimap = np.full((h, w), Label.BG, dtype=np.uint8)
    trimap[r2 <= outer_scale**2] = Label.PBG
    trimap[r2 <= inner_scale**2] = Label.PFG
    radius = max(1.0, fg_dilation * a)
    near_axes = np.minimum(
        _segment_distance(px, py, recist.p1, recist.p2),
        _segment_distance(px, py, recist.p3, recist.p4),
    )
    trimap[near_axes <= radius] = Label.FG
    return trimap
