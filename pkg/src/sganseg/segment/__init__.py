"""Trimaps from RECIST marks, GMMs, max-flow and GrabCut."""

from __future__ import annotations

import numpy as np

from .gmm import GmmModel, fit_gmm
from .grabcut import GrabCutParams, grabcut
from .maxflow import FlowGraph, cut_capacity, max_flow
from .trimap import Label, RecistAnnotation, build_trimap, crop_roi


def segment_lesion(
    image,
    recist: RecistAnnotation,
    params: GrabCutParams = GrabCutParams(),
    seed=0,
    fg_dilation: float = 0.1,
    inner_scale: float = 1.0,
    outer_scale: float = 1.5,
) -> np.ndarray:
    """GrabCut inside the lesion ROI; returns a mask the size of ``image``."""
    arr = np.asarray(image)
    roi, local, (x0, y0) = crop_roi(arr, recist)
    tri = build_trimap(roi.shape[-2:], local, fg_dilation, inner_scale, outer_scale)
    roi_mask = grabcut(roi, tri, params, seed)
    mask = np.zeros(arr.shape[-2:], dtype=bool)
    h, w = roi_mask.shape
    mask[y0 : y0 + h, x0 : x0 + w] = roi_mask
    return mask


__all__ = [
    "FlowGraph", "GmmModel", "GrabCutParams", "Label", "RecistAnnotation", "build_trimap",
    "crop_roi", "cut_capacity", "fit_gmm", "grabcut", "max_flow", "segment_lesion",
]
