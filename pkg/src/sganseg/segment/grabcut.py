"""GrabCut on gray or multi-channel rasters with a four-region trimap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..imaging import seed_sequence
from .gmm import GmmModel, fit_gmm
from .maxflow import FlowGraph, max_flow
from .trimap import Label

# (dy, dx) offsets covering each 8-neighbourhood pair once
_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True)
class GrabCutParams:
    k: int = 5
    gamma: float = 50.0
    max_iters: int = 5
    gmm_iters: int = 10


def _features(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ParameterError(f"expected (H, W) or (C, H, W) image, got shape {arr.shape}")
    return arr


def neighbour_pairs(shape: tuple[int, int]):
    """Index arrays (p, q) and Euclidean distances for all 8-neighbour pairs."""
    h, w = shape
    idx = np.arange(h * w).reshape(h, w)
    ps, qs, ds = [], [], []
    for dy, dx in _OFFSETS:
        y0, y1 = 0, h - dy
        x0, x1 = max(0, -dx), w - max(0, dx)
        p = idx[y0:y1, x0:x1]
        q = idx[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
        ps.append(p.ravel())
        qs.append(q.ravel())
        ds.append(np.full(p.size, np.hypot(dy, dx)))
    return np.concatenate(ps), np.concatenate(qs), np.concatenate(ds)


def smoothness_weights(feats: np.ndarray, gamma: float):
    """n-link pairs and weights gamma * exp(-beta * |z_p - z_q|^2) / dist."""
    c, h, w = feats.shape
    z = feats.reshape(c, -1).T
    p, q, dist = neighbour_pairs((h, w))
    d2 = ((z[p] - z[q]) ** 2).sum(axis=1)
    mean_d2 = d2.mean() if d2.size else 0.0
    beta = 1.0 / (2.0 * mean_d2) if mean_d2 > 0 else 0.0
    return p, q, gamma * np.exp(-beta * d2) / dist


def energy(lesion: np.ndarray, d_fg: np.ndarray, d_bg: np.ndarray, p, q, wts) -> float:
    """Data cost of the labelling plus smoothness cost over differently labelled pairs."""
    lab = lesion.ravel()
    data = np.where(lab, d_fg, d_bg).sum()
    return float(data + wts[lab[p] != lab[q]].sum())


def _data_terms(z: np.ndarray, fg: GmmModel, bg: GmmModel) -> tuple[np.ndarray, np.ndarray]:
    return -fg.log_pdf(z), -bg.log_pdf(z)


def cut_labels(trimap, d_fg, d_bg, p, q, wts) -> np.ndarray:
    """Minimum-energy lesion labelling with FG/BG pixels pinned by large t-links."""
    tri = np.asarray(trimap).ravel()
    n = tri.size
    m = np.minimum(d_fg, d_bg)
    cap_src = d_bg - m  # paid when the pixel ends on the background side
    cap_snk = d_fg - m
    pin_fg = tri == Label.FG
    pin_bg = tri == Label.BG
    incident = np.bincount(p, wts, minlength=n) + np.bincount(q, wts, minlength=n)
    hard = 1.0 + float(incident.max(initial=0.0)) + float(np.maximum(cap_src, cap_snk).max(initial=0.0))
    cap_src = np.where(pin_fg, hard, np.where(pin_bg, 0.0, cap_src))
    cap_snk = np.where(pin_bg, hard, np.where(pin_fg, 0.0, cap_snk))

    g = FlowGraph(n)
    for i, (cs, ct) in enumerate(zip(cap_src.tolist(), cap_snk.tolist())):
        g.add_tedge(i, cs, ct)
    g.add_edges(p, q, wts, wts)
    _, side = max_flow(g)
    return side[:n]


def grabcut(image, trimap, params: GrabCutParams = GrabCutParams(), seed=0, trace: list | None = None) -> np.ndarray:
    """Segment the lesion; returns a boolean mask.

    Lesion pixels start as FG and PFG.  Each iteration fits lesion and
    background GMMs to the current labelling, then relabels PFG/PBG pixels by
    a minimum cut.  Stops when labels are stable or after ``max_iters``.  If
    ``trace`` is a list, (energy before cut, energy after cut) is appended per
    iteration, both measured with that iteration's GMMs.
    """
    feats = _features(image)
    tri = np.asarray(trimap)
    if tri.shape != feats.shape[1:]:
        raise ParameterError(f"trimap {tri.shape} does not match image {feats.shape[1:]}")
    if not (tri == Label.FG).any() or not (tri == Label.BG).any():
        raise ParameterError("trimap needs both definite foreground and definite background pixels")
    z = feats.reshape(feats.shape[0], -1).T
    p, q, wts = smoothness_weights(feats, params.gamma)
    mutable = ((tri == Label.PFG) | (tri == Label.PBG)).ravel()
    lesion = ((tri == Label.FG) | (tri == Label.PFG)).ravel()
    seeds = seed_sequence(seed).spawn(2 * params.max_iters)
    for it in range(params.max_iters):
        fg = fit_gmm(z[lesion], params.k, params.gmm_iters, seeds[2 * it])
        bg = fit_gmm(z[~lesion], params.k, params.gmm_iters, seeds[2 * it + 1])
        d_fg, d_bg = _data_terms(z, fg, bg)
        cut = cut_labels(tri, d_fg, d_bg, p, q, wts)
        new = np.where(mutable, cut, lesion)
        if trace is not None:
            trace.append((energy(lesion, d_fg, d_bg, p, q, wts), energy(new, d_fg, d_bg, p, q, wts)))
        if np.array_equal(new, lesion):
            break
        lesion = new
    return lesion.reshape(tri.shape)
