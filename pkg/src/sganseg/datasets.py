"""On-disk layouts: phantom sets, annotation CSVs, pair sets and stacked images.

Phantom set::

    DIR/images/<id>.pgm   16-bit image
    DIR/masks/<id>.pgm    8-bit mask, 0 background / 255 lesion
    DIR/annotations.csv   id,category,x1,y1,x2,y2,x3,y3,x4,y4

Pair set::

    DIR/inputs/<id>.pgm   16-bit noisy or degraded input (clamped to [0, 1])
    DIR/targets/<id>.pgm  16-bit clean target
    DIR/pairs.csv         id,stage,source,sigma_255,s,sigma_s,kappa

Multi-channel images are stored as one PGM whose planes are stacked
vertically (height = channels x plane height).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import imaging
from .errors import FormatError
from .segment.trimap import RecistAnnotation
from .synth import DenoisePair, EnhancePair, Phantom

ANNOTATION_FIELDS = ("id", "category", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4")
PAIR_FIELDS = ("id", "stage", "source", "sigma_255", "s", "sigma_s", "kappa")


@dataclass(frozen=True)
class Annotation:
    id: str
    category: str
    recist: RecistAnnotation


def write_annotations(rows: Iterable[Annotation], path) -> None:
    imaging.write_csv_atomic(
        path, ANNOTATION_FIELDS, ([a.id, a.category, *(f"{v:g}" for v in a.recist.as_row())] for a in rows)
    )


def read_annotations(path) -> list[Annotation]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames)[: len(ANNOTATION_FIELDS)] != list(ANNOTATION_FIELDS):
            raise FormatError(f"{path}: expected header {','.join(ANNOTATION_FIELDS)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                rec = RecistAnnotation.from_row(row[k] for k in ANNOTATION_FIELDS[2:])
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
            out.append(Annotation(row["id"], row["category"], rec))
    return out


def write_phantom_set(phantoms: Iterable[tuple[str, Phantom]], out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    anns = []
    for pid, ph in phantoms:
        imaging.save_pgm(ph.image, out / "images" / f"{pid}.pgm", bit_depth=16)
        save_mask(ph.mask, out / "masks" / f"{pid}.pgm")
        anns.append(Annotation(pid, ph.category, ph.recist))
    write_annotations(anns, out / "annotations.csv")


def save_mask(mask, path) -> None:
    imaging.save_pgm(np.asarray(mask, dtype=bool).astype(np.float32), path, bit_depth=8)


def load_mask(path) -> np.ndarray:
    return imaging.load_pgm(path) >= 0.5


def save_stacked(img: np.ndarray, path, bit_depth: int = 16) -> None:
    c, h, w = img.shape
    imaging.save_pgm(img.reshape(c * h, w), path, bit_depth)


def load_stacked(path, channels: int) -> np.ndarray:
    flat = imaging.load_pgm(path)
    if flat.shape[0] % channels:
        raise FormatError(f"{path}: height {flat.shape[0]} not divisible into {channels} planes")
    return flat.reshape(channels, flat.shape[0] // channels, flat.shape[1])


def list_pgms(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(d.glob("*.pgm"))


def source_images(directory) -> list[Path]:
    """PGMs in ``directory``, or in its ``images/`` subdirectory for phantom sets."""
    d = Path(directory)
    if (d / "images").is_dir():
        d = d / "images"
    return list_pgms(d)


def write_pair_set(pairs: list[tuple[str, str, object]], out_dir) -> None:
    """``pairs`` holds (id, source name, DenoisePair | EnhancePair)."""
    out = Path(out_dir)
    (out / "inputs").mkdir(parents=True, exist_ok=True)
    (out / "targets").mkdir(parents=True, exist_ok=True)
    rows = []
    for pid, source, pair in pairs:
        if isinstance(pair, DenoisePair):
            x, row = pair.noisy, [pid, 1, source, f"{pair.sigma_255:.9g}", "", "", ""]
        else:
            x, row = pair.degraded, [pid, 2, source, "", f"{pair.s:.9g}", f"{pair.sigma_s:.9g}", f"{pair.kappa:.9g}"]
        imaging.save_pgm(imaging.clamp01(x), out / "inputs" / f"{pid}.pgm", bit_depth=16)
        imaging.save_pgm(pair.clean, out / "targets" / f"{pid}.pgm", bit_depth=16)
        rows.append(row)
    imaging.write_csv_atomic(out / "pairs.csv", PAIR_FIELDS, rows)


def read_pair_set(directory) -> tuple[int, list, np.ndarray, np.ndarray]:
    """Returns (stage, ids, inputs (N,1,H,W), targets (N,1,H,W))."""
    d = Path(directory)
    manifest = d / "pairs.csv"
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(PAIR_FIELDS):
            raise FormatError(f"{manifest}: expected header {','.join(PAIR_FIELDS)}")
        rows = list(reader)
    if not rows:
        raise FormatError(f"{manifest}: no pairs")
    stages = {r["stage"] for r in rows}
    if len(stages) != 1 or stages.pop() not in ("1", "2"):
        raise FormatError(f"{manifest}: pairs must share one stage, 1 or 2")
    stage = int(rows[0]["stage"])
    ids = [r["id"] for r in rows]
    xs = np.stack([imaging.load_pgm(d / "inputs" / f"{i}.pgm") for i in ids])[:, None]
    ys = np.stack([imaging.load_pgm(d / "targets" / f"{i}.pgm") for i in ids])[:, None]
    return stage, ids, xs, ys
