"""Segmentation and image-quality metrics, aggregation and pipeline comparison."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import imaging
from .errors import FormatError, ParameterError

log = logging.getLogger(__name__)

METRICS = ("dice", "precision", "recall")


def _masks(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred).astype(bool)
    g = np.asarray(gt).astype(bool)
    if p.shape != g.shape:
        raise ParameterError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def dice(pred, gt) -> float:
    p, g = _masks(pred, gt)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        log.warning("dice of two empty masks taken as 1.0")
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def precision(pred, gt) -> float:
    p, g = _masks(pred, gt)
    n = int(p.sum())
    if n == 0:
        log.warning("precision with an empty prediction taken as 1.0")
        return 1.0
    return int((p & g).sum()) / n


def recall(pred, gt) -> float:
    p, g = _masks(pred, gt)
    n = int(g.sum())
    if n == 0:
        log.warning("recall with an empty ground truth taken as 1.0")
        return 1.0
    return int((p & g).sum()) / n


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for peak 1.0; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


@dataclass(frozen=True)
class SegResult:
    id: str
    category: str
    dice: float
    precision: float
    recall: float


def score(id: str, category: str, pred, gt) -> SegResult:
    return SegResult(id, category, dice(pred, gt), precision(pred, gt), recall(pred, gt))


@dataclass(frozen=True)
class AggregateRow:
    group: str
    n: int
    mean: dict
    std: dict


def _summarise(group: str, results: Sequence[SegResult]) -> AggregateRow:
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in results], dtype=np.float64)
        mean[m] = float(vals.mean())
        std[m] = float(vals.std())  # population std
    return AggregateRow(group, len(results), mean, std)


def aggregate(results: Sequence[SegResult], group_by: str = "all") -> list[AggregateRow]:
    """Mean and population std per group.

    ``group_by="all"`` gives one row; ``"category"`` gives one row per
    category (sorted) followed by the overall ``all`` row.
    """
    results = list(results)
    if not results:
        raise ParameterError("cannot aggregate an empty result set")
    if group_by == "all":
        return [_summarise("all", results)]
    if group_by != "category":
        raise ParameterError(f"unknown grouping {group_by!r}")
    groups: dict[str, list[SegResult]] = defaultdict(list)
    for r in results:
        groups[r.category].append(r)
    rows = [_summarise(g, groups[g]) for g in sorted(groups)]
    return rows + [_summarise("all", results)]


@dataclass(frozen=True)
class Comparison:
    rows: list[dict]
    paired: list[dict]


def compare_pipelines(runs: Mapping[str, Sequence[SegResult]]) -> Comparison:
    """Table rows per run plus per-id paired differences against the first run.

    Run names of the form ``variant/segmenter`` fill both columns; a bare
    name is taken as the input variant with segmenter ``grabcut``.
    """
    if not runs:
        raise ParameterError("no runs to compare")
    names = list(runs)
    by_id = {name: {r.id: r for r in runs[name]} for name in names}
    base_name = names[0]
    base = by_id[base_name]
    for name in names[1:]:
        if set(by_id[name]) != set(base):
            raise ParameterError(f"run {name!r} covers different ids than {base_name!r}")

    paired = []
    for name in names[1:]:
        for id_ in sorted(base):
            a, b = base[id_], by_id[name][id_]
            paired.append({
                "id": id_, "category": a.category, "run": name, "baseline": base_name,
                **{f"delta_{m}": getattr(b, m) - getattr(a, m) for m in METRICS},
            })

    rows = []
    for name in names:
        variant, _, segmenter = name.partition("/")
        agg = _summarise(name, list(runs[name]))
        deltas = [p["delta_dice"] for p in paired if p["run"] == name]
        rows.append({
            "input": variant,
            "segmenter": segmenter or "grabcut",
            "n": agg.n,
            **{f"{m}_mean": agg.mean[m] for m in ("recall", "precision", "dice")},
            **{f"{m}_std": agg.std[m] for m in ("recall", "precision", "dice")},
            "paired_dice_delta": float(np.mean(deltas)) if deltas else 0.0,
        })
    return Comparison(rows, paired)


# ---------------------------------------------------------------------------
# CSV I/O

RESULT_FIELDS = ("id", "category", "dice", "precision", "recall")
AGGREGATE_FIELDS = ("group", "n", "dice_mean", "dice_std", "precision_mean", "precision_std",
                    "recall_mean", "recall_std")
REPORT_FIELDS = ("input", "segmenter", "n", "recall_mean", "recall_std", "precision_mean",
                 "precision_std", "dice_mean", "dice_std", "paired_dice_delta")
PAIRED_FIELDS = ("id", "category", "run", "baseline", "delta_dice", "delta_precision", "delta_recall")


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _write(path, fields, rows: Iterable[Sequence]) -> None:
    imaging.write_csv_atomic(path, fields, ([_fmt(v) for v in row] for row in rows))


def write_results(results: Sequence[SegResult], path) -> None:
    _write(path, RESULT_FIELDS, ([r.id, r.category, r.dice, r.precision, r.recall] for r in results))


def read_results(path) -> list[SegResult]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(RESULT_FIELDS) - set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns {RESULT_FIELDS}")
        try:
            return [SegResult(r["id"], r["category"], float(r["dice"]), float(r["precision"]),
                              float(r["recall"])) for r in reader]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None


def write_aggregate(rows: Sequence[AggregateRow], path) -> None:
    _write(path, AGGREGATE_FIELDS, (
        [r.group, r.n, r.mean["dice"], r.std["dice"], r.mean["precision"], r.std["precision"],
         r.mean["recall"], r.std["recall"]] for r in rows
    ))


def write_comparison(cmp: Comparison, path) -> Path:
    """Write the table to ``path`` and paired differences next to it; returns the paired path."""
    path = Path(path)
    _write(path, REPORT_FIELDS, ([row[f] for f in REPORT_FIELDS] for row in cmp.rows))
    paired_path = path.with_name(path.stem + "_paired.csv")
    _write(paired_path, PAIRED_FIELDS, ([row[f] for f in PAIRED_FIELDS] for row in cmp.paired))
    return paired_path
