"""Average precision, mAP, and distribution diagnostics for feature matrices."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .core import as_matrix, validate_labels


def average_precision(scores: Sequence[float], relevant: Sequence[bool]) -> float:
    """Mean of precision@r over the ranks r of the relevant items.

    Items are ranked by descending score; equal scores keep their original
    index order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=bool)
    if scores.ndim != 1 or scores.shape != relevant.shape:
        raise ValueError(f"scores {scores.shape} and relevance {relevant.shape} must be equal-length vectors")
    n_rel = int(relevant.sum())
    if n_rel == 0:
        raise ValueError("average precision is undefined without relevant items")
    order = np.argsort(-scores, kind="stable")
    hits = relevant[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_rel + 1) / ranks
    return math.fsum(precision.tolist()) / n_rel


def per_class_average_precision(p: np.ndarray, y: np.ndarray) -> list[float]:
    p = as_matrix(p)
    y = np.asarray(y)
    n, k = p.shape
    validate_labels(y, n, k)
    out = []
    for c in range(k):
        relevant = y == c
        if not relevant.any():
            raise ValueError(f"class {c} has no positive samples; AP is undefined")
        out.append(average_precision(p[:, c], relevant))
    return out


def mean_average_precision(p: np.ndarray, y: np.ndarray) -> float:
    """Unweighted mean of per-class AP, class k's positives being ``y == k``."""
    aps = per_class_average_precision(p, y)
    return math.fsum(aps) / len(aps)


def column_std_profile(m: np.ndarray) -> np.ndarray:
    """Population standard deviation of every column."""
    return np.std(as_matrix(m), axis=0)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "total": self.total,
        }

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def _histogram(values: np.ndarray, bins: int, value_range: Optional[tuple[float, float]]) -> Histogram:
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if value_range is not None:
        lo, hi = map(float, value_range)
        if not lo < hi:
            raise ValueError(f"histogram range needs lo < hi, got [{lo}, {hi}]")
    elif values.size == 0:
        return Histogram(np.array([0.0, 1.0]), np.zeros(1, dtype=np.int64))
    else:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            # every value identical: one degenerate bin [v, v]
            return Histogram(np.array([lo, hi]), np.array([values.size], dtype=np.int64))
    # bin index straight from the value, so grid points like 0.3 are not
    # pushed across a rounded edge
    inside = (values >= lo) & (values <= hi)
    idx = np.floor((values[inside] - lo) / (hi - lo) * bins).astype(np.int64)
    counts = np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)
    edges = lo + (hi - lo) * (np.arange(bins + 1) / bins)
    edges[-1] = hi
    return Histogram(edges, counts.astype(np.int64))


def value_histogram(
    m: np.ndarray, bins: int = 50, value_range: Optional[tuple[float, float]] = None
) -> Histogram:
    """Histogram of every entry of ``m``; values equal to the upper edge land in the last bin.

    Value x goes to bin ``floor(bins * (x - lo) / (hi - lo))``.

    Without ``value_range`` the data's min/max are used. Values outside
    an explicit range are not counted.
    """
    return _histogram(as_matrix(m).ravel(), bins, value_range)


class CosineStats(NamedTuple):
    pos_pos: Histogram
    pos_neg: Histogram
    excluded: int


def pairwise_cosines(m: np.ndarray, y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Cosine similarities of unordered positive pairs and of positive-negative pairs.

    Rows with zero norm are dropped; their count is returned third.
    """
    m = as_matrix(m)
    y = np.asarray(y)
    validate_labels(y, m.shape[0])
    norms = np.sqrt(np.sum(m * m, axis=1))
    keep = norms > 0
    unit = m[keep] / norms[keep, None]
    pos = unit[y[keep] == k]
    neg = unit[y[keep] != k]
    if pos.shape[0] < 2:
        raise ValueError(f"class {k} needs at least 2 positive rows with nonzero norm, has {pos.shape[0]}")
    if neg.shape[0] < 1:
        raise ValueError(f"class {k} needs at least 1 negative row with nonzero norm")
    iu = np.triu_indices(pos.shape[0], k=1)
    pp = np.clip((pos @ pos.T)[iu], -1.0, 1.0)
    pn = np.clip((pos @ neg.T).ravel(), -1.0, 1.0)
    return pp, pn, int((~keep).sum())


def cosine_similarity_stats(m: np.ndarray, y: np.ndarray, k: int, bins: int = 40) -> CosineStats:
    """Histograms over [-1, 1] of positive-positive and positive-negative cosine similarities."""
    pp, pn, excluded = pairwise_cosines(m, y, k)
    return CosineStats(
        _histogram(pp, bins, (-1.0, 1.0)), _histogram(pn, bins, (-1.0, 1.0)), excluded
    )


def feature_report(
    m: np.ndarray, y: Optional[np.ndarray] = None, bins: int = 50, cos_class: int = 0
) -> dict:
    """All diagnostics for one matrix as a JSON-ready dict."""
    m = as_matrix(m)
    std = column_std_profile(m)
    zero_frac = float(np.mean(m == 0))
    report = {
        "shape": list(m.shape),
        "zero_fraction": zero_frac,
        "value_histogram": value_histogram(m, bins).to_json(),
        "column_std": std.tolist(),
        "column_std_summary": {
            "min": float(std.min()),
            "max": float(std.max()),
            "mean": float(std.mean()),
        },
    }
    if y is not None:
        cs = cosine_similarity_stats(m, y, cos_class, bins)
        pp, pn, _ = pairwise_cosines(m, y, cos_class)
        report["cosine"] = {
            "class": cos_class,
            "excluded_zero_rows": cs.excluded,
            "pos_pos": cs.pos_pos.to_json(),
            "pos_neg": cs.pos_neg.to_json(),
            "pos_pos_zero_fraction": float(np.mean(pp == 0)),
            "pos_neg_zero_fraction": float(np.mean(pn == 0)),
        }
    return report


def dump_json(doc: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
