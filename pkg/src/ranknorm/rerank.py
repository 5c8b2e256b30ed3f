"""Training-free multi-class iterative re-ranking of classifier scores.

Every score is reduced by an exponentially weighted sum of the other
classes' scores for the same sample, sorted descending. Samples with one
dominant class lose little; samples whose scores are flat across classes
(hard, ambiguous samples) are pushed down. Updates are synchronous and the
step shrinks geometrically with the iteration count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .core import as_matrix


@dataclass(frozen=True)
class MirParams:
    eta: float = 0.5
    beta: float = 1.0
    iters: int = 4

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.iters) != self.iters or self.iters < 1:
            raise ValueError(f"iters must be an integer >= 1, got {self.iters}")


@dataclass(frozen=True)
class MirTrace:
    """Score matrix after every iteration; ``snapshots[0]`` is the input."""

    snapshots: tuple[np.ndarray, ...]
    max_update: tuple[float, ...]

    @property
    def output(self) -> np.ndarray:
        return self.snapshots[-1]

    def to_json(self) -> dict:
        return {
            "iterations": len(self.snapshots),
            "max_update": list(self.max_update),
            "snapshots": [s.tolist() for s in self.snapshots],
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")


def _drop_index_table(k: int) -> np.ndarray:
    # row q lists the sorted positions that remain once position q is removed
    r = np.arange(k - 1)
    q = np.arange(k)[:, None]
    return np.where(r < q, r, r + 1)


_BLOCK_ELEMS = 1 << 22


def _competitor_penalty(p: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of the descending-sorted other-class scores, per entry."""
    n, k = p.shape
    block = max(1, _BLOCK_ELEMS // (k * k))
    if n > block:
        return np.vstack([_competitor_penalty(p[a : a + block], weights) for a in range(0, n, block)])
    order = np.argsort(-p, axis=1, kind="stable")
    ordered = np.take_along_axis(p, order, axis=1)
    position = np.empty_like(order)
    np.put_along_axis(position, order, np.arange(k)[None, :].repeat(n, axis=0), axis=1)
    keep = _drop_index_table(k)[position]  # (n, k, k-1)
    delta = np.take_along_axis(ordered[:, None, :].repeat(k, axis=1), keep, axis=2)
    penalty = np.zeros((n, k))
    for r in range(k - 1):
        penalty += weights[r] * delta[:, :, r]
    return penalty


def _run(p: np.ndarray, params: MirParams, keep_snapshots: bool, threads: int):
    p = as_matrix(p)
    n, k = p.shape
    weights = np.exp(-params.beta * np.arange(1, k))
    snapshots = [p.copy()]
    max_update = []
    current = p.copy()
    chunks = _row_chunks(n, threads)
    pool = ThreadPoolExecutor(max_workers=len(chunks)) if len(chunks) > 1 else None
    try:
        for w in range(1, params.iters):
            if k == 1:
                update = np.zeros_like(current)
            elif pool is None:
                update = _competitor_penalty(current, weights)
            else:
                parts = pool.map(lambda rows: _competitor_penalty(current[rows], weights), chunks)
                update = np.vstack(list(parts))
            update *= params.eta ** (w - 1)
            current = current - update
            max_update.append(float(np.max(np.abs(update))))
            if keep_snapshots:
                snapshots.append(current.copy())
    finally:
        if pool is not None:
            pool.shutdown()
    if not keep_snapshots:
        snapshots = [current]
    return current, MirTrace(tuple(snapshots), tuple(max_update))


def _row_chunks(n: int, threads: int) -> list[slice]:
    threads = max(1, min(threads, n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def mir_rerank(p: np.ndarray, params: MirParams = MirParams(), threads: int = 1) -> np.ndarray:
    """Re-rank an N x K score matrix; returns the matrix after ``params.iters`` steps.

    ``iters=1`` returns the input unchanged. Rows are independent, so
    ``threads`` never changes the result.
    """
    out, _ = _run(p, params, keep_snapshots=False, threads=threads)
    return out


def mir_trace(p: np.ndarray, params: MirParams = MirParams(), threads: int = 1) -> MirTrace:
    """Like ``mir_rerank`` but keeps every intermediate matrix for diagnostics."""
    _, trace = _run(p, params, keep_snapshots=True, threads=threads)
    return trace


def minmax_normalize_scores(p: np.ndarray, mode: str = "per_row") -> np.ndarray:
    """Affinely map each row (``per_row``) or the whole matrix (``global``) onto [0, 1].

    Constant rows or matrices map to 0.5.
    """
    p = as_matrix(p)
    if mode == "per_row":
        lo = p.min(axis=1, keepdims=True)
        hi = p.max(axis=1, keepdims=True)
    elif mode == "global":
        lo, hi = p.min(), p.max()
    else:
        raise ValueError(f"mode must be 'per_row' or 'global', got {mode!r}")
    span = hi - lo
    flat = span == 0
    out = (p - lo) / np.where(flat, 1.0, span)
    return np.where(flat, 0.5, out)


def rolloff_profile(p: np.ndarray, i: int) -> np.ndarray:
    """Row ``i`` min-max normalized and sorted descending."""
    p = as_matrix(p)
    if not 0 <= i < p.shape[0]:
        raise IndexError(f"row index {i} out of range for {p.shape[0]} rows")
    row = minmax_normalize_scores(p[i : i + 1], "per_row")[0]
    return np.sort(row)[::-1]
