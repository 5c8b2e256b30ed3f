"""Synthetic sparse, bursty, class-structured features.

Class k owns a signal block: ``signal_dims`` randomly chosen dimensions
(``D // K`` by default; blocks of different classes may overlap). Nonzero
entries are centred at ``signal_strength`` inside the block and at 0
elsewhere. Each class also owns ``burst_dims`` random dimensions whose
entries get a log-normal multiplier, producing a few huge components per
sample. Entries are zeroed independently with probability ``p_sparse``.

All draws come from one ``numpy.random.default_rng(seed)`` (PCG64) stream,
rows generated in index order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SynthParams:
    n_per_class: int = 120
    K: int = 8
    D: int = 512
    p_sparse: float = 0.7
    burst_dims: int = 224
    burst_scale: float = 2.5
    signal_strength: float = 3.0
    noise_sigma: float = 1.0
    seed: int = 0
    signal_dims: Optional[int] = 224

    def __post_init__(self):
        if self.n_per_class < 1 or self.K < 1 or self.D < 1:
            raise ValueError("n_per_class, K and D must all be >= 1")
        if not 0.0 <= self.p_sparse < 1.0:
            raise ValueError(f"p_sparse must lie in [0, 1), got {self.p_sparse}")
        if not 0 <= self.burst_dims <= self.D:
            raise ValueError(f"burst_dims must lie in [0, D={self.D}], got {self.burst_dims}")
        if self.burst_scale < 0:
            raise ValueError(f"burst_scale must be >= 0, got {self.burst_scale}")
        if self.signal_dims is not None and not 1 <= self.signal_dims <= self.D:
            raise ValueError(f"signal_dims must lie in [1, D={self.D}], got {self.signal_dims}")
        if self.signal_strength <= 0 or self.noise_sigma <= 0:
            raise ValueError("signal_strength and noise_sigma must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "SynthParams":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown synth keys: {sorted(extra)}")
        return cls(**doc)


def generate_sparse_bursty(params: SynthParams) -> tuple[np.ndarray, np.ndarray]:
    """Return an ``(n_per_class * K) x D`` matrix and its labels, classes in blocks."""
    rng = np.random.default_rng(params.seed)
    K, D = params.K, params.D
    width = params.signal_dims if params.signal_dims is not None else max(1, D // K)
    means = np.zeros((K, D))
    burst = []
    for k in range(K):
        means[k, rng.choice(D, size=width, replace=False)] = params.signal_strength
        burst.append(np.sort(rng.choice(D, size=params.burst_dims, replace=False)))

    n = params.n_per_class * K
    x = np.empty((n, D))
    y = np.repeat(np.arange(K), params.n_per_class)
    for i in range(n):
        k = y[i]
        zero = rng.random(D) < params.p_sparse
        row = means[k] + params.noise_sigma * rng.standard_normal(D)
        if params.burst_dims:
            row[burst[k]] *= np.exp(params.burst_scale * rng.standard_normal(params.burst_dims))
        row[zero] = 0.0
        x[i] = row
    return x, y


def benchmark_split(
    x: np.ndarray, y: np.ndarray, train_fraction: float = 0.5, seed: int = 0
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Stratified split; each class keeps at least one sample on each side.

    Row order within each side follows the original order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    x = np.asarray(x)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train_idx = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} sample(s); cannot stratify")
        n_train = int(np.clip(round(train_fraction * idx.size), 1, idx.size - 1))
        train_idx.append(rng.permutation(idx)[:n_train])
    mask = np.zeros(y.shape[0], dtype=bool)
    mask[np.concatenate(train_idx)] = True
    return (x[mask], y[mask]), (x[~mask], y[~mask])
