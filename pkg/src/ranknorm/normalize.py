"""Feature normalizations: L2, power, exact and approximate rank normalization.

Rank normalization replaces every value by its position within its own
dimension divided by the number of samples, so each column ends up close
to uniform on (0, 1] regardless of how sparse or bursty it was. The
approximate variant ranks against a small sorted reference of seed rows
instead of the whole dataset.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import MatrixError, as_matrix, read_matrix, write_matrix


class TiePolicy(str, enum.Enum):
    AVERAGE = "average"
    MIN = "min"
    MAX = "max"
    STABLE_ORDER = "stable_order"


def _column_chunks(d: int, threads: int) -> list[slice]:
    threads = max(1, min(threads, d))
    bounds = np.linspace(0, d, threads + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_columns(fn: Callable[[slice], None], d: int, threads: int) -> None:
    chunks = _column_chunks(d, threads)
    if len(chunks) == 1:
        fn(chunks[0])
        return
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        list(pool.map(fn, chunks))


def l2_normalize(m: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm; all-zero rows pass through."""
    m = as_matrix(m)
    # scale by the row max first so tiny or huge rows neither underflow nor overflow
    peak = np.max(np.abs(m), axis=1)
    peak[peak == 0] = 1.0
    scaled = m / peak[:, None]
    norms = np.sqrt(np.sum(scaled * scaled, axis=1))
    norms[norms == 0] = 1.0
    return scaled / norms[:, None]


def power_normalize(m: np.ndarray, alpha: float) -> np.ndarray:
    """Signed power ``sign(z) * |z|**alpha``, with 0 mapped to 0 for every alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    m = as_matrix(m)
    if alpha == 1.0:
        return m.copy()
    return np.sign(m) * np.abs(m) ** alpha


def _ranks_1based(col_block: np.ndarray, tie: TiePolicy) -> np.ndarray:
    n = col_block.shape[0]
    order = np.argsort(col_block, axis=0, kind="stable")
    ordered = np.take_along_axis(col_block, order, axis=0)
    pos = np.broadcast_to(np.arange(1, n + 1, dtype=np.float64)[:, None], ordered.shape)

    if tie is TiePolicy.STABLE_ORDER:
        sorted_ranks = pos
    else:
        run_start = np.ones(ordered.shape, dtype=bool)
        run_start[1:] = ordered[1:] != ordered[:-1]
        run_end = np.ones(ordered.shape, dtype=bool)
        run_end[:-1] = run_start[1:]
        first = np.maximum.accumulate(np.where(run_start, pos, 0.0), axis=0)
        last = np.minimum.accumulate(np.where(run_end, pos, n + 1.0)[::-1], axis=0)[::-1]
        if tie is TiePolicy.MIN:
            sorted_ranks = first
        elif tie is TiePolicy.MAX:
            sorted_ranks = last
        else:
            sorted_ranks = (first + last) / 2.0

    ranks = np.empty_like(ordered)
    np.put_along_axis(ranks, order, sorted_ranks, axis=0)
    return ranks


def rank_normalize_exact(
    m: np.ndarray,
    tie: Union[TiePolicy, str] = TiePolicy.AVERAGE,
    threads: int = 1,
) -> np.ndarray:
    """Replace each value by its 1-based ascending rank in its column, divided by N.

    Columns are independent; ``threads`` splits them across workers and
    never changes the result.
    """
    m = as_matrix(m)
    tie = TiePolicy(tie)
    n, d = m.shape
    out = np.empty_like(m)

    def work(cols: slice) -> None:
        out[:, cols] = _ranks_1based(m[:, cols], tie) / n

    _map_columns(work, d, threads)
    return out


@dataclass(frozen=True)
class RankReference:
    """Per-dimension sorted seed values for out-of-sample ranking.

    ``seeds`` is S x D with every column sorted ascending; ``rows`` are
    the indices of the seed rows in the matrix the reference was fit on.
    """

    seeds: np.ndarray
    seed: int
    rows: tuple[int, ...] = ()

    def __post_init__(self):
        s = as_matrix(self.seeds)
        if np.any(s[1:] < s[:-1]):
            raise MatrixError("reference seeds must be sorted ascending per dimension")
        object.__setattr__(self, "seeds", s)

    @property
    def size(self) -> int:
        return self.seeds.shape[0]

    @property
    def dims(self) -> int:
        return self.seeds.shape[1]

    def save(self, path: Union[str, Path]) -> None:
        """Write the seeds as a binary matrix plus a ``.json`` sidecar."""
        path = Path(path)
        write_matrix(self.seeds, path, "binary")
        meta = {"S": self.size, "seed": self.seed, "rows": list(self.rows)}
        _sidecar(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RankReference":
        path = Path(path)
        seeds = read_matrix(path, "binary")
        meta = json.loads(_sidecar(path).read_text())
        if meta["S"] != seeds.shape[0]:
            raise MatrixError(
                f"{path}: sidecar declares S={meta['S']} but matrix has {seeds.shape[0]} rows"
            )
        return cls(seeds, int(meta["seed"]), tuple(meta.get("rows", ())))


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def fit_rank_reference(m: np.ndarray, size: int, rng_seed: int) -> RankReference:
    """Pick ``size`` distinct rows uniformly at random and sort them per dimension."""
    m = as_matrix(m)
    n = m.shape[0]
    if not 1 <= size <= n:
        raise ValueError(f"seed count S must lie in [1, {n}], got {size}")
    rng = np.random.default_rng(rng_seed)
    rows = np.sort(rng.choice(n, size=size, replace=False))
    seeds = np.sort(m[rows], axis=0, kind="stable")
    return RankReference(seeds, int(rng_seed), tuple(int(r) for r in rows))


def rank_normalize_approx(m: np.ndarray, ref: RankReference, threads: int = 1) -> np.ndarray:
    """Fraction of seed values strictly below each entry, per dimension.

    With a single seed this is a binarization against the seed row.
    """
    m = as_matrix(m)
    n, d = m.shape
    if ref.dims != d:
        raise MatrixError(f"dimension mismatch: reference has {ref.dims} dims, matrix has {d}")
    seeds = ref.seeds
    s = ref.size
    out = np.empty_like(m)

    def work(cols: slice) -> None:
        for j in range(cols.start, cols.stop):
            out[:, j] = np.searchsorted(seeds[:, j], m[:, j], side="left") / s

    _map_columns(work, d, threads)
    return out


def rank_against_reference(
    m: np.ndarray,
    ref: RankReference,
    tie: Union[TiePolicy, str] = TiePolicy.AVERAGE,
    threads: int = 1,
) -> np.ndarray:
    """Rank each value among the reference values of its dimension, divided by S.

    A value equal to reference entries gets the tie-policy rank it would
    have inside the reference (so ranking the reference's own rows with a
    full reference reproduces ``rank_normalize_exact``); any other value
    gets the 1-based position it would take if inserted, so outputs lie
    in [1/S, (S+1)/S].
    """
    m = as_matrix(m)
    tie = TiePolicy(tie)
    n, d = m.shape
    if ref.dims != d:
        raise MatrixError(f"dimension mismatch: reference has {ref.dims} dims, matrix has {d}")
    seeds = ref.seeds
    s = ref.size
    out = np.empty_like(m)

    def work(cols: slice) -> None:
        for j in range(cols.start, cols.stop):
            lo = np.searchsorted(seeds[:, j], m[:, j], side="left") + 1.0
            hi = np.maximum(np.searchsorted(seeds[:, j], m[:, j], side="right"), lo)
            if tie is TiePolicy.AVERAGE:
                out[:, j] = (lo + hi) / 2.0 / s
            elif tie is TiePolicy.MAX:
                out[:, j] = hi / s
            else:
                out[:, j] = lo / s

    _map_columns(work, d, threads)
    return out


def within_group_rank_normalize(
    groups: Sequence[np.ndarray], tie: Union[TiePolicy, str] = TiePolicy.AVERAGE
) -> list[np.ndarray]:
    """Exact rank normalization applied separately inside each group."""
    mats = [as_matrix(g) for g in groups]
    if not mats:
        return []
    d = mats[0].shape[1]
    for i, g in enumerate(mats):
        if g.shape[1] != d:
            raise MatrixError(f"group {i} has {g.shape[1]} dims, expected {d}")
    return [rank_normalize_exact(g, tie) for g in mats]


# -- pipelines ---------------------------------------------------------------


@dataclass(frozen=True)
class L2:
    def to_json(self) -> dict:
        return {"l2": {}}


@dataclass(frozen=True)
class Power:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_json(self) -> dict:
        return {"power": {"alpha": self.alpha}}


@dataclass(frozen=True)
class RankExact:
    tie: TiePolicy = TiePolicy.AVERAGE

    def __post_init__(self):
        object.__setattr__(self, "tie", TiePolicy(self.tie))

    def to_json(self) -> dict:
        return {"rank_exact": {"tie": self.tie.value}}


@dataclass(frozen=True)
class RankApprox:
    """Approximate ranking step.

    With ``size`` set, a reference of that many rows is fit on the matrix
    being transformed; with ``size=None`` a reference must be supplied
    at apply time.
    """

    size: Optional[int] = None
    seed: int = 0

    def to_json(self) -> dict:
        body = {"seed": self.seed}
        if self.size is not None:
            body["S"] = self.size
        return {"rank_approx": body}


@dataclass(frozen=True)
class WithinGroupRank:
    """Rank inside consecutive row groups of the given sizes."""

    sizes: tuple[int, ...]
    tie: TiePolicy = TiePolicy.AVERAGE

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "tie", TiePolicy(self.tie))
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("group sizes must be positive")

    def to_json(self) -> dict:
        return {"within_group_rank": {"sizes": list(self.sizes), "tie": self.tie.value}}


Step = Union[L2, Power, RankExact, RankApprox, WithinGroupRank]

_STEP_PARSERS: dict[str, Callable[[dict], Step]] = {
    "l2": lambda b: L2(),
    "power": lambda b: Power(float(b.get("alpha", 0.5))),
    "rank_exact": lambda b: RankExact(b.get("tie", "average")),
    "rank_approx": lambda b: RankApprox(b.get("S"), int(b.get("seed", 0))),
    "within_group_rank": lambda b: WithinGroupRank(tuple(b["sizes"]), b.get("tie", "average")),
}

_STEP_KEYS = {
    "l2": set(),
    "power": {"alpha"},
    "rank_exact": {"tie"},
    "rank_approx": {"S", "seed"},
    "within_group_rank": {"sizes", "tie"},
}


@dataclass(frozen=True)
class NormalizationPipeline:
    steps: tuple[Step, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("a pipeline needs at least one step")

    def to_json(self) -> dict:
        return {"steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, doc: Union[dict, list]) -> "NormalizationPipeline":
        """Parse ``{"steps": [{"rank_exact": {"tie": "average"}}, {"l2": {}}]}``.

        A bare list of steps is accepted too.
        """
        if isinstance(doc, dict):
            extra = set(doc) - {"steps"}
            if extra:
                raise ValueError(f"unknown pipeline keys: {sorted(extra)}")
            doc = doc.get("steps", [])
        steps = []
        for entry in doc:
            if isinstance(entry, str):
                entry = {entry: {}}
            if not isinstance(entry, dict) or len(entry) != 1:
                raise ValueError(f"each step must be a single-key object, got {entry!r}")
            (name, body), = entry.items()
            if name not in _STEP_PARSERS:
                raise ValueError(f"unknown pipeline step {name!r}")
            body = body or {}
            extra = set(body) - _STEP_KEYS[name]
            if extra:
                raise ValueError(f"unknown keys for step {name!r}: {sorted(extra)}")
            steps.append(_STEP_PARSERS[name](body))
        return cls(tuple(steps))

    def __str__(self) -> str:
        return "[" + ", ".join(_step_label(s) for s in self.steps) + "]"


def _step_label(step: Step) -> str:
    if isinstance(step, Power):
        return f"PN({step.alpha:g})"
    if isinstance(step, RankApprox):
        return f"RaN-approx(S={step.size})" if step.size else "RaN-approx(ref)"
    if isinstance(step, RankExact):
        return "RaN"
    if isinstance(step, WithinGroupRank):
        return "RaN-group"
    return "L2"


def apply_step(
    m: np.ndarray, step: Step, train_ref: Optional[RankReference] = None, threads: int = 1
) -> np.ndarray:
    if isinstance(step, L2):
        return l2_normalize(m)
    if isinstance(step, Power):
        return power_normalize(m, step.alpha)
    if isinstance(step, RankExact):
        return rank_normalize_exact(m, step.tie, threads)
    if isinstance(step, RankApprox):
        if step.size is not None:
            ref = fit_rank_reference(m, step.size, step.seed)
        elif train_ref is not None:
            ref = train_ref
        else:
            raise ValueError("rank_approx step needs either S or a supplied reference")
        return rank_normalize_approx(m, ref, threads)
    if isinstance(step, WithinGroupRank):
        if sum(step.sizes) != m.shape[0]:
            raise MatrixError(
                f"group sizes sum to {sum(step.sizes)} but matrix has {m.shape[0]} rows"
            )
        cuts = np.cumsum(step.sizes)[:-1]
        return np.vstack(within_group_rank_normalize(np.split(m, cuts), step.tie))
    raise TypeError(f"not a pipeline step: {step!r}")


def apply_pipeline(
    m: np.ndarray,
    pipeline: NormalizationPipeline,
    train_ref: Optional[RankReference] = None,
    threads: int = 1,
) -> np.ndarray:
    """Apply the steps left to right."""
    out = as_matrix(m)
    for step in pipeline.steps:
        out = apply_step(out, step, train_ref, threads)
    return out


def fit_apply_split(
    train: np.ndarray,
    test: np.ndarray,
    pipeline: NormalizationPipeline,
    transductive: bool = False,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a train/test pair without leaking test data into the ranks.

    Rank steps fit a reference on the current training matrix and apply it
    to both sides: ``RankApprox(S)`` draws S seed rows, ``RankExact`` ranks
    against every training row (training rows get exactly their in-sample
    ranks). With ``transductive=True`` exact ranking is instead computed
    over train and test jointly.
    """
    train = as_matrix(train)
    test = as_matrix(test, cols=train.shape[1])
    n_train = train.shape[0]
    for step in pipeline.steps:
        if isinstance(step, RankExact) and transductive:
            joint = rank_normalize_exact(np.vstack([train, test]), step.tie, threads)
            train, test = joint[:n_train], joint[n_train:]
        elif isinstance(step, RankExact):
            ref = fit_rank_reference(train, n_train, 0)
            train = rank_against_reference(train, ref, step.tie, threads)
            test = rank_against_reference(test, ref, step.tie, threads)
        elif isinstance(step, RankApprox):
            size = n_train if step.size is None else step.size
            ref = fit_rank_reference(train, size, step.seed)
            train = rank_normalize_approx(train, ref, threads)
            test = rank_normalize_approx(test, ref, threads)
        elif isinstance(step, WithinGroupRank):
            raise ValueError("within_group_rank is not defined for a train/test split")
        else:
            train = apply_step(train, step)
            test = apply_step(test, step)
    return train, test
