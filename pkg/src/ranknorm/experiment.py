"""End-to-end comparison of normalization pipelines on synthetic data.

``run_repro`` generates data, splits it, normalizes train and test with
each pipeline, trains the one-vs-rest classifier, and reports test mAP
with and without re-ranking.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .classify import TrainParams, predict_scores, train_ovr_linear
from .core import read_labels, read_matrix, write_matrix
from .evaluate import dump_json, mean_average_precision, per_class_average_precision
from .normalize import L2, NormalizationPipeline, Power, RankApprox, RankExact, fit_apply_split
from .rerank import MirParams, mir_rerank
from .synth import SynthParams, benchmark_split, generate_sparse_bursty

DEFAULT_SEED_SIZES = (1, 5, 10, 50, 100)


@dataclass(frozen=True)
class ReproConfig:
    synth: SynthParams = SynthParams()
    train_fraction: float = 0.5
    split_seed: int = 0
    classifier: TrainParams = TrainParams(learning_rate=None, epochs=300)
    mir: MirParams = MirParams()
    seed_sizes: tuple[int, ...] = DEFAULT_SEED_SIZES
    approx_repeats: int = 10
    transductive: bool = False
    threads: int = 1

    @classmethod
    def from_json(cls, doc: dict) -> "ReproConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown repro config keys: {sorted(extra)}")
        kw = dict(doc)
        if "synth" in kw:
            kw["synth"] = SynthParams.from_json(kw["synth"])
        if "classifier" in kw:
            _reject_unknown(kw["classifier"], TrainParams, "classifier")
            kw["classifier"] = TrainParams(**kw["classifier"])
        if "mir" in kw:
            _reject_unknown(kw["mir"], MirParams, "mir")
            kw["mir"] = MirParams(**kw["mir"])
        if "seed_sizes" in kw:
            kw["seed_sizes"] = tuple(int(s) for s in kw["seed_sizes"])
        return cls(**kw)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["seed_sizes"] = list(self.seed_sizes)
        return doc


def _reject_unknown(doc: dict, cls, section: str) -> None:
    extra = set(doc) - {f.name for f in fields(cls)}
    if extra:
        raise ValueError(f"unknown {section} keys: {sorted(extra)}")


def load_config(path: Union[str, Path]) -> ReproConfig:
    return ReproConfig.from_json(json.loads(Path(path).read_text()))


BASELINE = NormalizationPipeline((L2(),))
POWER = NormalizationPipeline((Power(0.5), L2()))
RANK = NormalizationPipeline((RankExact(), L2()))


def approx_pipeline(size: int, seed: int) -> NormalizationPipeline:
    return NormalizationPipeline((RankApprox(size, seed), L2()))


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def make_dataset(cfg: ReproConfig) -> Dataset:
    x, y = generate_sparse_bursty(cfg.synth)
    (xtr, ytr), (xte, yte) = benchmark_split(x, y, cfg.train_fraction, cfg.split_seed)
    return Dataset(xtr, ytr, xte, yte)


def evaluate_pipeline(
    data: Dataset, pipeline: NormalizationPipeline, cfg: ReproConfig
) -> dict:
    """Test mAP of one pipeline, before and after re-ranking the test scores."""
    train, test = fit_apply_split(
        data.x_train, data.x_test, pipeline, cfg.transductive, cfg.threads
    )
    k = int(max(data.y_train.max(), data.y_test.max())) + 1
    model = train_ovr_linear(train, data.y_train, cfg.classifier, cfg.split_seed, n_classes=k)
    scores = predict_scores(model, test)
    reranked = mir_rerank(scores, cfg.mir, cfg.threads)
    return {
        "pipeline": str(pipeline),
        "map": mean_average_precision(scores, data.y_test),
        "map_mir": mean_average_precision(reranked, data.y_test),
    }


def _summary(values: list[float]) -> dict:
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return {"mean": mean, "std": math.sqrt(var), "runs": values}


def run_repro(cfg: ReproConfig, data: Optional[Dataset] = None) -> dict:
    """Full comparison; returns a JSON-ready report."""
    data = make_dataset(cfg) if data is None else data
    table1 = {
        "L2": evaluate_pipeline(data, BASELINE, cfg),
        "PN": evaluate_pipeline(data, POWER, cfg),
        "RaN": evaluate_pipeline(data, RANK, cfg),
    }
    table2 = []
    for size in cfg.seed_sizes:
        runs = [
            evaluate_pipeline(data, approx_pipeline(size, rep), cfg)
            for rep in range(cfg.approx_repeats)
        ]
        table2.append(
            {
                "S": size,
                "map": _summary([r["map"] for r in runs]),
                "map_mir": _summary([r["map_mir"] for r in runs]),
            }
        )
    return {
        "config": cfg.to_json(),
        "normalization": table1,
        "subset_size": {"exact": table1["RaN"], "approx": table2},
    }


def default_config() -> ReproConfig:
    """The shipped synthetic benchmark configuration."""
    from importlib.resources import files

    text = files("ranknorm").joinpath("configs/default_repro.json").read_text()
    return ReproConfig.from_json(json.loads(text))


RUN_INPUTS = ("train_features", "train_labels", "test_features", "test_labels")
RUN_EVALUATION_KEYS = {"rerank", "transductive", "threads"}


@dataclass(frozen=True)
class RunConfig:
    """One normalize / train / predict / re-rank / evaluate run on files."""

    inputs: dict
    pipeline: NormalizationPipeline
    seed: int
    output_dir: str
    classifier: TrainParams = TrainParams()
    mir: MirParams = MirParams()
    rerank: bool = True
    transductive: bool = False
    threads: int = 1

    @classmethod
    def from_json(cls, doc: dict, base_dir: Union[str, Path] = ".") -> "RunConfig":
        """Validate ``doc``; relative input paths resolve against ``base_dir``."""
        allowed = {"inputs", "pipeline", "classifier", "mir", "evaluation", "output_dir", "seed"}
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown run config keys: {sorted(extra)}")
        for key in ("inputs", "pipeline", "output_dir", "seed"):
            if key not in doc:
                raise ValueError(f"run config is missing '{key}'")
        inputs = dict(doc["inputs"])
        if set(inputs) != set(RUN_INPUTS):
            raise ValueError(f"inputs must name exactly {list(RUN_INPUTS)}, got {sorted(inputs)}")
        for key, value in inputs.items():
            path = Path(base_dir) / value
            if not path.is_file():
                raise FileNotFoundError(2, f"input '{key}' does not exist", str(path))
            inputs[key] = str(path)
        classifier = doc.get("classifier", {})
        _reject_unknown(classifier, TrainParams, "classifier")
        mir = doc.get("mir", {})
        _reject_unknown(mir, MirParams, "mir")
        evaluation = doc.get("evaluation", {})
        extra = set(evaluation) - RUN_EVALUATION_KEYS
        if extra:
            raise ValueError(f"unknown evaluation keys: {sorted(extra)}")
        return cls(
            inputs=inputs,
            pipeline=NormalizationPipeline.from_json(doc["pipeline"]),
            seed=int(doc["seed"]),
            output_dir=str(doc["output_dir"]),
            classifier=TrainParams(**classifier),
            mir=MirParams(**mir),
            **evaluation,
        )


def run_files(cfg: RunConfig) -> dict:
    """Execute a run and write its artifacts plus ``report.json`` to ``cfg.output_dir``.

    Seeded steps (rank_approx with a subset size, random classifier init)
    take ``cfg.seed``.
    """
    steps = tuple(
        dataclasses.replace(s, seed=cfg.seed) if isinstance(s, RankApprox) and s.size is not None else s
        for s in cfg.pipeline.steps
    )
    pipeline = NormalizationPipeline(steps)
    x_train = read_matrix(cfg.inputs["train_features"])
    x_test = read_matrix(cfg.inputs["test_features"])
    y_train = read_labels(cfg.inputs["train_labels"])
    y_test = read_labels(cfg.inputs["test_labels"])

    train, test = fit_apply_split(x_train, x_test, pipeline, cfg.transductive, cfg.threads)
    k = int(max(y_train.max(), y_test.max())) + 1
    model = train_ovr_linear(train, y_train, cfg.classifier, cfg.seed, n_classes=k)
    scores = predict_scores(model, test)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(train, out / "train_normalized.fmat")
    write_matrix(test, out / "test_normalized.fmat")
    model.save(out / "model.fmat")
    write_matrix(scores, out / "scores.fmat")
    report = {
        "pipeline": pipeline.to_json(),
        "seed": cfg.seed,
        "map": mean_average_precision(scores, y_test),
        "per_class_ap": per_class_average_precision(scores, y_test),
    }
    if cfg.rerank:
        reranked = mir_rerank(scores, cfg.mir, cfg.threads)
        write_matrix(reranked, out / "scores_mir.fmat")
        report["map_mir"] = mean_average_precision(reranked, y_test)
        report["per_class_ap_mir"] = per_class_average_precision(reranked, y_test)
    dump_json(report, out / "report.json")
    return report
