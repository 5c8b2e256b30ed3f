"""The eleven acceptance criteria, each at its stated tolerance and time budget.

Every test prints one ``criterion N: PASS|FAIL`` line as it finishes, and the
same lines are repeated in the pytest terminal summary.
"""

import itertools
import json
import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from ap_oracle import brute_force_ap
from conftest import ACCEPTANCE_RESULTS, no_ties_matrix
from ranknorm.classify import LinearModel, TrainParams, loss_and_gradient
from ranknorm.cli import main as cli_main
from ranknorm.core import read_labels, read_matrix
from ranknorm.evaluate import average_precision, feature_report
from ranknorm.experiment import (
    BASELINE,
    POWER,
    RANK,
    approx_pipeline,
    default_config,
    evaluate_pipeline,
    make_dataset,
)
from ranknorm.normalize import (
    NormalizationPipeline,
    RankExact,
    L2,
    RankReference,
    apply_pipeline,
    power_normalize,
    rank_normalize_approx,
    rank_normalize_exact,
)
from ranknorm.rerank import MirParams, mir_rerank


class Criterion:
    """Times a block, then records and prints one verdict line."""

    def __init__(self, number, budget_s, already_s=0.0):
        self.number = number
        self.budget = budget_s
        self.already = already_s  # time spent in shared fixtures on this criterion's behalf
        self.checks = []

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def check(self, ok, what):
        self.checks.append((bool(ok), what))

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start + self.already
        if exc_type is not None:
            self.checks.append((False, f"raised {exc_type.__name__}: {exc}"))
        self.checks.append((elapsed < self.budget, f"runtime {elapsed:.2f}s < {self.budget:g}s"))
        passed = all(ok for ok, _ in self.checks)
        failed = [w for ok, w in self.checks if not ok]
        detail = "; ".join(failed) if failed else "; ".join(w for _, w in self.checks)
        ACCEPTANCE_RESULTS.append((self.number, passed, detail))
        print(f"criterion {self.number}: {'PASS' if passed else 'FAIL'}  {detail}")
        if exc_type is None:
            assert passed, detail
        return False


@pytest.fixture(scope="module")
def shipped():
    cfg = default_config()
    return cfg, make_dataset(cfg)


@pytest.fixture(scope="module")
def table1(shipped):
    cfg, data = shipped
    start = time.perf_counter()
    rows = {
        "L2": evaluate_pipeline(data, BASELINE, cfg),
        "PN": evaluate_pipeline(data, POWER, cfg),
        "RaN": evaluate_pipeline(data, RANK, cfg),
    }
    return rows, time.perf_counter() - start


def test_criterion_01_rank_uniformity():
    rng = np.random.default_rng(101)
    sizes = [3, 200] + rng.integers(3, 201, size=48).tolist()
    with Criterion(1, 1.0) as c:
        worst_std = 0.0
        multiset_ok = True
        for n in sizes:
            m = no_ties_matrix(rng, n, int(rng.integers(1, 6)))
            out = rank_normalize_exact(m)
            grid = np.arange(1, n + 1) / n
            multiset_ok &= all(np.array_equal(np.sort(out[:, j]), grid) for j in range(m.shape[1]))
            target = math.sqrt((n * n - 1) / 12) / n
            worst_std = max(worst_std, float(np.max(np.abs(np.std(out, axis=0) - target))))
        c.check(multiset_ok, "columns are {1/N..N/N}")
        c.check(worst_std <= 1e-12, f"max std error {worst_std:.1e} <= 1e-12")


def _increasing_transforms(rng):
    alpha = float(rng.uniform(1e-3, 1.0))
    a, b = float(rng.uniform(0.5, 5.0)), float(rng.uniform(-3, 3))
    return [
        (f"PN({alpha:.3f})", lambda x: power_normalize(x, alpha)),
        ("PN(1)", lambda x: power_normalize(x, 1.0)),
        ("affine", lambda x: a * x + b),
        ("exp", np.exp),
        ("cube", lambda x: x**3),
        ("arctan", np.arctan),
        ("x+x^3", lambda x: x + x**3),
    ]


def test_criterion_02_monotone_invariance():
    rng = np.random.default_rng(202)
    with Criterion(2, 5.0) as c:
        mismatches = 0
        for trial in range(100):
            n, d = int(rng.integers(2, 60)), int(rng.integers(1, 12))
            if trial % 3 == 0:
                m = rng.integers(-4, 5, size=(n, d)).astype(float)  # plenty of ties
            else:
                m = rng.standard_normal((n, d))
            base = rank_normalize_exact(m)
            names = _increasing_transforms(rng)
            # a different transform per column
            picks = rng.integers(0, len(names), size=d)
            g = np.column_stack([names[p][1](m[:, [j]])[:, 0] for j, p in enumerate(picks)])
            mismatches += base.tobytes() != rank_normalize_exact(g).tobytes()
        c.check(mismatches == 0, f"{mismatches}/100 matrices differ bitwise")


def test_criterion_03_binarization():
    rng = np.random.default_rng(303)
    with Criterion(3, 1.0) as c:
        values = set()
        for _ in range(200):
            n, d = int(rng.integers(1, 40)), int(rng.integers(1, 10))
            m = rng.standard_normal((n, d))
            m[rng.random((n, d)) < 0.4] = 0.0
            seeds = np.sort(rng.choice([-1.0, 0.0, 0.5, rng.standard_normal()], size=(1, d)), axis=0)
            ref = RankReference(seeds, 0)
            values |= set(np.unique(rank_normalize_approx(m, ref)).tolist())
            # the seed row itself is among the inputs as well
            values |= set(np.unique(rank_normalize_approx(seeds, ref)).tolist())
        c.check(values <= {0.0, 1.0}, f"observed values {sorted(values)}")


def test_criterion_04_mir_hand_oracle():
    e1, e2 = math.exp(-1), math.exp(-2)
    two = [[0.9 - e1 * 0.1, 0.1 - e1 * 0.9]]
    three = [[0.6 - (e1 * 0.3 + e2 * 0.1), 0.3 - (e1 * 0.6 + e2 * 0.1), 0.1 - (e1 * 0.6 + e2 * 0.3)]]
    rng = np.random.default_rng(404)
    with Criterion(4, 1.0) as c:
        p = MirParams(0.5, 1.0, 2)
        err2 = float(np.max(np.abs(mir_rerank([[0.9, 0.1]], p) - two)))
        err3 = float(np.max(np.abs(mir_rerank([[0.6, 0.3, 0.1]], p) - three)))
        c.check(err2 <= 1e-9 and err3 <= 1e-9, f"example errors {err2:.1e}, {err3:.1e} <= 1e-9")
        # the listed values were hand-evaluated with 7-digit exponentials, so
        # they are only good to one unit in the last place
        listed = [[0.8632121, -0.2310915]], [[0.4761027, 0.0657388, -0.1613283]]
        printed = all(
            np.allclose(mir_rerank(src, p), want, rtol=0, atol=1e-7)
            for src, want in zip(([[0.9, 0.1]], [[0.6, 0.3, 0.1]]), listed)
        )
        c.check(printed, "listed 7-digit values agree to 1e-7")

        identity = True
        for _ in range(20):
            m = rng.standard_normal((int(rng.integers(1, 10)), int(rng.integers(1, 8))))
            identity &= mir_rerank(m, MirParams(iters=1)).tobytes() == m.tobytes()
            col = m[:, :1].copy()
            identity &= mir_rerank(col, MirParams(iters=5)).tobytes() == col.tobytes()
        c.check(identity, "W=1 and K=1 identities exact")

        worst = 0.0
        for _ in range(100):
            m = rng.standard_normal((int(rng.integers(1, 20)), int(rng.integers(2, 10))))
            base = mir_rerank(m)
            for scale in (0.5, 3.0, 10.0):
                diff = np.max(np.abs(mir_rerank(scale * m) - scale * base))
                worst = max(worst, float(diff / (scale * np.max(np.abs(base)))))
        c.check(worst <= 1e-12, f"homogeneity rel error {worst:.1e} <= 1e-12")


def test_criterion_05_mir_equivariance():
    rng = np.random.default_rng(505)
    with Criterion(5, 1.0) as c:
        perm_bad = rows_bad = 0
        for trial in range(100):
            n, k = int(rng.integers(1, 30)), int(rng.integers(1, 10))
            if trial % 4 == 0:
                m = rng.integers(0, 3, size=(n, k)).astype(float)
            else:
                m = rng.standard_normal((n, k))
            out = mir_rerank(m)
            perm = rng.permutation(k)
            perm_bad += mir_rerank(m[:, perm]).tobytes() != out[:, perm].tobytes()
            rows = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
            rows_bad += mir_rerank(m[rows]).tobytes() != out[rows].tobytes()
        c.check(perm_bad == 0, f"column permutation mismatches {perm_bad}/100")
        c.check(rows_bad == 0, f"row subset mismatches {rows_bad}/100")


def _score_vectors(n, rng):
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    vecs = [
        [float(n - i) for i in range(n)],
        [float(i) for i in range(n)],
        [0.5] * n,
        [float(i // 2) for i in range(n)],
    ]
    vecs += [list(rng.choice(grid, size=n)) for _ in range(8)]
    if n <= 4:
        vecs += [list(v) for v in itertools.product(grid[::2], repeat=n)]
    return vecs


def test_criterion_06_ap_oracle():
    rng = np.random.default_rng(606)
    with Criterion(6, 10.0) as c:
        cases = mismatches = 0
        for n in range(1, 9):
            for scores in _score_vectors(n, rng):
                for pattern in itertools.product([False, True], repeat=n):
                    if not any(pattern):
                        continue
                    cases += 1
                    mismatches += average_precision(scores, pattern) != brute_force_ap(scores, pattern)
        c.check(mismatches == 0, f"{mismatches} mismatches over {cases} cases")


def test_criterion_07_gradient_check():
    rng = np.random.default_rng(707)
    x = rng.standard_normal((25, 6))
    y = rng.integers(0, 3, size=25)
    with Criterion(7, 1.0) as c:
        worst, points = 0.0, 0
        while points < 100:
            w, b = rng.standard_normal((3, 6)), rng.standard_normal(3)
            k = int(rng.integers(0, 3))
            t = np.where(y == k, 1.0, -1.0)
            if np.min(np.abs(1 - t * (x @ w[k] + b[k]))) < 1e-3:
                continue  # too close to a hinge kink
            params = TrainParams(C=float(rng.uniform(0.1, 100)))
            _, grad = loss_and_gradient(LinearModel(w, b, params, 0.0), x, y, k)
            fd = np.zeros(7)
            for i in range(7):
                vals = []
                for h in (1e-5, -1e-5):
                    w2, b2 = w.copy(), b.copy()
                    if i < 6:
                        w2[k, i] += h
                    else:
                        b2[k] += h
                    vals.append(loss_and_gradient(LinearModel(w2, b2, params, 0.0), x, y, k)[0])
                fd[i] = (vals[0] - vals[1]) / 2e-5
            worst = max(worst, float(np.linalg.norm(fd - grad) / np.linalg.norm(grad)))
            points += 1
        c.check(worst <= 1e-5, f"max relative error {worst:.1e} <= 1e-5 over {points} points")


def test_criterion_08_normalization_ordering(shipped, table1):
    cfg, data = shipped
    rows, elapsed = table1
    l2, pn, ran = rows["L2"]["map"], rows["PN"]["map"], rows["RaN"]["map"]
    with Criterion(8, 120.0, elapsed) as c:
        c.check(cfg.synth.p_sparse == 0.7 and cfg.synth.burst_scale == 2.5 and cfg.synth.K == 8
                and cfg.synth.D == 512, "shipped config has the required shape")
        c.check(np.all(np.bincount(data.y_train) == 60) and np.all(np.bincount(data.y_test) == 60),
                "60 train / 60 test per class")
        c.check(ran - pn >= 0.01, f"RaN {ran:.4f} - PN {pn:.4f} = {ran - pn:.4f} >= 0.01")
        c.check(pn - l2 >= 0.01, f"PN {pn:.4f} - L2 {l2:.4f} = {pn - l2:.4f} >= 0.01")
        again = evaluate_pipeline(data, RANK, cfg)["map"]
        c.check(again == ran, "deterministic rerun")


def test_criterion_09_subset_size_five(shipped, table1):
    cfg, data = shipped
    rows, elapsed = table1
    exact = rows["RaN"]["map"]
    with Criterion(9, 300.0, elapsed) as c:
        runs = [evaluate_pipeline(data, approx_pipeline(5, seed), cfg)["map"] for seed in range(10)]
        mean = math.fsum(runs) / len(runs)
        gap = abs(mean - exact)
        c.check(gap <= 0.02, f"|mean over 10 seeds at S=5 {mean:.4f} - exact {exact:.4f}| = {gap:.4f} <= 0.02")


def test_criterion_10_mir_improvement(shipped, table1):
    cfg, data = shipped
    rows, elapsed = table1
    with Criterion(10, 60.0, elapsed) as c:
        c.check(rows["L2"]["map"] >= 0.6, f"baseline mAP {rows['L2']['map']:.4f} >= 0.6")
        for name, row in rows.items():
            delta = row["map_mir"] - row["map"]
            c.check(delta >= -0.005, f"{name} {row['map']:.4f} -> {row['map_mir']:.4f} (change {delta:+.4f} >= -0.005)")
        gain = rows["L2"]["map_mir"] - rows["L2"]["map"]
        c.check(gain > 0, f"baseline gains {gain:+.4f} > 0")


def test_criterion_11_cli_round_trip(tmp_path, capsys):
    with Criterion(11, 600.0) as c:
        assert cli_main(["synth", "--out", str(tmp_path / "d"), "--seed", "3", "--n-per-class", "20",
                         "--classes", "4", "--dims", "64", "--burst-dims", "16", "--signal-dims", "20"]) == 0
        src = tmp_path / "d" / "features.fmat"
        out = tmp_path / "ran.fmat"
        assert cli_main(["normalize", str(src), "--out", str(out), "--preset", "ran"]) == 0
        m = read_matrix(src)
        y = read_labels(tmp_path / "d" / "labels.txt")
        expected = apply_pipeline(m, NormalizationPipeline((RankExact(), L2())))
        reread = read_matrix(out)
        c.check(reread.tobytes() == expected.tobytes(), "normalize output re-read bitwise equal")
        capsys.readouterr()
        assert cli_main(["stats", str(out), "--labels", str(tmp_path / "d" / "labels.txt")]) == 0
        stats = json.loads(capsys.readouterr().out)
        c.check(stats == json.loads(json.dumps(feature_report(expected, y))), "stats on re-read file equal in-process")

        exe = shutil.which("ranknorm")
        cmd = [exe] if exe else [sys.executable, "-m", "ranknorm.cli"]
        t0 = time.perf_counter()
        res = subprocess.run(cmd + ["repro", "--out", str(tmp_path / "repro")], capture_output=True, text=True)
        repro_s = time.perf_counter() - t0
        c.check(res.returncode == 0, f"repro exit code {res.returncode}")
        report = json.loads((tmp_path / "repro" / "report.json").read_text())
        norm = report["normalization"]
        c.check(set(norm) == {"L2", "PN", "RaN"} and all({"map", "map_mir"} <= set(r) for r in norm.values()),
                "normalization table has L2, PN, RaN with and without MIR")
        sizes = [r["S"] for r in report["subset_size"]["approx"]]
        c.check(sizes == [1, 5, 10, 50, 100] and {"map", "map_mir"} <= set(report["subset_size"]["exact"]),
                f"subset table S={sizes} plus exact baseline")
        c.check(repro_s < 600, f"repro took {repro_s:.1f}s < 600s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
