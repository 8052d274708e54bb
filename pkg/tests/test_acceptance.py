"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see only these lines;
they also appear under ``pytest -v`` because printing bypasses capture.
"""
import csv
import io
import json
import time

import numpy as np
import pytest

from helpers import (HAND_EXPECTED, HAND_TAXONOMY, TWENTY, brute_average_linkage,
                     brute_force_front, brute_force_select, handbuilt_dataset, make_matrices,
                     random_selection_instance)
from skillroute.cli import run
from skillroute.config import EngineConfig
from skillroute.engine import build_artifacts
from skillroute.harness import generate_synthetic, loocv, metrics
from skillroute.matrices import build_C, build_R
from skillroute.predictor import SCHEMES, design_matrix, impute, loss_and_grad, nmf_factorize
from skillroute.records import dump_dataset, fixture_dir, parse_dataset
from skillroute.selector import InfeasibleSelectionError, SelectionConfig, pareto_front, select
from skillroute.taxonomy import cluster_phrases, cosine_distance_matrix, embed_phrase


@pytest.fixture
def report(capsys):
    def _report(number, title, failures, detail=""):
        status = "PASS" if not failures else "FAIL"
        line = f"[{status}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        with capsys.disabled():
            print("\n" + line)
            for f in failures[:5]:
                print(f"    - {f}")
        assert not failures, line
    return _report


def test_criterion_1_selection_oracle(report):
    failures = []
    start = time.perf_counter()
    infeasible = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        mat, r_t, p_hat, tau, budget = random_selection_instance(rng)
        want = brute_force_select(mat, r_t, p_hat, tau, budget)
        try:
            got = select(mat, r_t, p_hat, SelectionConfig(tau=tau, budget=budget)).model_id
        except InfeasibleSelectionError:
            got = None
        infeasible += want is None
        if got != want:
            failures.append(f"seed {seed}: select={got} enumeration={want}")
    elapsed = time.perf_counter() - start
    if elapsed >= 10:
        failures.append(f"runtime {elapsed:.2f}s >= 10s")
    report(1, "selection matches exhaustive enumeration on 200 instances", failures,
           f"{len(failures)} mismatches, {infeasible} infeasible, {elapsed:.2f}s")


def test_criterion_2_worked_example(report):
    mat = make_matrices([[1.0], [1.0]], [10.0, 0.88], model_ids=["expensive", "cheap"],
                        skills=["numerical calculation"])
    p_hat = [0.90, 0.82]
    failures = []
    low = select(mat, [1], p_hat, SelectionConfig(budget=1.0))
    high = select(mat, [1], p_hat, SelectionConfig(budget=20.0))
    if low.model_id != "cheap":
        failures.append(f"budget 1.0 chose {low.model_id}")
    if [(r.model_id, r.reason) for r in low.rejected] != [("expensive", "over_budget")]:
        failures.append(f"budget 1.0 rejections {low.rejected}")
    if "expensive" not in low.rationale or "over_budget" not in low.rationale:
        failures.append("rationale does not list over_budget for the rejected model")
    if high.model_id != "expensive":
        failures.append(f"budget 20.0 chose {high.model_id}")
    report(2, "worked example flips with budget", failures,
           f"budget 1.0 -> {low.model_id}, budget 20.0 -> {high.model_id}")


def test_criterion_3_pareto(report):
    failures = []
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(1, 21))
        n_obj = 2 + seed % 2
        cost = rng.choice([0.5, 1.0, 2.0, 3.0, 5.0], n)
        p = rng.choice([0.4, 0.6, 0.7, 0.8, 0.9], n)
        lat = rng.choice([100.0, 400.0, 900.0], n) if n_obj == 3 else None
        pts = [(cost[i], p[i]) if lat is None else (cost[i], lat[i], p[i]) for i in range(n)]
        got = set(pareto_front(cost, p, lat))
        want = brute_force_front(pts)
        if got != want:
            failures.append(f"seed {seed}: got {sorted(got)} want {sorted(want)}")
    report(3, "pareto_front equals brute-force dominance on 100 pools", failures,
           f"{len(failures)} mismatches")


def test_criterion_4_nmf(report):
    failures = []
    worst = -np.inf
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        C = rng.uniform(0, 1, (6, 5))
        mask = rng.random((6, 5)) < 0.7
        h = np.array(nmf_factorize(C, mask, k=3, iterations=200, seed=seed).history)
        worst = max(worst, float(np.max(np.diff(h))))
        if np.any(np.diff(h) > 1e-10):
            failures.append(f"seed {seed}: objective rose by {np.max(np.diff(h)):.3e}")
    rank1 = np.array([[0.2, 0.4], [0.4, 0.8]])
    f = nmf_factorize(rank1, None, k=1, iterations=500, seed=42)
    err = float(np.sum((f.reconstruct() - rank1) ** 2))
    if err >= 1e-6:
        failures.append(f"rank-1 reconstruction error {err:.3e}")
    mask = np.ones((2, 2), dtype=bool)
    mask[1, 1] = False
    f = nmf_factorize(rank1, mask, k=1, iterations=500, seed=42)
    filled = float(impute(rank1, mask, f)[1, 1])
    if abs(filled - 0.8) > 0.05:
        failures.append(f"imputed {filled:.4f}, expected 0.8")
    report(4, "NMF monotone, rank-1 recovery and imputation", failures,
           f"max step {worst:.2e}, rank-1 err {err:.2e}, imputed {filled:.4f}")


def test_criterion_5_gradient_check(report):
    failures = []
    worst = 0.0
    rng = np.random.default_rng(7)
    S, h = 3, 1e-5
    for scheme in SCHEMES:
        pairs = [(rng.integers(0, 2, S).astype(float), rng.uniform(0, 1, S), rng.uniform(0, 1))
                 for _ in range(12)]
        X, y = design_matrix(pairs, scheme)
        for _ in range(10):
            p = rng.normal(0, 1, X.shape[1] + 1)
            _, g = loss_and_grad(p, X, y, 1e-2)
            num = np.array([(loss_and_grad(p + e, X, y, 1e-2)[0]
                             - loss_and_grad(p - e, X, y, 1e-2)[0]) / (2 * h)
                            for e in np.eye(len(p)) * h])
            rel = np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num), 1e-12)
            worst = max(worst, rel)
            if rel >= 1e-4:
                failures.append(f"{scheme}: relative error {rel:.3e}")
    report(5, "predictor gradient matches central differences", failures,
           f"4 schemes x 10 points, worst relative error {worst:.2e}")


def test_criterion_6_clustering(report):
    failures = []
    if cluster_phrases(TWENTY, 0.5) != cluster_phrases(list(TWENTY), 0.5):
        failures.append("reruns differ")
    counts = []
    for delta in np.linspace(0.05, 2.0, 40):
        labels = cluster_phrases(TWENTY, float(delta))
        if len(labels) != len(TWENTY) or sorted(set(labels)) != list(range(len(set(labels)))):
            failures.append(f"delta {delta:.3f}: labels are not a dense partition")
        counts.append(len(set(labels)))
    if any(a < b for a, b in zip(counts, counts[1:])):
        failures.append(f"cluster count not monotone: {counts}")
    for seed in range(30):
        rng = np.random.default_rng(seed)
        phrases = list(rng.choice(TWENTY, size=int(rng.integers(2, 9)), replace=False))
        delta = float(rng.uniform(0.2, 1.2))
        dist = cosine_distance_matrix(np.vstack([embed_phrase(p) for p in phrases]))
        if cluster_phrases(phrases, delta) != brute_average_linkage(dist, delta):
            failures.append(f"seed {seed}: disagrees with brute force")
    report(6, "clustering deterministic, partition, monotone, brute-force agreement",
           failures, f"counts {counts[0]}..{counts[-1]} over 40 deltas, 30 brute-force cases")


def test_criterion_7_handbuilt_matrices(report):
    failures = []
    d = handbuilt_dataset()
    for kappa, (want_C, want_obs, want_R) in HAND_EXPECTED.items():
        C, observed = build_C(d, HAND_TAXONOMY, kappa)
        R = build_R(d, HAND_TAXONOMY, kappa, rho=0.5)
        for name, got, want in (("C", C.tolist(), want_C), ("observed", observed.tolist(), want_obs),
                                ("R", R.tolist(), want_R)):
            if got != want:
                failures.append(f"kappa {kappa}: {name} = {got}, expected {want}")
    C, observed = build_C(d, HAND_TAXONOMY, 0.5)
    if C[0, 0] != 0.75:
        failures.append(f"3-of-4 cell is {C[0, 0]}")
    if observed[1, 1] or C[1, 1] != 0.0:
        failures.append("unobserved cell not flagged")
    report(7, "hand-built C and R match hand-computed values", failures)


def _delete_then_rebuild(dataset, task_id, cfg, workdir):
    """Write the dataset to disk, strip every line of one task, and rebuild."""
    paths = dump_dataset(dataset, workdir)
    for path in paths.values():
        lines = path.read_text().splitlines()
        kept = [ln for ln in lines if json.loads(ln).get("task_id") != task_id]
        path.write_text("".join(ln + "\n" for ln in kept))
    return build_artifacts(parse_dataset(workdir), cfg)


def test_criterion_8_loocv_end_to_end(report, tmp_path):
    failures = []
    dataset, _ = generate_synthetic(M=4, S=3, T=5, n=50, seed=42)
    costs = sorted(m.cost_per_query for m in dataset.models)
    cfg = EngineConfig(budget=costs[-2])

    start = time.perf_counter()
    reports = loocv(dataset, cfg)
    summary = metrics(reports)
    elapsed = time.perf_counter() - start

    skill = summary[f"skill:{cfg.predictor}"]["selection_precision"]
    rand = summary["random_under_budget"]["selection_precision"]
    if skill < rand + 0.2:
        failures.append(f"skill precision {skill:.2f} < random {rand:.2f} + 0.2")
    for r in reports:
        ref = _delete_then_rebuild(dataset, r.held_out_task, cfg, tmp_path / r.held_out_task)
        for part in ("taxonomy", "matrices", "factors", "predictor"):
            a, b = getattr(r.artifacts, part), getattr(ref, part)
            if (a is None) != (b is None) or (a is not None and a.to_json() != b.to_json()):
                failures.append(f"fold {r.held_out_task}: {part} differs from rebuild")
    if elapsed >= 60:
        failures.append(f"runtime {elapsed:.1f}s >= 60s")
    table = ", ".join(f"{k} {v['selection_precision']:.2f}" for k, v in summary.items())
    report(8, "LOOCV skill policy beats random by 0.2 with no leakage", failures,
           f"budget {cfg.budget:.6g}, {elapsed:.2f}s; precision: {table}")


def test_criterion_9_frontier(report, tmp_path, capsys):
    failures = []
    outs = []
    for name in ("first.csv", "second.csv"):
        path = tmp_path / name
        if run(["frontier", "--dataset", str(fixture_dir()), "--out", str(path)]) != 0:
            failures.append(f"{name}: non-zero exit")
        outs.append(path.read_bytes() if path.exists() else b"")
    capsys.readouterr()
    reader = csv.DictReader(io.StringIO(outs[0].decode()))
    rows, header = list(reader), reader.fieldnames
    ids = [r["model_id"] for r in rows]
    expected = parse_dataset(fixture_dir()).model_ids
    if sorted(ids) != sorted(expected) or len(ids) != len(set(ids)):
        failures.append(f"models {ids}, expected each of {expected} once")
    for r in rows:
        if not float(r["cost_per_query"]) > 0:
            failures.append(f"{r['model_id']}: cost {r['cost_per_query']}")
        if not 0.0 <= float(r["mean_score"]) <= 1.0:
            failures.append(f"{r['model_id']}: score {r['mean_score']}")
    if outs[0] != outs[1]:
        failures.append("rerun produced a different file")
    report(9, "frontier CSV complete, in range and reproducible", failures,
           f"{len(rows)} models, columns {header}")
