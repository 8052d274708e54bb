"""Small dataset and matrix builders shared by the test modules."""
import itertools

import numpy as np

from skillroute.matrices import CapabilityMatrices
from skillroute.records import (Dataset, InstanceOutcome, InstanceProfile, ModelSpec,
                                SkillMention, TaskSpec)
from skillroute.taxonomy import SkillTaxonomy

NUM, FACT = "numerical calculation", "fact verification"
HAND_TAXONOMY = SkillTaxonomy((NUM, FACT), {NUM: 0, FACT: 1})

# near-duplicate paraphrases plus unrelated skills
TWENTY = [
    "numerical calculation", "numeric calculation", "numerical calculations",
    "temporal reasoning", "temporal reasoning over dates", "fact verification",
    "factual verification", "table extraction", "tabular extraction", "table data extraction",
    "sentiment judgment", "sentiment judgement", "entity recognition", "named entity recognition",
    "causal inference", "unit conversion", "regulatory knowledge", "date arithmetic",
    "summarization", "logical deduction",
]


def mention(phrase, status="demonstrated", criticality=1.0):
    return SkillMention(phrase, status, criticality)


def make_dataset(models, tasks, rows):
    """``rows``: (model_id, task_id, instance_id, correct, [mentions])."""
    outcomes = tuple(InstanceOutcome(m, t, i, c) for m, t, i, c, _ in rows)
    profiles = tuple(InstanceProfile(m, t, i, tuple(ms)) for m, t, i, _, ms in rows)
    return Dataset(tuple(models), tuple(tasks), outcomes, profiles)


def make_matrices(C, costs, observed=None, latency=None, skills=None, model_ids=None):
    C = np.asarray(C, dtype=float)
    M, S = C.shape
    return CapabilityMatrices(
        model_ids=tuple(model_ids or [f"m{i}" for i in range(M)]),
        task_ids=(),
        skills=tuple(skills or [f"s{j}" for j in range(S)]),
        C=C,
        observed=np.ones_like(C, dtype=bool) if observed is None else np.asarray(observed, dtype=bool),
        R=np.zeros((0, S), dtype=np.int8),
        c=np.asarray(costs, dtype=float),
        latency=np.zeros(M) if latency is None else np.asarray(latency, dtype=float),
    )


def handbuilt_dataset():
    """Two models, two tasks, six instances.

    Model A is profiled everywhere; B only on instances 1 and 2, so B never
    sees a fact-verification instance. Instance 6 carries a low-criticality
    numerical mention that a floor of 0.5 filters out.
    """
    models = [ModelSpec("A", 2.0, 800.0), ModelSpec("B", 0.5, 200.0)]
    tasks = [TaskSpec("T1"), TaskSpec("T2")]
    rows = [
        ("A", "T1", "i1", True, [mention(NUM)]),
        ("A", "T1", "i2", True, [mention(NUM)]),
        ("A", "T1", "i3", True, [mention(NUM)]),
        ("A", "T1", "i4", False, [mention(NUM, "missing")]),
        ("A", "T2", "i5", True, [mention(FACT)]),
        ("A", "T2", "i6", True, [mention(FACT), mention(NUM, "missing", 0.2)]),
        ("B", "T1", "i1", True, [mention(NUM)]),
        ("B", "T1", "i2", False, [mention(NUM, "missing")]),
    ]
    return make_dataset(models, tasks, rows)


# hand-computed from the docstring above: (C, observed, R) at rho = 0.5
HAND_EXPECTED = {
    0.0: ([[3 / 5, 1.0], [1 / 2, 0.0]], [[True, True], [True, False]], [[1, 0], [1, 1]]),
    0.5: ([[3 / 4, 1.0], [1 / 2, 0.0]], [[True, True], [True, False]], [[1, 0], [0, 1]]),
}


# --------------------------------------------------------------------------
# selection oracles


def random_selection_instance(rng: np.random.Generator, max_models=6, max_skills=8):
    """A pool with quantized values so ties on p_hat, cost and the threshold occur."""
    M = int(rng.integers(1, max_models + 1))
    S = int(rng.integers(1, max_skills + 1))
    C = rng.choice([0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], size=(M, S))
    observed = rng.random((M, S)) < 0.85
    C = np.where(observed, C, 0.0)
    costs = rng.choice([0.18, 0.88, 1.2, 3.0, 10.0], size=M)
    p_hat = rng.choice([0.5, 0.7, 0.82, 0.9], size=M)
    r_t = (rng.random(S) < 0.25).astype(np.int8)
    tau = float(rng.choice([0.5, 0.7, 0.9]))
    budget = float(rng.choice([0.5, 1.0, 2.0, 5.0, 20.0, 50.0]))
    ids = [f"m{i}" for i in rng.permutation(M)]
    return make_matrices(C, costs, observed=observed, model_ids=ids), r_t, p_hat, tau, budget


def brute_force_select(mat, r_t, p_hat, tau, budget):
    """Enumerate every pool model and keep the best feasible one by
    (p_hat desc, cost asc, id asc); None when nothing is feasible."""
    best = None
    for m, mid in enumerate(mat.model_ids):
        if mat.c[m] > budget:
            continue
        if any(r_t[s] and not (mat.observed[m, s] and mat.C[m, s] >= tau)
               for s in range(len(r_t))):
            continue
        cand = (p_hat[m], mat.c[m], mid)
        if (best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1])
                or (cand[0] == best[0] and cand[1] == best[1] and cand[2] < best[2])):
            best = cand
    return None if best is None else best[2]


def brute_force_front(points):
    """points: list of (cost, [latency,] p_hat) tuples; p_hat is maximized."""
    def dominates(a, b):
        ge = all(x <= y for x, y in zip(a[:-1], b[:-1])) and a[-1] >= b[-1]
        gt = any(x < y for x, y in zip(a[:-1], b[:-1])) or a[-1] > b[-1]
        return ge and gt
    return {i for i, p in enumerate(points)
            if not any(dominates(q, p) for j, q in enumerate(points) if j != i)}


def brute_average_linkage(dist, delta):
    """Recompute every inter-cluster average from scratch at each step."""
    clusters = [[i] for i in range(len(dist))]
    while len(clusters) > 1:
        scored = []
        for a, b in itertools.combinations(range(len(clusters)), 2):
            avg = np.mean([dist[i, j] for i in clusters[a] for j in clusters[b]])
            scored.append((avg, min(clusters[a]), min(clusters[b]), a, b))
        best = min(s[0] for s in scored)
        if best > delta:
            break
        _, _, _, a, b = min(s for s in scored if s[0] <= best + 1e-12)
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return canon_labels([next(k for k, c in enumerate(clusters) if i in c) for i in range(len(dist))])


def canon_labels(labels):
    seen = {}
    return [seen.setdefault(x, len(seen)) for x in labels]
