"""Leave-one-task-out evaluation, routing baselines, metrics and synthetic data."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import PREDICTOR_SOURCES, EngineConfig
from .engine import Artifacts, build_artifacts, estimate_p_hat, selection_config
from .matrices import requirement_row, score_matrix
from .records import (Dataset, InstanceOutcome, InstanceProfile, ModelSpec, SkillMention,
                      TaskSpec)
from .selector import InfeasibleSelectionError, pareto_front, select
from .taxonomy import UnknownPhraseError

logger = logging.getLogger(__name__)

SKILL_POLICIES = tuple(f"skill:{s}" for s in PREDICTOR_SOURCES)
BASELINE_POLICIES = ("best_under_budget_proxy", "cascade_proxy", "cheapest", "random_under_budget")

SKILL_NAMES = (
    "numerical calculation", "temporal reasoning", "fact verification", "table extraction",
    "sentiment judgment", "entity recognition", "causal inference", "unit conversion",
    "regulatory knowledge", "date arithmetic", "summarization", "logical deduction",
    "currency handling", "trend detection", "ratio analysis", "claim attribution",
)


# --------------------------------------------------------------------------
# synthetic populations


@dataclass
class SyntheticPopulation:
    true_proficiency: np.ndarray   # models x skills
    task_requirements: np.ndarray  # tasks x skills, {0, 1}
    skill_names: tuple[str, ...]
    seed: int


def generate_synthetic(M: int = 4, S: int = 3, T: int = 5, n: int = 50,
                       cost_spread: float = 20.0, seed: int = 42,
                       proficiency: np.ndarray | None = None) -> tuple[Dataset, SyntheticPopulation]:
    """Draw a population where an instance succeeds iff all its required skills fire.

    Each required skill fires independently with the model's true proficiency;
    the critic profile reports fired skills as demonstrated and the rest as
    missing. Costs grow geometrically with mean proficiency (spanning a factor
    of ``cost_spread``) times seeded log-normal noise.
    """
    if min(M, S, T, n) < 1:
        raise ValueError("all dimensions must be >= 1")
    if S > len(SKILL_NAMES):
        raise ValueError(f"at most {len(SKILL_NAMES)} distinct synthetic skills are available")
    rng = np.random.default_rng(seed)
    prof = rng.uniform(0.3, 0.95, (M, S))
    if proficiency is not None:
        prof = np.broadcast_to(np.asarray(proficiency, dtype=float), (M, S)).copy()
    req = np.zeros((T, S), dtype=np.int8)
    for t in range(T):
        k = int(rng.integers(1, min(3, S) + 1))
        req[t, rng.choice(S, size=k, replace=False)] = 1

    mean = prof.mean(axis=1)
    span = mean.max() - mean.min()
    z = (mean - mean.min()) / span if span > 0 else np.zeros(M)
    noise = np.exp(rng.normal(0.0, 0.1, M))
    costs = 0.05 * cost_spread ** z * noise
    latency = 100.0 + 900.0 * z

    names = SKILL_NAMES[:S]
    models = tuple(ModelSpec(f"model-{m}", round(float(costs[m]), 6), round(float(latency[m]), 3),
                             f"Synthetic model {m}") for m in range(M))
    tasks = tuple(TaskSpec(f"task-{t}", "accuracy") for t in range(T))
    outcomes, profiles = [], []
    for t in range(T):
        skills = np.flatnonzero(req[t])
        for i in range(n):
            iid = f"t{t}-i{i}"
            for m in range(M):
                fired = rng.random(len(skills)) < prof[m, skills]
                correct = bool(np.all(fired))
                outcomes.append(InstanceOutcome(models[m].model_id, tasks[t].task_id, iid, correct))
                mentions = tuple(SkillMention(names[s], "demonstrated" if f else "missing", 1.0)
                                 for s, f in zip(skills, fired))
                profiles.append(InstanceProfile(models[m].model_id, tasks[t].task_id, iid, mentions))
    d = Dataset(models, tasks, tuple(outcomes), tuple(profiles))
    return d, SyntheticPopulation(prof, req, names, seed)


# --------------------------------------------------------------------------
# policies


def policy_cascade(order: list[int], p_hat, theta: float) -> int | None:
    """First model in ``order`` (ascending cost, already within budget) whose
    p_hat reaches ``theta``; otherwise the highest-p_hat model."""
    if not order:
        return None
    for m in order:
        if p_hat[m] >= theta:
            return m
    return max(order, key=lambda m: (p_hat[m], -order.index(m)))


def _within(costs, lats, cfg: EngineConfig) -> list[int]:
    ok = []
    for m in range(len(costs)):
        if cfg.budget is not None and costs[m] > cfg.budget:
            continue
        if cfg.latency_budget is not None and lats[m] > cfg.latency_budget:
            continue
        ok.append(m)
    return ok


def baseline_policies(ids, costs, lats, p_hat, cfg: EngineConfig,
                      rng: np.random.Generator) -> dict[str, int | None]:
    """Skill-agnostic routing baselines; None marks an empty feasible set."""
    ok = _within(costs, lats, cfg)
    by_cost = sorted(ok, key=lambda m: (costs[m], ids[m]))
    out: dict[str, int | None] = {}
    out["best_under_budget_proxy"] = (min(ok, key=lambda m: (-p_hat[m], costs[m], ids[m]))
                                      if ok else None)
    out["cascade_proxy"] = policy_cascade(by_cost, p_hat, cfg.theta)
    out["cheapest"] = by_cost[0] if by_cost else None
    out["random_under_budget"] = int(rng.choice(ok)) if ok else None
    return out


# --------------------------------------------------------------------------
# LOOCV


@dataclass
class PolicyResult:
    selected: str | None
    total_cost: float = 0.0
    achieved_score: float = float("nan")
    matched_oracle: bool = False
    error: str = ""


@dataclass
class FoldReport:
    held_out_task: str
    n_instances: int
    degenerate: bool = False
    oracle_model: str | None = None
    oracle_score: float = float("nan")
    reference_model: str | None = None
    reference_score: float = float("nan")
    requirements: list[str] = field(default_factory=list)
    unknown_phrases: list[str] = field(default_factory=list)
    policies: dict[str, PolicyResult] = field(default_factory=dict)
    artifacts: Artifacts | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "held_out_task": self.held_out_task,
            "n_instances": self.n_instances,
            "degenerate": self.degenerate,
            "oracle_model": self.oracle_model,
            "oracle_score": _num(self.oracle_score),
            "reference_model": self.reference_model,
            "reference_score": _num(self.reference_score),
            "requirements": self.requirements,
            "unknown_phrases": self.unknown_phrases,
            "policies": {k: {"selected": v.selected, "total_cost": v.total_cost,
                             "achieved_score": _num(v.achieved_score),
                             "matched_oracle": v.matched_oracle, "error": v.error}
                         for k, v in self.policies.items()},
        }


def _num(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def held_out_requirements(held: Dataset, art: Artifacts, cfg: EngineConfig, embedder=None):
    """Requirement row for an unseen task from its own profiles, mapping each
    phrase to the nearest training skill centroid. Returns (row, unknown phrases),
    or (None, unknown) when no phrase could be placed."""
    tax = art.taxonomy
    inst: dict = {}
    unknown: list[str] = []
    placed = 0
    for prof in held.profiles:
        skills = inst.setdefault((prof.task_id, prof.instance_id), set())
        for m in prof.mentions:
            if m.criticality < cfg.kappa:
                continue
            try:
                skills.add(tax.resolve(m.phrase, assign_unknown=True, embedder=embedder))
                placed += 1
            except UnknownPhraseError:
                if m.phrase not in unknown:
                    unknown.append(m.phrase)
    if not placed:
        return None, unknown
    reqs = {k: frozenset(v) for k, v in inst.items()}
    return requirement_row(reqs, held.tasks[0].task_id, tax.size, cfg.rho), unknown


def oracle_choice(ids, costs, lats, scores, cfg: EngineConfig) -> int | None:
    """Exhaustive optimum of held-out score under the same budgets as the policies."""
    best = None
    for m in _within(costs, lats, cfg):
        if np.isnan(scores[m]):
            continue
        key = (-scores[m], costs[m], ids[m])
        if best is None or key < best[0]:
            best = (key, m)
    return None if best is None else best[1]


def run_fold(dataset: Dataset, fold: int, task_id: str, cfg: EngineConfig,
             embedder=None) -> FoldReport:
    train = dataset.without_task(task_id)
    held = dataset.only_task(task_id)
    art = build_artifacts(train, cfg, embedder=embedder)
    mat = art.matrices
    ids = list(mat.model_ids)
    costs, lats = mat.c, mat.latency
    held_scores = score_matrix(held)[:, 0]
    n_inst = len({o.instance_id for o in held.outcomes})

    report = FoldReport(task_id, n_inst, artifacts=art)
    ref = max(range(len(ids)), key=lambda m: (costs[m], ids[m])) if ids else None
    if ref is not None:
        report.reference_model = ids[ref]
        report.reference_score = float(held_scores[ref])
    oracle = oracle_choice(ids, costs, lats, held_scores, cfg)
    if oracle is not None:
        report.oracle_model = ids[oracle]
        report.oracle_score = float(held_scores[oracle])

    r_t, unknown = held_out_requirements(held, art, cfg, embedder)
    report.unknown_phrases = unknown
    if r_t is None:
        logger.warning("fold %s is degenerate: no held-out skill maps to the training taxonomy",
                       task_id)
        report.degenerate = True
        return report
    report.requirements = [mat.skills[s] for s in np.flatnonzero(r_t)]

    choices: dict[str, int | None] = {}
    errors: dict[str, str] = {}
    sel_cfg = selection_config(cfg, unbounded_ok=True)
    for source in PREDICTOR_SOURCES:
        name = f"skill:{source}"
        p = estimate_p_hat(art, r_t, source, cfg.use_imputed)
        try:
            rec = select(mat, r_t, p, sel_cfg, art.imputed)
            choices[name] = ids.index(rec.model_id)
        except InfeasibleSelectionError as exc:
            choices[name] = None
            errors[name] = str(exc)
    p_main = estimate_p_hat(art, r_t, cfg.predictor, cfg.use_imputed)
    rng = np.random.default_rng([cfg.seed, fold])
    choices.update(baseline_policies(ids, costs, lats, p_main, cfg, rng))

    for name, m in choices.items():
        if m is None:
            report.policies[name] = PolicyResult(
                None, error=errors.get(name, "empty feasible set under budget"))
            continue
        report.policies[name] = PolicyResult(
            selected=ids[m],
            total_cost=float(costs[m]) * n_inst,
            achieved_score=float(held_scores[m]),
            matched_oracle=oracle is not None and m == oracle,
        )
    return report


def loocv(dataset: Dataset, cfg: EngineConfig, embedder=None) -> list[FoldReport]:
    """Hold out each task in turn, rebuild everything from the rest, and score
    every policy on the held-out outcomes."""
    if len(dataset.tasks) < 2:
        raise ValueError("leave-one-out evaluation needs at least 2 tasks")
    return [run_fold(dataset, i, t, cfg, embedder) for i, t in enumerate(dataset.task_ids)]


def metrics(reports: list[FoldReport]) -> dict[str, dict]:
    """Per-policy total cost, accuracy gap to the most expensive model, and
    selection precision against the budgeted oracle. Degenerate folds are skipped;
    infeasible folds count as misses and are excluded from the gap."""
    live = [r for r in reports if not r.degenerate]
    if not live:
        raise ValueError("no non-degenerate folds to summarize")
    names: list[str] = []
    for r in live:
        names.extend(n for n in r.policies if n not in names)
    out = {}
    for name in names:
        results = [(r, r.policies[name]) for r in live if name in r.policies]
        gaps = [r.reference_score - res.achieved_score for r, res in results
                if res.selected is not None and not math.isnan(res.achieved_score)]
        out[name] = {
            "total_cost": float(sum(res.total_cost for _, res in results)),
            "accuracy_gap": float(np.mean(gaps)) if gaps else None,
            "selection_precision": sum(res.matched_oracle for _, res in results) / len(results),
            "folds": len(results),
            "infeasible_folds": sum(res.selected is None for _, res in results),
        }
    return out


def evaluation_report(dataset: Dataset, cfg: EngineConfig, embedder=None) -> dict:
    reports = loocv(dataset, cfg, embedder)
    summary = metrics(reports) if any(not r.degenerate for r in reports) else {}
    return {
        "config": {"budget": cfg.budget, "latency_budget": cfg.latency_budget, "tau": cfg.tau,
                   "predictor": cfg.predictor, "scheme": cfg.scheme, "mode": cfg.mode,
                   "theta": cfg.theta, "seed": cfg.seed},
        "primary_policy": f"skill:{cfg.predictor}",
        "accuracy_gap_reference": "most expensive pool model",
        "folds": [r.to_dict() for r in reports],
        "summary": summary,
    }


# --------------------------------------------------------------------------
# cost/performance frontier


def frontier_rows(dataset: Dataset) -> list[dict]:
    """One row per model: cost, mean score over every outcome, and whether it is
    on the cost/score Pareto front. Sorted by ascending cost, then id."""
    ids = dataset.model_ids
    totals = {m: [0.0, 0] for m in ids}
    for o in dataset.outcomes:
        totals[o.model_id][0] += o.score
        totals[o.model_id][1] += 1
    costs = np.array([dataset.model(m).cost_per_query for m in ids])
    means = np.array([totals[m][0] / totals[m][1] if totals[m][1] else 0.0 for m in ids])
    front = set(pareto_front(costs, means)) if ids else set()
    order = sorted(range(len(ids)), key=lambda i: (costs[i], ids[i]))
    rows = []
    for i in order:
        rows.append({"model_id": ids[i], "display_name": dataset.model(ids[i]).display_name,
                     "cost_per_query": f"{costs[i]:.6g}", "mean_score": f"{means[i]:.6f}",
                     "n_outcomes": totals[ids[i]][1], "on_frontier": int(i in front)})
    return rows


def frontier_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    cols = ["model_id", "display_name", "cost_per_query", "mean_score", "n_outcomes", "on_frontier"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    writer.writerows(frontier_rows(dataset))
    return buf.getvalue()
