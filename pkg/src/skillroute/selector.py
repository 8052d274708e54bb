"""Skill-aware, budget-constrained model selection with rationale."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .matrices import CapabilityMatrices
from .taxonomy import UnknownPhraseError

MODES = ("single_budget", "pareto", "scalarized")
DEFAULT_TAU = 0.5


class SelectionError(ValueError):
    pass


class InfeasibleSelectionError(SelectionError):
    """No pool model passes the skill filter and every budget."""

    def __init__(self, message: str, nearest_miss: str | None, constraint: str | None):
        self.nearest_miss = nearest_miss
        self.constraint = constraint
        super().__init__(message)


@dataclass(frozen=True)
class SelectionConfig:
    tau: float = DEFAULT_TAU
    budget: float | None = None
    latency_budget: float | None = None
    mode: str = "single_budget"
    # (p_hat, cost, latency) priorities for scalarized mode
    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    use_imputed: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise SelectionError(f"tau must lie in [0, 1], got {self.tau}")
        if self.mode not in MODES:
            raise SelectionError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("budget", "latency_budget"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise SelectionError(f"{name} must be a non-negative number, got {v}")
        if self.mode != "pareto" and self.budget is None and self.latency_budget is None:
            raise SelectionError(f"mode {self.mode!r} needs a budget or latency budget")
        if self.mode == "scalarized":
            w = self.weights
            if len(w) != 3 or any(x < 0 for x in w) or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
                raise SelectionError(f"scalarization weights must be 3 non-negative reals summing to 1, got {w}")


@dataclass(frozen=True)
class Rejection:
    model_id: str
    reason: str  # failed_skill | over_budget | dominated | outranked
    skill: str | None = None
    constraint: str | None = None
    detail: str = ""


@dataclass
class Recommendation:
    model_id: str
    p_hat: float
    cost: float
    latency: float
    qualifying_skills: list[str]
    margins: dict[str, float]
    rejected: list[Rejection]
    mode: str
    binding_constraint: str = "none"
    front: list[str] = field(default_factory=list)
    rationale: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rejected"] = [asdict(r) for r in self.rejected]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# --------------------------------------------------------------------------
# requirements and filtering


def infer_requirements(R: np.ndarray, task_ids: Sequence[str], taxonomy_skills: Sequence[str],
                       task_id: str | None = None, skills: Sequence[str] | None = None) -> np.ndarray:
    """The R row of a known task, or the binary vector of an explicit skill list."""
    if skills:
        r = np.zeros(len(taxonomy_skills), dtype=np.int8)
        lookup = {s: i for i, s in enumerate(taxonomy_skills)}
        for s in skills:
            key = " ".join(s.split()).lower()
            if key not in lookup:
                raise UnknownPhraseError(s, f"unknown skill {s!r}")
            r[lookup[key]] = 1
        return r
    if task_id is not None:
        if task_id not in task_ids:
            raise SelectionError(f"unknown task {task_id!r} and no explicit skill list")
        return np.asarray(R[list(task_ids).index(task_id)], dtype=np.int8).copy()
    raise SelectionError("need a task id or an explicit skill list")


def infer_requirements_for(matrices: CapabilityMatrices, task_id: str | None = None,
                           skills: Sequence[str] | None = None, taxonomy=None) -> np.ndarray:
    """Like :func:`infer_requirements`; with a taxonomy, explicit phrases that are not
    canonical labels are mapped through it (seen paraphrases or the nearest centroid)."""
    if skills and taxonomy is not None:
        labels = set(matrices.skills)
        skills = [s if " ".join(s.split()).lower() in labels
                  else taxonomy.skills[taxonomy.resolve(s, assign_unknown=True)]
                  for s in skills]
    return infer_requirements(matrices.R, matrices.task_ids, matrices.skills, task_id, skills)


def effective_capability(C, observed, imputed=None) -> np.ndarray:
    """Observed C entries, imputed values in unobserved cells when given, else
    NaN (which fails every threshold test)."""
    C = np.asarray(C, dtype=float)
    obs = np.asarray(observed, dtype=bool)
    if imputed is not None:
        return np.where(obs, C, np.asarray(imputed, dtype=float))
    return np.where(obs, C, np.nan)


def failed_skills(eff_row, r_t, tau: float) -> list[int]:
    req = np.flatnonzero(np.asarray(r_t))
    return [int(s) for s in req if not (eff_row[s] >= tau)]


def filter_capable(C, observed, r_t, tau: float, imputed=None) -> list[int]:
    """Rows whose effective entry meets ``tau`` on every required skill."""
    eff = effective_capability(C, observed, imputed)
    return [m for m in range(eff.shape[0]) if not failed_skills(eff[m], r_t, tau)]


# --------------------------------------------------------------------------
# multi-objective helpers


def pareto_front(costs, p_hat, latency=None) -> list[int]:
    """Indices not dominated on (cost down, latency down, p_hat up), by ascending cost.

    A point dominates another when it is no worse on every objective and
    strictly better on at least one; duplicates therefore both survive.
    """
    costs = np.asarray(costs, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    cols = [costs, -p] if latency is None else [costs, np.asarray(latency, dtype=float), -p]
    obj = np.column_stack(cols)
    n = len(p)
    keep = []
    for i in range(n):
        no_worse = np.all(obj <= obj[i], axis=1)
        better = np.any(obj < obj[i], axis=1)
        if not np.any(no_worse & better):
            keep.append(i)
    return sorted(keep, key=lambda i: (costs[i], -p[i], i))


def _minmax(values: np.ndarray, higher_is_better: bool) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo) if higher_is_better else (hi - values) / (hi - lo)


def scalarize(model_ids: Sequence[str], p_hat, costs, latency, weights) -> list[tuple[str, float]]:
    """Weighted sum of min-max normalized (p_hat, -cost, -latency), best first."""
    p = np.asarray(p_hat, dtype=float)
    c = np.asarray(costs, dtype=float)
    lat = np.zeros_like(c) if latency is None else np.asarray(latency, dtype=float)
    if len(p) == 0:
        return []
    score = (weights[0] * _minmax(p, True) + weights[1] * _minmax(c, False)
             + weights[2] * _minmax(lat, False))
    order = sorted(range(len(p)), key=lambda i: (-score[i], c[i], model_ids[i]))
    return [(model_ids[i], float(score[i])) for i in order]


# --------------------------------------------------------------------------
# selection


def _over(cost: float, latency: float, config: SelectionConfig) -> str | None:
    if config.budget is not None and cost > config.budget:
        return "budget"
    if config.latency_budget is not None and latency > config.latency_budget:
        return "latency"
    return None


def select(matrices: CapabilityMatrices, r_t, p_hat: Mapping[str, float] | Sequence[float],
           config: SelectionConfig, imputed=None) -> Recommendation:
    """Filter the pool by skill thresholds, then pick per ``config.mode``.

    In single-budget mode this solves: maximize p_hat over capable models with
    cost <= budget, ties to the cheaper model, then the smaller id.
    """
    ids = list(matrices.model_ids)
    if isinstance(p_hat, Mapping):
        p = np.array([float(p_hat[m]) for m in ids])
    else:
        p = np.asarray(p_hat, dtype=float)
    r_t = np.asarray(r_t)
    costs, lats = matrices.c, matrices.latency
    eff = effective_capability(matrices.C, matrices.observed,
                               imputed if config.use_imputed else None)

    rejected: dict[int, Rejection] = {}
    feasible: list[int] = []
    capable: list[int] = []
    for m, mid in enumerate(ids):
        fails = failed_skills(eff[m], r_t, config.tau)
        if fails:
            s = fails[0]
            val = eff[m, s]
            shown = "unobserved" if np.isnan(val) else f"{val:.3f}"
            rejected[m] = Rejection(mid, "failed_skill", skill=matrices.skills[s], constraint="tau",
                                    detail=f"{matrices.skills[s]}: {shown} < tau {config.tau}")
            continue
        capable.append(m)
        over = _over(costs[m], lats[m], config)
        if over == "budget":
            rejected[m] = Rejection(mid, "over_budget", constraint="budget",
                                    detail=f"cost {costs[m]:.4g} > budget {config.budget:.4g}")
        elif over == "latency":
            rejected[m] = Rejection(mid, "over_budget", constraint="latency",
                                    detail=f"latency {lats[m]:.4g} ms > budget {config.latency_budget:.4g} ms")
        else:
            feasible.append(m)

    if not feasible:
        raise _infeasible(ids, eff, r_t, capable, costs, lats, config, matrices.skills)

    front: list[str] = []
    if config.mode == "scalarized":
        ranking = scalarize([ids[m] for m in feasible], p[feasible], costs[feasible],
                            lats[feasible], config.weights)
        chosen = ids.index(ranking[0][0])
        for mid, score in ranking[1:]:
            m = ids.index(mid)
            rejected[m] = Rejection(mid, "outranked", detail=f"scalarized score {score:.4f} "
                                    f"< {ranking[0][1]:.4f}")
    else:
        chosen = min(feasible, key=lambda m: (-p[m], costs[m], ids[m]))
        on_front: set[int] = set()
        if config.mode == "pareto":
            lat_arg = lats[feasible] if config.latency_budget is not None or np.any(lats) else None
            front_local = pareto_front(costs[feasible], p[feasible], lat_arg)
            on_front = {feasible[i] for i in front_local}
            front = [ids[feasible[i]] for i in front_local]
        for m in feasible:
            if m == chosen:
                continue
            if config.mode == "pareto" and m in on_front:
                rejected[m] = Rejection(ids[m], "outranked",
                                        detail=f"on the Pareto front but p_hat {p[m]:.3f} <= {p[chosen]:.3f}")
            else:
                rejected[m] = Rejection(ids[m], "dominated",
                                        detail=f"p_hat {p[m]:.3f} vs {p[chosen]:.3f} at cost "
                                               f"{costs[m]:.4g} vs {costs[chosen]:.4g}")

    qualifying, margins, note = skill_margins(eff, r_t, chosen, matrices.skills, config.tau)
    rec = Recommendation(
        model_id=ids[chosen], p_hat=float(p[chosen]), cost=float(costs[chosen]),
        latency=float(lats[chosen]), qualifying_skills=qualifying, margins=margins,
        rejected=[rejected[m] for m in range(len(ids)) if m in rejected],
        mode=config.mode, front=front,
    )
    rec.binding_constraint = binding_constraint(rec, p, ids)
    rec.rationale = render_rationale(rec, config, note)
    return rec


def _infeasible(ids, eff, r_t, capable, costs, lats, config, skills) -> InfeasibleSelectionError:
    if capable:
        # cheapest capable model is the closest to fitting the budgets
        m = min(capable, key=lambda m: (costs[m], lats[m], ids[m]))
        constraint = _over(costs[m], lats[m], config)
        return InfeasibleSelectionError(
            f"no capable model within budget; nearest miss {ids[m]!r} "
            f"(cost {costs[m]:.4g}, latency {lats[m]:.4g} ms) violates the {constraint} constraint",
            ids[m], constraint)
    if not ids:
        return InfeasibleSelectionError("empty model pool", None, None)
    req = np.flatnonzero(r_t)

    def shortfall(m):
        vals = np.nan_to_num(eff[m, req], nan=0.0)
        return float(np.max(config.tau - vals)) if len(req) else 0.0

    m = min(range(len(ids)), key=lambda m: (shortfall(m), costs[m], ids[m]))
    s = failed_skills(eff[m], r_t, config.tau)[0]
    return InfeasibleSelectionError(
        f"no model meets tau={config.tau} on every required skill; nearest miss {ids[m]!r} "
        f"falls short on {skills[s]!r}", ids[m], f"tau:{skills[s]}")


def skill_margins(eff, r_t, m: int, skills: Sequence[str], tau: float):
    """Qualifying skills of model ``m`` and their margins over the best rival.

    Margins compare against the whole pool; unobserved rival cells count as 0.
    """
    eff0 = np.nan_to_num(np.asarray(eff, dtype=float), nan=0.0)
    req = [int(s) for s in np.flatnonzero(np.asarray(r_t))]
    qualifying = [skills[s] for s in req if eff0[m, s] >= tau]
    margins = {}
    note = ""
    others = np.delete(eff0, m, axis=0)
    for s in req:
        rival = others[:, s].max() if len(others) else 0.0
        margins[skills[s]] = float(eff0[m, s] - rival)
    if len(others) == 0:
        note = "single-model pool: margins are measured against 0"
    return qualifying, margins, note


def explain(m: int, C, r_t, tau: float, skills: Sequence[str], observed=None):
    """Margins and text for model ``m`` against every other pool model."""
    eff = C if observed is None else effective_capability(C, observed)
    qualifying, margins, note = skill_margins(eff, r_t, m, skills, tau)
    lines = [f"qualifying skills: {', '.join(qualifying) or '(none)'}"]
    for s, v in margins.items():
        lines.append(f"  {s}: margin {v:+.3f}")
    if note:
        lines.append(f"  note: {note}")
    return "\n".join(lines), margins


def binding_constraint(rec: Recommendation, p: np.ndarray, ids: Sequence[str]) -> str:
    """Which rule excluded a model scoring higher than the selection, if any."""
    best = rec.p_hat
    reasons = []
    for rej in rec.rejected:
        if p[ids.index(rej.model_id)] > best:
            if rej.reason == "over_budget":
                reasons.append(rej.constraint)
            elif rej.reason == "failed_skill":
                reasons.append("tau")
    for name in ("budget", "latency", "tau"):
        if name in reasons:
            return name
    return "none"


def render_rationale(rec: Recommendation, config: SelectionConfig, note: str = "") -> str:
    lines = [f"Selected {rec.model_id}: predicted performance {rec.p_hat:.3f}, "
             f"cost {rec.cost:.4g} USD/query, latency {rec.latency:.4g} ms ({rec.mode})."]
    if rec.qualifying_skills:
        lines.append(f"Qualifies on {len(rec.qualifying_skills)} required skill(s) at tau={config.tau}:")
        for s in rec.qualifying_skills:
            lines.append(f"  - {s} (margin over best alternative {rec.margins[s]:+.3f})")
    else:
        lines.append("No skills were required; every model passed the skill filter.")
    if note:
        lines.append(f"Note: {note}.")
    budgets = []
    if config.budget is not None:
        budgets.append(f"cost <= {config.budget:.4g} USD/query")
    if config.latency_budget is not None:
        budgets.append(f"latency <= {config.latency_budget:.4g} ms")
    if budgets:
        lines.append(f"Constraints satisfied: {'; '.join(budgets)}.")
    if rec.binding_constraint == "none":
        lines.append("Binding constraint: none (highest predicted performance among all models "
                     "meeting the skill filter).")
    else:
        lines.append(f"Binding constraint: {rec.binding_constraint} "
                     "(it excluded a model with higher predicted performance).")
    if rec.front:
        lines.append(f"Pareto front: {', '.join(rec.front)}.")
    for rej in rec.rejected:
        what = rej.reason if rej.skill is None else f"{rej.reason} ({rej.skill})"
        lines.append(f"Rejected {rej.model_id}: {what}; {rej.detail}")
    return "\n".join(lines)
