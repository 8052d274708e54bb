"""Capability matrix C, requirement matrix R and cost vectors."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .records import Dataset
from .taxonomy import SkillTaxonomy

DEFAULT_KAPPA = 0.0
DEFAULT_RHO = 0.5

InstanceKey = tuple[str, str]  # (task_id, instance_id)


class MatrixError(ValueError):
    pass


@dataclass(frozen=True)
class CapabilityMatrices:
    model_ids: tuple[str, ...]
    task_ids: tuple[str, ...]
    skills: tuple[str, ...]
    C: np.ndarray          # models x skills, proficiency in [0, 1]
    observed: np.ndarray   # models x skills, bool
    R: np.ndarray          # tasks x skills, {0, 1}
    c: np.ndarray          # models, USD per query
    latency: np.ndarray    # models, ms

    @property
    def model_index(self) -> dict[str, int]:
        return {m: i for i, m in enumerate(self.model_ids)}

    @property
    def task_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.task_ids)}

    def to_dict(self) -> dict:
        return {
            "model_ids": list(self.model_ids),
            "task_ids": list(self.task_ids),
            "skills": list(self.skills),
            "C": self.C.tolist(),
            "observed": self.observed.astype(bool).tolist(),
            "R": self.R.astype(int).tolist(),
            "c": self.c.tolist(),
            "latency": self.latency.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj) -> "CapabilityMatrices":
        n_skills = len(obj["skills"])
        return cls(
            model_ids=tuple(obj["model_ids"]),
            task_ids=tuple(obj["task_ids"]),
            skills=tuple(obj["skills"]),
            C=np.asarray(obj["C"], dtype=float).reshape(-1, n_skills),
            observed=np.asarray(obj["observed"], dtype=bool).reshape(-1, n_skills),
            R=np.asarray(obj["R"], dtype=np.int8).reshape(-1, n_skills),
            c=np.asarray(obj["c"], dtype=float),
            latency=np.asarray(obj["latency"], dtype=float),
        )


def instance_requirements(dataset: Dataset, taxonomy: SkillTaxonomy,
                          kappa: float = DEFAULT_KAPPA, assign_unknown: bool = False,
                          embedder=None) -> dict[InstanceKey, frozenset[int]]:
    """Skills each profiled instance requires: the union, across every model's
    profile of that instance, of mentions (either status) with criticality >= kappa."""
    req: dict[InstanceKey, set[int]] = {}
    for prof in dataset.profiles:
        skills = req.setdefault((prof.task_id, prof.instance_id), set())
        for m in prof.mentions:
            if m.criticality >= kappa:
                skills.add(taxonomy.resolve(m.phrase, assign_unknown, embedder))
    return {k: frozenset(v) for k, v in req.items()}


def build_C(dataset: Dataset, taxonomy: SkillTaxonomy, kappa: float = DEFAULT_KAPPA,
            requirements: dict[InstanceKey, frozenset[int]] | None = None):
    """Fraction of skill-requiring instances on which each model demonstrated the skill.

    Returns ``(C, observed)``; unobserved cells are 0.
    """
    if requirements is None:
        requirements = instance_requirements(dataset, taxonomy, kappa)
    index = {m: i for i, m in enumerate(dataset.model_ids)}
    S = taxonomy.size
    num = np.zeros((len(index), S))
    den = np.zeros((len(index), S))
    for prof in dataset.profiles:
        row = index[prof.model_id]
        required = requirements.get((prof.task_id, prof.instance_id), frozenset())
        shown = {taxonomy.resolve(m.phrase) for m in prof.mentions
                 if m.status == "demonstrated" and m.criticality >= kappa}
        for s in required:
            den[row, s] += 1
            if s in shown:
                num[row, s] += 1
    observed = den > 0
    C = np.divide(num, den, out=np.zeros_like(num), where=observed)
    return C, observed


def build_R(dataset: Dataset, taxonomy: SkillTaxonomy, kappa: float = DEFAULT_KAPPA,
            rho: float = DEFAULT_RHO,
            requirements: dict[InstanceKey, frozenset[int]] | None = None) -> np.ndarray:
    """R[t, s] = 1 when at least a ``rho`` fraction of task t's profiled
    instances require skill s (and s is required at least once)."""
    if requirements is None:
        requirements = instance_requirements(dataset, taxonomy, kappa)
    R = np.zeros((len(dataset.tasks), taxonomy.size), dtype=np.int8)
    for t, task_id in enumerate(dataset.task_ids):
        R[t] = requirement_row(requirements, task_id, taxonomy.size, rho)
    return R


def requirement_row(requirements: dict[InstanceKey, frozenset[int]], task_id: str,
                    n_skills: int, rho: float = DEFAULT_RHO) -> np.ndarray:
    insts = [skills for (tid, _), skills in requirements.items() if tid == task_id]
    if not insts:
        raise MatrixError(f"task {task_id!r} has no profiled instances")
    counts = np.zeros(n_skills)
    for skills in insts:
        for s in skills:
            counts[s] += 1
    return ((counts > 0) & (counts / len(insts) >= rho)).astype(np.int8)


def build_cost_vector(dataset: Dataset, mode: str = "monetary") -> np.ndarray:
    if mode == "monetary":
        return np.array([m.cost_per_query for m in dataset.models], dtype=float)
    if mode == "latency":
        return np.array([m.latency_ms for m in dataset.models], dtype=float)
    raise MatrixError(f"unknown cost mode {mode!r}")


def build_matrices(dataset: Dataset, taxonomy: SkillTaxonomy, kappa: float = DEFAULT_KAPPA,
                   rho: float = DEFAULT_RHO) -> CapabilityMatrices:
    requirements = instance_requirements(dataset, taxonomy, kappa)
    C, observed = build_C(dataset, taxonomy, kappa, requirements)
    R = build_R(dataset, taxonomy, kappa, rho, requirements)
    return CapabilityMatrices(
        model_ids=tuple(dataset.model_ids),
        task_ids=tuple(dataset.task_ids),
        skills=taxonomy.skills,
        C=C, observed=observed, R=R,
        c=build_cost_vector(dataset, "monetary"),
        latency=build_cost_vector(dataset, "latency"),
    )


def score_matrix(dataset: Dataset) -> np.ndarray:
    """Mean outcome score per (model, task); NaN where a model has no outcomes."""
    mi = {m: i for i, m in enumerate(dataset.model_ids)}
    ti = {t: i for i, t in enumerate(dataset.task_ids)}
    sums = defaultdict(float)
    counts = defaultdict(int)
    for o in dataset.outcomes:
        key = (mi[o.model_id], ti[o.task_id])
        sums[key] += o.score
        counts[key] += 1
    out = np.full((len(mi), len(ti)), np.nan)
    for key, n in counts.items():
        out[key] = sums[key] / n
    return out
