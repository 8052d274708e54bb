"""End-to-end pipeline: dataset -> taxonomy -> matrices -> predictor -> recommendation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .matrices import CapabilityMatrices, build_matrices, score_matrix
from .predictor import (LatentFactors, PredictorModel, TrainingConfig, cosine_similarity,
                        impute, nmf_factorize, predict, train_predictor)
from .records import Dataset
from .selector import Recommendation, SelectionConfig, select
from .taxonomy import SkillTaxonomy, TrigramEmbedder, build_taxonomy

logger = logging.getLogger(__name__)


@dataclass
class Artifacts:
    taxonomy: SkillTaxonomy
    matrices: CapabilityMatrices
    scores: np.ndarray  # models x tasks mean score, NaN if unobserved
    predictor: PredictorModel | None
    factors: LatentFactors | None = None
    imputed: np.ndarray | None = None

    def capability(self, use_imputed: bool) -> np.ndarray:
        """Capability matrix fed to predictors; unobserved cells are 0 unless imputed."""
        if use_imputed and self.imputed is not None:
            return self.imputed
        return self.matrices.C


def selection_config(cfg: EngineConfig, unbounded_ok: bool = False) -> SelectionConfig:
    """``unbounded_ok`` treats a missing budget as infinite instead of an error."""
    budget = cfg.budget
    if unbounded_ok and budget is None and cfg.latency_budget is None:
        budget = float("inf")
    return SelectionConfig(tau=cfg.tau, budget=budget, latency_budget=cfg.latency_budget,
                           mode=cfg.mode, weights=cfg.weights, use_imputed=cfg.use_imputed)


def training_config(cfg: EngineConfig) -> TrainingConfig:
    return TrainingConfig(lr=cfg.lr, epochs=cfg.epochs, l2=cfg.l2, seed=cfg.seed)


def training_pairs(matrices: CapabilityMatrices, scores: np.ndarray, capability: np.ndarray):
    """One (r_t, c_m, mean score of m on t) triple per observed model-task cell."""
    pairs = []
    for t in range(len(matrices.task_ids)):
        for m in range(len(matrices.model_ids)):
            if not np.isnan(scores[m, t]):
                pairs.append((matrices.R[t], capability[m], float(scores[m, t])))
    return pairs


def build_artifacts(dataset: Dataset, cfg: EngineConfig, train: bool = True,
                    embedder=None) -> Artifacts:
    taxonomy = build_taxonomy(dataset.profiles, cfg.delta, cfg.dim,
                              embedder or TrigramEmbedder(cfg.dim))
    matrices = build_matrices(dataset, taxonomy, cfg.kappa, cfg.rho)
    scores = score_matrix(dataset)
    factors = imputed = None
    if cfg.use_imputed:
        M, S = matrices.C.shape
        k = min(cfg.k, M, S)
        factors = nmf_factorize(matrices.C, matrices.observed, k, cfg.nmf_iterations, cfg.seed)
        imputed = impute(matrices.C, matrices.observed, factors)
    art = Artifacts(taxonomy, matrices, scores, None, factors, imputed)
    if train:
        pairs = training_pairs(matrices, scores, art.capability(cfg.use_imputed))
        if pairs:
            art.predictor = train_predictor(pairs, cfg.scheme, training_config(cfg))
    return art


def estimate_p_hat(art: Artifacts, r_t, source: str, use_imputed: bool = False,
                   task_id: str | None = None) -> np.ndarray:
    """Predicted performance of every pool model on a task with requirements ``r_t``.

    ``observed`` uses the model's mean score on ``task_id`` when that task is in
    the training data, else its mean over all training tasks.
    """
    cap = art.capability(use_imputed)
    r = np.asarray(r_t, dtype=float)
    M = cap.shape[0]
    if source == "trained":
        if art.predictor is None:
            raise ValueError("no trained predictor available")
        return np.array([predict(art.predictor, r, cap[m]) for m in range(M)])
    if source == "similarity":
        out = np.zeros(M)
        if np.any(r):
            for m in range(M):
                if np.any(cap[m]):
                    out[m] = cosine_similarity(cap[m], r)
        return out
    if source == "observed":
        if task_id is not None and task_id in art.matrices.task_ids:
            col = art.scores[:, art.matrices.task_ids.index(task_id)]
        else:
            with np.errstate(all="ignore"):
                col = np.nanmean(art.scores, axis=1) if art.scores.size else np.full(M, np.nan)
        return np.nan_to_num(col, nan=0.0)
    raise ValueError(f"unknown predictor source {source!r}")


def recommend(art: Artifacts, r_t, cfg: EngineConfig, task_id: str | None = None) -> Recommendation:
    p_hat = estimate_p_hat(art, r_t, cfg.predictor, cfg.use_imputed, task_id)
    return select(art.matrices, r_t, p_hat, selection_config(cfg), art.imputed)
