"""Model-task fit estimators over capability matrices.

Three estimators live here: cosine similarity between a model's capability
row and a task's requirement row, masked non-negative matrix factorization
for imputing unobserved capability cells, and a logistic-regression
performance predictor over skill features.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

SCHEMES = ("inner", "concat", "elementwise", "poly2")
DEFAULT_SCHEME = "concat"
_NMF_EPS = 1e-300


class PredictorError(ValueError):
    pass


class DivergenceError(PredictorError):
    pass


# --------------------------------------------------------------------------
# similarity


def cosine_similarity(c_m, r_t) -> float:
    a = np.asarray(c_m, dtype=float)
    b = np.asarray(r_t, dtype=float)
    if a.shape != b.shape:
        raise PredictorError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise PredictorError("similarity undefined for a zero vector")
    return float(a @ b / (na * nb))


def similarity_rank(C, r_t, costs, model_ids: Sequence[str]) -> list[tuple[str, float]]:
    """Models by descending similarity to ``r_t``; ties go to the cheaper, then
    lexicographically smaller id. Zero capability rows score 0."""
    r = np.asarray(r_t, dtype=float)
    if not np.any(r):
        raise PredictorError("similarity undefined for a zero requirement vector")
    scored = []
    for i, mid in enumerate(model_ids):
        row = np.asarray(C[i], dtype=float)
        sim = cosine_similarity(row, r) if np.any(row) else 0.0
        scored.append((mid, sim, float(costs[i])))
    scored.sort(key=lambda x: (-x[1], x[2], x[0]))
    return [(mid, sim) for mid, sim, _ in scored]


# --------------------------------------------------------------------------
# masked NMF


@dataclass
class LatentFactors:
    U: np.ndarray
    V: np.ndarray
    k: int
    final_objective: float
    history: list[float] = field(default_factory=list, repr=False)

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.V.T

    def to_dict(self) -> dict:
        return {"U": self.U.tolist(), "V": self.V.tolist(), "k": self.k,
                "final_objective": self.final_objective}

    @classmethod
    def from_dict(cls, obj) -> "LatentFactors":
        return cls(np.asarray(obj["U"], dtype=float), np.asarray(obj["V"], dtype=float),
                   int(obj["k"]), float(obj["final_objective"]))


def masked_objective(C, mask, U, V) -> float:
    resid = np.where(mask, C - U @ V.T, 0.0)
    return float(np.sum(resid ** 2))


def nmf_factorize(C, observed=None, k: int = 3, iterations: int = 200,
                  seed: int = 42) -> LatentFactors:
    """C ~= U V^T on observed cells via weighted multiplicative updates."""
    C = np.asarray(C, dtype=float)
    M, S = C.shape
    if not 1 <= k <= min(M, S):
        raise PredictorError(f"rank k={k} outside [1, {min(M, S)}]")
    if iterations < 1:
        raise PredictorError("iterations must be >= 1")
    W = np.ones_like(C) if observed is None else np.asarray(observed, dtype=float)
    WC = W * C
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, 1.0, (M, k))
    V = rng.uniform(0.0, 1.0, (S, k))
    # keep draws strictly inside (0, 1)
    U[U == 0.0] = 0.5
    V[V == 0.0] = 0.5
    history = []
    for _ in range(iterations):
        U *= (WC @ V) / ((W * (U @ V.T)) @ V + _NMF_EPS)
        V *= (WC.T @ U) / ((W * (U @ V.T)).T @ U + _NMF_EPS)
        history.append(masked_objective(C, W > 0, U, V))
    return LatentFactors(U, V, k, history[-1], history)


def impute(C, observed, factors: LatentFactors) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    filled = np.clip(factors.reconstruct(), 0.0, 1.0)
    return np.where(np.asarray(observed, dtype=bool), C, filled)


# --------------------------------------------------------------------------
# features


def feature_length(scheme: str, n_skills: int) -> int:
    return {"inner": 1, "concat": 2 * n_skills, "elementwise": n_skills,
            "poly2": n_skills + n_skills * (n_skills + 1) // 2}[scheme]


def featurize(r_t, c_m, scheme: str = DEFAULT_SCHEME) -> np.ndarray:
    r = np.asarray(r_t, dtype=float)
    c = np.asarray(c_m, dtype=float)
    if r.shape != c.shape or r.ndim != 1:
        raise PredictorError(f"length mismatch: {r.shape} vs {c.shape}")
    if scheme == "inner":
        return np.array([r @ c])
    if scheme == "concat":
        return np.concatenate([r, c])
    e = r * c
    if scheme == "elementwise":
        return e
    if scheme == "poly2":
        i, j = np.triu_indices(len(e))
        return np.concatenate([e, e[i] * e[j]])
    raise PredictorError(f"unknown feature scheme {scheme!r}; expected one of {SCHEMES}")


# --------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.1
    epochs: int = 500
    l2: float = 1e-3
    seed: int = 42
    # std of the initial weight draw; 0 starts from all-zero weights
    init_scale: float = 0.0


@dataclass
class PredictorModel:
    scheme: str
    weights: np.ndarray
    bias: float
    config: TrainingConfig = TrainingConfig()
    n_skills: int = 0
    losses: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "weights": self.weights.tolist(), "bias": self.bias,
                "config": asdict(self.config), "n_skills": self.n_skills}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj) -> "PredictorModel":
        return cls(scheme=obj["scheme"], weights=np.asarray(obj["weights"], dtype=float),
                   bias=float(obj["bias"]), config=TrainingConfig(**obj.get("config", {})),
                   n_skills=int(obj.get("n_skills", 0)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean binary cross-entropy plus (l2/2)|w|^2; ``params`` is [w..., b].

    Labels may be fractional. The bias is not penalized.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    err = _sigmoid(z) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ err / len(y) + l2 * w
    grad[-1] = err.mean()
    return float(loss), grad


def design_matrix(pairs, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([featurize(r, c, scheme) for r, c, _ in pairs])
    y = np.array([float(lab) for _, _, lab in pairs])
    return X, y


def train_predictor(pairs, scheme: str = DEFAULT_SCHEME,
                    config: TrainingConfig = TrainingConfig()) -> PredictorModel:
    """Fit logistic regression by full-batch gradient descent.

    ``pairs`` holds ``(r_t, c_m, label)`` triples with labels in [0, 1].
    """
    pairs = list(pairs)
    if not pairs:
        raise PredictorError("need at least one training pair")
    if scheme not in SCHEMES:
        raise PredictorError(f"unknown feature scheme {scheme!r}")
    X, y = design_matrix(pairs, scheme)
    if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
        raise PredictorError("labels must lie in [0, 1]")
    rng = np.random.default_rng(config.seed)
    params = np.zeros(X.shape[1] + 1)
    if config.init_scale > 0:
        params[:-1] = rng.normal(0.0, config.init_scale, X.shape[1])
    losses = []
    for _ in range(config.epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(params, X, y, config.l2)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f"training diverged (loss={loss}); try a smaller learning rate than {config.lr}")
        losses.append(loss)
        params = params - config.lr * grad
    with np.errstate(over="ignore", invalid="ignore"):
        final_loss, _ = loss_and_grad(params, X, y, config.l2)
    if not np.isfinite(final_loss):
        raise DivergenceError(
            f"training diverged (loss={final_loss}); try a smaller learning rate than {config.lr}")
    losses.append(final_loss)
    return PredictorModel(scheme, params[:-1].copy(), float(params[-1]), config,
                          n_skills=len(np.asarray(pairs[0][0])), losses=losses)


def predict(model: PredictorModel, r_t, c_m) -> float:
    x = featurize(r_t, c_m, model.scheme)
    if x.shape[0] != model.weights.shape[0]:
        raise PredictorError(
            f"feature length {x.shape[0]} does not match trained weights {model.weights.shape[0]}")
    return float(_sigmoid(x @ model.weights + model.bias))
