"""Skill taxonomy induction.

Raw critic phrases are embedded, grouped by average-linkage agglomerative
clustering under cosine distance, and each group is named by majority vote.
"""
from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .records import InstanceProfile, normalize_phrase

DEFAULT_DIM = 256
DEFAULT_DELTA = 0.5
# distances closer than this count as ties during merging
TIE_EPS = 1e-12


class TaxonomyError(ValueError):
    pass


class UnknownPhraseError(TaxonomyError):
    def __init__(self, phrase: str, message: str | None = None):
        self.phrase = phrase
        super().__init__(message or f"phrase {phrase!r} is not in the taxonomy")


# --------------------------------------------------------------------------
# embedding


def _trigrams(phrase: str) -> list[str]:
    padded = f" {phrase} "
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def embed_phrase(phrase: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Unit-norm vector of hashed character-trigram counts.

    The phrase is padded with one space on each side so word boundaries
    contribute grams and single characters still embed.
    """
    if not phrase or not phrase.strip():
        raise TaxonomyError("cannot embed an empty phrase")
    if dim < 1:
        raise TaxonomyError(f"dim must be positive, got {dim}")
    vec = np.zeros(dim)
    for gram in _trigrams(phrase):
        vec[_bucket(gram, dim)] += 1.0
    return vec / np.linalg.norm(vec)


class TrigramEmbedder:
    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.embedder_id = f"trigram-hash-{dim}"

    def __call__(self, phrase: str) -> np.ndarray:
        return embed_phrase(phrase, self.dim)


class PrecomputedEmbedder:
    """Looks phrases up in a table of externally computed vectors."""

    def __init__(self, vectors: Mapping[str, Sequence[float]], embedder_id: str = "precomputed"):
        self.vectors = {}
        for phrase, vec in vectors.items():
            v = np.asarray(vec, dtype=float)
            norm = np.linalg.norm(v)
            if norm == 0:
                raise TaxonomyError(f"zero vector for phrase {phrase!r}")
            self.vectors[normalize_phrase(phrase)] = v / norm
        self.embedder_id = embedder_id

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike) -> "PrecomputedEmbedder":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    vectors[row["phrase"]] = row["vector"]
        return cls(vectors, embedder_id=f"precomputed:{os.path.basename(path)}")

    def __call__(self, phrase: str) -> np.ndarray:
        try:
            return self.vectors[phrase]
        except KeyError:
            raise UnknownPhraseError(phrase, f"no precomputed vector for {phrase!r}") from None


def embedder_from_id(embedder_id: str):
    if embedder_id.startswith("trigram-hash-"):
        return TrigramEmbedder(int(embedder_id.rsplit("-", 1)[1]))
    raise TaxonomyError(f"cannot reconstruct embedder {embedder_id!r}; pass it explicitly")


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / norms
    dist = 1.0 - unit @ unit.T
    np.fill_diagonal(dist, 0.0)
    return np.clip(dist, 0.0, 2.0)


# --------------------------------------------------------------------------
# clustering


def average_linkage(dist: np.ndarray, delta: float) -> list[int]:
    """Agglomerate while the closest pair of clusters is within ``delta``.

    Clusters keep the index of their lowest member slot; among tied minimum
    pairs the lexicographically smallest (i, j) merges first. Returns one
    dense cluster id per input row, numbered by first appearance.
    """
    n = dist.shape[0]
    d = dist.astype(float).copy()
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    members = [[i] for i in range(n)]
    np.fill_diagonal(d, np.inf)
    for _ in range(n - 1):
        masked = np.where(np.outer(active, active), d, np.inf)
        iu = np.triu_indices(n, 1)
        vals = masked[iu]
        best = vals.min()
        if not np.isfinite(best) or best > delta:
            break
        k = int(np.flatnonzero(vals <= best + TIE_EPS)[0])
        i, j = int(iu[0][k]), int(iu[1][k])
        # Lance-Williams update for average linkage
        merged = (sizes[i] * d[i] + sizes[j] * d[j]) / (sizes[i] + sizes[j])
        d[i, :] = merged
        d[:, i] = merged
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
        members[i].extend(members[j])
        members[j] = []
    labels = [-1] * n
    next_id = 0
    for i in range(n):
        if labels[i] != -1:
            continue
        owner = next(r for r in range(n) if active[r] and i in members[r])
        for m in members[owner]:
            labels[m] = next_id
        next_id += 1
    return labels


def cluster_phrases(phrases: Sequence[str], delta: float = DEFAULT_DELTA,
                    embedder=None) -> list[int]:
    """Cluster id for each phrase under average linkage on cosine distance."""
    if not 0.0 < delta <= 2.0:
        raise TaxonomyError(f"cut distance must lie in (0, 2], got {delta}")
    if not phrases:
        raise TaxonomyError("no phrases to cluster")
    if len(set(phrases)) != len(phrases):
        raise TaxonomyError("phrases must be deduplicated")
    embedder = embedder or TrigramEmbedder()
    vectors = np.vstack([embedder(p) for p in phrases])
    return average_linkage(cosine_distance_matrix(vectors), delta)


def canonical_label(counts: Mapping[str, int]) -> str:
    """Most frequent phrase; ties go to the lexicographically smallest."""
    if not counts:
        raise TaxonomyError("empty cluster")
    return min(counts, key=lambda p: (-counts[p], p))


# --------------------------------------------------------------------------
# taxonomy


@dataclass(frozen=True)
class SkillTaxonomy:
    skills: tuple[str, ...]
    phrase_map: dict[str, int]
    cut_distance: float = DEFAULT_DELTA
    embedder_id: str = f"trigram-hash-{DEFAULT_DIM}"
    _centroids: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def size(self) -> int:
        return len(self.skills)

    def index(self, skill: str) -> int:
        try:
            return self.skills.index(normalize_phrase(skill))
        except ValueError:
            raise UnknownPhraseError(skill, f"unknown skill {skill!r}") from None

    def centroids(self, embedder=None) -> np.ndarray:
        key = id(embedder) if embedder is not None else None
        if key not in self._centroids:
            embedder = embedder or embedder_from_id(self.embedder_id)
            sums: list = [None] * self.size
            counts = [0] * self.size
            for phrase, sid in self.phrase_map.items():
                v = embedder(phrase)
                sums[sid] = v if sums[sid] is None else sums[sid] + v
                counts[sid] += 1
            self._centroids[key] = np.vstack([s / c for s, c in zip(sums, counts)])
        return self._centroids[key]

    def resolve(self, phrase: str, assign_unknown: bool = False, embedder=None) -> int:
        """Skill id for a phrase; optionally map unseen phrases to the nearest centroid."""
        phrase = normalize_phrase(phrase)
        if phrase in self.phrase_map:
            return self.phrase_map[phrase]
        if not assign_unknown:
            raise UnknownPhraseError(phrase)
        embedder = embedder or embedder_from_id(self.embedder_id)
        v = embedder(phrase)
        cents = self.centroids(embedder)
        dist = 1.0 - (cents @ v) / np.linalg.norm(cents, axis=1)
        best = int(np.argmin(dist))
        if dist[best] > self.cut_distance:
            raise UnknownPhraseError(
                phrase, f"phrase {phrase!r} is {dist[best]:.3f} from the nearest skill "
                        f"centroid, beyond cut distance {self.cut_distance}")
        return best

    def to_dict(self) -> dict:
        return {"skills": list(self.skills), "phrase_map": dict(self.phrase_map),
                "cut_distance": self.cut_distance, "embedder_id": self.embedder_id}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SkillTaxonomy":
        return cls(skills=tuple(obj["skills"]),
                   phrase_map={k: int(v) for k, v in obj["phrase_map"].items()},
                   cut_distance=float(obj["cut_distance"]),
                   embedder_id=str(obj["embedder_id"]))


def phrase_counts(profiles: Iterable[InstanceProfile]) -> Counter:
    """Occurrence count of each normalized phrase, in first-seen order."""
    counts: Counter = Counter()
    for prof in profiles:
        for m in prof.mentions:
            counts[normalize_phrase(m.phrase)] += 1
    return counts


def build_taxonomy(profiles: Iterable[InstanceProfile], delta: float = DEFAULT_DELTA,
                   dim: int = DEFAULT_DIM, embedder=None) -> SkillTaxonomy:
    counts = phrase_counts(profiles)
    if not counts:
        raise TaxonomyError("profiles contain no skill mentions")
    embedder = embedder or TrigramEmbedder(dim)
    phrases = list(counts)
    labels = cluster_phrases(phrases, delta, embedder)
    groups: dict[int, dict[str, int]] = {}
    for phrase, cid in zip(phrases, labels):
        groups.setdefault(cid, {})[phrase] = counts[phrase]
    skills = tuple(canonical_label(groups[c]) for c in range(len(groups)))
    return SkillTaxonomy(skills=skills,
                         phrase_map={p: c for p, c in zip(phrases, labels)},
                         cut_distance=delta, embedder_id=embedder.embedder_id)


def encode_profile(profile: InstanceProfile, taxonomy: SkillTaxonomy,
                   status: str | None = None, kappa: float = 0.0,
                   assign_unknown: bool = False, embedder=None) -> np.ndarray:
    """Binary skill vector: bit s is set when a mention with matching status
    and criticality >= kappa maps to skill s. ``status=None`` accepts both."""
    bits = np.zeros(taxonomy.size, dtype=np.int8)
    for m in profile.mentions:
        if status is not None and m.status != status:
            continue
        if m.criticality < kappa:
            continue
        bits[taxonomy.resolve(m.phrase, assign_unknown, embedder)] = 1
    return bits
