"""Evaluation data model and JSONL ingestion.

A dataset is four JSONL files, one object per line:

    models.jsonl    {"model_id", "cost_per_query", "latency_ms", "display_name"}
    tasks.jsonl     {"task_id", "metric_name"}
    outcomes.jsonl  {"model_id", "task_id", "instance_id", "correct", "score"}
    profiles.jsonl  {"model_id", "task_id", "instance_id",
                     "mentions": [{"phrase", "status", "criticality"}]}
"""
from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

RECORD_KINDS = ("models", "tasks", "outcomes", "profiles")
STATUSES = ("demonstrated", "missing")

# categorical criticality labels accepted at ingestion
CRITICALITY_LABELS = {"critical": 1.0, "major": 0.6, "minor": 0.3}

_FIELDS = {
    "models": {"model_id", "cost_per_query", "latency_ms", "display_name"},
    "tasks": {"task_id", "metric_name"},
    "outcomes": {"model_id", "task_id", "instance_id", "correct", "score"},
    "profiles": {"model_id", "task_id", "instance_id", "mentions"},
}
_MENTION_FIELDS = {"phrase", "status", "criticality"}


class DatasetError(ValueError):
    """Base class for ingestion and validation failures."""


class ParseError(DatasetError):
    def __init__(self, path: str | os.PathLike, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ReferentialIntegrityError(DatasetError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


class DuplicateKeyError(DatasetError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


class RangeError(DatasetError):
    pass


def normalize_phrase(phrase: str) -> str:
    """Trim, collapse internal whitespace runs and lowercase."""
    return " ".join(phrase.split()).lower()


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    cost_per_query: float
    latency_ms: float = 0.0
    display_name: str = ""


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    metric_name: str = "accuracy"


@dataclass(frozen=True)
class InstanceOutcome:
    model_id: str
    task_id: str
    instance_id: str
    correct: bool
    score: float | None = None

    def __post_init__(self):
        if self.score is None:
            object.__setattr__(self, "score", 1.0 if self.correct else 0.0)


@dataclass(frozen=True)
class SkillMention:
    phrase: str
    status: str
    criticality: float = 0.5


@dataclass(frozen=True)
class InstanceProfile:
    model_id: str
    task_id: str
    instance_id: str
    mentions: tuple[SkillMention, ...] = ()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.model_id, self.task_id, self.instance_id)


@dataclass(frozen=True)
class Dataset:
    models: tuple[ModelSpec, ...] = ()
    tasks: tuple[TaskSpec, ...] = ()
    outcomes: tuple[InstanceOutcome, ...] = ()
    profiles: tuple[InstanceProfile, ...] = ()

    @property
    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    @property
    def task_ids(self) -> list[str]:
        return [t.task_id for t in self.tasks]

    def model(self, model_id: str) -> ModelSpec:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def without_task(self, task_id: str) -> "Dataset":
        """Copy of the dataset with every record of ``task_id`` removed."""
        return Dataset(
            models=self.models,
            tasks=tuple(t for t in self.tasks if t.task_id != task_id),
            outcomes=tuple(o for o in self.outcomes if o.task_id != task_id),
            profiles=tuple(p for p in self.profiles if p.task_id != task_id),
        )

    def only_task(self, task_id: str) -> "Dataset":
        return Dataset(
            models=self.models,
            tasks=tuple(t for t in self.tasks if t.task_id == task_id),
            outcomes=tuple(o for o in self.outcomes if o.task_id == task_id),
            profiles=tuple(p for p in self.profiles if p.task_id == task_id),
        )


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding.

    ``kind`` is one of ``range``, ``duplicate``, ``reference``, ``empty``,
    ``unknown_field``; only ``unknown_field`` is a warning.
    """

    kind: str
    locator: str
    message: str
    key: str = ""
    level: str = "error"

    def __str__(self) -> str:
        return f"[{self.level}] {self.kind} at {self.locator}: {self.message}"


# --------------------------------------------------------------------------
# validation


def validate_dataset(d: Dataset) -> list[Diagnostic]:
    """Check every type invariant; returns one diagnostic per violation."""
    out: list[Diagnostic] = []

    model_ids = Counter(m.model_id for m in d.models)
    for mid, n in model_ids.items():
        if n > 1:
            out.append(Diagnostic("duplicate", f"models[{mid}]",
                                  f"model_id {mid!r} appears {n} times", key=mid))
    for m in d.models:
        loc = f"models[{m.model_id}]"
        if not m.cost_per_query >= 0:
            out.append(Diagnostic("range", f"{loc}.cost_per_query",
                                  f"cost_per_query must be >= 0, got {m.cost_per_query}"))
        if not m.latency_ms >= 0:
            out.append(Diagnostic("range", f"{loc}.latency_ms",
                                  f"latency_ms must be >= 0, got {m.latency_ms}"))

    task_ids = Counter(t.task_id for t in d.tasks)
    for tid, n in task_ids.items():
        if n > 1:
            out.append(Diagnostic("duplicate", f"tasks[{tid}]",
                                  f"task_id {tid!r} appears {n} times", key=tid))

    outcome_keys: Counter = Counter()
    for i, o in enumerate(d.outcomes):
        loc = f"outcomes[{i}]"
        outcome_keys[(o.model_id, o.task_id, o.instance_id)] += 1
        out.extend(_reference_checks(loc, o.model_id, o.task_id, model_ids, task_ids))
        if not 0.0 <= o.score <= 1.0:
            out.append(Diagnostic("range", f"{loc}.score",
                                  f"score must lie in [0, 1], got {o.score}"))
    for key, n in outcome_keys.items():
        if n > 1:
            out.append(Diagnostic("duplicate", f"outcomes{list(key)}",
                                  f"outcome {key} appears {n} times", key="/".join(key)))

    profile_keys: Counter = Counter()
    for i, p in enumerate(d.profiles):
        loc = f"profiles[{i}]({p.model_id}/{p.task_id}/{p.instance_id})"
        profile_keys[p.key] += 1
        out.extend(_reference_checks(loc, p.model_id, p.task_id, model_ids, task_ids))
        if outcome_keys and p.key not in outcome_keys:
            out.append(Diagnostic("reference", loc,
                                  f"profile {p.key} has no matching outcome",
                                  key="/".join(p.key)))
        seen: set[tuple[str, str]] = set()
        for j, mention in enumerate(p.mentions):
            mloc = f"{loc}.mentions[{j}]"
            if not mention.phrase.strip():
                out.append(Diagnostic("empty", f"{mloc}.phrase", "phrase is empty"))
            if mention.status not in STATUSES:
                out.append(Diagnostic("range", f"{mloc}.status",
                                      f"status must be one of {STATUSES}, got {mention.status!r}"))
            if not 0.0 <= mention.criticality <= 1.0:
                out.append(Diagnostic("range", f"{mloc}.criticality",
                                      f"criticality must lie in [0, 1], got {mention.criticality}"))
            pair = (normalize_phrase(mention.phrase), mention.status)
            if pair in seen:
                out.append(Diagnostic("duplicate", mloc,
                                      f"duplicate mention {pair} in one profile",
                                      key=pair[0]))
            seen.add(pair)
    for key, n in profile_keys.items():
        if n > 1:
            out.append(Diagnostic("duplicate", f"profiles{list(key)}",
                                  f"profile {key} appears {n} times", key="/".join(key)))
    return out


def _reference_checks(loc, model_id, task_id, model_ids, task_ids):
    if model_id not in model_ids:
        yield Diagnostic("reference", loc, f"unknown model_id {model_id!r}", key=model_id)
    if task_id not in task_ids:
        yield Diagnostic("reference", loc, f"unknown task_id {task_id!r}", key=task_id)


def raise_for_diagnostics(diagnostics: Iterable[Diagnostic]) -> None:
    """Raise the typed error matching the first error-level diagnostic."""
    for diag in diagnostics:
        if diag.level != "error":
            continue
        msg = str(diag)
        if diag.kind == "reference":
            raise ReferentialIntegrityError(diag.key, msg)
        if diag.kind == "duplicate":
            raise DuplicateKeyError(diag.key, msg)
        raise RangeError(msg)


# --------------------------------------------------------------------------
# parsing


def _criticality(value: Any) -> float:
    if value is None:
        return 0.5
    if isinstance(value, str):
        label = value.strip().lower()
        if label in CRITICALITY_LABELS:
            return CRITICALITY_LABELS[label]
        return float(label)
    if isinstance(value, bool):
        raise TypeError("criticality must be numeric")
    return float(value)


def _build(kind: str, obj: dict) -> Any:
    if kind == "models":
        return ModelSpec(
            model_id=str(obj["model_id"]),
            cost_per_query=float(obj["cost_per_query"]),
            latency_ms=float(obj.get("latency_ms") or 0.0),
            display_name=str(obj.get("display_name") or ""),
        )
    if kind == "tasks":
        return TaskSpec(task_id=str(obj["task_id"]),
                        metric_name=str(obj.get("metric_name") or "accuracy"))
    if kind == "outcomes":
        correct = obj["correct"]
        if not isinstance(correct, bool):
            raise TypeError(f"'correct' must be a boolean, got {correct!r}")
        score = obj.get("score")
        return InstanceOutcome(
            model_id=str(obj["model_id"]),
            task_id=str(obj["task_id"]),
            instance_id=str(obj["instance_id"]),
            correct=correct,
            score=None if score is None else float(score),
        )
    mentions = []
    for m in obj.get("mentions") or []:
        if not isinstance(m, dict):
            raise TypeError("each mention must be a JSON object")
        mentions.append(SkillMention(
            phrase=normalize_phrase(str(m["phrase"])),
            status=str(m["status"]).strip().lower(),
            criticality=_criticality(m.get("criticality")),
        ))
    return InstanceProfile(
        model_id=str(obj["model_id"]),
        task_id=str(obj["task_id"]),
        instance_id=str(obj["instance_id"]),
        mentions=tuple(mentions),
    )


def read_jsonl(path: str | os.PathLike) -> list[tuple[int, dict]]:
    """Return ``(line_number, object)`` pairs, skipping blank lines."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            rows.append((lineno, obj))
    return rows


def _parse_file(kind: str, path, warnings_out: list[Diagnostic]) -> list:
    records = []
    for lineno, obj in read_jsonl(path):
        for extra in sorted(set(obj) - _FIELDS[kind]):
            warnings_out.append(Diagnostic(
                "unknown_field", f"{path}:{lineno}", f"ignoring unknown field {extra!r}",
                key=extra, level="warning"))
        if kind == "profiles":
            for m in obj.get("mentions") or []:
                if isinstance(m, dict):
                    for extra in sorted(set(m) - _MENTION_FIELDS):
                        warnings_out.append(Diagnostic(
                            "unknown_field", f"{path}:{lineno}",
                            f"ignoring unknown mention field {extra!r}",
                            key=extra, level="warning"))
        try:
            records.append(_build(kind, obj))
        except KeyError as exc:
            raise ParseError(path, lineno, f"missing required field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise ParseError(path, lineno, str(exc)) from exc
    return records


def resolve_paths(source: str | os.PathLike | Mapping[str, Any]) -> dict[str, Path]:
    """Accept a directory holding ``<kind>.jsonl`` files or a kind->path mapping."""
    if isinstance(source, Mapping):
        paths = {k: Path(v) for k, v in source.items()}
    else:
        root = Path(source)
        paths = {k: root / f"{k}.jsonl" for k in RECORD_KINDS}
    missing = [k for k in RECORD_KINDS if k not in paths]
    if missing:
        raise DatasetError(f"no path given for record kinds {missing}")
    for kind, p in paths.items():
        if not p.is_file():
            raise DatasetError(f"{kind} file not found: {p}")
    return paths


def parse_dataset(source, diagnostics: list[Diagnostic] | None = None) -> Dataset:
    """Load and validate a dataset.

    ``source`` is a directory or a mapping from record kind to file path.
    Warnings (unknown fields) are logged and, if ``diagnostics`` is given,
    appended to it. Any error-level violation raises.
    """
    paths = resolve_paths(source)
    warnings_out: list[Diagnostic] = []
    parsed = {kind: _parse_file(kind, paths[kind], warnings_out) for kind in RECORD_KINDS}
    d = Dataset(**{k: tuple(v) for k, v in parsed.items()})
    for w in warnings_out:
        logger.warning("%s", w)
    found = validate_dataset(d)
    if diagnostics is not None:
        diagnostics.extend(warnings_out)
        diagnostics.extend(found)
    raise_for_diagnostics(found)
    return d


# --------------------------------------------------------------------------
# serialization


def record_to_dict(rec) -> dict:
    if isinstance(rec, ModelSpec):
        return {"model_id": rec.model_id, "cost_per_query": rec.cost_per_query,
                "latency_ms": rec.latency_ms, "display_name": rec.display_name}
    if isinstance(rec, TaskSpec):
        return {"task_id": rec.task_id, "metric_name": rec.metric_name}
    if isinstance(rec, InstanceOutcome):
        return {"model_id": rec.model_id, "task_id": rec.task_id,
                "instance_id": rec.instance_id, "correct": rec.correct, "score": rec.score}
    if isinstance(rec, InstanceProfile):
        return {"model_id": rec.model_id, "task_id": rec.task_id,
                "instance_id": rec.instance_id,
                "mentions": [{"phrase": m.phrase, "status": m.status,
                              "criticality": m.criticality} for m in rec.mentions]}
    raise TypeError(f"not a dataset record: {type(rec).__name__}")


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def dump_dataset(d: Dataset, directory: str | os.PathLike) -> dict[str, Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind in RECORD_KINDS:
        paths[kind] = root / f"{kind}.jsonl"
        write_jsonl(paths[kind], (record_to_dict(r) for r in getattr(d, kind)))
    return paths


def fixture_dir() -> Path:
    """Directory of the small financial-reasoning fixture shipped with the package."""
    return Path(__file__).parent / "data" / "fixture"
