"""Critic-based skill profiling.

A critic reads (task input, reference solution, model output) and reports
which skills the model demonstrated or missed. Critics are plain callables
``prompt -> response text``; :class:`MockCritic` is a deterministic keyword
rulebook used for offline runs and tests.
"""
from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

from .records import InstanceProfile, SkillMention, normalize_phrase

DEFAULT_CRITICALITY = 0.5

# Section delimiters occupy whole lines starting with "<<<". Content lines that
# start with "<<<" or "\" get one leading backslash so they never read as markers.
_SECTIONS = (
    ("task_input", "TASK INPUT"),
    ("reference_solution", "REFERENCE SOLUTION"),
    ("model_output", "MODEL OUTPUT"),
    ("reasoning_trace", "REASONING TRACE"),
)
_MARK = "<<<"

_INSTRUCTIONS = """\
You are a critic grading one model output against a reference solution.
Identify the skills the model successfully demonstrated and the skills it failed
to demonstrate that contributed to errors. For each skill give a short noun
phrase and a criticality between 0 and 1 (how much that skill mattered to the
outcome).

Respond with a single JSON object and nothing else, of the form:
{"demonstrated": [{"skill": "<phrase>", "criticality": <0..1>}],
 "missing": [{"skill": "<phrase>", "criticality": <0..1>}]}
"""


class CriticParseError(ValueError):
    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


class CriticRangeError(CriticParseError):
    pass


@dataclass(frozen=True)
class CritiqueRequest:
    task_input: str
    reference_solution: str
    model_output: str
    model_id: str = ""
    task_id: str = ""
    instance_id: str = ""
    # carried opaquely into the prompt only
    reasoning_trace: str = ""

    def __post_init__(self):
        for name in ("task_input", "reference_solution", "model_output"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} must be non-empty")


class CriticAdapter(Protocol):
    label: str

    def __call__(self, prompt: str) -> str: ...


def _escape(text: str) -> str:
    lines = text.split("\n")
    return "\n".join("\\" + ln if ln.startswith((_MARK, "\\")) else ln for ln in lines)


def _unescape(text: str) -> str:
    return "\n".join(ln[1:] if ln.startswith("\\") else ln for ln in text.split("\n"))


def build_critic_prompt(req: CritiqueRequest) -> str:
    parts = [_INSTRUCTIONS]
    for attr, title in _SECTIONS:
        body = getattr(req, attr)
        if attr == "reasoning_trace" and not body:
            continue
        parts.append(f"{_MARK}{title}>>>\n{_escape(body)}\n{_MARK}END {title}>>>")
    return "\n".join(parts) + "\n"


def parse_prompt_sections(prompt: str) -> dict[str, str]:
    """Recover the embedded texts from a prompt built by :func:`build_critic_prompt`."""
    titles = {title: attr for attr, title in _SECTIONS}
    out: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    for line in prompt.split("\n"):
        if line.startswith(_MARK) and line.endswith(">>>"):
            name = line[len(_MARK):-3]
            if current is None and name in titles:
                current, buf = name, []
                continue
            if current is not None and name == f"END {current}":
                out[titles[current]] = _unescape("\n".join(buf))
                current = None
                continue
            raise ValueError(f"unexpected delimiter line {line!r}")
        if current is not None:
            buf.append(line)
    if current is not None:
        raise ValueError(f"unterminated section {current!r}")
    return out


def extract_json_object(text: str) -> dict | None:
    """First JSON object embedded anywhere in ``text``."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        start = text.find("{", start + 1)
    return None


def parse_critic_response(text: str, model_id: str = "", task_id: str = "",
                          instance_id: str = "") -> InstanceProfile:
    obj = extract_json_object(text)
    if obj is None:
        raise CriticParseError("no JSON object found in critic response", text)
    mentions: list[SkillMention] = []
    seen: set[tuple[str, str]] = set()
    for status in ("demonstrated", "missing"):
        items = obj.get(status) or []
        if not isinstance(items, list):
            raise CriticParseError(f"{status!r} must be a list", text)
        for item in items:
            if isinstance(item, str):
                item = {"skill": item}
            if not isinstance(item, dict):
                raise CriticParseError(f"bad {status} entry {item!r}", text)
            phrase = normalize_phrase(str(item.get("skill") or item.get("phrase") or ""))
            if not phrase:
                continue
            crit = item.get("criticality")
            crit = DEFAULT_CRITICALITY if crit is None else float(crit)
            if not 0.0 <= crit <= 1.0:
                raise CriticRangeError(
                    f"criticality {crit} for {phrase!r} outside [0, 1]", text)
            if (phrase, status) in seen:
                continue
            seen.add((phrase, status))
            mentions.append(SkillMention(phrase, status, crit))
    return InstanceProfile(model_id, task_id, instance_id, tuple(mentions))


def mock_critic(req: CritiqueRequest, rulebook: Mapping[str, str]) -> str:
    """Keyword critic: a skill whose keyword appears in both the model output and
    the reference is demonstrated; in the reference only, missing."""
    if not rulebook:
        raise ValueError("rulebook must be non-empty")
    output = req.model_output.lower()
    reference = req.reference_solution.lower()
    status: dict[str, str] = {}
    for keyword, skill in rulebook.items():
        kw = keyword.lower()
        if kw not in reference:
            continue
        if kw in output:
            status[skill] = "demonstrated"
        else:
            status.setdefault(skill, "missing")
    demonstrated = [{"skill": s, "criticality": 1.0} for s, st in status.items() if st == "demonstrated"]
    missing = [{"skill": s, "criticality": 1.0} for s, st in status.items() if st == "missing"]
    return json.dumps({"demonstrated": demonstrated, "missing": missing}, sort_keys=True)


class MockCritic:
    """Prompt-level adapter around :func:`mock_critic`."""

    def __init__(self, rulebook: Mapping[str, str]):
        if not rulebook:
            raise ValueError("rulebook must be non-empty")
        self.rulebook = dict(rulebook)
        self.label = "mock-keyword"

    def __call__(self, prompt: str) -> str:
        sections = parse_prompt_sections(prompt)
        req = CritiqueRequest(
            task_input=sections["task_input"],
            reference_solution=sections["reference_solution"],
            model_output=sections["model_output"],
        )
        return mock_critic(req, self.rulebook)


class HttpCritic:
    """OpenAI-compatible chat-completions critic configured from the environment."""

    def __init__(self, endpoint: str, model: str, api_key: str = "", timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.label = f"http:{model}"

    @classmethod
    def from_env(cls, environ: Mapping[str, str] = os.environ) -> "HttpCritic":
        endpoint = environ.get("CRITIC_ENDPOINT")
        model = environ.get("CRITIC_MODEL")
        if not endpoint or not model:
            raise RuntimeError("CRITIC_ENDPOINT and CRITIC_MODEL must be set for the live critic")
        return cls(endpoint, model, environ.get("CRITIC_API_KEY", ""))

    def request_body(self, prompt: str) -> dict:
        return {"model": self.model, "temperature": 0,
                "messages": [{"role": "user", "content": prompt}]}

    def __call__(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        data = json.dumps(self.request_body(prompt)).encode()
        req = urllib.request.Request(self.endpoint, data=data, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode())
        return payload["choices"][0]["message"]["content"]


def critique(req: CritiqueRequest, critic: Callable[[str], str]) -> InstanceProfile:
    text = critic(build_critic_prompt(req))
    return parse_critic_response(text, req.model_id, req.task_id, req.instance_id)


def request_from_dict(obj: Mapping) -> CritiqueRequest:
    return CritiqueRequest(
        task_input=str(obj["task_input"]),
        reference_solution=str(obj["reference_solution"]),
        model_output=str(obj["model_output"]),
        model_id=str(obj.get("model_id", "")),
        task_id=str(obj.get("task_id", "")),
        instance_id=str(obj.get("instance_id", "")),
        reasoning_trace=str(obj.get("reasoning_trace") or ""),
    )
