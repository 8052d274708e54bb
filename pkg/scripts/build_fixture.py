"""Regenerate the bundled financial-reasoning fixture under src/skillroute/data/fixture.

Costs are per query in USD, rescaled from per-million-token list prices.
Profiles use several surface forms per skill so taxonomy induction has
something to merge.
"""
import numpy as np

from skillroute.records import (Dataset, InstanceOutcome, InstanceProfile, ModelSpec,
                                SkillMention, TaskSpec, dump_dataset, fixture_dir)

MODELS = [
    ModelSpec("gpt-5", 10.0, 2400.0, "GPT-5"),
    ModelSpec("qwen-2.5-72b", 1.2, 1300.0, "Qwen2.5-72B-Instruct"),
    ModelSpec("llama-3.3-70b", 0.88, 1100.0, "Llama-3.3-70B-Instruct"),
    ModelSpec("llama-3.1-8b", 0.18, 350.0, "Llama-3.1-8B-Instruct"),
]
TASKS = [
    ("finqa_numeric", "accuracy", ["numerical calculation", "table extraction"]),
    ("headline_temporal", "accuracy", ["temporal reasoning", "fact verification"]),
    ("earnings_claims", "f1", ["fact verification", "numerical calculation"]),
]
VARIANTS = {
    "numerical calculation": ["numerical calculation", "numeric calculation", "numerical calculations"],
    "table extraction": ["table extraction", "table data extraction", "tabular extraction"],
    "temporal reasoning": ["temporal reasoning", "temporal reasoning over dates"],
    "fact verification": ["fact verification", "factual verification"],
}
# proficiency per model over the skills above
PROFICIENCY = {
    "gpt-5": {"numerical calculation": 0.95, "table extraction": 0.9,
              "temporal reasoning": 0.9, "fact verification": 0.92},
    "qwen-2.5-72b": {"numerical calculation": 0.85, "table extraction": 0.8,
                     "temporal reasoning": 0.55, "fact verification": 0.8},
    "llama-3.3-70b": {"numerical calculation": 0.8, "table extraction": 0.75,
                      "temporal reasoning": 0.8, "fact verification": 0.75},
    "llama-3.1-8b": {"numerical calculation": 0.45, "table extraction": 0.6,
                     "temporal reasoning": 0.5, "fact verification": 0.55},
}
INSTANCES = 8


def main():
    rng = np.random.default_rng(7)
    outcomes, profiles = [], []
    for task_id, _, skills in TASKS:
        for i in range(INSTANCES):
            iid = f"{task_id}-{i:02d}"
            for model in MODELS:
                mentions = []
                for skill in skills:
                    fired = rng.random() < PROFICIENCY[model.model_id][skill]
                    forms = VARIANTS[skill]
                    # the first surface form dominates so majority vote names the skill
                    weights = np.array([3.0] + [1.0] * (len(forms) - 1))
                    phrase = forms[int(rng.choice(len(forms), p=weights / weights.sum()))]
                    crit = float(rng.choice([1.0, 0.6]))
                    mentions.append((phrase, "demonstrated" if fired else "missing", crit))
                correct = all(status == "demonstrated" for _, status, _ in mentions)
                outcomes.append(InstanceOutcome(model.model_id, task_id, iid, correct))
                profiles.append(InstanceProfile(model.model_id, task_id, iid,
                                                tuple(SkillMention(*m) for m in mentions)))
    d = Dataset(tuple(MODELS), tuple(TaskSpec(t, m) for t, m, _ in TASKS),
                tuple(outcomes), tuple(profiles))
    dump_dataset(d, fixture_dir())


if __name__ == "__main__":
    main()
