import pytest

from helpers import make_dataset, mention
from skillroute.records import ModelSpec, TaskSpec


@pytest.fixture
def two_model_dataset():
    models = [ModelSpec("gpt-5", 10.0, 2400.0), ModelSpec("llama-3.3-70b", 0.88, 900.0)]
    tasks = [TaskSpec("finqa", "accuracy")]
    rows = [
        ("gpt-5", "finqa", "i1", True, [mention("numerical calculation")]),
        ("gpt-5", "finqa", "i2", True, [mention("numerical calculation")]),
        ("llama-3.3-70b", "finqa", "i1", True, [mention("numerical calculation")]),
        ("llama-3.3-70b", "finqa", "i2", False, [mention("numerical calculation", "missing")]),
    ]
    return make_dataset(models, tasks, rows)
