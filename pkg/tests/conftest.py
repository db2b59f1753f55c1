import json
from pathlib import Path

import numpy as np
import pytest

from ffsim.services.afm_student import AfmParams
from ffsim.services.bkt_tracer import BktParams
from ffsim.services.skill_pool import parse_pool

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "ffsim" / "fixtures"


def make_pool(problems, skills=("A", "B", "C")):
    """Skill model and fresh pool from {id: [skill, ...]} in insertion order."""
    document = {"skills": list(skills), "problems": [{"id": pid, "steps": steps} for pid, steps in problems.items()]}
    return parse_pool(json.dumps(document))


def flat_afm(skill_names, beta=0.0, gamma=0.1, theta_sd=1.0):
    n = len(skill_names)
    return AfmParams(
        skill_names=tuple(skill_names),
        beta=(beta,) * n,
        gamma=(gamma,) * n,
        theta_mean=0.0,
        theta_sd=theta_sd,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture
def bkt_defaults() -> BktParams:
    return BktParams()


@pytest.fixture
def abc_pool():
    return make_pool({"P1": ["A", "A", "B"], "P2": ["B", "B"], "P3": ["C"]})


@pytest.fixture
def fixture_pool():
    return parse_pool((FIXTURES_DIR / "pool_synthetic.json").read_bytes())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_config(tmp_path: Path, body: str, name: str = "experiment.cfg") -> Path:
    """Write a config next to copies of the bundled pool and AFM fixtures."""
    for fixture in ("pool_synthetic.json", "afm_params_synthetic.json"):
        (tmp_path / fixture).write_bytes((FIXTURES_DIR / fixture).read_bytes())
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path
