import math
from collections import Counter

import numpy as np
import pytest

from ffsim.exceptions import SelectorContractError
from ffsim.models import SelectorKind
from ffsim.services import bkt_tracer, skill_pool
from ffsim.services.bkt_tracer import BktState
from ffsim.services.selectors import focused_weights, score_available, score_problem, select
from tests.conftest import make_pool

MASTERY_SELECTORS = (SelectorKind.MASTERY_EASY, SelectorKind.MASTERY_HARD, SelectorKind.FOCUSED_PRACTICE)


@pytest.fixture
def two_problem_pool():
    return make_pool({"P1": ["A", "A", "B"], "P2": ["B", "B"]})


def test_score_problem_hand_computed(two_problem_pool, bkt_defaults):
    _, pool = two_problem_pool
    state = BktState((0.96, 0.30, 0.25))
    score = score_problem(pool.get("P1"), state, bkt_defaults)
    assert score.mean_difficulty == pytest.approx(0.26, abs=1e-12)
    assert score.unmastered_count == 1
    assert score.distinct_skills == 2


def test_score_problem_all_mastered(two_problem_pool, bkt_defaults):
    _, pool = two_problem_pool
    score = score_problem(pool.get("P1"), BktState((1.0, 1.0, 1.0)), bkt_defaults)
    assert score.mean_difficulty == 0.0
    assert score.unmastered_count == 0


def test_score_single_step_unmastered(bkt_defaults):
    _, pool = make_pool({"P": ["C"]})
    assert score_problem(pool.get("P"), BktState((0.25, 0.25, 0.25)), bkt_defaults).mean_difficulty == 0.75


def test_mastery_hard_and_easy_hand_example(two_problem_pool, bkt_defaults, rng):
    _, pool = two_problem_pool
    state = BktState((0.96, 0.30, 0.25))
    assert select(SelectorKind.MASTERY_HARD, pool, state, bkt_defaults, rng) == "P2"
    assert select(SelectorKind.MASTERY_EASY, pool, state, bkt_defaults, rng) == "P1"


def test_deterministic_takes_pool_order_without_drawing(fixture_pool, bkt_defaults):
    skill_model, pool = fixture_pool
    state = bkt_tracer.initial_state(skill_model, bkt_defaults)
    rng = np.random.default_rng(1)
    order = []
    while not pool.exhausted():
        chosen = select(SelectorKind.DETERMINISTIC, pool, state, bkt_defaults, rng)
        order.append(pool.get(chosen).pool_order)
        pool = skill_pool.mark_consumed(pool, chosen)
    assert order == list(range(24))
    assert rng.random() == np.random.default_rng(1).random()


def test_ties_break_on_pool_order(fixture_pool, bkt_defaults, rng):
    skill_model, pool = fixture_pool
    state = bkt_tracer.initial_state(skill_model, bkt_defaults)
    assert select(SelectorKind.MASTERY_HARD, pool, state, bkt_defaults, rng) == "p01"
    assert select(SelectorKind.MASTERY_EASY, pool, state, bkt_defaults, rng) == "p01"


@pytest.mark.parametrize("kind", MASTERY_SELECTORS)
def test_fully_mastered_pool_returns_none(kind, two_problem_pool, bkt_defaults, rng):
    _, pool = two_problem_pool
    assert select(kind, pool, BktState((0.99, 0.99, 0.99)), bkt_defaults, rng) is None


@pytest.mark.parametrize("kind", list(SelectorKind))
def test_empty_availability_is_contract_breach(kind, bkt_defaults, rng):
    _, pool = make_pool({"P1": ["A"]})
    pool = skill_pool.mark_consumed(pool, "P1")
    with pytest.raises(SelectorContractError):
        select(kind, pool, BktState((0.25, 0.25, 0.25)), bkt_defaults, rng)


def test_mastery_selectors_skip_fully_mastered_problems(bkt_defaults, rng):
    # P1 is fully mastered (threshold inclusive) and would otherwise be the easiest.
    _, pool = make_pool({"P1": ["A"], "P2": ["B", "C"], "P3": ["C"]})
    state = BktState((0.95, 0.99, 0.97))
    state = bkt_tracer.with_posteriors(state, {2: 0.5})
    assert select(SelectorKind.MASTERY_EASY, pool, state, bkt_defaults, rng) == "P2"
    assert select(SelectorKind.MASTERY_HARD, pool, state, bkt_defaults, rng) == "P3"


def test_mastery_hard_prefers_most_unmastered_skills(bkt_defaults, rng):
    _, pool = make_pool(
        {"P1": ["A", "D"], "P2": ["A", "B", "C"], "P3": ["B", "D"]},
        skills=("A", "B", "C", "D"),
    )
    state = BktState((0.2, 0.2, 0.2, 0.99))
    scores = {s.problem_id: s for s in score_available(pool, state, bkt_defaults)}
    assert max(scores.values(), key=lambda s: s.unmastered_count).problem_id == "P2"
    assert select(SelectorKind.MASTERY_HARD, pool, state, bkt_defaults, rng) == "P2"


def test_difficulty_scaling_leaves_choices_unchanged(fixture_pool, bkt_defaults):
    skill_model, pool = fixture_pool
    draws = np.random.default_rng(2024)
    for _ in range(50):
        state = BktState(tuple(float(v) for v in draws.uniform(0.0, 1.0, len(skill_model))))
        for kind in (SelectorKind.MASTERY_EASY, SelectorKind.MASTERY_HARD):
            base = select(kind, pool, state, bkt_defaults, draws, scale=1.0)
            scaled = select(kind, pool, state, bkt_defaults, draws, scale=3.7)
            assert base == scaled


def test_random_selection_is_uniform(bkt_defaults):
    _, pool = make_pool({"P1": ["A"], "P2": ["B"], "P3": ["C"]})
    state = BktState((0.25, 0.25, 0.25))
    rng = np.random.default_rng(31337)
    trials = 100_000
    counts = Counter(select(SelectorKind.RANDOM, pool, state, bkt_defaults, rng) for _ in range(trials))
    sigma = math.sqrt(trials * (1 / 3) * (2 / 3))
    for pid in ("P1", "P2", "P3"):
        assert abs(counts[pid] - trials / 3) < 4 * sigma


def test_focused_practice_matches_weights(bkt_defaults):
    _, pool = make_pool({"P1": ["A", "A", "B"], "P2": ["B", "B"], "P3": ["C"], "P4": ["A"]})
    state = BktState((0.96, 0.30, 0.5))
    scores = score_available(pool, state, bkt_defaults)
    weights = dict(zip([s.problem_id for s in scores], focused_weights(scores)))
    assert weights["P4"] == 0.0
    assert sum(weights.values()) == pytest.approx(1.0)

    rng = np.random.default_rng(4242)
    trials = 100_000
    counts = Counter(select(SelectorKind.FOCUSED_PRACTICE, pool, state, bkt_defaults, rng) for _ in range(trials))
    assert counts["P4"] == 0
    for pid in ("P1", "P2", "P3"):
        p = weights[pid]
        assert abs(counts[pid] - trials * p) < 4 * math.sqrt(trials * p * (1 - p))


def test_focused_weights_follow_difficulty_per_skill(bkt_defaults):
    _, pool = make_pool({"P1": ["A", "A", "B"], "P2": ["B", "B"]})
    scores = score_available(pool, BktState((0.96, 0.30, 0.25)), bkt_defaults)
    raw = [0.26 / 2, 0.70 / 1]
    expected = [w / sum(raw) for w in raw]
    assert focused_weights(scores) == pytest.approx(expected)


def test_random_and_focused_draw_once(bkt_defaults):
    _, pool = make_pool({"P1": ["A"], "P2": ["B"]})
    state = BktState((0.25, 0.25, 0.25))

    used = np.random.default_rng(5)
    select(SelectorKind.RANDOM, pool, state, bkt_defaults, used)
    reference = np.random.default_rng(5)
    reference.integers(2)
    assert used.random() == reference.random()

    used = np.random.default_rng(5)
    select(SelectorKind.FOCUSED_PRACTICE, pool, state, bkt_defaults, used)
    reference = np.random.default_rng(5)
    reference.random()
    assert used.random() == reference.random()
