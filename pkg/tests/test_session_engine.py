import pytest

from ffsim.exceptions import SelectorContractError, StepCapExceededError, UsageError
from ffsim.models import RunToMastery, SelectorKind, StepBudget, TerminatedBy
from ffsim.services import bkt_tracer
from ffsim.services.afm_student import load_afm_params
from ffsim.services.bkt_tracer import BktParams, BktState
from ffsim.services.session_engine import SessionConfig, check_fast_forward, run_session
from tests.conftest import flat_afm, make_pool


def session(selector=SelectorKind.DETERMINISTIC, regime=None, fast_forward=False, student_index=0, **kwargs):
    return SessionConfig(
        regime=regime or RunToMastery(),
        selector=selector,
        fast_forward=fast_forward,
        master_seed=20250101,
        student_index=student_index,
        **kwargs,
    )


@pytest.fixture
def fixture_afm(fixtures_dir, fixture_pool):
    skill_model, _ = fixture_pool
    return load_afm_params(fixtures_dir / "afm_params_synthetic.json", skill_model)


def test_budget_counts_attempted_steps():
    _, pool = make_pool({"P1": ["A", "B", "C"], "P2": ["A", "B", "C"], "P3": ["A", "B", "C"]})
    record = run_session(session(regime=StepBudget(5)), pool, BktParams(), flat_afm("ABC"))
    assert record.attempted_steps == 5
    assert len(record.events) == 5
    assert record.terminated_by is TerminatedBy.BUDGET
    assert record.events[-1].step_counter == 5
    assert [e.problem_id for e in record.events] == ["P1"] * 3 + ["P2"] * 2


def test_fast_forward_skips_mastered_suffix():
    _, pool = make_pool({"P1": ["B", "A", "A"]}, skills=("A", "B"))
    initial = BktState((0.99, 0.25))
    record = run_session(
        session(regime=StepBudget(100), fast_forward=True),
        pool,
        BktParams(),
        flat_afm("AB", beta=5.0),
        initial_bkt=initial,
    )
    assert [(e.step_position, e.fast_forwarded) for e in record.events[:3]] == [(0, False), (1, True), (2, True)]
    assert all(e.correct is None and e.step_counter == 1 for e in record.events[1:3])
    assert record.attempted_steps == record.problems_started
    # every pass but the last one skips the mastered suffix
    assert record.problems_fast_forwarded == record.problems_started - 1
    assert record.replenishes == record.problems_started - 1
    assert record.terminated_by is TerminatedBy.MASTERY


def test_without_fast_forward_the_suffix_is_attempted():
    _, pool = make_pool({"P1": ["B", "A", "A"]}, skills=("A", "B"))
    record = run_session(
        session(regime=StepBudget(100)),
        pool,
        BktParams(),
        flat_afm("AB", beta=5.0),
        initial_bkt=BktState((0.99, 0.25)),
    )
    assert [(e.problem_id, e.step_position) for e in record.events[:3]] == [("P1", 0), ("P1", 1), ("P1", 2)]
    assert not any(e.fast_forwarded for e in record.events)
    assert [e.was_mastered_before for e in record.events[:2]] == [False, True]
    assert record.attempted_steps <= 100


def test_already_mastered_student_does_nothing():
    _, pool = make_pool({"P1": ["A", "B"]}, skills=("A", "B"))
    initial = bkt_tracer.with_posteriors(BktState((0.0, 0.0)), {}, default=0.99)
    record = run_session(session(), pool, BktParams(), flat_afm("AB"), initial_bkt=initial)
    assert record.events == []
    assert record.terminated_by is TerminatedBy.MASTERY
    assert record.steps_to_mastery == 0


def test_fully_mastered_problem_is_skipped_from_position_zero():
    _, pool = make_pool({"P1": ["A"], "P2": ["B"]}, skills=("A", "B"))
    record = run_session(
        session(fast_forward=True),
        pool,
        BktParams(),
        flat_afm("AB", beta=2.0),
        initial_bkt=BktState((0.99, 0.25)),
    )
    first = record.events[0]
    assert (first.problem_id, first.step_position, first.fast_forwarded) == ("P1", 0, True)
    assert record.problems_fast_forwarded >= 1
    assert record.terminated_by is TerminatedBy.MASTERY


def test_check_fast_forward_examples(bkt_defaults):
    _, pool = make_pool({"P1": ["B", "A", "A"], "P2": ["A", "B"]}, skills=("A", "B"))
    state = BktState((0.96, 0.30))
    assert check_fast_forward(pool.get("P1"), 1, state, bkt_defaults)
    assert not check_fast_forward(pool.get("P2"), 0, state, bkt_defaults)
    assert not check_fast_forward(pool.get("P1"), 0, state, bkt_defaults)
    assert check_fast_forward(pool.get("P2"), 0, BktState((0.99, 0.99)), bkt_defaults)
    with pytest.raises(UsageError):
        check_fast_forward(pool.get("P2"), 2, state, bkt_defaults)


def test_sessions_are_deterministic(fixture_pool, fixture_afm):
    _, pool = fixture_pool
    config = session(selector=SelectorKind.FOCUSED_PRACTICE, fast_forward=True, student_index=17)
    assert run_session(config, pool, BktParams(), fixture_afm) == run_session(config, pool, BktParams(), fixture_afm)


def test_arms_share_the_student(fixture_pool, fixture_afm):
    _, pool = fixture_pool
    records = [
        run_session(session(selector=kind, fast_forward=ff, student_index=3), pool, BktParams(), fixture_afm)
        for kind in (SelectorKind.RANDOM, SelectorKind.MASTERY_HARD)
        for ff in (True, False)
    ]
    assert len({record.theta for record in records}) == 1


@pytest.mark.parametrize("kind", list(SelectorKind))
@pytest.mark.parametrize("fast_forward", [True, False])
def test_run_to_mastery_invariants(kind, fast_forward, fixture_pool, fixture_afm):
    _, pool = fixture_pool
    params = BktParams()
    for student_index in range(5):
        record = run_session(
            session(selector=kind, fast_forward=fast_forward, student_index=student_index),
            pool,
            params,
            fixture_afm,
        )
        assert record.terminated_by is TerminatedBy.MASTERY
        assert bkt_tracer.all_mastered(record.final_bkt, params)
        assert record.attempted_steps == sum(record.final_student.opportunities)
        assert record.steps_to_mastery == record.attempted_steps
        if not fast_forward:
            assert not any(e.fast_forwarded for e in record.events)
        assert all(e.was_mastered_before for e in record.events if e.fast_forwarded)


def test_budget_is_never_exceeded(fixture_pool, fixture_afm):
    _, pool = fixture_pool
    for kind in SelectorKind:
        record = run_session(
            session(selector=kind, regime=StepBudget(20), fast_forward=True), pool, BktParams(), fixture_afm
        )
        assert record.attempted_steps <= 20
        if record.terminated_by is TerminatedBy.MASTERY:
            assert bkt_tracer.all_mastered(record.final_bkt, BktParams())


def test_step_cap_aborts_run_to_mastery(fixture_pool, fixture_afm):
    _, pool = fixture_pool
    with pytest.raises(StepCapExceededError) as excinfo:
        run_session(session(step_cap=3), pool, BktParams(), fixture_afm)
    assert excinfo.value.context["step_cap"] == 3


def test_mastery_selector_passes_over_mastered_remainder():
    _, pool = make_pool({"P1": ["A"], "P2": ["B"]}, skills=("A", "B"))
    record = run_session(
        session(selector=SelectorKind.MASTERY_EASY),
        pool,
        BktParams(),
        flat_afm("AB"),
        initial_bkt=BktState((0.25, 0.99)),
    )
    assert record.terminated_by is TerminatedBy.MASTERY
    assert {e.problem_id for e in record.events} == {"P1"}
    assert record.problems_passed_over == record.replenishes
    assert record.problems_started == record.replenishes + 1
    assert record.final_pool.passed_over_count == record.problems_passed_over
    assert record.final_pool.served_count == record.problems_started


def test_selector_declining_a_fresh_pool_is_a_contract_error():
    _, pool = make_pool({"P1": ["A"]}, skills=("A", "B"))
    with pytest.raises(SelectorContractError):
        run_session(
            session(selector=SelectorKind.MASTERY_HARD),
            pool,
            BktParams(),
            flat_afm("AB"),
            initial_bkt=BktState((0.99, 0.25)),
        )


def test_selector_none_ends_a_budget_session():
    _, pool = make_pool({"P1": ["A"]}, skills=("A", "B"))
    record = run_session(
        session(selector=SelectorKind.MASTERY_HARD, regime=StepBudget(10)),
        pool,
        BktParams(),
        flat_afm("AB"),
        initial_bkt=BktState((0.99, 0.25)),
    )
    assert record.events == []
    assert record.terminated_by is TerminatedBy.SELECTOR_NONE


def test_budget_session_starts_a_new_pass_when_the_pool_runs_out():
    _, pool = make_pool({"P1": ["A"], "P2": ["B"]}, skills=("A", "B"))
    record = run_session(
        session(regime=StepBudget(40)), pool, BktParams(), flat_afm("AB", beta=-1.0, gamma=0.0)
    )
    # each skill needs at least three attempts, one per pass
    assert record.replenishes >= 2
    assert record.terminated_by in (TerminatedBy.BUDGET, TerminatedBy.MASTERY)
    assert record.attempted_steps <= 40


def test_budget_session_passes_over_mastered_remainder():
    _, pool = make_pool({"P1": ["A"], "P2": ["B"]}, skills=("A", "B"))
    record = run_session(
        session(selector=SelectorKind.MASTERY_EASY, regime=StepBudget(50)),
        pool,
        BktParams(),
        flat_afm("AB", beta=3.0),
        initial_bkt=BktState((0.25, 0.99)),
    )
    assert record.terminated_by is TerminatedBy.MASTERY
    assert {e.problem_id for e in record.events} == {"P1"}
    assert record.problems_passed_over == record.replenishes


@pytest.mark.parametrize("kind", [SelectorKind.DETERMINISTIC, SelectorKind.RANDOM])
@pytest.mark.parametrize("fast_forward", [True, False])
def test_unpracticed_skill_is_reported_before_running_to_mastery(kind, fast_forward):
    _, pool = make_pool({"P1": ["A"]}, skills=("A", "B"))
    with pytest.raises(SelectorContractError) as excinfo:
        run_session(
            session(selector=kind, fast_forward=fast_forward, step_cap=1000),
            pool,
            BktParams(),
            flat_afm("AB"),
            initial_bkt=BktState((0.99, 0.25)),
        )
    assert excinfo.value.context["unpracticed_skills"] == [1]
    assert excinfo.value.context["unmastered_skills"] == [1]


@pytest.mark.parametrize("kind", [SelectorKind.DETERMINISTIC, SelectorKind.RANDOM])
def test_budget_pass_without_attempts_ends_the_session(kind):
    _, pool = make_pool({"P1": ["A"], "P2": ["A", "A"]}, skills=("A", "B"))
    record = run_session(
        session(selector=kind, regime=StepBudget(10), fast_forward=True),
        pool,
        BktParams(),
        flat_afm("AB"),
        initial_bkt=BktState((0.99, 0.25)),
    )
    assert record.terminated_by is TerminatedBy.SELECTOR_NONE
    assert record.attempted_steps == 0
    assert record.problems_fast_forwarded == 2
    assert record.replenishes == 0


@pytest.mark.parametrize("fast_forward", [True, False])
def test_pool_accounting_over_run_to_mastery_sessions(fast_forward, fixture_pool, fixture_afm):
    _, pool = fixture_pool
    for student_index in range(5):
        record = run_session(
            session(selector=SelectorKind.MASTERY_HARD, fast_forward=fast_forward, student_index=student_index),
            pool,
            BktParams(),
            fixture_afm,
        )
        final = record.final_pool
        assert final.replenish_count * len(final) + final.consumed_count == final.served_count + final.passed_over_count
        assert final.served_count == record.problems_started
        assert final.passed_over_count == record.problems_passed_over
        assert final.replenish_count == record.replenishes


def test_inconsistent_parameters_rejected(fixture_pool):
    _, pool = fixture_pool
    with pytest.raises(UsageError):
        run_session(session(), pool, BktParams(), flat_afm("AB"))


def test_config_validation():
    with pytest.raises(UsageError):
        session(student_index=-1)
    with pytest.raises(UsageError):
        StepBudget(0)
