import pytest

from ffsim.exceptions import ConfigValidationError
from ffsim.models import RunToMastery, SelectorKind, StepBudget
from ffsim.services.experiment_config import (
    build_bkt_params,
    config_digest,
    plan_conditions,
    read_flat_config,
    regime_of,
    validate_config,
)
from ffsim.services.skill_pool import load_pool_file
from tests.conftest import write_config

MINIMAL = "pool_path = pool_synthetic.json\nafm_params_path = afm_params_synthetic.json\n"


def errors_of(path, overrides=None):
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config(path, overrides)
    return excinfo.value.errors


def test_minimal_config_takes_defaults(tmp_path):
    config = validate_config(write_config(tmp_path, MINIMAL))
    assert config.n_students == 10000
    assert config.bkt_mastery_threshold == 0.95
    assert config.bkt_p_init == 0.25
    assert isinstance(regime_of(config), RunToMastery)
    assert len(plan_conditions(config)) == 10
    assert config.pool_path == str(tmp_path / "pool_synthetic.json")


def test_conditions_follow_config_order(tmp_path):
    body = MINIMAL + "selectors = MasteryHard, random\nff_modes = false, true\n"
    conditions = plan_conditions(validate_config(write_config(tmp_path, body)))
    assert [c.label for c in conditions] == [
        "mastery_hard/no_ff",
        "mastery_hard/ff",
        "random/no_ff",
        "random/ff",
    ]


def test_budget_regime(tmp_path):
    config = validate_config(write_config(tmp_path, MINIMAL + "regime = budget\nbudget = 40\n"))
    assert regime_of(config) == StepBudget(40)


def test_comments_and_blank_lines():
    values, lines, errors = read_flat_config("# header\n\nseed_like = 1  # trailing\nbad line\n")
    assert values == {"seed_like": "1"}
    assert lines == {"seed_like": 3}
    assert errors == ["line 4: expected 'key = value', got 'bad line'"]


def test_misspelled_key_is_reported_with_its_line(tmp_path):
    errors = errors_of(write_config(tmp_path, MINIMAL + "selctor = random\n"))
    assert errors == ["line 3: unknown key 'selctor'"]


def test_duplicate_key(tmp_path):
    errors = errors_of(write_config(tmp_path, MINIMAL + "n_students = 5\nn_students = 6\n"))
    assert errors == ["line 4: duplicate key 'n_students' (first set on line 3)"]


def test_every_error_is_reported(tmp_path):
    body = "pool_path = missing.json\nafm_params_path = afm_params_synthetic.json\nn_students = 0\nregime = budget\nfoo = 1\n"
    errors = errors_of(write_config(tmp_path, body))
    assert any("unknown key 'foo'" in e for e in errors)
    assert any(e.startswith("line 3: n_students") for e in errors)
    assert len(errors) >= 2


def test_semantic_errors(tmp_path):
    errors = errors_of(write_config(tmp_path, MINIMAL + "regime = budget\nff_modes = true, true\n"))
    assert any("requires a 'budget'" in e for e in errors)
    assert any("ff_modes must not repeat" in e for e in errors)

    errors = errors_of(write_config(tmp_path, MINIMAL + "budget = 10\n"))
    assert errors == ["line 3: 'budget' is only valid with regime 'budget'"]


def test_missing_input_files(tmp_path):
    path = write_config(tmp_path, "pool_path = nope.json\nafm_params_path = nope_either.json\n")
    errors = errors_of(path)
    assert any(e.startswith("line 1: pool file does not exist") for e in errors)
    assert any(e.startswith("line 2: AFM parameters file does not exist") for e in errors)


def test_missing_required_key(tmp_path):
    errors = errors_of(write_config(tmp_path, "pool_path = pool_synthetic.json\n"))
    assert "config: required key 'afm_params_path' is missing" in errors


def test_unknown_selector(tmp_path):
    errors = errors_of(write_config(tmp_path, MINIMAL + "selectors = random, greedy\n"))
    assert len(errors) == 1 and errors[0].startswith("line 3: selectors")


def test_bkt_block(tmp_path):
    body = MINIMAL + "bkt.p_learn = 0.3\nbkt.cancel-var.p_slip = 0.05\n"
    config = validate_config(write_config(tmp_path, body))
    skill_model, _ = load_pool_file(config.pool_path)
    table = build_bkt_params(config, skill_model)
    assert table.default.p_learn == 0.3
    override = table.for_skill(skill_model.resolve("cancel-var").index)
    assert (override.p_learn, override.p_slip) == (0.3, 0.05)
    assert table.for_skill(skill_model.resolve("comb-var").index) == table.default


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("bkt.p_guess = 0.6\nbkt.p_slip = 0.5\n", "p_guess + p_slip"),
        ("bkt.no-such-skill.p_learn = 0.3\n", "unknown skill 'no-such-skill'"),
        ("bkt_p_learn = 0.3\n", "unknown key 'bkt_p_learn'"),
        ("bkt.p_forget = 0.1\n", "unknown key 'bkt.p_forget'"),
    ],
)
def test_invalid_bkt_entries(tmp_path, line, fragment):
    errors = errors_of(write_config(tmp_path, MINIMAL + line))
    assert any(fragment in e for e in errors), errors


def test_command_line_overrides(tmp_path):
    path = write_config(tmp_path, MINIMAL + "n_students = 100\n")
    config = validate_config(path, {"n_students": 5, "master_seed": None, "jobs": "auto"})
    assert config.n_students == 5
    assert config.master_seed == 20250101
    assert config.jobs >= 1

    errors = errors_of(path, {"n_students": 0})
    assert len(errors) == 1 and errors[0].startswith("command line: n_students")


def test_missing_config_file(tmp_path):
    assert errors_of(tmp_path / "absent.cfg") == [f"config file not found: {tmp_path / 'absent.cfg'}"]


def test_digest_ignores_non_result_fields(tmp_path):
    path = write_config(tmp_path, MINIMAL)
    base = config_digest(validate_config(path))
    assert config_digest(validate_config(path, {"output_dir": "elsewhere", "jobs": 3, "trace": True})) == base
    assert config_digest(validate_config(path, {"master_seed": 1})) != base


def test_selector_aliases(tmp_path):
    config = validate_config(write_config(tmp_path, MINIMAL + "selectors = Focused Practice, deterministic\n"))
    assert [c.selector for c in plan_conditions(config)][::2] == [
        SelectorKind.FOCUSED_PRACTICE,
        SelectorKind.DETERMINISTIC,
    ]
