"""
Experiment config files: flat `key = value` text, validated by pydantic.

Every problem found is reported (with the line it came from), not just the
first one. Relative input paths are resolved against the config file's directory.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from ffsim.exceptions import ConfigValidationError, SchemaError
from ffsim.models import RunToMastery, SelectorKind, SkillModel, StepBudget, Regime
from ffsim.schemas import ExperimentConfig
from ffsim.services.bkt_tracer import BktParams, BktParamTable
from ffsim.services.skill_pool import load_pool_file
from ffsim.services.afm_student import load_afm_params

logger = logging.getLogger(__name__)

BKT_FIELDS = ("p_init", "p_learn", "p_guess", "p_slip", "mastery_threshold")
# Input files resolve against the config file's directory; output_dir against the working directory.
PATH_FIELDS = ("pool_path", "afm_params_path")
# Fields that cannot change simulated results; kept out of the config digest.
NON_RESULT_FIELDS = ("output_dir", "trace", "jobs")

ValueSource = Union[int, str]  # line number, or "command line"


@dataclass(frozen=True)
class Condition:
    selector: SelectorKind
    fast_forward: bool

    @property
    def label(self) -> str:
        return f"{self.selector.value}/{'ff' if self.fast_forward else 'no_ff'}"


def _where(source: Optional[ValueSource]) -> str:
    if source is None:
        return "config"
    if isinstance(source, int):
        return f"line {source}"
    return source


def read_flat_config(text: str) -> Tuple[Dict[str, str], Dict[str, int], List[str]]:
    """Split a flat config into raw values, their line numbers, and syntax errors."""
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    errors: List[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            errors.append(f"line {lineno}: missing key before '='")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key '{key}' (first set on line {lines[key]})")
            continue
        values[key] = value
        lines[key] = lineno
    return values, lines, errors


def _to_model_input(
    values: Dict[str, Any],
    sources: Dict[str, ValueSource],
) -> Tuple[Dict[str, Any], Dict[str, ValueSource], List[str]]:
    """Map file keys onto ExperimentConfig fields (`bkt.x` -> `bkt_x`, `bkt.<skill>.x` -> overrides)."""
    data: Dict[str, Any] = {}
    field_sources: Dict[str, ValueSource] = {}
    errors: List[str] = []
    for key, value in values.items():
        source = sources.get(key)
        if key.startswith("bkt_"):
            errors.append(f"{_where(source)}: unknown key '{key}' (BKT parameters are written as 'bkt.<field>')")
            continue
        if key.startswith("bkt."):
            parts = key.split(".")
            if len(parts) == 2 and parts[1] in BKT_FIELDS:
                data[f"bkt_{parts[1]}"] = value
                field_sources[f"bkt_{parts[1]}"] = source
                continue
            if len(parts) == 3 and parts[2] in BKT_FIELDS:
                data.setdefault("bkt_overrides", {}).setdefault(parts[1], {})[parts[2]] = value
                field_sources.setdefault("bkt_overrides", source)
                field_sources[f"bkt_overrides.{parts[1]}.{parts[2]}"] = source
                continue
            errors.append(f"{_where(source)}: unknown key '{key}'")
            continue
        data[key] = value
        field_sources[key] = source
    return data, field_sources, errors


def _format_pydantic_errors(e: ValidationError, field_sources: Dict[str, ValueSource]) -> List[str]:
    messages = []
    for err in e.errors():
        loc = [str(part) for part in err["loc"]]
        name = loc[0] if loc else "config"
        source = field_sources.get(".".join(loc)) or field_sources.get(name)
        if err["type"] == "extra_forbidden":
            messages.append(f"{_where(source)}: unknown key '{name}'")
        elif err["type"] == "missing":
            messages.append(f"config: required key '{name}' is missing")
        else:
            display = name.replace("bkt_overrides", "bkt").replace("bkt_", "bkt.", 1)
            messages.append(f"{_where(source)}: {display}: {err['msg']}")
    return messages


def build_bkt_params(config: ExperimentConfig, skill_model: SkillModel) -> BktParamTable:
    default = BktParams(
        p_init=config.bkt_p_init,
        p_learn=config.bkt_p_learn,
        p_guess=config.bkt_p_guess,
        p_slip=config.bkt_p_slip,
        mastery_threshold=config.bkt_mastery_threshold,
    )
    overrides = {}
    for skill_name, fields in config.bkt_overrides.items():
        skill = skill_model.resolve(skill_name)
        overrides[skill.index] = BktParams(**{**default.model_dump(), **fields})
    return BktParamTable(default=default, overrides=overrides)


def regime_of(config: ExperimentConfig) -> Regime:
    return StepBudget(config.budget) if config.regime == "budget" else RunToMastery()


def plan_conditions(config: ExperimentConfig) -> List[Condition]:
    return [
        Condition(selector=SelectorKind.parse(selector), fast_forward=ff)
        for selector in config.selectors
        for ff in config.ff_modes
    ]


def config_digest(config: ExperimentConfig) -> str:
    payload = config.model_dump(exclude=set(NON_RESULT_FIELDS))
    for name in ("pool_path", "afm_params_path"):
        path = Path(payload[name])
        payload[name] = hashlib.sha256(path.read_bytes()).hexdigest() if path.exists() else payload[name]
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def validate_config(
    path: Union[str, Path],
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Resolve a config file (plus command-line overrides) into an ExperimentConfig.

    Raises:
        ConfigValidationError: carrying every detected problem, each prefixed by its line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigValidationError([f"config file not found: {path}"], path=str(path)) from None

    values, lines, errors = read_flat_config(text)
    sources: Dict[str, ValueSource] = dict(lines)
    merged: Dict[str, Any] = dict(values)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
            sources[key] = "command line"

    data, field_sources, mapping_errors = _to_model_input(merged, sources)
    errors.extend(mapping_errors)

    base_dir = path.parent
    for name in PATH_FIELDS:
        if name in data and isinstance(data[name], str) and sources.get(name) != "command line":
            candidate = Path(data[name])
            data[name] = str(candidate if candidate.is_absolute() else base_dir / candidate)

    config: Optional[ExperimentConfig] = None
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors.extend(_format_pydantic_errors(e, field_sources))

    if config is not None:
        errors.extend(_semantic_errors(config, field_sources))

    if errors:
        raise ConfigValidationError(errors, path=str(path))

    logger.info(f"Validated config {path}: {len(plan_conditions(config))} condition(s), {config.n_students} students each")
    return config


def _semantic_errors(config: ExperimentConfig, field_sources: Dict[str, ValueSource]) -> List[str]:
    errors: List[str] = []
    if config.regime == "budget" and config.budget is None:
        errors.append(f"{_where(field_sources.get('regime'))}: regime 'budget' requires a 'budget' key")
    if config.regime == "run_to_mastery" and config.budget is not None:
        errors.append(f"{_where(field_sources.get('budget'))}: 'budget' is only valid with regime 'budget'")
    if len(set(config.ff_modes)) != len(config.ff_modes):
        errors.append(f"{_where(field_sources.get('ff_modes'))}: ff_modes must not repeat")

    skill_model = None
    pool_file = Path(config.pool_path)
    if not pool_file.is_file():
        errors.append(f"{_where(field_sources.get('pool_path'))}: pool file does not exist: {pool_file}")
    else:
        try:
            skill_model, _ = load_pool_file(pool_file)
        except SchemaError as e:
            errors.append(f"{_where(field_sources.get('pool_path'))}: {e.detail}")

    afm_file = Path(config.afm_params_path)
    if not afm_file.is_file():
        errors.append(f"{_where(field_sources.get('afm_params_path'))}: AFM parameters file does not exist: {afm_file}")
    elif skill_model is not None:
        try:
            load_afm_params(afm_file, skill_model)
        except SchemaError as e:
            detail = e.detail
            if e.context.get("unknown_skills") or e.context.get("missing_skills"):
                detail += f" (unknown: {e.context.get('unknown_skills')}, missing: {e.context.get('missing_skills')})"
            errors.append(f"{_where(field_sources.get('afm_params_path'))}: {detail}")

    try:
        default = BktParams(
            p_init=config.bkt_p_init,
            p_learn=config.bkt_p_learn,
            p_guess=config.bkt_p_guess,
            p_slip=config.bkt_p_slip,
            mastery_threshold=config.bkt_mastery_threshold,
        )
    except ValidationError as e:
        for err in e.errors():
            if err["loc"]:
                name = str(err["loc"][0])
                errors.append(f"{_where(field_sources.get(f'bkt_{name}'))}: bkt.{name}: {err['msg']}")
            else:
                errors.append(f"{_where(field_sources.get('bkt_p_guess'))}: bkt: {err['msg']}")
        default = None

    for skill_name, fields in config.bkt_overrides.items():
        source = field_sources.get(f"bkt_overrides.{skill_name}.{next(iter(fields))}")
        if skill_model is not None and skill_model.get(skill_name) is None:
            errors.append(f"{_where(source)}: BKT override for unknown skill '{skill_name}'")
            continue
        if default is not None:
            try:
                BktParams(**{**default.model_dump(), **fields})
            except ValidationError as e:
                for err in e.errors():
                    errors.append(f"{_where(source)}: bkt.{skill_name}: {err['msg']}")
    return errors
