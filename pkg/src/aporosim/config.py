"""Scenario configuration: YAML loading and invariant checking.

The scenario file is YAML.  Loading only checks structure (types, known
names); every numeric/dimensional invariant is reported by
:func:`validate_scenario` so callers can decide what to do with a bad file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

from .core import (
    STEPS_PER_DAY,
    STEPS_PER_MONTH,
    Action,
    ActionKind,
    FacilityKind,
    Need,
    NeedCategory,
    NeedModel,
    SAMPLED_STATUSES,
    Status,
)

Capacity = Union[int, str]  # int, "auto" or "unbounded"

DATA_FILES = ("default.scn", "default.norms", "barcelona4.demo")


class ConfigError(Exception):
    """A scenario, demographics or norms file cannot be used."""


@dataclass(frozen=True)
class Violation:
    kind: str  # OutOfRange | DimensionMismatch | MissingEntry | EmptyActionSet | UnknownName
    field: str
    key: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.field}, {self.key})" if self.key else f"{self.kind}({self.field})"


@dataclass
class ScenarioConfig:
    width: int
    height: int
    facility_counts: Dict[FacilityKind, int]
    capacities: Dict[FacilityKind, Capacity]
    actions: Tuple[Action, ...]
    action_sets: Dict[Status, Tuple[ActionKind, ...]]
    need_model: NeedModel
    alpha: float
    init_nsl: Dict[Status, Tuple[float, float]]
    decay: Dict[Status, Dict[str, float]]
    sat: Dict[Status, Dict[str, List[float]]]
    sleep_hours: Tuple[int, int] = (0, 8)
    work_hours: Tuple[int, int] = (9, 16)
    deliberation_hours: Tuple[int, int] = (17, 23)
    steps_per_month: int = STEPS_PER_MONTH
    pension_ratio: float = 0.6
    prison_days: int = 5
    norms_path: Optional[Path] = None
    demographics_path: Optional[Path] = None
    source: Optional[Path] = field(default=None, compare=False)

    @property
    def action_names(self) -> Tuple[ActionKind, ...]:
        return tuple(a.name for a in self.actions)

    def action(self, name: ActionKind) -> Action:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def action_index(self, name: ActionKind) -> int:
        return self.action_names.index(name)


def resolve_path(path: Union[str, Path]) -> Path:
    """Return ``path`` if it exists, else the shipped data file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    if p.name in DATA_FILES and len(p.parts) == 1:
        return Path(str(resources.files("aporosim") / "data" / p.name))
    return p


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a mapping at top level")
    return data


def _require(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise ConfigError(f"{where}: missing key {key!r}")
    return data[key]


def _status_key(text: str, where: str) -> Status:
    try:
        return Status.parse(text)
    except ValueError:
        raise ConfigError(f"{where}: unknown status {text!r}") from None


def _action_kind(text: str, where: str) -> ActionKind:
    try:
        return ActionKind(text)
    except ValueError:
        raise ConfigError(f"{where}: unknown action {text!r}") from None


def _facility_kind(text: str, where: str) -> FacilityKind:
    try:
        return FacilityKind(text)
    except ValueError:
        raise ConfigError(f"{where}: unknown facility kind {text!r}") from None


def _window(value: Any, where: str) -> Tuple[int, int]:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ConfigError(f"{where}: expected [first_hour, last_hour]")
    return (value[0], value[1])


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_scenario(data: Mapping[str, Any], base_dir: Optional[Path] = None) -> ScenarioConfig:
    grid = _require(data, "grid", "scenario")
    facilities = _require(data, "facilities", "scenario")
    counts: Dict[FacilityKind, int] = {}
    caps: Dict[FacilityKind, Capacity] = {}
    for name, spec in facilities.items():
        kind = _facility_kind(name, "facilities")
        if isinstance(spec, int):
            spec = {"count": spec}
        counts[kind] = int(_require(spec, "count", f"facilities.{name}"))
        caps[kind] = spec.get("capacity", "auto")

    actions = []
    for i, entry in enumerate(_require(data, "actions", "scenario")):
        where = f"actions[{i}]"
        kind = _action_kind(_require(entry, "name", where), where)
        fac = entry.get("facility")
        actions.append(
            Action(kind, int(entry.get("cost", 0)), _facility_kind(fac, where) if fac else None)
        )

    action_sets = {
        _status_key(s, "action_sets"): tuple(_action_kind(a, f"action_sets.{s}") for a in names)
        for s, names in _require(data, "action_sets", "scenario").items()
    }

    needs_cfg = _require(data, "needs", "scenario")
    categories, needs = [], []
    for cname, cspec in _require(needs_cfg, "categories", "needs").items():
        categories.append(
            NeedCategory(cname, _number(_require(cspec, "importance", f"needs.{cname}"), cname))
        )
        needs.extend(Need(n, cname) for n in _require(cspec, "needs", f"needs.{cname}"))
    model = NeedModel(tuple(categories), tuple(needs))

    init = {}
    for s, spec in _require(needs_cfg, "init", "needs").items():
        init[_status_key(s, "needs.init")] = (
            _number(_require(spec, "mean", f"needs.init.{s}"), s),
            _number(_require(spec, "sd", f"needs.init.{s}"), s),
        )
    decay = {
        _status_key(s, "needs.decay"): {n: _number(v, f"needs.decay.{s}.{n}") for n, v in table.items()}
        for s, table in _require(needs_cfg, "decay", "needs").items()
    }
    sat = {}
    for s, table in _require(needs_cfg, "satisfaction", "needs").items():
        rows = {}
        for n, row in table.items():
            if not isinstance(row, list):
                raise ConfigError(f"needs.satisfaction.{s}.{n}: expected a list")
            rows[n] = [_number(v, f"needs.satisfaction.{s}.{n}") for v in row]
        sat[_status_key(s, "needs.satisfaction")] = rows

    schedule = data.get("schedule", {})
    economy = data.get("economy", {})
    base = base_dir or Path(".")

    def _path(key: str) -> Optional[Path]:
        if key not in data:
            return None
        p = base / data[key]
        return p if p.exists() else resolve_path(data[key])

    return ScenarioConfig(
        width=int(_require(grid, "width", "grid")),
        height=int(_require(grid, "height", "grid")),
        facility_counts=counts,
        capacities=caps,
        actions=tuple(actions),
        action_sets=action_sets,
        need_model=model,
        alpha=_number(needs_cfg.get("alpha", 0.5), "needs.alpha"),
        init_nsl=init,
        decay=decay,
        sat=sat,
        sleep_hours=_window(schedule.get("sleep_hours", [0, 8]), "schedule.sleep_hours"),
        work_hours=_window(schedule.get("work_hours", [9, 16]), "schedule.work_hours"),
        deliberation_hours=_window(
            schedule.get("deliberation_hours", [17, 23]), "schedule.deliberation_hours"
        ),
        steps_per_month=int(schedule.get("steps_per_month", STEPS_PER_MONTH)),
        pension_ratio=_number(economy.get("pension_ratio", 0.6), "economy.pension_ratio"),
        prison_days=int(economy.get("prison_days", 5)),
        norms_path=_path("norms"),
        demographics_path=_path("demographics"),
    )


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    p = resolve_path(path)
    data = read_yaml(p)
    try:
        scenario = parse_scenario(data, p.parent)
    except (TypeError, AttributeError, ValueError) as exc:
        raise ConfigError(f"{p}: malformed scenario: {exc}") from exc
    scenario.source = p
    return scenario


def default_scenario() -> ScenarioConfig:
    return load_scenario("default.scn")


def _in_unit(x: float) -> bool:
    return 0.0 <= x <= 1.0


def validate_scenario(scenario: ScenarioConfig) -> List[Violation]:
    """Return every invariant violation found; an empty list means the scenario is usable."""
    out: List[Violation] = []
    names = scenario.need_model.need_names
    n_actions = len(scenario.actions)

    if scenario.width < 1 or scenario.height < 1:
        out.append(Violation("OutOfRange", "grid"))
    for c in scenario.need_model.categories:
        if not _in_unit(c.importance):
            out.append(Violation("OutOfRange", "Imp", c.name))
    if len(set(names)) != len(names):
        out.append(Violation("DuplicateName", "needs"))
    if not _in_unit(scenario.alpha):
        out.append(Violation("OutOfRange", "alpha"))

    if len(set(scenario.action_names)) != n_actions:
        out.append(Violation("DuplicateName", "actions"))
    for a in scenario.actions:
        if a.cost < 0:
            out.append(Violation("OutOfRange", "cost", a.name.value))
        if a.facility is not None and scenario.facility_counts.get(a.facility, 0) < 1:
            out.append(Violation("MissingEntry", "facilities", a.facility.value))
    for kind, count in scenario.facility_counts.items():
        if count < 0:
            out.append(Violation("OutOfRange", "facilities", kind.value))

    for status in Status:
        acts = scenario.action_sets.get(status)
        if acts is None:
            out.append(Violation("MissingEntry", "action_sets", status.label))
            continue
        if not acts:
            out.append(Violation("EmptyActionSet", "action_sets", status.label))
        for a in acts:
            if a not in scenario.action_names:
                out.append(Violation("UnknownName", f"action_sets.{status.label}", a.value))
            elif a is ActionKind.GO_PRISON and status is not Status.IMPRISONED:
                out.append(Violation("OutOfRange", f"action_sets.{status.label}", a.value))

    for status in SAMPLED_STATUSES:
        if status not in scenario.init_nsl:
            out.append(Violation("MissingEntry", "needs.init", status.label))
        elif scenario.init_nsl[status][1] < 0:
            out.append(Violation("OutOfRange", "needs.init.sd", status.label))

    prison_col = (
        scenario.action_index(ActionKind.GO_PRISON)
        if ActionKind.GO_PRISON in scenario.action_names
        else None
    )
    for status in Status:
        table = scenario.decay.get(status)
        if table is None:
            out.append(Violation("MissingEntry", "needs.decay", status.label))
        else:
            for n in names:
                if n not in table:
                    out.append(Violation("MissingEntry", f"needs.decay.{status.label}", n))
                elif not _in_unit(table[n]):
                    out.append(Violation("OutOfRange", f"needs.decay.{status.label}", n))
            for n in table:
                if n not in names:
                    out.append(Violation("UnknownName", f"needs.decay.{status.label}", n))

        matrix = scenario.sat.get(status)
        if matrix is None:
            out.append(Violation("MissingEntry", "needs.satisfaction", status.label))
            continue
        if set(matrix) != set(names):
            out.append(Violation("DimensionMismatch", f"needs.satisfaction.{status.label}", "rows"))
        for n, row in matrix.items():
            where = f"needs.satisfaction.{status.label}"
            if len(row) != n_actions:
                out.append(Violation("DimensionMismatch", where, n))
                continue
            if not all(_in_unit(v) for v in row):
                out.append(Violation("OutOfRange", where, n))
            if prison_col is not None and row[prison_col] != 0.0:
                out.append(Violation("OutOfRange", where, f"{n}/GoPrison"))

    hours = set()
    for lo, hi in (scenario.sleep_hours, scenario.work_hours, scenario.deliberation_hours):
        if not 0 <= lo <= hi < STEPS_PER_DAY:
            out.append(Violation("OutOfRange", "schedule"))
        hours.update(range(lo, hi + 1))
    if len(hours) != STEPS_PER_DAY:
        out.append(Violation("DimensionMismatch", "schedule", "hours"))
    if scenario.steps_per_month < 1:
        out.append(Violation("OutOfRange", "schedule.steps_per_month"))
    if scenario.prison_days < 1:
        out.append(Violation("OutOfRange", "economy.prison_days"))
    if scenario.pension_ratio < 0:
        out.append(Violation("OutOfRange", "economy.pension_ratio"))
    return out
