"""Grid city: facility placement, occupancy, and the action filters it imposes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import ConfigError, ScenarioConfig
from .core import Action, ActionKind, AgentState, FacilityKind, Status
from .needs import EmptyActionSet

KIND_ORDER: Tuple[FacilityKind, ...] = tuple(FacilityKind)


class CapacityRace(RuntimeError):
    """A move would push a facility past its capacity."""


@dataclass(frozen=True)
class Facility:
    id: int
    kind: FacilityKind
    cell: int
    capacity: int


class City:
    def __init__(self, width: int, height: int, facilities: Sequence[Facility]):
        self.width = width
        self.height = height
        self.facilities: Tuple[Facility, ...] = tuple(facilities)
        self.occupancy = np.zeros(len(self.facilities), dtype=np.int64)
        self.capacity = np.array([f.capacity for f in self.facilities], dtype=np.int64)
        self.cell = np.array([f.cell for f in self.facilities], dtype=np.int64)
        self.kind_index = np.array([KIND_ORDER.index(f.kind) for f in self.facilities], dtype=np.int64)
        self._by_kind: Dict[FacilityKind, List[int]] = {k: [] for k in KIND_ORDER}
        for f in self.facilities:
            self._by_kind[f.kind].append(f.id)

    def of_kind(self, kind: FacilityKind) -> List[int]:
        return self._by_kind[kind]

    def kind_of(self, facility: int) -> Optional[FacilityKind]:
        return None if facility < 0 else self.facilities[facility].kind

    def kind_full(self, kind: FacilityKind) -> bool:
        return all(self.occupancy[i] >= self.capacity[i] for i in self._by_kind[kind])

    def least_occupied(self, kind: FacilityKind) -> int:
        best = -1
        for i in self._by_kind[kind]:
            if self.occupancy[i] < self.capacity[i] and (best < 0 or self.occupancy[i] < self.occupancy[best]):
                best = i
        if best < 0:
            raise CapacityRace(f"every {kind.value} is at capacity")
        return best

    def leave(self, facility: int) -> None:
        if facility >= 0:
            self.occupancy[facility] -= 1

    def enter(self, facility: int) -> None:
        if self.occupancy[facility] >= self.capacity[facility]:
            raise CapacityRace(f"facility {facility} is at capacity")
        self.occupancy[facility] += 1

    def move(self, current: int, kind: FacilityKind) -> int:
        """Send an occupant of ``current`` (or -1) to a facility of ``kind``.

        Staying put when already inside a facility of that kind.
        """
        if current >= 0 and self.facilities[current].kind is kind:
            return current
        target = self.least_occupied(kind)
        self.leave(current)
        self.enter(target)
        return target

    def copy(self) -> "City":
        other = City(self.width, self.height, self.facilities)
        other.occupancy = self.occupancy.copy()
        return other


@dataclass(frozen=True)
class Prices:
    costs: Mapping[ActionKind, int]

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "Prices":
        return cls({a.name: a.cost for a in scenario.actions})

    def __getitem__(self, action: ActionKind) -> int:
        return self.costs.get(action, 0)

    @property
    def food(self) -> int:
        return self[ActionKind.GO_GROCERY]


def facility_capacity(spec, n_agents: int, total_facilities: int) -> int:
    if spec == "auto":
        return max(1, math.ceil(2 * n_agents / max(1, total_facilities)))
    if spec == "unbounded":
        return max(1, n_agents)
    cap = int(spec)
    if cap < 1:
        raise ConfigError(f"facility capacity must be >= 1, got {spec!r}")
    return cap


def allocate_facilities(scenario: ScenarioConfig, rng: np.random.Generator, n_agents: int = 100) -> City:
    """Scatter facilities over distinct random cells, one facility per cell."""
    cells = scenario.width * scenario.height
    counts = [(k, scenario.facility_counts.get(k, 0)) for k in KIND_ORDER]
    total = sum(c for _, c in counts)
    if total > cells:
        raise ConfigError(f"{total} facilities do not fit on a {scenario.width}x{scenario.height} grid")
    placement = rng.choice(cells, size=total, replace=False)
    facilities, fid = [], 0
    for kind, count in counts:
        cap = facility_capacity(scenario.capacities.get(kind, "auto"), n_agents, total)
        for _ in range(count):
            facilities.append(Facility(fid, kind, int(placement[fid]), cap))
            fid += 1
    return City(scenario.width, scenario.height, facilities)


class ActionTable:
    """Per-action lookup arrays in configured action order."""

    def __init__(self, scenario: ScenarioConfig):
        self.actions: Tuple[Action, ...] = scenario.actions
        self.names: Tuple[ActionKind, ...] = scenario.action_names
        self.cost = np.array([a.cost for a in self.actions], dtype=np.int64)
        self.kind = np.array(
            [-1 if a.facility is None else KIND_ORDER.index(a.facility) for a in self.actions],
            dtype=np.int64,
        )
        self.base = np.zeros((len(Status), len(self.actions)), dtype=bool)
        for status, acts in scenario.action_sets.items():
            for a in acts:
                self.base[int(status), self.names.index(a)] = True
        self.food_price = int(self.cost[self.names.index(ActionKind.GO_GROCERY)]) if (
            ActionKind.GO_GROCERY in self.names
        ) else 0
        self.steal = self.index(ActionKind.STEAL_FOOD)
        self.home = self.index(ActionKind.GO_HOME)

    def index(self, name: ActionKind) -> int:
        return self.names.index(name) if name in self.names else -1


def availability_mask(
    table: ActionTable,
    city: City,
    status: np.ndarray,
    wealth: np.ndarray,
    has_home: np.ndarray,
    facility: np.ndarray,
) -> np.ndarray:
    """Boolean ``(agents, actions)`` mask of what each agent may do right now."""
    allowed = table.base[status].copy()
    # free actions stay open to agents in debt
    allowed &= (table.cost[None, :] == 0) | (table.cost[None, :] <= wealth[:, None])
    if table.steal >= 0:
        allowed[:, table.steal] = table.base[status, table.steal] & (
            (status == Status.HOMELESS) | (wealth < table.food_price)
        )
    if table.home >= 0:
        allowed[:, table.home] &= has_home
    here = np.where(facility >= 0, city.kind_index[np.maximum(facility, 0)], -1)
    for k, kind in enumerate(KIND_ORDER):
        cols = table.kind == k
        if cols.any() and city.of_kind(kind) and city.kind_full(kind):
            allowed[:, cols] &= (here == k)[:, None]
        elif cols.any() and not city.of_kind(kind):
            allowed[:, cols] = False
    return allowed


def available_actions(
    agent: AgentState, city: City, table: ActionTable
) -> List[Action]:
    """Status action set minus unaffordable, full-facility and homeless-GoHome actions."""
    mask = availability_mask(
        table,
        city,
        np.array([int(agent.status)]),
        np.array([agent.wealth]),
        np.array([agent.has_home]),
        np.array([agent.facility]),
    )[0]
    acts = [a for a, ok in zip(table.actions, mask) if ok]
    if not acts:
        raise EmptyActionSet(f"agent {agent.id} has no available action")
    return acts


def execute_action(agent: AgentState, action: Action, city: City) -> AgentState:
    """Move the agent, charge the action's cost and raise norm-relevant flags."""
    agent.wealth -= action.cost
    name = action.name
    if action.facility is not None:
        agent.facility = city.move(agent.facility, action.facility)
        agent.location = city.facilities[agent.facility].cell
    elif name in (ActionKind.GO_HOME, ActionKind.SLEEP) and agent.has_home:
        city.leave(agent.facility)
        agent.facility = -1
        agent.location = agent.profile.home_location
    elif name is ActionKind.SLEEP_STREET:
        city.leave(agent.facility)
        agent.facility = -1
        agent.slept_street = True
    elif name is ActionKind.STEAL_FOOD:
        agent.stole_food = True
    return agent
