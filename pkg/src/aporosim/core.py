"""Domain types shared across the simulator: statuses, needs, actions, agents, clock."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Dict, Optional, Tuple

import numpy as np

STEPS_PER_DAY = 24
STEPS_PER_MONTH = 720  # 30 days of 24 hourly steps


class Status(IntEnum):
    EMPLOYED = 0
    UNEMPLOYED = 1
    RETIRED = 2
    HOMELESS = 3
    # engine-internal; never sampled from demographics
    IMPRISONED = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Status":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown status {text!r}") from None


SAMPLED_STATUSES = (Status.EMPLOYED, Status.UNEMPLOYED, Status.RETIRED, Status.HOMELESS)


class FacilityKind(str, Enum):
    WORKPLACE = "Workplace"
    GROCERY = "Grocery"
    LEISURE = "Leisure"
    SCHOOL = "School"
    HOSPITAL = "Hospital"
    RECEPTION_CENTRE = "ReceptionCentre"
    PRISON = "Prison"


class ActionKind(str, Enum):
    GO_WORK = "GoWork"
    GO_GROCERY = "GoGrocery"
    GO_LEISURE = "GoLeisure"
    GO_HOME = "GoHome"
    GO_SCHOOL = "GoSchool"
    GO_HOSPITAL = "GoHospital"
    GO_RECEPTION_CENTRE = "GoReceptionCentre"
    SLEEP_STREET = "SleepStreet"
    STEAL_FOOD = "StealFood"
    GO_PRISON = "GoPrison"
    SLEEP = "Sleep"
    IDLE = "Idle"


@dataclass(frozen=True)
class Action:
    name: ActionKind
    cost: int = 0
    facility: Optional[FacilityKind] = None


@dataclass(frozen=True)
class NeedCategory:
    name: str
    importance: float


@dataclass(frozen=True)
class Need:
    name: str
    category: str


@dataclass(frozen=True)
class NeedModel:
    """Deficiency-need hierarchy: categories with importance weights and their needs.

    ``needs`` order is the row order of every decay table and satisfaction matrix.
    """

    categories: Tuple[NeedCategory, ...]
    needs: Tuple[Need, ...]

    @property
    def need_names(self) -> Tuple[str, ...]:
        return tuple(n.name for n in self.needs)

    def importance(self, category: str) -> float:
        for c in self.categories:
            if c.name == category:
                return c.importance
        raise KeyError(category)

    def need_weights(self) -> Tuple[float, ...]:
        """Importance of each need's category, aligned with ``needs``."""
        imp = {c.name: c.importance for c in self.categories}
        return tuple(imp[n.category] for n in self.needs)

    def scaled(self, k: float) -> "NeedModel":
        cats = tuple(NeedCategory(c.name, c.importance * k) for c in self.categories)
        return NeedModel(cats, self.needs)


@dataclass
class AgentProfile:
    id: int
    gender: str
    age: int
    district: str
    home_location: Optional[int]  # grid cell index, None when homeless
    income: int  # monthly salary (employed) or pension (retired)
    rent: int


@dataclass
class AgentState:
    profile: AgentProfile
    status: Status
    wealth: int
    location: int
    nsl: Dict[str, float]
    debt: int = 0
    prison_steps_remaining: int = 0
    facility: int = -1  # index into City.facilities, -1 when not inside one
    slept_street: bool = False
    stole_food: bool = False

    @property
    def id(self) -> int:
        return self.profile.id

    @property
    def has_home(self) -> bool:
        return self.profile.home_location is not None


@dataclass(frozen=True)
class Clock:
    step: int = 0
    steps_per_month: int = field(default=STEPS_PER_MONTH, compare=False)

    @property
    def hour_of_day(self) -> int:
        return self.step % STEPS_PER_DAY

    @property
    def month_boundary(self) -> bool:
        return self.step > 0 and self.step % self.steps_per_month == 0

    def advance(self) -> "Clock":
        return Clock(self.step + 1, self.steps_per_month)


@dataclass
class AgentArrays:
    """Column-wise agent state, one row per agent, as the engine keeps it."""

    profiles: list
    status: "np.ndarray"
    wealth: "np.ndarray"
    debt: "np.ndarray"
    home: "np.ndarray"  # cell index, -1 when homeless
    location: "np.ndarray"
    facility: "np.ndarray"
    prison: "np.ndarray"
    nsl: "np.ndarray"  # (agents, needs)
    need_names: Tuple[str, ...]
    slept_street: "np.ndarray"
    stole_food: "np.ndarray"

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def ids(self) -> "np.ndarray":
        return np.array([p.id for p in self.profiles], dtype=np.int64)

    @property
    def income(self) -> "np.ndarray":
        return np.array([p.income for p in self.profiles], dtype=np.int64)

    @property
    def rent(self) -> "np.ndarray":
        return np.array([p.rent for p in self.profiles], dtype=np.int64)

    @property
    def age(self) -> "np.ndarray":
        return np.array([p.age for p in self.profiles], dtype=np.int64)

    @classmethod
    def from_states(cls, states: "list[AgentState]", need_names: Tuple[str, ...]) -> "AgentArrays":
        def col(fn, dtype):
            return np.array([fn(s) for s in states], dtype=dtype)

        return cls(
            profiles=[replace(s.profile) for s in states],
            status=col(lambda s: int(s.status), np.int64),
            wealth=col(lambda s: s.wealth, np.int64),
            debt=col(lambda s: s.debt, np.int64),
            home=col(lambda s: -1 if s.profile.home_location is None else s.profile.home_location, np.int64),
            location=col(lambda s: s.location, np.int64),
            facility=col(lambda s: s.facility, np.int64),
            prison=col(lambda s: s.prison_steps_remaining, np.int64),
            nsl=np.array([[s.nsl[n] for n in need_names] for s in states], dtype=np.float64).reshape(
                len(states), len(need_names)
            ),
            need_names=tuple(need_names),
            slept_street=col(lambda s: s.slept_street, bool),
            stole_food=col(lambda s: s.stole_food, bool),
        )

    def to_states(self) -> "list[AgentState]":
        out = []
        for i, p in enumerate(self.profiles):
            home = int(self.home[i])
            profile = replace(p, home_location=None if home < 0 else home)
            out.append(
                AgentState(
                    profile=profile,
                    status=Status(int(self.status[i])),
                    wealth=int(self.wealth[i]),
                    location=int(self.location[i]),
                    nsl={n: float(v) for n, v in zip(self.need_names, self.nsl[i])},
                    debt=int(self.debt[i]),
                    prison_steps_remaining=int(self.prison[i]),
                    facility=int(self.facility[i]),
                    slept_street=bool(self.slept_street[i]),
                    stole_food=bool(self.stole_food[i]),
                )
            )
        return out
