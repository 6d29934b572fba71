"""Hourly simulation loop.

Each step runs, in order: need decay, action choice (forced by the daily
schedule or deliberated), action execution, satisfaction refill, monthly
income/rent, the norm pass, and prison bookkeeping.  Agent state is kept
column-wise (:class:`~aporosim.core.AgentArrays`) so the per-step arithmetic
is vectorised; only facility moves run agent by agent, in id order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from .config import ConfigError, ScenarioConfig, validate_scenario
from .core import STEPS_PER_DAY, ActionKind, AgentArrays, Clock, FacilityKind, Status
from .environment import KIND_ORDER, ActionTable, CapacityRace, City, allocate_facilities, availability_mask
from .needs import NeedParams, SatMatrix, choose_array, refill_array, score_array
from .norms import NormSet, apply_norms_arrays
from .population import Demographics, load_demographics, sample_population

log = logging.getLogger(__name__)

STREAMS = ("population", "facilities", "needs", "reserve")


class Phase(Enum):
    FORCED_SLEEP = "ForcedSleep"
    FORCED_WORK = "ForcedWork"
    FREE = "Free"
    DELIBERATION = "Deliberation"


def phase_of(clock: Clock, status: Status = Status.EMPLOYED, scenario: Optional[ScenarioConfig] = None) -> Phase:
    sleep = scenario.sleep_hours if scenario else (0, 8)
    work = scenario.work_hours if scenario else (9, 16)
    hour = clock.hour_of_day
    if sleep[0] <= hour <= sleep[1]:
        return Phase.FORCED_SLEEP
    if work[0] <= hour <= work[1]:
        return Phase.FORCED_WORK if status is Status.EMPLOYED else Phase.FREE
    return Phase.DELIBERATION


class Compiled:
    """Scenario tables as arrays, built once per run."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.table = ActionTable(scenario)
        self.params = NeedParams.from_scenario(scenario)
        self.sat = SatMatrix.from_scenario(scenario)
        self.weights = np.array(scenario.need_model.need_weights(), dtype=np.float64)
        self.alpha = scenario.alpha
        idx = self.table.index
        self.idle = idx(ActionKind.IDLE)
        self.sleep = idx(ActionKind.SLEEP)
        self.sleep_street = idx(ActionKind.SLEEP_STREET)
        self.go_work = idx(ActionKind.GO_WORK)
        self.go_prison = idx(ActionKind.GO_PRISON)
        self.go_home = idx(ActionKind.GO_HOME)
        self.steal = idx(ActionKind.STEAL_FOOD)
        for name, i in (("Idle", self.idle), ("Sleep", self.sleep), ("SleepStreet", self.sleep_street),
                        ("GoWork", self.go_work), ("GoPrison", self.go_prison)):
            if i < 0:
                raise ConfigError(f"scenario lacks the {name} action the schedule needs")
        # actions that put the agent at home, if it has one
        self.to_home = np.zeros(len(self.table.actions), dtype=bool)
        self.to_home[[i for i in (self.sleep, self.go_home) if i >= 0]] = True
        self.phase = [phase_of(Clock(h), Status.EMPLOYED, scenario) for h in range(STEPS_PER_DAY)]
        self.reception = KIND_ORDER.index(FacilityKind.RECEPTION_CENTRE)


@dataclass
class Trace:
    """Per-step records, ``(steps, agents)`` arrays."""

    action: np.ndarray
    status: np.ndarray
    wealth: np.ndarray
    cost: np.ndarray
    income: np.ndarray
    rent: np.ndarray
    norm_delta: np.ndarray
    nsl_min: np.ndarray
    nsl_max: np.ndarray

    @classmethod
    def empty(cls, steps: int, n: int) -> "Trace":
        def z(dtype):
            return np.zeros((steps, n), dtype=dtype)

        return cls(z(np.int16), z(np.int8), z(np.int64), z(np.int64), z(np.int64), z(np.int64), z(np.int64),
                   z(np.float64), z(np.float64))


@dataclass
class SimState:
    clock: Clock
    pop: AgentArrays
    city: City
    norms: NormSet
    compiled: Compiled
    rngs: Dict[str, np.random.Generator]
    initial_wealth: np.ndarray
    action_counts: np.ndarray
    income_total: np.ndarray
    rent_total: np.ndarray
    cost_total: np.ndarray
    norm_total: np.ndarray
    norm_log: List[np.ndarray] = field(default_factory=list)
    trace: Optional[Trace] = None
    cache: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunResult:
    seed: int
    norm_ids: tuple
    steps: int
    action_names: tuple
    initial_wealth: np.ndarray
    final_wealth: np.ndarray
    final_debt: np.ndarray
    final_status: np.ndarray
    action_counts: np.ndarray
    norm_log: np.ndarray  # (entries, 3): step, agent id, norm id
    income_total: np.ndarray
    rent_total: np.ndarray
    cost_total: np.ndarray
    norm_total: np.ndarray
    trace: Optional[Trace] = None

    @property
    def n_agents(self) -> int:
        return int(self.final_wealth.size)

    def norm_counts(self) -> Dict[int, int]:
        ids, counts = np.unique(self.norm_log[:, 2], return_counts=True) if len(self.norm_log) else ((), ())
        out = {i: 0 for i in self.norm_ids}
        out.update({int(i): int(c) for i, c in zip(ids, counts)})
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "norms": list(self.norm_ids),
            "steps": self.steps,
            "n_agents": self.n_agents,
            "initial_wealth": self.initial_wealth.tolist(),
            "final_wealth": self.final_wealth.tolist(),
            "final_debt": self.final_debt.tolist(),
            "final_status": [Status(int(s)).label for s in self.final_status],
            "action_counts": {a.value: int(c) for a, c in zip(self.action_names, self.action_counts)},
            "norm_counts": {str(k): v for k, v in self.norm_counts().items()},
            "ledger": {
                "income": self.income_total.tolist(),
                "rent": self.rent_total.tolist(),
                "cost": self.cost_total.tolist(),
                "norm": self.norm_total.tolist(),
            },
        }


def init_state(
    scenario: ScenarioConfig,
    norms: NormSet,
    seed: int,
    n_agents: int = 100,
    demographics: Optional[Demographics] = None,
    trace_steps: int = 0,
) -> SimState:
    problems = validate_scenario(scenario)
    if problems:
        raise ConfigError("invalid scenario: " + ", ".join(str(p) for p in problems))
    compiled = Compiled(scenario)
    streams = np.random.SeedSequence(seed).spawn(len(STREAMS))
    rngs = {name: np.random.default_rng(s) for name, s in zip(STREAMS, streams)}
    city = allocate_facilities(scenario, rngs["facilities"], n_agents)
    if demographics is None:
        if scenario.demographics_path is None:
            raise ConfigError("scenario names no demographics file")
        demographics = load_demographics(scenario.demographics_path)
    agents = sample_population(
        n_agents, demographics, city, rngs["population"], compiled.params,
        scenario.pension_ratio, needs_rng=rngs["needs"],
    )
    pop = AgentArrays.from_states(agents, compiled.params.needs)
    n = len(pop)
    n_actions = len(compiled.table.actions)
    return SimState(
        clock=Clock(0, scenario.steps_per_month),
        pop=pop,
        city=city,
        norms=norms,
        compiled=compiled,
        rngs=rngs,
        initial_wealth=pop.wealth.copy(),
        action_counts=np.zeros(n_actions, dtype=np.int64),
        income_total=np.zeros(n, dtype=np.int64),
        rent_total=np.zeros(n, dtype=np.int64),
        cost_total=np.zeros(n, dtype=np.int64),
        norm_total=np.zeros(n, dtype=np.int64),
        trace=Trace.empty(trace_steps, n) if trace_steps else None,
        cache={"ids": pop.ids, "income": pop.income, "rent": pop.rent, "age": pop.age},
    )


def _choose(state: SimState, phase: Phase, jailed: np.ndarray):
    """Action index per agent for this step, plus deliberation scores when deliberating."""
    c, pop = state.compiled, state.pop
    n = len(pop)
    action = np.full(n, c.idle, dtype=np.int64)
    scores = None
    if phase is Phase.FORCED_SLEEP:
        homed = pop.home >= 0
        at = np.where(pop.facility >= 0, state.city.kind_index[np.maximum(pop.facility, 0)], -1)
        sheltered = ~homed & (at == c.reception)
        action[homed | sheltered] = c.sleep
        action[~homed & ~sheltered] = c.sleep_street
    elif phase is Phase.FORCED_WORK:
        action[pop.status == Status.EMPLOYED] = c.go_work
    else:
        allowed = availability_mask(c.table, state.city, pop.status, pop.wealth, pop.home >= 0, pop.facility)
        scores = score_array(pop.nsl, pop.status, c.sat, c.weights)
        choice = choose_array(scores, allowed)
        action = np.where(choice < 0, c.idle, choice)
    action[jailed] = c.go_prison
    return action, scores


def _move(state: SimState, i: int, a: int, scores: Optional[np.ndarray]) -> int:
    """Run one agent's move; returns the action actually taken."""
    c, pop, city = state.compiled, state.pop, state.city
    while True:
        k = c.table.kind[a]
        if k < 0:
            if a == c.sleep_street or (c.to_home[a] and pop.home[i] >= 0):
                city.leave(int(pop.facility[i]))
                pop.facility[i] = -1
            return a
        try:
            pop.facility[i] = city.move(int(pop.facility[i]), KIND_ORDER[k])
            return a
        except CapacityRace:
            if scores is None or a == c.go_prison:
                if a == c.go_prison:
                    raise
                return c.idle
            # an earlier agent filled it this step: decide again on current occupancy
            allowed = availability_mask(
                c.table, city, pop.status[i:i + 1], pop.wealth[i:i + 1],
                pop.home[i:i + 1] >= 0, pop.facility[i:i + 1],
            )
            a = int(choose_array(scores[i:i + 1], allowed)[0])
            if a < 0:
                return c.idle


def step(state: SimState) -> SimState:
    c, pop, city = state.compiled, state.pop, state.city
    t = state.clock.step
    phase = c.phase[t % STEPS_PER_DAY]
    status = pop.status.copy()
    jailed = status == Status.IMPRISONED

    # 1. decay
    pop.nsl *= c.params.decay[status]

    # 2. choose
    action, scores = _choose(state, phase, jailed)

    # 3. execute: facility moves agent by agent, everything else column-wise
    kinds = c.table.kind[action]
    here = np.where(pop.facility >= 0, city.kind_index[np.maximum(pop.facility, 0)], -1)
    home_bound = c.to_home[action] & (pop.home >= 0)
    leaves = (action == c.sleep_street) | home_bound
    movers = np.nonzero(((kinds >= 0) & (kinds != here)) | (leaves & (pop.facility >= 0)))[0]
    for i in movers:
        action[i] = _move(state, int(i), int(action[i]), scores)
    inside = pop.facility >= 0
    pop.location[inside] = city.cell[pop.facility[inside]]
    home_bound = c.to_home[action] & (pop.home >= 0)
    pop.location[home_bound] = pop.home[home_bound]
    cost = c.table.cost[action]
    pop.wealth -= cost
    state.cost_total += cost
    pop.slept_street = action == c.sleep_street
    pop.stole_food = action == c.steal
    state.action_counts += np.bincount(action, minlength=len(state.action_counts))

    # 4. refill
    pop.nsl = refill_array(pop.nsl, status, action, c.sat, c.alpha)

    end = state.clock.advance()
    income = rent = None
    if end.month_boundary:
        # 5. monthly economics
        paid = (pop.status == Status.EMPLOYED) | (pop.status == Status.RETIRED)
        income = np.where(paid, state.cache["income"], 0)
        rent = np.where(pop.home >= 0, state.cache["rent"], 0)
        pop.wealth += income - rent
        state.income_total += income
        state.rent_total += rent

    # 6. norms
    before = pop.wealth.copy()
    if len(state.norms):
        rng = state.rngs["reserve"]
        cells = city.width * city.height
        entries = apply_norms_arrays(
            state.norms, pop, end, state.compiled.scenario.prison_days,
            new_home=lambda i: int(rng.integers(0, cells)), cache=state.cache,
        )
        if len(entries):
            state.norm_log.append(entries)
    norm_delta = pop.wealth - before
    state.norm_total += norm_delta

    # 7. prison sentences served this step
    serving = jailed & (pop.status == Status.IMPRISONED)
    pop.prison[serving] -= 1
    released = serving & (pop.prison <= 0)
    if released.any():
        pop.prison[released] = 0
        pop.status[released] = np.where(pop.home[released] >= 0, int(Status.UNEMPLOYED), int(Status.HOMELESS))

    if state.trace is not None and t < state.trace.action.shape[0]:
        tr = state.trace
        tr.action[t] = action
        tr.status[t] = pop.status
        tr.wealth[t] = pop.wealth
        tr.cost[t] = cost
        tr.norm_delta[t] = norm_delta
        if income is not None:
            tr.income[t] = income
            tr.rent[t] = rent
        tr.nsl_min[t] = pop.nsl.min(axis=1)
        tr.nsl_max[t] = pop.nsl.max(axis=1)

    # 8. flags and clock
    pop.slept_street = np.zeros(len(pop), dtype=bool)
    pop.stole_food = np.zeros(len(pop), dtype=bool)
    state.clock = end
    return state


def finish(state: SimState, seed: int) -> RunResult:
    pop = state.pop
    log_rows = np.concatenate(state.norm_log) if state.norm_log else np.empty((0, 3), dtype=np.int64)
    return RunResult(
        seed=seed,
        norm_ids=state.norms.ids,
        steps=state.clock.step,
        action_names=state.compiled.table.names,
        initial_wealth=state.initial_wealth,
        final_wealth=pop.wealth.copy(),
        final_debt=pop.debt.copy(),
        final_status=pop.status.copy(),
        action_counts=state.action_counts.copy(),
        norm_log=log_rows,
        income_total=state.income_total.copy(),
        rent_total=state.rent_total.copy(),
        cost_total=state.cost_total.copy(),
        norm_total=state.norm_total.copy(),
        trace=state.trace,
    )


def run(
    scenario: ScenarioConfig,
    norm_subset: NormSet,
    seed: int,
    t_max: int = 2880,
    n_agents: int = 100,
    demographics: Optional[Demographics] = None,
    trace: bool = False,
) -> RunResult:
    """One seeded simulation; the result depends only on the arguments."""
    state = init_state(scenario, norm_subset, seed, n_agents, demographics, t_max if trace else 0)
    for _ in range(t_max):
        step(state)
    log.debug("run seed=%d norms=%s done", seed, norm_subset.ids)
    return finish(state, seed)
