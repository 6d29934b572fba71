"""Need satisfaction dynamics and need-driven action selection.

Scalar functions operate on one agent's ``{need: level}`` map; the ``*_array``
variants do the same arithmetic over an ``(agents, needs)`` matrix and are what
the engine runs every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from .config import ScenarioConfig
from .core import Action, ActionKind, AgentState, NeedModel, Status


class EmptyActionSet(Exception):
    """No action is left to choose from."""


@dataclass(frozen=True)
class NeedParams:
    needs: Tuple[str, ...]
    decay: np.ndarray  # (statuses, needs)
    init_mean: Dict[Status, float]
    init_sd: Dict[Status, float]
    alpha: float = 0.5

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "NeedParams":
        names = scenario.need_model.need_names
        decay = np.array(
            [[scenario.decay[s][n] for n in names] for s in Status], dtype=np.float64
        )
        return cls(
            needs=names,
            decay=decay,
            init_mean={s: m for s, (m, _) in scenario.init_nsl.items()},
            init_sd={s: sd for s, (_, sd) in scenario.init_nsl.items()},
            alpha=scenario.alpha,
        )

    def gamma(self, need: str, status: Status) -> float:
        return float(self.decay[int(status), self.needs.index(need)])


@dataclass(frozen=True)
class SatMatrix:
    """Expected satisfaction per status: ``table[status, need, action]`` in [0, 1]."""

    needs: Tuple[str, ...]
    actions: Tuple[ActionKind, ...]
    table: np.ndarray

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "SatMatrix":
        names = scenario.need_model.need_names
        table = np.array(
            [[scenario.sat[s][n] for n in names] for s in Status], dtype=np.float64
        )
        return cls(names, scenario.action_names, table)

    def value(self, status: Status, need: str, action: ActionKind) -> float:
        return float(self.table[int(status), self.needs.index(need), self.actions.index(action)])

    def column(self, status: Status, action: ActionKind) -> np.ndarray:
        return self.table[int(status), :, self.actions.index(action)]


def init_nsl(status: Status, params: NeedParams, rng: np.random.Generator) -> Dict[str, float]:
    """Draw every need's starting level from N(mu_s, sigma_s), clamped to [0, 1]."""
    mu, sd = params.init_mean[status], params.init_sd[status]
    draws = rng.normal(mu, sd, size=len(params.needs)) if sd > 0 else np.full(len(params.needs), mu)
    return {n: float(v) for n, v in zip(params.needs, np.clip(draws, 0.0, 1.0))}


def decay_step(nsl: Mapping[str, float], status: Status, params: NeedParams) -> Dict[str, float]:
    return {n: params.gamma(n, status) * v for n, v in nsl.items()}


def urgency(nsl_value: float) -> float:
    return 1.0 - nsl_value


def _ordinal(action: Union[Action, ActionKind], sat: SatMatrix) -> int:
    name = action.name if isinstance(action, Action) else action
    return sat.actions.index(name)


def action_score(
    agent: AgentState, action: Union[Action, ActionKind], sat: SatMatrix, model: NeedModel
) -> float:
    """Importance-weighted sum over categories of expected satisfaction times urgency."""
    col = _ordinal(action, sat)
    table = sat.table[int(agent.status)]
    total = 0.0
    for category in model.categories:
        inner = 0.0
        for need in model.needs:
            if need.category == category.name:
                row = sat.needs.index(need.name)
                inner += table[row, col] * urgency(agent.nsl[need.name])
        total += inner * category.importance
    return total


def deliberate(
    agent: AgentState,
    available: Sequence[Union[Action, ActionKind]],
    sat: SatMatrix,
    model: NeedModel,
) -> Union[Action, ActionKind]:
    """Pick the highest-scoring available action; ties go to the lowest action ordinal."""
    if not available:
        raise EmptyActionSet(f"agent {agent.id} has no available action")
    best, best_key = None, None
    for a in available:
        key = (-action_score(agent, a, sat, model), _ordinal(a, sat))
        if best_key is None or key < best_key:
            best, best_key = a, key
    return best


def apply_satisfaction(
    nsl: Mapping[str, float], action: Union[Action, ActionKind], status: Status, sat: SatMatrix, alpha: float
) -> Dict[str, float]:
    col = _ordinal(action, sat)
    table = sat.table[int(status)]
    out = {}
    for n, v in nsl.items():
        s = table[sat.needs.index(n), col]
        out[n] = v if s == 0.0 else min(1.0, v + alpha * s)
    return out


# vectorised forms used by the engine


def decay_array(nsl: np.ndarray, status: np.ndarray, params: NeedParams) -> np.ndarray:
    return nsl * params.decay[status]


def score_array(
    nsl: np.ndarray, status: np.ndarray, sat: SatMatrix, weights: np.ndarray
) -> np.ndarray:
    """Deliberation scores for every agent and action, shape ``(agents, actions)``."""
    weighted = (1.0 - nsl) * weights
    return np.einsum("in,ina->ia", weighted, sat.table[status])


def choose_array(scores: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Row-wise argmax over allowed actions; rows with nothing allowed get -1."""
    masked = np.where(allowed, scores, -np.inf)
    choice = np.argmax(masked, axis=1)
    choice[~allowed.any(axis=1)] = -1
    return choice


def refill_array(
    nsl: np.ndarray, status: np.ndarray, action: np.ndarray, sat: SatMatrix, alpha: float
) -> np.ndarray:
    gain = sat.table[status, :, action]
    return np.minimum(1.0, nsl + alpha * gain)
