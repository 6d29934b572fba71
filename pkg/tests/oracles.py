"""Independent reference implementations shared by the unit and acceptance suites."""

from __future__ import annotations

import numpy as np

from aporosim.core import Status

from conftest import make_agent


def pairwise_gini(x) -> float:
    # mean absolute difference over all ordered pairs, divided by twice the mean
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    if x.sum() == 0:
        return 0.0
    n = x.size
    return float(np.abs(x[:, None] - x[None, :]).sum() / (2 * n * n * x.mean()))


def brute_force_choice(nsl, status, available, table, model):
    """Enumerate actions and score with explicit nested loops; first maximum wins."""
    best, best_score = None, -np.inf
    for a in available:
        score = 0.0
        for cat in model.categories:
            for need in model.needs:
                if need.category == cat.name:
                    score += cat.importance * table[status][need.name][a] * (1.0 - nsl[need.name])
        if score > best_score + 1e-12:
            best, best_score = a, score
    return best


def random_deliberation_instance(seed, sat):
    r = np.random.default_rng(seed)
    status = Status(int(r.integers(0, 5)))
    nsl = {n: float(v) for n, v in zip(sat.needs, r.random(len(sat.needs)))}
    k = int(r.integers(1, len(sat.actions) + 1))
    available = [sat.actions[i] for i in sorted(r.choice(len(sat.actions), size=k, replace=False))]
    return status, nsl, available


def random_agent(r: np.random.Generator, i: int, needs=("food", "shelter")):
    status = Status(int(r.integers(0, 5)))
    return make_agent(
        i, status,
        wealth=int(r.integers(-2000, 2000)),
        home=int(r.integers(0, 100)),
        nsl={n: float(r.random()) for n in needs},
        debt=int(r.integers(0, 1000)),
        slept_street=bool(r.random() < 0.3),
        stole_food=bool(r.random() < 0.3),
    )
