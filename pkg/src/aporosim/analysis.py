"""Inequality statistics over finished runs and sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .core import Status
from .norms import NormSet, Tag

DEFAULT_BINS = 20
BANKRUPTCY_THRESHOLD = 0


class EmptyVector(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


def gini(wealths: Sequence[float]) -> float:
    """Gini coefficient of ``wealths`` with negative entries clamped to 0.

    Uses the sorted form ``sum((2i - n - 1) x_i) / (n sum x)`` with 1-based
    ranks.  An all-zero vector (after clamping) is perfectly equal.
    """
    x = np.asarray(wealths, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyVector("gini of an empty vector")
    x = np.sort(np.maximum(x, 0.0))
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    ranks = np.arange(1, n + 1, dtype=np.float64)
    g = float(np.dot(2 * ranks - n - 1, x) / (n * total))
    return min(max(g, 0.0), 1.0)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    frequency: np.ndarray

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(float(self.edges[i]), float(self.edges[i + 1]), float(self.frequency[i]))
                for i in range(self.frequency.size)]


def histogram(wealths: Sequence[float], bins: int = DEFAULT_BINS) -> Histogram:
    """Normalised histogram over ``[min, max]`` of the raw (unclamped) values."""
    x = np.asarray(wealths, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyVector("histogram of an empty vector")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Histogram(edges, counts / x.size)


@dataclass(frozen=True)
class GiniStat:
    values: Tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        # sample standard deviation; undefined for one replica, reported as 0
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0


def bankruptcy_stats(run, threshold: float = BANKRUPTCY_THRESHOLD) -> Tuple[float, Dict[Status, float]]:
    """Share of agents with wealth <= ``threshold`` and the status mix among them.

    ``run`` is a RunResult or anything with ``final_wealth``/``final_status``.
    """
    wealth = np.asarray(run.final_wealth)
    status = np.asarray(run.final_status)
    broke = wealth <= threshold
    k = int(broke.sum())
    if k == 0:
        return 0.0, {}
    ids, counts = np.unique(status[broke], return_counts=True)
    return k / wealth.size, {Status(int(s)): c / k for s, c in zip(ids, counts)}


def apo_proportion(subset: NormSet) -> float:
    """Fraction of Apo-tagged norms in ``subset``; 0 for the empty set."""
    if len(subset) == 0:
        return 0.0
    return sum(n.tag is Tag.APO for n in subset) / len(subset)


@dataclass(frozen=True)
class SubsetRow:
    bitmask: int
    norms: Tuple[int, ...]
    apo_proportion: float
    contains_norm1: bool
    gini: GiniStat
    gini_pooled: float
    bankrupt_mean: float
    histogram: Histogram

    @property
    def gini_mean(self) -> float:
        return self.gini.mean

    @property
    def gini_sd(self) -> float:
        return self.gini.sd


def summarize_subset(
    bitmask: int, subset: NormSet, wealths: Sequence[np.ndarray], statuses: Sequence[np.ndarray],
    bins: int = DEFAULT_BINS,
) -> SubsetRow:
    """Aggregate one subset's replicas (given in replica order)."""
    if not wealths:
        raise EmptyVector(f"subset {bitmask} has no replicas")
    pooled = np.concatenate([np.asarray(w) for w in wealths])
    bankrupt = [bankruptcy_stats(_Final(w, s))[0] for w, s in zip(wealths, statuses)]
    return SubsetRow(
        bitmask=bitmask,
        norms=subset.ids,
        apo_proportion=apo_proportion(subset),
        contains_norm1=1 in subset.ids,
        gini=GiniStat(tuple(gini(w) for w in wealths)),
        gini_pooled=gini(pooled),
        bankrupt_mean=float(np.mean(bankrupt)),
        histogram=histogram(pooled, bins),
    )


@dataclass(frozen=True)
class _Final:
    final_wealth: np.ndarray
    final_status: np.ndarray


def subset_summary(sweep, bins: int = DEFAULT_BINS) -> List[SubsetRow]:
    """One row per subset of a SweepResult, ascending bitmask."""
    rows = []
    for bitmask in sorted(sweep.results):
        runs = sweep.results[bitmask]
        rows.append(summarize_subset(
            bitmask, sweep.subsets[bitmask],
            [r.final_wealth for r in runs], [r.final_status for r in runs], bins,
        ))
    return rows


def trend_stat(summary: Sequence, x: str = "apo_proportion", y: str = "gini_mean") -> float:
    """Spearman rank correlation (average ranks for ties) between two summary columns.

    Rows may be SubsetRow objects or mappings.
    """
    def col(name):
        return np.array([r[name] if isinstance(r, Mapping) else getattr(r, name) for r in summary], dtype=float)

    xs, ys = col(x), col(y)
    if np.unique(xs).size < 3:
        raise DegenerateInput(f"need >= 3 distinct values of {x}, got {np.unique(xs).size}")
    if np.unique(ys).size < 2:
        raise DegenerateInput(f"{y} is constant")
    rho = stats.spearmanr(xs, ys).statistic
    return float(rho)


def by_norms(summary: Sequence[SubsetRow], ids: Sequence[int]) -> Optional[SubsetRow]:
    want = tuple(sorted(ids))
    return next((r for r in summary if r.norms == want), None)
