"""Power-set sweeps: every norm subset, several seeded replicas each.

Subsets are addressed by bitmask, bit ``k`` standing for the ``k``-th norm in
ascending id order (for the shipped norms 1..6, bit ``k-1`` is norm ``k``).
Replica seeds are derived from ``(master_seed, bitmask, replica)`` with a fixed
64-bit mixer, so results do not depend on worker count or completion order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import DEFAULT_BINS, SubsetRow, subset_summary
from .config import ScenarioConfig
from .core import Status
from .engine import RunResult, run
from .norms import NormSet, parse_norms, serialize
from .population import Demographics, load_demographics

log = logging.getLogger(__name__)

MAX_NORMS = 20
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MANIFEST = "sweep.json"
SUMMARY = "summary.csv"
SUMMARY_COLUMNS = ("bitmask", "norms", "apo_proportion", "contains_norm1", "gini_mean", "gini_sd",
                   "gini_pooled", "bankrupt_mean", "histogram")


class TooManyNorms(ValueError):
    pass


class SweepError(RuntimeError):
    def __init__(self, bitmask: int, replica: int, cause: BaseException):
        super().__init__(f"subset {bitmask:#b} replica {replica}: {cause!r}")
        self.bitmask = bitmask
        self.replica = replica


def enumerate_subsets(norms: NormSet) -> List[NormSet]:
    """All ``2**len(norms)`` subsets, index = bitmask."""
    n = len(norms)
    if n > MAX_NORMS:
        raise TooManyNorms(f"{n} norms would give 2**{n} subsets (limit {MAX_NORMS})")
    return [subset_of(mask, norms) for mask in range(1 << n)]


def subset_of(bitmask: int, norms: NormSet) -> NormSet:
    if bitmask < 0 or bitmask >> len(norms):
        raise ValueError(f"bitmask {bitmask:#b} out of range for {len(norms)} norms")
    ids = norms.ids
    return norms.subset([ids[k] for k in range(len(ids)) if bitmask >> k & 1])


def bitmask_of(subset: NormSet, norms: NormSet) -> int:
    pos = {nid: k for k, nid in enumerate(norms.ids)}
    return sum(1 << pos[nid] for nid in subset.ids)


def _splitmix64(x: int) -> int:
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, bitmask: int, replica: int) -> int:
    """Stable 64-bit replica seed: splitmix64 chained over the three inputs."""
    h = _splitmix64(master_seed & MASK64)
    h = _splitmix64(h ^ (bitmask & MASK64))
    return _splitmix64(h ^ (replica & MASK64))


def mask_label(bitmask: int, width: int) -> str:
    return format(bitmask, f"0{max(width, 1)}b")


@dataclass(frozen=True)
class SweepPlan:
    norms: NormSet
    master_seed: int
    replicas: int = 10
    n_agents: int = 100
    t_max: int = 2880
    jobs: int = 1

    def __post_init__(self):
        if self.replicas < 1 or self.n_agents < 1 or self.t_max < 0 or self.jobs < 1:
            raise ValueError("replicas, agents and jobs must be >= 1 and steps >= 0")
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master seed must fit in 64 unsigned bits")
        if len(self.norms) > MAX_NORMS:
            raise TooManyNorms(f"{len(self.norms)} norms (limit {MAX_NORMS})")

    @property
    def subsets(self) -> List[NormSet]:
        return enumerate_subsets(self.norms)

    def tasks(self) -> Iterator[Tuple[int, int, int]]:
        """(bitmask, replica, seed) for every run."""
        for mask in range(1 << len(self.norms)):
            for r in range(self.replicas):
                yield mask, r, derive_seed(self.master_seed, mask, r)

    def __len__(self) -> int:
        return (1 << len(self.norms)) * self.replicas


@dataclass
class SweepResult:
    plan: SweepPlan
    subsets: Dict[int, NormSet]
    results: Dict[int, List[RunResult]] = field(default_factory=dict)

    def pooled_wealth(self, bitmask: int) -> np.ndarray:
        return np.concatenate([r.final_wealth for r in self.results[bitmask]])

    def summary(self, bins: int = DEFAULT_BINS) -> List[SubsetRow]:
        return subset_summary(self, bins)


# worker-side context, set once per process
_CTX: dict = {}


def _init_worker(scenario: ScenarioConfig, demographics: Demographics, norms: NormSet, n_agents: int, t_max: int):
    _CTX.update(scenario=scenario, demographics=demographics, norms=norms, n_agents=n_agents, t_max=t_max)


def _run_task(task: Tuple[int, int, int]):
    mask, replica, seed = task
    try:
        res = run(_CTX["scenario"], subset_of(mask, _CTX["norms"]), seed,
                  t_max=_CTX["t_max"], n_agents=_CTX["n_agents"], demographics=_CTX["demographics"])
    except Exception as exc:  # noqa: BLE001 - re-raised with run identity
        return mask, replica, None, SweepError(mask, replica, exc)
    return mask, replica, res, None


def run_sweep(
    plan: SweepPlan, scenario: ScenarioConfig, demographics: Optional[Demographics] = None
) -> SweepResult:
    """Execute every (subset, replica) run; ``plan.jobs`` worker processes."""
    if demographics is None:
        demographics = load_demographics(scenario.demographics_path)
    args = (scenario, demographics, plan.norms, plan.n_agents, plan.t_max)
    slots: Dict[Tuple[int, int], RunResult] = {}
    tasks = list(plan.tasks())
    if plan.jobs == 1:
        _init_worker(*args)
        outcomes = map(_run_task, tasks)
        _collect(outcomes, slots, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=plan.jobs, initializer=_init_worker, initargs=args) as pool:
            chunk = max(1, len(tasks) // (plan.jobs * 8))
            _collect(pool.map(_run_task, tasks, chunksize=chunk), slots, len(tasks))
    subsets = {mask: s for mask, s in enumerate(plan.subsets)}
    results = {mask: [slots[mask, r] for r in range(plan.replicas)] for mask in subsets}
    return SweepResult(plan, subsets, results)


def _collect(outcomes, slots: Dict[Tuple[int, int], RunResult], total: int) -> None:
    for done, (mask, replica, res, err) in enumerate(outcomes, 1):
        if err is not None:
            raise err
        slots[mask, replica] = res
        if done % 64 == 0 or done == total:
            log.info("sweep: %d/%d runs", done, total)


# ---- export -------------------------------------------------------------------------


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return format(float(x), ".12g")


def write_summary(out: Path, rows: Sequence[SubsetRow], width: int) -> None:
    table = [SUMMARY_COLUMNS]
    for row in rows:
        label = mask_label(row.bitmask, width)
        hist_name = f"histogram_{label}.csv"
        hist = [("bin_left", "bin_right", "frequency")]
        hist += [(_num(a), _num(b), _num(f)) for a, b, f in row.histogram.rows()]
        atomic_write_text(out / hist_name, _csv(hist))
        table.append((
            label, " ".join(str(i) for i in row.norms), _num(row.apo_proportion), int(row.contains_norm1),
            _num(row.gini_mean), _num(row.gini_sd), _num(row.gini_pooled), _num(row.bankrupt_mean), hist_name,
        ))
    atomic_write_text(out / SUMMARY, _csv(table))


def write_sweep(result: SweepResult, out: Union[str, Path], bins: int = DEFAULT_BINS) -> List[SubsetRow]:
    """Write the output tree; contents depend only on the plan, never on ``jobs``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    plan = result.plan
    width = len(plan.norms)
    manifest = {
        "master_seed": plan.master_seed,
        "replicas": plan.replicas,
        "n_agents": plan.n_agents,
        "t_max": plan.t_max,
        "norms": serialize(plan.norms),
        "bins": bins,
    }
    atomic_write_text(out / MANIFEST, dump_json(manifest))
    for mask, runs in sorted(result.results.items()):
        sub = out / f"subset_{mask_label(mask, width)}"
        for r, res in enumerate(runs):
            doc = res.to_dict()
            doc.update(bitmask=mask, replica=r)
            atomic_write_text(sub / f"replica_{r}.json", dump_json(doc))
    rows = result.summary(bins)
    write_summary(out, rows, width)
    return rows


@dataclass(frozen=True)
class StoredRun:
    """The part of a replica JSON that the statistics need."""

    seed: int
    final_wealth: np.ndarray
    final_status: np.ndarray


def load_sweep(out: Union[str, Path]) -> Tuple[SweepResult, int]:
    """Read a sweep directory back; returns the result and its histogram bin count."""
    out = Path(out)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    norms = parse_norms(manifest["norms"])
    plan = SweepPlan(norms, manifest["master_seed"], manifest["replicas"], manifest["n_agents"], manifest["t_max"])
    width = len(norms)
    subsets = {mask: s for mask, s in enumerate(plan.subsets)}
    results = {}
    for mask in subsets:
        runs = []
        for r in range(plan.replicas):
            path = out / f"subset_{mask_label(mask, width)}" / f"replica_{r}.json"
            doc = json.loads(path.read_text(encoding="utf-8"))
            runs.append(StoredRun(
                doc["seed"],
                np.asarray(doc["final_wealth"], dtype=np.int64),
                np.asarray([int(Status.parse(s)) for s in doc["final_status"]], dtype=np.int8),
            ))
        results[mask] = runs
    return SweepResult(plan, subsets, results), int(manifest.get("bins", DEFAULT_BINS))
