"""Synthetic population: demographic distributions per district and agent sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .config import ConfigError, read_yaml
from .core import SAMPLED_STATUSES, AgentProfile, AgentState, Status
from .environment import City
from .needs import NeedParams, init_nsl

MASS_TOL = 1e-9
MAX_RESAMPLE = 100


class SchemaError(ConfigError):
    pass


class NormalizationError(ConfigError):
    pass


@dataclass(frozen=True)
class Distribution:
    """``normal`` or ``lognormal`` scalar distribution given by mean and sd.

    Truncated distributions resample negative draws (then clamp at 0).
    """

    kind: str
    mean: float
    sd: float = 0.0
    truncate: bool = True

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size == 0:
            return np.zeros(0)
        if self.sd == 0:
            return np.full(size, max(self.mean, 0.0) if self.truncate else self.mean)
        if self.kind == "lognormal":
            sigma2 = math.log1p((self.sd / self.mean) ** 2)
            mu = math.log(self.mean) - sigma2 / 2
            return rng.lognormal(mu, math.sqrt(sigma2), size)
        out = rng.normal(self.mean, self.sd, size)
        if not self.truncate:
            return out
        for _ in range(MAX_RESAMPLE):
            bad = out < 0
            if not bad.any():
                break
            out[bad] = rng.normal(self.mean, self.sd, int(bad.sum()))
        return np.maximum(out, 0.0)


@dataclass(frozen=True)
class District:
    name: str
    weight: float
    gender: Dict[str, float]
    age_bands: Dict[Tuple[int, int], float]
    status: Dict[Status, float]
    income: Distribution
    rent: Distribution


@dataclass(frozen=True)
class Demographics:
    districts: Tuple[District, ...]
    initial_wealth: Dict[Status, Distribution]

    @property
    def district_names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.districts)


def _mass(raw: Any, where: str) -> Dict[str, float]:
    if not isinstance(raw, dict) or not raw:
        raise SchemaError(f"{where}: expected a non-empty mapping of probabilities")
    out = {}
    for k, v in raw.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise SchemaError(f"{where}.{k}: expected a non-negative probability")
        out[str(k)] = float(v)
    if abs(sum(out.values()) - 1.0) > MASS_TOL:
        raise NormalizationError(f"{where}: probabilities sum to {sum(out.values())!r}, not 1")
    return out


def _distribution(raw: Any, where: str, truncate: bool = True) -> Distribution:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Distribution("normal", float(raw), 0.0, truncate)
    if not isinstance(raw, dict) or "mean" not in raw:
        raise SchemaError(f"{where}: expected {{dist, mean, sd}}")
    kind = raw.get("dist", "normal")
    if kind not in ("normal", "lognormal"):
        raise SchemaError(f"{where}: unknown distribution {kind!r}")
    mean, sd = float(raw["mean"]), float(raw.get("sd", 0.0))
    if sd < 0 or (kind == "lognormal" and mean <= 0):
        raise SchemaError(f"{where}: invalid parameters")
    return Distribution(kind, mean, sd, truncate)


def _band(text: str, where: str) -> Tuple[int, int]:
    try:
        lo, hi = (int(x) for x in str(text).split("-"))
    except ValueError:
        raise SchemaError(f"{where}: age band {text!r} is not 'lo-hi'") from None
    if not 0 <= lo <= hi:
        raise SchemaError(f"{where}: bad age band {text!r}")
    return lo, hi


def parse_demographics(data: Mapping[str, Any]) -> Demographics:
    if not isinstance(data, Mapping) or "districts" not in data:
        raise SchemaError("demographics: missing 'districts'")
    raw_districts = data["districts"]
    if not isinstance(raw_districts, dict) or not raw_districts:
        raise SchemaError("districts: expected a non-empty mapping")
    weights = _mass({k: (v or {}).get("weight") for k, v in raw_districts.items()}, "district weights")
    districts = []
    for name, spec in raw_districts.items():
        where = f"districts.{name}"
        for key in ("gender", "age", "status", "income", "rent"):
            if key not in spec:
                raise SchemaError(f"{where}: missing {key!r}")
        status_mass = _mass(spec["status"], f"{where}.status")
        statuses = {}
        for s, p in status_mass.items():
            try:
                st = Status.parse(s)
            except ValueError:
                raise SchemaError(f"{where}.status: unknown status {s!r}") from None
            if st not in SAMPLED_STATUSES:
                raise SchemaError(f"{where}.status: {s!r} cannot be sampled")
            statuses[st] = p
        districts.append(
            District(
                name=str(name),
                weight=weights[str(name)],
                gender=_mass(spec["gender"], f"{where}.gender"),
                age_bands={_band(b, where): p for b, p in _mass(spec["age"], f"{where}.age").items()},
                status=statuses,
                income=_distribution(spec["income"], f"{where}.income"),
                rent=_distribution(spec["rent"], f"{where}.rent"),
            )
        )
    raw_wealth = data.get("initial_wealth")
    if not isinstance(raw_wealth, dict):
        raise SchemaError("demographics: missing 'initial_wealth'")
    wealth = {}
    for s in SAMPLED_STATUSES:
        if s.label not in raw_wealth:
            raise SchemaError(f"initial_wealth: missing {s.label!r}")
        # starting wealth may be negative (debt)
        wealth[s] = _distribution(raw_wealth[s.label], f"initial_wealth.{s.label}", truncate=False)
    return Demographics(tuple(districts), wealth)


def load_demographics(path: Union[str, Path]) -> Demographics:
    try:
        data = read_yaml(path)
    except ConfigError as exc:
        if isinstance(exc.__cause__, OSError):
            raise exc.__cause__
        raise SchemaError(str(exc)) from exc
    return parse_demographics(data)


def _categorical(rng: np.random.Generator, mass: Mapping[Any, float], size: int) -> List[Any]:
    keys = list(mass)
    p = np.array([mass[k] for k in keys])
    picks = rng.choice(len(keys), size=size, p=p / p.sum())
    return [keys[i] for i in picks]


def sample_population(
    n: int,
    demo: Demographics,
    city: City,
    rng: np.random.Generator,
    params: NeedParams,
    pension_ratio: float = 0.6,
    needs_rng: Optional[np.random.Generator] = None,
) -> List[AgentState]:
    """Draw ``n`` agents; attributes are independent given the district."""
    if n < 1:
        raise ValueError("population size must be >= 1")
    needs_rng = needs_rng or rng
    cells = city.width * city.height
    d_idx = rng.choice(len(demo.districts), size=n, p=np.array([d.weight for d in demo.districts]))

    gender: List[str] = [""] * n
    age = np.zeros(n, dtype=np.int64)
    status: List[Status] = [Status.EMPLOYED] * n
    income = np.zeros(n, dtype=np.int64)
    rent = np.zeros(n, dtype=np.int64)
    for k, d in enumerate(demo.districts):
        rows = np.nonzero(d_idx == k)[0]
        m = rows.size
        if m == 0:
            continue
        genders = _categorical(rng, d.gender, m)
        bands = _categorical(rng, d.age_bands, m)
        stats = _categorical(rng, d.status, m)
        ages = [int(rng.integers(lo, hi + 1)) for lo, hi in bands]
        incomes = np.rint(d.income.sample(rng, m)).astype(np.int64)
        rents = np.rint(d.rent.sample(rng, m)).astype(np.int64)
        pension = int(round(pension_ratio * d.income.mean))
        for j, i in enumerate(rows):
            gender[i], age[i], status[i], rent[i] = genders[j], ages[j], stats[j], rents[j]
            if stats[j] is Status.EMPLOYED:
                income[i] = incomes[j]
            elif stats[j] is Status.RETIRED:
                income[i] = pension

    wealth = np.zeros(n, dtype=np.int64)
    for s in SAMPLED_STATUSES:
        rows = np.array([i for i in range(n) if status[i] is s], dtype=np.int64)
        wealth[rows] = np.rint(demo.initial_wealth[s].sample(rng, rows.size)).astype(np.int64)
    homes = rng.integers(0, cells, size=n)

    agents = []
    for i in range(n):
        homeless = status[i] is Status.HOMELESS
        home = None if homeless else int(homes[i])
        profile = AgentProfile(
            id=i,
            gender=gender[i],
            age=int(age[i]),
            district=demo.districts[d_idx[i]].name,
            home_location=home,
            income=int(income[i]),
            rent=int(rent[i]),
        )
        agents.append(
            AgentState(
                profile=profile,
                status=status[i],
                wealth=int(wealth[i]),
                location=int(homes[i]),
                nsl=init_nsl(status[i], params, needs_rng),
            )
        )
    return agents
