"""Synthetic market generation: city catalog, scenario presets and random instances.

Companies model satellite operators with a latitude-band visibility rule: an
operator at orbital inclination ``i`` can image any city whose absolute
latitude is at most ``i`` plus a fixed swath margin.
"""

from __future__ import annotations

import csv
import dataclasses
import random
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Sequence

from .leader import DiscountModel
from .model import Company, Customer, MarketInstance, ServiceCatalog, ValidationError

CITY_HEADER = ["name", "lat", "lon", "population", "area_km2"]
RESOLUTIONS = ("low", "medium", "high")
SWATH_MARGIN = 5
INCLINATION_RANGE = (20, 98)
MAX_INCLINATION_RETRIES = 100
# Price factors are drawn on a 1e-4 grid so every amount stays an exact rational.
GRID = 10_000


@dataclass(frozen=True)
class City:
    name: str
    lat: Fraction
    lon: Fraction
    population: int
    area: Fraction

    def __post_init__(self):
        if not -90 <= self.lat <= 90:
            raise ValidationError(f"city {self.name}: latitude {self.lat} outside [-90, 90]")
        if self.area <= 0:
            raise ValidationError(f"city {self.name}: area must be positive")
        if self.population < 0:
            raise ValidationError(f"city {self.name}: negative population")


def service_id(city: str, resolution: str) -> str:
    return f"{city}|{resolution}"


def split_service(s: str) -> tuple[str, str]:
    city, _, resolution = s.rpartition("|")
    return city, resolution


def load_cities(path=None) -> list[City]:
    """Parse a city CSV; ``None`` loads the bundled catalog."""
    if path is None:
        text = resources.files(__package__).joinpath("data/cities.csv").read_text(encoding="utf-8")
        source = "bundled cities.csv"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ValidationError(f"{source}: empty city file")
    if [h.strip() for h in rows[0]] != CITY_HEADER:
        raise ValidationError(f"{source}:1: header must be {','.join(CITY_HEADER)}")
    cities, seen = [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CITY_HEADER):
            raise ValidationError(f"{source}:{lineno}: expected {len(CITY_HEADER)} fields, got {len(row)}")
        name = row[0].strip()
        try:
            city = City(name, Fraction(row[1].strip()), Fraction(row[2].strip()), int(row[3].strip()),
                        Fraction(row[4].strip()))
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: malformed row ({exc})") from None
        if name in seen:
            raise ValidationError(f"{source}:{lineno}: duplicate city {name!r}")
        seen.add(name)
        cities.append(city)
    if not cities:
        raise ValidationError(f"{source}: no city rows")
    return cities


@dataclass(frozen=True)
class ScenarioConfig:
    n_customers: int = 5000
    needs_range: tuple[int, int] = (1, 10)
    n_companies: int = 30
    services_range: tuple[int, int] = (10, 30)
    n_tasks_options: tuple[int, ...] = (20, 50, 100, 150, 200)
    threshold_sweep: tuple[float, float, int] = (0.0, 0.6, 300)
    replicas: int = 10
    seed: int = 0
    lam: Fraction = Fraction(9, 10)
    discount_variant: str = "exp_cap"
    resolution_multipliers: tuple[Fraction, ...] = (Fraction(1), Fraction(11, 10), Fraction(6, 5))
    base_price_per_km2: Fraction = Fraction(10)
    imaging_cost_per_km2: Fraction = Fraction(3)
    ops_cost_per_service: Fraction = Fraction(5000)
    customer_pf_range: tuple[Fraction, Fraction] = (Fraction(1), Fraction(6, 5))
    company_pf_range: tuple[Fraction, Fraction] = (Fraction(1), Fraction(13, 10))

    def __post_init__(self):
        for name in ("needs_range", "services_range", "customer_pf_range", "company_pf_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} is empty: [{lo}, {hi}]")
        if self.needs_range[0] < 1 or self.services_range[0] < 1:
            raise ValidationError("needs and services counts must be at least 1")
        lo, hi, steps = self.threshold_sweep
        if lo > hi or steps < 1:
            raise ValidationError("threshold_sweep must have lo <= hi and steps >= 1")
        if self.n_customers < 1 or self.n_companies < 1 or self.replicas < 1:
            raise ValidationError("n_customers, n_companies and replicas must be positive")
        if len(self.resolution_multipliers) != len(RESOLUTIONS):
            raise ValidationError("one multiplier per resolution is required")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = _plain(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValidationError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        values = {}
        for k, v in data.items():
            default = getattr(cls(), k)
            values[k] = _coerce_like(default, v, k)
        return cls(**values)


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _coerce_like(default, v, name):
    try:
        if isinstance(default, bool):
            return bool(v)
        if isinstance(default, Fraction):
            return Fraction(str(v))
        if isinstance(default, tuple):
            if not isinstance(v, (list, tuple)):
                raise TypeError("expected a list")
            if name == "threshold_sweep":
                return (float(v[0]), float(v[1]), int(v[2]))
            if default and isinstance(default[0], Fraction):
                return tuple(Fraction(str(x)) for x in v)
            return tuple(int(x) for x in v)
        if isinstance(default, int):
            if isinstance(v, float) and not v.is_integer():
                raise TypeError("expected an integer")
            return int(v)
        return type(default)(v)
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"scenario key {name}: {exc}") from None


_PRESETS = {
    1: dict(n_customers=5000, needs_range=(1, 10), n_companies=30, services_range=(10, 30)),
    2: dict(n_customers=5000, needs_range=(1, 10), n_companies=15, services_range=(10, 30)),
    3: dict(n_customers=5000, needs_range=(1, 10), n_companies=15, services_range=(30, 50)),
    4: dict(n_customers=5000, needs_range=(1, 5), n_companies=30, services_range=(10, 30)),
    5: dict(n_customers=10000, needs_range=(1, 10), n_companies=30, services_range=(10, 30)),
}


def scenario_preset(preset_id: int) -> ScenarioConfig:
    if preset_id not in _PRESETS:
        raise ValidationError(f"unknown scenario {preset_id!r}; choose 1..{len(_PRESETS)}")
    return ScenarioConfig(**_PRESETS[preset_id])


def _factor(rng: random.Random, lo: Fraction, hi: Fraction) -> Fraction:
    return lo + (hi - lo) * Fraction(rng.randint(0, GRID), GRID)


def _multiplier(cfg: ScenarioConfig, resolution: str) -> Fraction:
    return cfg.resolution_multipliers[RESOLUTIONS.index(resolution)]


def reachable(cities: Sequence[City], inclination) -> list[City]:
    return [c for c in cities if abs(c.lat) <= inclination + SWATH_MARGIN]


def gen_companies(cfg: ScenarioConfig, cities: Sequence[City], seed) -> list[Company]:
    rng = random.Random(f"companies:{seed}")
    lo, hi = cfg.services_range
    if hi > len(cities) * len(RESOLUTIONS):
        raise ValidationError(f"services_range upper bound {hi} exceeds the {len(cities) * len(RESOLUTIONS)} services")
    out = []
    for n in range(cfg.n_companies):
        count = rng.randint(lo, hi)
        for _ in range(MAX_INCLINATION_RETRIES):
            inclination = rng.randint(*INCLINATION_RANGE)
            pool = [service_id(c.name, r) for c in reachable(cities, inclination) for r in RESOLUTIONS]
            if len(pool) >= count:
                break
        else:
            raise ValidationError(f"company {n}: no inclination reaches {count} services")
        services = sorted(rng.sample(pool, count))
        area = {c.name: c.area for c in cities}
        pf = _factor(rng, *cfg.company_pf_range)
        costs, offers = {}, {}
        for s in services:
            a = area[split_service(s)[0]]
            costs[s] = cfg.imaging_cost_per_km2 * a * pf
            ceiling = cfg.base_price_per_km2 * a
            offers[s] = costs[s] + (ceiling - costs[s]) * Fraction(rng.randint(0, GRID), GRID)
        out.append(Company(f"y{n + 1}", frozenset(services), costs, offers, cfg.ops_cost_per_service * count))
    return out


def gen_customers(cfg: ScenarioConfig, cities: Sequence[City], seed,
                  catalog: Sequence[str] | None = None) -> list[Customer]:
    """Customers with distinct-city needs; ``catalog`` restricts needs to services someone sells."""
    rng = random.Random(f"customers:{seed}")
    if catalog is None:
        catalog = [service_id(c.name, r) for c in cities for r in RESOLUTIONS]
    by_city: dict[str, list[str]] = {}
    for s in sorted(catalog):
        by_city.setdefault(split_service(s)[0], []).append(s)
    city_names = [c.name for c in cities if c.name in by_city]
    area = {c.name: c.area for c in cities}
    lo, hi = cfg.needs_range
    if hi > len(city_names):
        raise ValidationError(f"needs_range upper bound {hi} exceeds the {len(city_names)} available cities")
    out = []
    for n in range(cfg.n_customers):
        count = rng.randint(lo, hi)
        needs = [rng.choice(by_city[name]) for name in rng.sample(city_names, count)]
        pf = _factor(rng, *cfg.customer_pf_range)
        prices = {}
        for s in needs:
            city, resolution = split_service(s)
            prices[s] = cfg.base_price_per_km2 * area[city] * _multiplier(cfg, resolution) * pf
        out.append(Customer(f"x{n + 1}", frozenset(needs), prices))
    return out


def scenario_discount(cfg: ScenarioConfig) -> DiscountModel:
    rate = cfg.n_companies / cfg.n_customers
    if cfg.discount_variant == "exp_cap":
        return DiscountModel.exp_cap(rate)
    if cfg.discount_variant == "normalized_exp":
        return DiscountModel.normalized_exp(rate)
    raise ValidationError(f"scenario discount variant must be exp_cap or normalized_exp, not {cfg.discount_variant!r}")


def gen_instance(cfg: ScenarioConfig, cities: Sequence[City] | None = None, seed=None) -> MarketInstance:
    """Full scenario instance; the catalog is every service at least one company sells."""
    cities = load_cities() if cities is None else cities
    seed = cfg.seed if seed is None else seed
    companies = gen_companies(cfg, cities, seed)
    catalog = sorted(set().union(*(y.services for y in companies)))
    customers = gen_customers(cfg, cities, seed, catalog)
    return MarketInstance(ServiceCatalog(tuple(catalog)), tuple(customers), tuple(companies),
                          lam=cfg.lam, discount=scenario_discount(cfg))


@dataclass(frozen=True)
class RandomMarketConfig:
    n_services: int = 6
    n_customers: int = 12
    n_companies: int = 6
    needs_range: tuple[int, int] = (1, 3)
    services_range: tuple[int, int] = (1, 3)
    cost_range: tuple[int, int] = (10, 50)
    markup_range: tuple[int, int] = (0, 50)
    price_slack: tuple[int, int] = (0, 100)
    ops_cost: int = 0
    discount: DiscountModel = field(default_factory=lambda: DiscountModel.normalized_exp(0.2))


def random_market(seed, cfg: RandomMarketConfig = RandomMarketConfig()) -> MarketInstance:
    """Small abstract market with integer money that always passes validation."""
    rng = random.Random(f"market:{seed}")
    catalog = [f"s{i + 1}" for i in range(cfg.n_services)]
    if cfg.n_services < 2 or cfg.services_range[1] >= cfg.n_services:
        raise ValidationError("need at least two services and fewer per company than the catalog")
    if cfg.needs_range[1] > cfg.n_services:
        raise ValidationError(f"needs_range upper bound exceeds the {cfg.n_services} services")
    if cfg.n_companies * (cfg.n_services - 1) < cfg.n_services:
        raise ValidationError("too few companies to cover the catalog without one covering all of it")
    sets = [set(rng.sample(catalog, rng.randint(*cfg.services_range))) for _ in range(cfg.n_companies)]
    for _ in range(100 * cfg.n_services):
        missing = [s for s in catalog if not any(s in ss for ss in sets)]
        if not missing:
            break
        s = missing[0]
        target = sets[rng.randrange(len(sets))]
        target.add(s)
        if len(target) == cfg.n_services:
            target.discard(rng.choice(sorted(target - {s})))
    else:
        raise ValidationError("could not spread the catalog over the companies")
    companies = []
    for n, ss in enumerate(sets):
        costs = {s: rng.randint(*cfg.cost_range) for s in sorted(ss)}
        offers = {s: costs[s] + rng.randint(*cfg.markup_range) for s in sorted(ss)}
        companies.append(Company(f"y{n + 1}", frozenset(ss), costs, offers, cfg.ops_cost))
    top_offer = {s: max(y.offers[s] for y in companies if s in y.services) for s in catalog}
    customers = []
    for n in range(cfg.n_customers):
        needs = rng.sample(catalog, rng.randint(*cfg.needs_range))
        prices = {s: top_offer[s] + rng.randint(*cfg.price_slack) for s in sorted(needs)}
        customers.append(Customer(f"x{n + 1}", frozenset(needs), prices))
    return MarketInstance(ServiceCatalog(tuple(catalog)), tuple(customers), tuple(companies),
                          discount=cfg.discount)
