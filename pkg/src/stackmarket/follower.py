"""Company side: team formation, offer prices, win probabilities, profits and revenue."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Company, CompanyId, MarketInstance, Money, Task, Team, to_money
from .partitions import blocks_from_choices, canonical_choices
from .socialnet import alg3_similarity

DETERMINISTIC = "deterministic_min"
UNIFORM = "uniform_iid"


class MonteCarloDisallowed(RuntimeError):
    """An exact win probability was required but only simulation could provide it."""


@dataclass(frozen=True)
class OfferModel:
    """How a team prices a service.

    ``deterministic_min`` quotes the cheapest partner's offer. ``uniform_iid``
    draws the team price uniformly between the cheapest and dearest partner
    offer, independently per service. ``mc_samples=0`` forbids simulation.
    """

    mode: str = DETERMINISTIC
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (DETERMINISTIC, UNIFORM):
            raise ValueError(f"unknown offer mode {self.mode!r}")
        if self.mc_samples < 0:
            raise ValueError("mc_samples must be non-negative")

    @classmethod
    def deterministic(cls) -> "OfferModel":
        return cls(DETERMINISTIC)

    @classmethod
    def uniform(cls, mc_samples: int = 100_000, seed: int = 0) -> "OfferModel":
        return cls(UNIFORM, mc_samples=mc_samples, seed=seed)

    def analytic_only(self) -> "OfferModel":
        return replace(self, mc_samples=0)


@dataclass(frozen=True)
class PriceDist:
    """A constant plus a sum of independent non-degenerate uniforms."""

    shift: Fraction
    spans: tuple[tuple[Fraction, Fraction], ...] = ()

    @property
    def is_point(self) -> bool:
        return not self.spans

    @property
    def lo(self) -> Fraction:
        return self.shift + sum((a for a, _ in self.spans), Fraction(0))

    @property
    def hi(self) -> Fraction:
        return self.shift + sum((b for _, b in self.spans), Fraction(0))

    def __add__(self, other: "PriceDist") -> "PriceDist":
        return PriceDist(self.shift + other.shift, self.spans + other.spans)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.full(n, float(self.shift))
        for a, b in self.spans:
            out += rng.uniform(float(a), float(b), n)
        return out


def _point(x) -> PriceDist:
    return PriceDist(to_money(x))


def _uniform(a, b) -> PriceDist:
    a, b = to_money(a), to_money(b)
    if a == b:
        return _point(a)
    return PriceDist(Fraction(0), ((a, b),))


@dataclass(frozen=True)
class FollowerProfile:
    choice: Mapping[CompanyId, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "choice", {y: frozenset(a) for y, a in self.choice.items()})
        for y, a in self.choice.items():
            if y not in a:
                raise ValueError(f"company {y} must belong to its own choice set")

    @classmethod
    def canonical(cls, partition: Iterable[Iterable]) -> "FollowerProfile":
        return cls(canonical_choices([frozenset(b) for b in partition]))

    def partition(self, order: Sequence | None = None) -> tuple[frozenset, ...]:
        return blocks_from_choices(self.choice, order if order is not None else sorted(self.choice))

    def with_choice(self, y: CompanyId, choice: Iterable) -> "FollowerProfile":
        new = dict(self.choice)
        new[y] = frozenset(choice)
        return FollowerProfile(new)


def make_team(companies: Sequence[Company]) -> Team:
    pooled = frozenset().union(*(y.services for y in companies))
    multiplicity = {s: sum(1 for y in companies if s in y.services) for s in sorted(pooled)}
    return Team(partners=frozenset(y.id for y in companies), pooled=pooled, multiplicity=multiplicity)


@dataclass(frozen=True)
class TeamFormation:
    teams: tuple[Team, ...]
    owner: Mapping[CompanyId, int]

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[CompanyId]], inst: MarketInstance) -> "TeamFormation":
        teams = tuple(make_team([inst.company(y) for y in sorted(b)]) for b in blocks)
        return cls._build(teams)

    @classmethod
    def _build(cls, teams: tuple[Team, ...]) -> "TeamFormation":
        owner = {y: i for i, m in enumerate(teams) for y in m.partners}
        return cls(teams=teams, owner=owner)

    @property
    def blocks(self) -> tuple[frozenset, ...]:
        return tuple(m.partners for m in self.teams)

    def team_of(self, y: CompanyId) -> Team:
        return self.teams[self.owner[y]]

    def __len__(self):
        return len(self.teams)


def teams_from_profile(spf: FollowerProfile, inst: MarketInstance) -> TeamFormation:
    """Companies sharing an identical choice set form a team."""
    return TeamFormation.from_blocks(spf.partition(inst.company_ids), inst)


def greedy_team_formation(companies: Sequence[Company], threshold, seed=None) -> TeamFormation:
    """Similarity-threshold greedy teaming.

    The list is shuffled with ``seed`` (kept in the given order when ``seed`` is
    None). Each still-free company starts a team and absorbs every later free
    company whose similarity, measured against the team's founder, is at most
    ``threshold``.
    """
    threshold = to_money(threshold)
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    order = list(companies)
    if seed is not None:
        random.Random(seed).shuffle(order)
    allocated = [False] * len(order)
    teams = []
    for i, yi in enumerate(order):
        if allocated[i]:
            continue
        allocated[i] = True
        members = [yi]
        for j in range(len(order)):
            if not allocated[j] and alg3_similarity(yi.services, order[j].services) <= threshold:
                members.append(order[j])
                allocated[j] = True
        teams.append(make_team(members))
    return TeamFormation._build(tuple(teams))


def team_offer(m: Team, s, inst: MarketInstance, model: OfferModel = OfferModel()) -> PriceDist:
    """Price distribution of team ``m`` for service ``s``; non-offering partners are ignored."""
    if s not in m.pooled:
        raise ValueError(f"service {s!r} is not pooled by the team")
    offers = [inst.company(y).offers[s] for y in sorted(m.partners) if s in inst.company(y).services]
    if model.mode == DETERMINISTIC:
        return _point(min(offers))
    return _uniform(min(offers), max(offers))


def _prob_less(x: PriceDist, y: PriceDist) -> Fraction:
    """Pr(X < Y) for independent X, Y each a point or a single uniform."""
    if x.is_point and y.is_point:
        raise ValueError("use tie splitting for two point masses")
    if x.is_point:
        c, d = y.lo, y.hi
        return min(max((d - x.shift) / (d - c), Fraction(0)), Fraction(1))
    if y.is_point:
        a, b = x.lo, x.hi
        return min(max((y.shift - a) / (b - a), Fraction(0)), Fraction(1))
    a, b = x.lo, x.hi
    c, d = y.lo, y.hi

    def cdf_integral(t):
        if t <= a:
            return Fraction(0)
        if t <= b:
            return (t - a) ** 2 / (2 * (b - a))
        return (b - a) / 2 + (t - b)

    return (cdf_integral(d) - cdf_integral(c)) / (d - c)


def win_distribution(dists: Sequence[PriceDist | None], model: OfferModel) -> list[Fraction]:
    """Probability each competitor posts the lowest task offer; None means ineligible.

    Exact whenever every contender is a point mass (ties split evenly) or when
    two contenders each carry at most one uniform component; otherwise Monte
    Carlo with ``model.mc_samples`` draws.
    """
    probs = [Fraction(0)] * len(dists)
    live = [i for i, d in enumerate(dists) if d is not None]
    if not live:
        return probs
    ceiling = min(dists[i].hi for i in live)
    live = [i for i in live if dists[i].lo <= ceiling]
    if len(live) == 1:
        probs[live[0]] = Fraction(1)
        return probs

    if all(dists[i].is_point for i in live):
        best = min(dists[i].shift for i in live)
        winners = [i for i in live if dists[i].shift == best]
        for i in winners:
            probs[i] = Fraction(1, len(winners))
        return probs

    if len(live) == 2 and all(len(dists[i].spans) <= 1 for i in live):
        i, j = live
        p = _prob_less(dists[i], dists[j])
        probs[i], probs[j] = p, 1 - p
        return probs

    if model.mc_samples == 0:
        raise MonteCarloDisallowed("win probability needs simulation but Monte Carlo is disabled")
    pruned = [d if i in live else None for i, d in enumerate(dists)]
    return simulate_win_distribution(pruned, model.mc_samples, model.seed)


def simulate_win_distribution(dists: Sequence[PriceDist | None], samples: int, seed=0) -> list[Fraction]:
    """Monte Carlo estimate of each competitor's chance of the lowest offer, ties shared."""
    probs = [Fraction(0)] * len(dists)
    live = [i for i, d in enumerate(dists) if d is not None]
    if not live:
        return probs
    rng = np.random.default_rng(seed)
    draws = np.stack([dists[i].sample(rng, samples) for i in live], axis=1)
    is_min = draws == draws.min(axis=1, keepdims=True)
    share = (is_min / is_min.sum(axis=1, keepdims=True)).mean(axis=0)
    for i, p in zip(live, share):
        probs[i] = to_money(float(p))
    return probs


class FollowerGame:
    """Evaluates the follower game for fixed tasks; team offers are cached per partner set.

    ``include_ops`` selects whether a company's fixed operating cost is part of
    the cost subtracted from its revenue share.
    """

    def __init__(self, tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                 include_ops: bool = True):
        self.tasks = list(tasks)
        self.inst = inst
        self.model = model
        self.include_ops = include_ops
        self.task_value = [k.total_payment for k in self.tasks]
        self._offers: dict[frozenset, list[PriceDist | None]] = {}
        self._own_cost = {
            y.id: y.service_cost + (y.ops_cost if include_ops else 0) for y in inst.companies
        }

    def task_offers(self, partners: frozenset) -> list[PriceDist | None]:
        """Offer distribution of a team for each task (None where not eligible)."""
        cached = self._offers.get(partners)
        if cached is not None:
            return cached
        companies = [self.inst.company(y) for y in sorted(partners)]
        by_service: dict = {}
        for y in companies:
            for s, o in y.offers.items():
                lo, hi = by_service.get(s, (o, o))
                by_service[s] = (min(lo, o), max(hi, o))
        out: list[PriceDist | None] = []
        for k in self.tasks:
            if not k.required <= by_service.keys():
                out.append(None)
                continue
            if self.model.mode == DETERMINISTIC:
                out.append(PriceDist(sum((by_service[s][0] for s in k.required), Fraction(0))))
            else:
                total = PriceDist(Fraction(0))
                for s in sorted(k.required):
                    total = total + _uniform(*by_service[s])
                out.append(total)
        self._offers[partners] = out
        return out

    def win_matrix(self, partition: Sequence[frozenset]) -> list[list[Fraction]]:
        """Rows are tasks, columns are blocks of ``partition``."""
        offers = [self.task_offers(frozenset(b)) for b in partition]
        return [win_distribution([col[t] for col in offers], self.model) for t in range(len(self.tasks))]

    def team_profits(self, partition: Sequence[frozenset]) -> list[Money]:
        profits = [Fraction(0)] * len(partition)
        for t, row in enumerate(self.win_matrix(partition)):
            for i, p in enumerate(row):
                if p:
                    profits[i] += p * self.task_value[t]
        return profits

    def revenues(self, partition: Sequence[frozenset]) -> dict[CompanyId, Money]:
        profits = self.team_profits(partition)
        out = {}
        for block, e in zip(partition, profits):
            share = self.inst.lam * e / len(block)
            for y in block:
                out[y] = share - self._own_cost[y]
        return out

    def revenue(self, y: CompanyId, partition: Sequence[frozenset]) -> Money:
        partition = list(partition)
        idx = next(i for i, b in enumerate(partition) if y in b)
        offers = [self.task_offers(frozenset(b)) for b in partition]
        e = Fraction(0)
        for t in range(len(self.tasks)):
            if offers[idx][t] is None:
                continue
            p = win_distribution([col[t] for col in offers], self.model)[idx]
            if p:
                e += p * self.task_value[t]
        return self.inst.lam * e / len(partition[idx]) - self._own_cost[y]

    def potential(self, partition: Sequence[frozenset]) -> Money:
        return sum(self.team_profits(partition), Fraction(0))


def _partition_of(formation_or_profile, inst: MarketInstance) -> tuple[frozenset, ...]:
    if isinstance(formation_or_profile, TeamFormation):
        return formation_or_profile.blocks
    if isinstance(formation_or_profile, FollowerProfile):
        return formation_or_profile.partition(inst.company_ids)
    return tuple(frozenset(b) for b in formation_or_profile)


def win_probability(m: Team, k: Task, formation: TeamFormation, inst: MarketInstance,
                    model: OfferModel = OfferModel()) -> Fraction:
    if not k.required <= m.pooled:
        return Fraction(0)
    game = FollowerGame([k], inst, model)
    blocks = formation.blocks
    idx = blocks.index(m.partners)
    return game.win_matrix(blocks)[0][idx]


def expected_team_profit(m: Team, tasks: Sequence[Task], formation: TeamFormation, inst: MarketInstance,
                         model: OfferModel = OfferModel()) -> Money:
    """Each eligible task's total payment weighted by the team's chance of winning it."""
    blocks = formation.blocks
    return FollowerGame(tasks, inst, model).team_profits(blocks)[blocks.index(m.partners)]


def company_revenue(y: CompanyId, spf, tasks: Sequence[Task], inst: MarketInstance,
                    model: OfferModel = OfferModel(), include_ops: bool = True) -> Money:
    """Equal share of the retained team profit, less service cost and (by default) operating cost."""
    return FollowerGame(tasks, inst, model, include_ops).revenue(y, _partition_of(spf, inst))


def potential(spf, tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel()) -> Money:
    """Sum of all teams' expected profits under the formation the profile induces."""
    return FollowerGame(tasks, inst, model).potential(_partition_of(spf, inst))
