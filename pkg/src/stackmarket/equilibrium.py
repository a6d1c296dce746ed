"""Follower Nash equilibria, leader/Stackelberg equilibria and property checkers."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from . import allocation
from .follower import FollowerGame, FollowerProfile, OfferModel, TeamFormation
from .leader import LEADER_CAP, LeaderProfile, leader_partitions, member_payment, tasks_from_profile
from .model import CompanyId, MarketInstance, Money, Task
from .partitions import normalize, partition_key, set_partitions
from .socialnet import edge_weight

STRICT = "strict"
PERMISSIVE = "permissive"
SEMANTICS = (STRICT, PERMISSIVE)
FOLLOWER_CAP = 8


def _check_semantics(semantics: str):
    if semantics not in SEMANTICS:
        raise ValueError(f"unknown deviation semantics {semantics!r}")


@dataclass(frozen=True)
class Deviation:
    agent: CompanyId
    move: str  # "stay", "singleton" or "join"
    target: frozenset | None
    profile: FollowerProfile
    partition: tuple[frozenset, ...]


@dataclass
class EquilibriumReport:
    profile: object
    is_ne: bool
    witness: dict | None = None
    potential_value: Money | None = None
    steps: list[dict] = field(default_factory=list)
    reason: str = ""

    def __post_init__(self):
        if not self.is_ne and self.reason in ("", "witness") and self.witness is None:
            raise ValueError("a non-equilibrium report needs a witness")

    def to_dict(self) -> dict:
        from .serialize import jsonable

        return jsonable({
            "is_ne": self.is_ne,
            "reason": self.reason,
            "partition": _blocks(self.profile),
            "witness": self.witness,
            "potential": self.potential_value,
            "steps": self.steps,
        })


def _blocks(profile) -> list[list]:
    if isinstance(profile, (FollowerProfile, LeaderProfile)):
        return [sorted(b) for b in profile.partition()]
    if isinstance(profile, TeamFormation):
        return [sorted(b) for b in profile.blocks]
    return [sorted(b) for b in profile]


def _as_profile(spf, inst: MarketInstance) -> FollowerProfile:
    if isinstance(spf, FollowerProfile):
        return spf
    if isinstance(spf, TeamFormation):
        return FollowerProfile.canonical(spf.blocks)
    return FollowerProfile.canonical(spf)


def deviation_set(y: CompanyId, spf: FollowerProfile, semantics: str = PERMISSIVE,
                  order: Sequence | None = None) -> list[Deviation]:
    """Outcomes ``y`` can reach by changing only its own choice; the first entry is staying put.

    ``strict`` applies the identical-choice grouping rule literally, so ``y``
    can only split off or adopt the shared choice set of a group that already
    lists it. ``permissive`` lets ``y`` leave to a singleton or join any other
    team outright; joins are realized on the canonical profile of the new
    partition, so the other members' choices are rewritten too.
    """
    _check_semantics(semantics)
    order = list(order) if order is not None else sorted(spf.choice)
    current = spf.partition(order)
    own = next(b for b in current if y in b)
    out = [Deviation(y, "stay", None, spf, current)]

    if semantics == STRICT:
        if len(own) > 1:
            new = spf.with_choice(y, {y})
            out.append(Deviation(y, "singleton", None, new, new.partition(order)))
        groups: dict[frozenset, set] = {}
        for z in order:
            if z != y:
                groups.setdefault(spf.choice[z], set()).add(z)
        for choice, members in groups.items():
            if y in choice and choice != spf.choice[y]:
                new = spf.with_choice(y, choice)
                out.append(Deviation(y, "join", frozenset(members), new, new.partition(order)))
        return out

    rest = [b for b in current if b != own]
    if len(own) > 1:
        part = normalize(rest + [own - {y}, frozenset({y})], order)
        out.append(Deviation(y, "singleton", None, FollowerProfile.canonical(part), part))
    for target in rest:
        others = [b for b in rest if b != target]
        if len(own) > 1:
            others.append(own - {y})
        part = normalize(others + [target | {y}], order)
        out.append(Deviation(y, "join", target, FollowerProfile.canonical(part), part))
    return out


def _game(tasks, inst, model, include_ops=True) -> FollowerGame:
    return FollowerGame(tasks, inst, model.analytic_only(), include_ops)


def _best_deviation(game: FollowerGame, y, spf, semantics, order, current_r):
    best = None
    for dev in deviation_set(y, spf, semantics, order)[1:]:
        r = game.revenue(y, dev.partition)
        if r > current_r and (best is None or r > best[1]):
            best = (dev, r)
    return best


def verify_follower_ne(spf, tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                       semantics: str = PERMISSIVE, game: FollowerGame | None = None) -> EquilibriumReport:
    """Check every company's every deviation; not an NE iff one strictly raises its own revenue."""
    _check_semantics(semantics)
    order = inst.company_ids
    spf = _as_profile(spf, inst)
    game = game or _game(tasks, inst, model)
    partition = spf.partition(order)
    revenues = game.revenues(partition)
    for y in order:
        best = _best_deviation(game, y, spf, semantics, order, revenues[y])
        if best is not None:
            dev, r = best
            witness = {"agent": y, "move": dev.move, "target": dev.target, "delta": r - revenues[y],
                       "partition": dev.partition}
            return EquilibriumReport(spf, False, witness, game.potential(partition), reason="witness")
    return EquilibriumReport(spf, True, None, game.potential(partition), reason="no improving deviation")


def best_response_dynamics(start, tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                           semantics: str = PERMISSIVE, max_moves: int = 500) -> EquilibriumReport:
    """Round-robin best responses until nobody improves, a partition repeats, or moves run out.

    Each step records the mover's revenue gain next to the change in total
    expected team profit so the two signs can be compared afterwards.
    """
    _check_semantics(semantics)
    order = inst.company_ids
    game = _game(tasks, inst, model)
    spf = _as_profile(start, inst)
    partition = spf.partition(order)
    phi = game.potential(partition)

    def key_of(profile, part):
        if semantics == PERMISSIVE:
            return partition_key(part, order)
        return tuple(sorted((y, tuple(sorted(a))) for y, a in profile.choice.items()))

    seen = {key_of(spf, partition)}
    steps: list[dict] = []
    idle = 0
    i = 0
    while idle < len(order):
        y = order[i % len(order)]
        i += 1
        current_r = game.revenue(y, partition)
        best = _best_deviation(game, y, spf, semantics, order, current_r)
        if best is None:
            idle += 1
            continue
        if len(steps) >= max_moves:
            return EquilibriumReport(spf, False, None, phi, steps, reason="max_moves")
        dev, r = best
        new_phi = game.potential(dev.partition)
        steps.append({"agent": y, "move": dev.move, "target": dev.target, "delta_r": r - current_r,
                      "delta_phi": new_phi - phi, "partition": dev.partition})
        spf, partition, phi = dev.profile, dev.partition, new_phi
        idle = 0
        key = key_of(spf, partition)
        if key in seen:
            return EquilibriumReport(spf, False, None, phi, steps, reason="cycle")
        seen.add(key)
    return EquilibriumReport(spf, True, None, phi, steps, reason="converged")


@dataclass(frozen=True)
class NEEntry:
    partition: tuple[frozenset, ...]
    is_ne: bool
    phi: Money


def brute_force_follower_ne(tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                            semantics: str = PERMISSIVE, cap: int = FOLLOWER_CAP) -> list[NEEntry]:
    """Every set partition of the companies with its NE flag (canonical profile) and potential."""
    order = inst.company_ids
    if len(order) > cap:
        raise ValueError(f"{len(order)} companies exceeds the enumeration cap {cap}")
    game = _game(tasks, inst, model)
    out = []
    for part in set_partitions(order):
        rep = verify_follower_ne(FollowerProfile.canonical(part), tasks, inst, model, semantics, game=game)
        out.append(NEEntry(part, rep.is_ne, rep.potential_value))
    return out


def phi_argmax(entries: Sequence[NEEntry]) -> list[NEEntry]:
    top = max(e.phi for e in entries)
    return [e for e in entries if e.phi == top]


def uniqueness_probe_follower(tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                              semantics: str = PERMISSIVE, cap: int = FOLLOWER_CAP) -> dict:
    """Whether the potential has a single maximizing partition, and how many NE partitions exist."""
    entries = brute_force_follower_ne(tasks, inst, model, semantics, cap)
    unique_max = len(phi_argmax(entries)) == 1
    ne_count = sum(e.is_ne for e in entries)
    return {
        "unique_max": unique_max,
        "ne_count": ne_count,
        "unique_ne": (ne_count == 1) if unique_max else None,
    }


def follower_br(tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                semantics: str = PERMISSIVE, seed=0, cap: int = FOLLOWER_CAP, threshold=0.3,
                max_moves: int = 500) -> FollowerProfile:
    """A fixed choice of follower equilibrium for the given tasks.

    Small markets: the NE partition with the largest potential, earliest in
    enumeration order on ties. Larger markets: best-response dynamics
    started from the greedy formation at ``threshold`` shuffled by ``seed``.
    """
    profile, is_ne = follower_response(tasks, inst, model, semantics, seed, cap, threshold, max_moves)
    if not is_ne:
        raise RuntimeError("no follower equilibrium found for these tasks")
    return profile


def follower_response(tasks: Sequence[Task], inst: MarketInstance, model: OfferModel = OfferModel(),
                      semantics: str = PERMISSIVE, seed=0, cap: int = FOLLOWER_CAP, threshold=0.3,
                      max_moves: int = 500) -> tuple[FollowerProfile, bool]:
    """Like ``follower_br`` but total: without an NE, fall back to the potential maximizer (small
    markets) or the last dynamics state, flagged ``False``."""
    order = inst.company_ids
    if len(order) <= cap:
        entries = brute_force_follower_ne(tasks, inst, model, semantics, cap)
        ne = [e for e in entries if e.is_ne]
        best = phi_argmax(ne or entries)[0]
        return FollowerProfile.canonical(best.partition), bool(ne)
    from .follower import greedy_team_formation

    start = greedy_team_formation(inst.companies, threshold, seed)
    rep = best_response_dynamics(start, tasks, inst, model, semantics, max_moves)
    return rep.profile, rep.is_ne


@dataclass
class StackelbergResult:
    spl: LeaderProfile | None
    spf: FollowerProfile | None
    found: bool
    global_cost: Money | None
    cost_minimizer: tuple[frozenset, ...] | None
    se_is_cost_minimizer: bool | None
    equilibria: list[tuple[frozenset, ...]]
    leader_witnesses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from .serialize import jsonable

        return jsonable({
            "found": self.found,
            "spl": _blocks(self.spl) if self.spl else None,
            "spf": _blocks(self.spf) if self.spf else None,
            "global_cost": self.global_cost,
            "cost_minimizer": self.cost_minimizer,
            "se_is_cost_minimizer": self.se_is_cost_minimizer,
            "equilibria": self.equilibria,
            "leader_witnesses": {str(k): v for k, v in self.leader_witnesses.items()},
        })


class LeaderGame:
    """Customer costs once followers answer each task set with their fixed best response."""

    def __init__(self, inst: MarketInstance, model: OfferModel = OfferModel(), semantics: str = PERMISSIVE,
                 follower_cap: int = FOLLOWER_CAP):
        self.inst = inst
        self.model = model
        self.semantics = semantics
        self.follower_cap = follower_cap
        self.order = inst.customer_ids
        self._cache: dict[tuple, tuple] = {}
        self._ne: dict[tuple, bool] = {}

    def follower_ok(self, partition: Sequence[frozenset]) -> bool:
        """Whether the follower response to ``partition`` is an actual NE."""
        self.solve(partition)
        return self._ne[partition_key(normalize(partition, self.order), self.order)]

    def solve(self, partition: Sequence[frozenset]):
        """(tasks, follower profile, per-customer cost) for a leader partition."""
        partition = normalize(partition, self.order)
        key = partition_key(partition, self.order)
        if key not in self._cache:
            spl = LeaderProfile.canonical(partition)
            tasks = tasks_from_profile(spl, self.inst)
            spf, self._ne[key] = follower_response(tasks, self.inst, self.model, self.semantics,
                                                   cap=self.follower_cap)
            formation = TeamFormation.from_blocks(spf.partition(self.inst.company_ids), self.inst)
            result = allocation.allocate(tasks, formation, self.inst)
            costs = {}
            for t, k in enumerate(tasks):
                served = result.assignment[t] is not None
                for x in k.members:
                    customer = self.inst.customer(x)
                    costs[x] = member_payment(customer, k, self.inst.discount) if served else self.inst.penalty_xi
            self._cache[key] = (tasks, spf, costs)
        return self._cache[key]

    def moves(self, x, partition: Sequence[frozenset]) -> list[tuple[str, tuple[frozenset, ...]]]:
        partition = list(partition)
        own = next(b for b in partition if x in b)
        rest = [b for b in partition if b != own]
        out = []
        if len(own) > 1:
            out.append(("singleton", normalize(rest + [own - {x}, frozenset({x})], self.order)))
        for target in rest:
            others = [b for b in rest if b != target]
            if len(own) > 1:
                others.append(own - {x})
            out.append(("join", normalize(others + [target | {x}], self.order)))
        return out

    def improving_move(self, partition):
        """First customer move that strictly lowers that customer's own cost, or None."""
        _, _, costs = self.solve(partition)
        for x in self.order:
            for move, new in self.moves(x, partition):
                new_cost = self.solve(new)[2][x]
                if new_cost < costs[x]:
                    return {"agent": x, "move": move, "partition": new, "delta": costs[x] - new_cost}
        return None


def solve_stackelberg_small(inst: MarketInstance, model: OfferModel = OfferModel(), semantics: str = PERMISSIVE,
                            leader_cap: int = 7, follower_cap: int = FOLLOWER_CAP) -> StackelbergResult:
    """Exhaustive Stackelberg search over leader partitions for small markets.

    Every leader partition is answered by ``follower_response``; a partition
    is an equilibrium when that response is a follower NE and no customer
    lowers its own cost by leaving its task or joining another one. Among
    equilibria the cheapest by total customer cost is returned.
    """
    _check_semantics(semantics)
    if len(inst.customers) > leader_cap:
        raise ValueError(f"{len(inst.customers)} customers exceeds the leader cap {leader_cap}")
    if len(inst.companies) > follower_cap:
        raise ValueError(f"{len(inst.companies)} companies exceeds the follower cap {follower_cap}")
    game = LeaderGame(inst, model, semantics, follower_cap)
    totals = {}
    equilibria = []
    witnesses = {}
    for spl in leader_partitions(inst.customer_ids, cap=leader_cap):
        part = normalize(spl.partition(game.order), game.order)
        totals[part] = sum(game.solve(part)[2].values(), Fraction(0))
        w = game.improving_move(part)
        if not game.follower_ok(part):
            witnesses[part] = {"followers": "no follower equilibrium for these tasks"}
        elif w is None:
            equilibria.append(part)
        else:
            witnesses[part] = w
    cheapest = min(totals.values())
    minimizers = [p for p, v in totals.items() if v == cheapest]
    if not equilibria:
        return StackelbergResult(None, None, False, None, minimizers[0], None, [], witnesses)
    best = min(equilibria, key=lambda p: totals[p])
    _, spf, _ = game.solve(best)
    return StackelbergResult(
        spl=LeaderProfile.canonical(best),
        spf=spf,
        found=True,
        global_cost=totals[best],
        cost_minimizer=minimizers[0] if len(minimizers) == 1 else None,
        se_is_cost_minimizer=best in minimizers,
        equilibria=equilibria,
        leader_witnesses=witnesses,
    )


def verify_stackelberg(spl: LeaderProfile, spf: FollowerProfile, inst: MarketInstance,
                       model: OfferModel = OfferModel(), semantics: str = PERMISSIVE,
                       follower_cap: int = FOLLOWER_CAP) -> dict:
    """Both equilibrium conditions: followers at NE for the tasks, and no customer can gain."""
    tasks = tasks_from_profile(spl, inst)
    followers = verify_follower_ne(spf, tasks, inst, model, semantics)
    game = LeaderGame(inst, model, semantics, follower_cap)
    part = normalize(spl.partition(game.order), game.order)
    leader_witness = game.improving_move(part)
    return {"followers_ok": followers.is_ne, "leaders_ok": leader_witness is None,
            "follower_witness": followers.witness, "leader_witness": leader_witness}


def check_prop1(spf, tasks: Sequence[Task], inst: MarketInstance, formation: TeamFormation | None = None) -> list[dict]:
    """Winning teams should never pair a company with a teammate that covers all of its services."""
    if formation is None:
        formation = TeamFormation.from_blocks(_as_profile(spf, inst).partition(inst.company_ids), inst)
    result = allocation.allocate(tasks, formation, inst)
    out = []
    for t, m in result.assignment.items():
        if m is None:
            continue
        team = formation.teams[m]
        for y in sorted(team.partners):
            sy = inst.company(y).services
            if not (tasks[t].required & sy):
                continue
            for y2 in sorted(team.partners - {y}):
                if edge_weight(inst.company(y2).services, sy) == 1:
                    out.append({"task": t, "team": m, "company": y, "covering_teammate": y2})
    return out


def check_prop2(result: allocation.AllocationResult, tasks: Sequence[Task], inst: MarketInstance) -> list[dict]:
    """No failed task may be fully coverable by a single company."""
    out = []
    for t, m in result.assignment.items():
        if m is not None:
            continue
        for y in inst.companies:
            if tasks[t].required <= y.services:
                out.append({"task": t, "company": y.id})
    return out


def check_prop3(spl: LeaderProfile, inst: MarketInstance, model: OfferModel = OfferModel(),
                semantics: str = PERMISSIVE, cap: int = FOLLOWER_CAP) -> dict:
    """Total company revenue across every follower NE for a fixed leader profile."""
    tasks = tasks_from_profile(spl, inst)
    game = _game(tasks, inst, model)
    values = []
    for e in brute_force_follower_ne(tasks, inst, model, semantics, cap):
        if e.is_ne:
            values.append(sum(game.revenues(e.partition).values(), Fraction(0)))
    return {"welfare_values": values, "equal": len(set(values)) <= 1}


@dataclass
class SignConsistencyReport:
    checked: int = 0
    agreeing: int = 0
    counterexamples: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        from .serialize import jsonable

        return jsonable({"checked": self.checked, "agreeing": self.agreeing,
                         "counterexamples": self.counterexamples})


def _sign(v) -> int:
    return (v > 0) - (v < 0)


def potential_sign_consistency(instances: Iterable[tuple[Sequence[Task], MarketInstance]],
                               model: OfferModel = OfferModel(), semantics: str = PERMISSIVE,
                               profiles_per_instance: int = 5, seed=0, max_counterexamples: int = 50
                               ) -> SignConsistencyReport:
    """Compare the sign of the mover's revenue change with the sign of the potential change, per deviation."""
    rng = random.Random(seed)
    rep = SignConsistencyReport()
    for n, (tasks, inst) in enumerate(instances):
        order = inst.company_ids
        game = _game(tasks, inst, model)
        for _ in range(profiles_per_instance):
            labels = [rng.randrange(len(order)) for _ in order]
            groups: dict[int, set] = {}
            for y, lab in zip(order, labels):
                groups.setdefault(lab, set()).add(y)
            spf = FollowerProfile.canonical(groups.values())
            part = spf.partition(order)
            base_r = game.revenues(part)
            base_phi = game.potential(part)
            for y in order:
                for dev in deviation_set(y, spf, semantics, order)[1:]:
                    dr = game.revenue(y, dev.partition) - base_r[y]
                    dphi = game.potential(dev.partition) - base_phi
                    rep.checked += 1
                    if _sign(dr) == _sign(dphi):
                        rep.agreeing += 1
                    elif len(rep.counterexamples) < max_counterexamples:
                        rep.counterexamples.append({
                            "instance": n, "agent": y, "move": dev.move, "from": part,
                            "to": dev.partition, "delta_r": dr, "delta_phi": dphi,
                        })
    return rep
