import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (
    deterministic_revenues, exact_two_team_point_vs_uniform, grid_prob_less_uniforms, instance_as_dicts,
)
from stackmarket.datagen import random_market
from stackmarket.follower import (
    FollowerGame, FollowerProfile, MonteCarloDisallowed, OfferModel, PriceDist, TeamFormation,
    company_revenue, expected_team_profit, greedy_team_formation, potential, team_offer, teams_from_profile,
    win_distribution, win_probability,
)
from stackmarket.leader import cluster_tasks, tasks_from_profile
from stackmarket.model import Company, Customer, MarketInstance, ServiceCatalog, check_feasible_partition, derive_task
from stackmarket.partitions import set_partitions

UNI = OfferModel.uniform(seed=1)
DET = OfferModel.deterministic()


def singletons(inst):
    return TeamFormation.from_blocks([{y} for y in inst.company_ids], inst)


def test_worked_team_formation_examples(f1):
    def teams(choice):
        return sorted(sorted(b) for b in teams_from_profile(FollowerProfile(choice), f1).blocks)

    assert teams({"y1": {"y1"}, "y2": {"y2", "y3"}, "y3": {"y3"}}) == [["y1"], ["y2"], ["y3"]]
    assert teams({"y1": {"y1", "y2"}, "y2": {"y1", "y2"}, "y3": {"y3"}}) == [["y1", "y2"], ["y3"]]
    assert teams({"y1": {"y1", "y2", "y3"}, "y2": {"y2", "y3"}, "y3": {"y1", "y3"}}) == [["y1"], ["y2"], ["y3"]]


def test_greedy_examples(f1):
    assert sorted(map(sorted, greedy_team_formation(f1.companies, 0).blocks)) == [["y1", "y3"], ["y2"]]
    assert greedy_team_formation(f1.companies, 1, seed=5).blocks == (frozenset({"y1", "y2", "y3"}),)
    assert len(greedy_team_formation(f1.companies[:1], 0.5)) == 1
    with pytest.raises(ValueError):
        greedy_team_formation(f1.companies, 1.5)


@given(st.integers(0, 10**6), st.fractions(0, 1), st.integers(0, 100))
@settings(max_examples=50, deadline=None)
def test_greedy_feasible_and_deterministic(seed, threshold, shuffle):
    inst = random_market(seed)
    a = greedy_team_formation(inst.companies, threshold, seed=shuffle)
    assert check_feasible_partition(a.blocks, inst.company_ids)
    assert a == greedy_team_formation(inst.companies, threshold, seed=shuffle)


def test_team_offer_examples(f1):
    pair = TeamFormation.from_blocks([{"y1", "y2"}, {"y3"}], f1).teams[0]
    one = singletons(f1).teams[0]
    assert team_offer(pair, "s1", f1, DET) == PriceDist(Fraction(50))
    assert team_offer(one, "s2", f1, DET) == team_offer(one, "s2", f1, UNI) == PriceDist(Fraction(90))
    u = team_offer(pair, "s1", f1, UNI)
    assert (u.lo, u.hi) == (50, 60)
    with pytest.raises(ValueError):
        team_offer(one, "s3", f1, DET)


def test_uniform_against_point_is_exactly_half():
    p = win_distribution([PriceDist(Fraction(0), ((Fraction(50), Fraction(60)),)), PriceDist(Fraction(55))], UNI)
    assert p == [Fraction(1, 2), Fraction(1, 2)]
    assert p[0] == exact_two_team_point_vs_uniform(50, 60, 55)


def test_monte_carlo_within_three_sigma():
    dists = [PriceDist(Fraction(0), ((Fraction(50), Fraction(60)),)), PriceDist(Fraction(55)),
             PriceDist(Fraction(100))]
    # a two-span sum has no closed form here, so this goes through simulation
    a = PriceDist(Fraction(0), ((Fraction(25), Fraction(30)), (Fraction(25), Fraction(30))))
    p = win_distribution([a, PriceDist(Fraction(55))], OfferModel.uniform(seed=3))
    # Pr(sum of two U[25,30] < 55) = 1/2 by symmetry
    assert abs(float(p[0]) - 0.5) < 3 * (0.25 / 100_000) ** 0.5
    assert win_distribution(dists, UNI)[2] == 0


def test_two_uniforms_closed_form_matches_grid():
    a = PriceDist(Fraction(0), ((Fraction(10), Fraction(20)),))
    b = PriceDist(Fraction(0), ((Fraction(15), Fraction(30)),))
    p = win_distribution([a, b], UNI.analytic_only())
    assert float(p[0]) == pytest.approx(grid_prob_less_uniforms(10, 20, 15, 30), abs=2e-3)
    assert sum(p) == 1


def test_simulation_can_be_forbidden():
    a = PriceDist(Fraction(0), ((Fraction(1), Fraction(2)),))
    with pytest.raises(MonteCarloDisallowed):
        win_distribution([a, a, a], UNI.analytic_only())


def test_ties_and_singles():
    assert win_distribution([PriceDist(Fraction(5)), PriceDist(Fraction(5))], DET) == [Fraction(1, 2)] * 2
    assert win_distribution([None, PriceDist(Fraction(5))], DET) == [0, 1]
    assert win_distribution([None, None], DET) == [0, 0]


def test_f1_expected_profit_revenue_potential(f1, f1_tasks):
    form = singletons(f1)
    e = [expected_team_profit(m, f1_tasks, form, f1) for m in form.teams]
    assert e == [376, 0, 300]
    assert win_probability(form.teams[0], f1_tasks[0], form, f1) == 1
    assert win_probability(form.teams[1], f1_tasks[0], form, f1) == 0
    assert company_revenue("y1", form, f1_tasks, f1) == Fraction(2584, 10)
    assert company_revenue("y2", form, f1_tasks, f1) == -20
    assert potential(form, f1_tasks, f1) == 676
    assert potential(form, [], f1) == 0
    grand = TeamFormation.from_blocks([{"y1", "y2", "y3"}], f1)
    assert potential(grand, f1_tasks, f1) == 676


def test_break_even_and_symmetric_tie():
    twins = (Company("a", {"s1"}, {"s1": 100}, {"s1": 150}), Company("b", {"s1"}, {"s1": 100}, {"s1": 150}),
             Company("c", {"s2"}, {"s2": 1}, {"s2": 1}))
    inst = MarketInstance(ServiceCatalog(("s1", "s2")), (Customer("x", {"s1"}, {"s1": 300}),), twins, lam=1)
    tasks = [derive_task({"x"}, inst)]
    form = singletons(inst)
    assert [expected_team_profit(m, tasks, form, inst, UNI) for m in form.teams[:2]] == [150, 150]
    solo = MarketInstance(ServiceCatalog(("s1", "s2")), inst.customers,
                          (Company("a", {"s1"}, {"s1": 100}, {"s1": 100}, ops_cost=200), twins[2]), lam=1)
    assert company_revenue("a", singletons(solo), tasks, solo) == 0
    assert company_revenue("a", singletons(solo), tasks, solo, include_ops=False) == 200


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_revenues_and_potential_match_oracle(seed):
    inst = random_market(seed)
    tasks = tasks_from_profile(cluster_tasks(inst.customers, 4, seed=seed), inst)
    game = FollowerGame(tasks, inst, DET)
    rng = random.Random(seed)
    parts = list(set_partitions(inst.company_ids))
    simple = [(k.required, k.total_payment) for k in tasks]
    for part in rng.sample(parts, 8):
        revenue, phi = deterministic_revenues(part, simple, instance_as_dicts(inst), inst.lam)
        assert game.revenues(part) == revenue
        assert game.potential(part) == phi
        pooled = [frozenset().union(*(inst.company(y).services for y in b)) for b in part]
        assert phi == sum(v for req, v in simple if any(req <= p for p in pooled))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_potential_is_profile_relabeling_invariant(seed):
    inst = random_market(seed)
    tasks = tasks_from_profile(cluster_tasks(inst.customers, 3, seed=seed), inst)
    part = greedy_team_formation(inst.companies, Fraction(1, 3), seed=seed).blocks
    canon = FollowerProfile.canonical(part)
    assert sorted(map(sorted, teams_from_profile(canon, inst).blocks)) == sorted(map(sorted, part))
    assert potential(canon, tasks, inst) == potential(TeamFormation.from_blocks(part, inst), tasks, inst)


def test_win_probabilities_sum_to_one_on_random_formations():
    worst = 0.0
    for seed in range(100):
        inst = random_market(seed)
        tasks = tasks_from_profile(cluster_tasks(inst.customers, 4, seed=seed), inst)
        form = greedy_team_formation(inst.companies, Fraction(seed % 7, 6), seed=seed)
        game = FollowerGame(tasks, inst, OfferModel.uniform(mc_samples=20_000, seed=seed))
        for row in game.win_matrix(form.blocks):
            if any(row):
                worst = max(worst, abs(float(sum(row)) - 1))
    assert worst <= 0.01


def test_round_trip_partition_profile_partition(f1):
    for part in set_partitions(f1.company_ids):
        got = teams_from_profile(FollowerProfile.canonical(part), f1).blocks
        assert sorted(map(sorted, got)) == sorted(map(sorted, part))


def test_sampling_is_seeded():
    d = PriceDist(Fraction(1), ((Fraction(0), Fraction(1)),))
    a = d.sample(np.random.default_rng(4), 5)
    assert np.array_equal(a, d.sample(np.random.default_rng(4), 5))
