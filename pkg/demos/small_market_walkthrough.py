"""
A three-customer, three-company market by hand
==============================================

Two customers pool a shared service and get a group discount, two
companies team up to quote a cheaper package, and we ask whether anyone
wants to change sides.
"""

from fractions import Fraction

from stackmarket import Company, Customer, DiscountModel, MarketInstance, ServiceCatalog, TeamFormation
from stackmarket.allocation import allocate
from stackmarket.equilibrium import best_response_dynamics, brute_force_follower_ne
from stackmarket.follower import FollowerGame, FollowerProfile, OfferModel
from stackmarket.leader import member_payment
from stackmarket.model import derive_task

###############################################################################
# The market. Exact fractions everywhere, so every printed number is exact.

customers = (
    Customer("x1", {"s1", "s2"}, {"s1": 100, "s2": 200}),
    Customer("x2", {"s1"}, {"s1": 120}),
    Customer("x3", {"s3"}, {"s3": 300}),
)
companies = (
    Company("y1", {"s1", "s2"}, {"s1": 30, "s2": 50}, {"s1": 60, "s2": 90}),
    Company("y2", {"s1"}, {"s1": 20}, {"s1": 50}),
    Company("y3", {"s3", "s4"}, {"s3": 40, "s4": 40}, {"s3": 80, "s4": 70}),
)
discount = DiscountModel.from_table({1: 1, 2: Fraction(4, 5), 3: Fraction(7, 10)})
market = MarketInstance(ServiceCatalog(("s1", "s2", "s3", "s4")), customers, companies,
                        lam=Fraction(9, 10), discount=discount)

###############################################################################
# Group buying: x1 and x2 both want s1, so each pays 80% of their s1 price.

tasks = [derive_task({"x1", "x2"}, market), derive_task({"x3"}, market)]
for x in ("x1", "x2"):
    print(x, "pays", member_payment(market.customer(x), tasks[0], discount))
print("pooled payment for s1:", tasks[0].payments["s1"])

###############################################################################
# Teaming: y2 is cheaper on s1, so a y1+y2 team undercuts y1 alone.

for blocks in ([{"y1"}, {"y2"}, {"y3"}], [{"y1", "y2"}, {"y3"}]):
    formation = TeamFormation.from_blocks(blocks, market)
    result = allocate(tasks, formation, market)
    print(blocks, "->", dict(result.per_task_offer), "failed:", result.failed_customers)

###############################################################################
# Revenues and the potential (total expected team profit).

game = FollowerGame(tasks, market, OfferModel.deterministic())
solo = [frozenset({"y1"}), frozenset({"y2"}), frozenset({"y3"})]
print({y: str(r) for y, r in game.revenues(solo).items()}, "potential:", game.potential(solo))

###############################################################################
# Stability depends on which unilateral moves are allowed. If a company may
# only adopt a choice set that already lists it, staying apart is the unique
# equilibrium. If it may join any team outright, y2 free-rides on y1, y1
# walks away, and the dynamics cycle.

for semantics in ("strict", "permissive"):
    ne = [e.partition for e in brute_force_follower_ne(tasks, market, semantics=semantics) if e.is_ne]
    run = best_response_dynamics(FollowerProfile.canonical(solo), tasks, market, semantics=semantics)
    print(f"{semantics}: {len(ne)} equilibria, dynamics {run.reason} after {len(run.steps)} moves")
