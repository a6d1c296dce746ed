"""
Searching for a Stackelberg equilibrium
=======================================

With a handful of agents every way of grouping customers into tasks can be
tried. For each grouping, the companies answer with their best stable
teaming. The grouping is an equilibrium when no customer can lower their own
bill by leaving or joining a task.
"""

from stackmarket.datagen import RandomMarketConfig, random_market
from stackmarket.equilibrium import solve_stackelberg_small, verify_stackelberg

found = 0
for seed in range(12):
    market = random_market(seed, RandomMarketConfig(n_services=5, n_customers=4, n_companies=3))
    result = solve_stackelberg_small(market)
    if not result.found:
        blocked = sum("followers" in w for w in result.leader_witnesses.values())
        print(f"seed {seed}: none ({blocked} groupings leave the companies without a stable answer)")
        continue
    found += 1
    check = verify_stackelberg(result.spl, result.spf, market)
    verified = check["followers_ok"] and check["leaders_ok"]
    tasks = " | ".join(",".join(sorted(b)) for b in result.spl.partition())
    print(f"seed {seed}: tasks {tasks}; total cost {float(result.global_cost):.2f}; "
          f"cheapest overall: {result.se_is_cost_minimizer}; verified: {verified}")

print(f"{found}/12 markets have an equilibrium")
