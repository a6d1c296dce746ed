"""Customer-led Stackelberg market simulator.

Customers lead by pooling demand into discounted group-buying tasks; companies
follow by forming teams that bid for those tasks.
"""

from .model import (
    Company,
    Customer,
    MarketInstance,
    ServiceCatalog,
    Task,
    Team,
    ValidationError,
    check_feasible_partition,
    derive_task,
    derive_team,
    to_money,
    validate_instance,
)
from .leader import DiscountModel, LeaderProfile, cluster_tasks, tasks_from_profile
from .follower import FollowerProfile, OfferModel, TeamFormation, greedy_team_formation

__version__ = "0.1.0"

__all__ = [
    "Company", "Customer", "DiscountModel", "FollowerProfile", "LeaderProfile", "MarketInstance",
    "OfferModel", "ServiceCatalog", "Task", "Team", "TeamFormation", "ValidationError",
    "check_feasible_partition", "cluster_tasks", "derive_task", "derive_team", "greedy_team_formation",
    "tasks_from_profile", "to_money", "validate_instance",
]
