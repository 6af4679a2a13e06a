"""Budgeted behavior-based online incentive mechanism for crowd sensing."""
__version__ = "0.1.0"

from .bidding import (AbilityDistribution, BidHistory, PrizeStructure, best_response_bid,
                      interior_bid, numeric_best_response_oracle, order_stat_cdf,
                      value_of_winning)
from .coverage import AoiGrid, Selection, SensingProfile, build_manhattan_grid, marginal_utility, utility
from .mechanism import MechanismConfig, MechanismOutcome, run_bbs
from .scenario import Scenario, ScenarioConfig, build_scenario
from .threshold import EqualSplit, Geometric, GridSearch, SamplePool, get_effort_threshold

__all__ = [
    "AbilityDistribution", "AoiGrid", "BidHistory", "EqualSplit", "Geometric", "GridSearch",
    "MechanismConfig", "MechanismOutcome", "PrizeStructure", "SamplePool", "Scenario",
    "ScenarioConfig", "Selection", "SensingProfile", "best_response_bid", "build_manhattan_grid",
    "build_scenario", "get_effort_threshold", "interior_bid", "marginal_utility",
    "numeric_best_response_oracle", "order_stat_cdf", "run_bbs", "utility", "value_of_winning",
]
