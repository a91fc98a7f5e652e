"""Planning with pre-scheduled state observations: schedule Pareto fronts for MDPs."""

from .envs import GridSpec, build_world, corridor_world, grid_to_mdp, splitter_world
from .errors import (CapacityError, ConvergenceError, DomainError, InputError, ParseError,
                     PsmdpError)
from .model import CompositeMdp, Mdp, build_composite
from .pareto import CostPoint, FilterConfig, ScheduleFront, build_front, schedule_dominates
from .schedule import Schedule, format_schedule, parse_schedule
from .search import SearchConfig, SearchReport, pareto_front_schedules, quality_metric
from .sim import RolloutStats, rollout
from .solver import PolicyRecord, SolvedSchedule, ValuePair, solve_schedule

__all__ = [
    "CapacityError", "CompositeMdp", "ConvergenceError", "CostPoint", "DomainError", "FilterConfig",
    "GridSpec", "InputError", "Mdp", "ParseError", "PolicyRecord", "PsmdpError", "RolloutStats",
    "Schedule", "ScheduleFront", "SearchConfig", "SearchReport", "SolvedSchedule", "ValuePair",
    "build_composite", "build_front", "build_world", "corridor_world", "format_schedule",
    "grid_to_mdp", "pareto_front_schedules", "parse_schedule", "quality_metric", "rollout",
    "schedule_dominates", "solve_schedule", "splitter_world",
]
