"""Scheduler simulator: synthetic workloads, a greedy baseline, solver-backed
batch scheduling, preemption and rebalancing scenarios."""

from .batch import BatchConfig, batch_schedule
from .greedy import GreedyConfig, greedy_schedule
from .policies import compose, policies_pack, policy_line_count, sim_schema
from .scenarios import (
    greedy_vs_batch,
    hetero_workload,
    packing_instance,
    preemption_scenario,
    rebalance_scenario,
)
from .trace import Event, ScheduleTrace
from .workload import AppSpec, ClusterSpec, NodeSpec, PodSpec, build_store, generate_workload

__all__ = [
    "AppSpec",
    "BatchConfig",
    "ClusterSpec",
    "Event",
    "GreedyConfig",
    "NodeSpec",
    "PodSpec",
    "ScheduleTrace",
    "batch_schedule",
    "build_store",
    "compose",
    "generate_workload",
    "greedy_schedule",
    "greedy_vs_batch",
    "hetero_workload",
    "packing_instance",
    "policies_pack",
    "policy_line_count",
    "preemption_scenario",
    "rebalance_scenario",
    "sim_schema",
]
