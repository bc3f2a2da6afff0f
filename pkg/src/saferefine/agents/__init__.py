"""Interchangeable generator/evaluator backends.

Three families share the same behavioral contracts: a remote chat-API
adapter, a deterministic scripted-replay adapter, and a seeded stochastic
simulator adapter.
"""

from .base import Assessment, EvaluatorRole, Generator, Evaluator, SamplingConfig
from .scripted import (
    ScriptedEvaluator,
    ScriptedGenerator,
    ScriptedTrajectory,
    dump_trajectories,
    load_trajectories,
    scripted_assess,
)
from .simulator import (
    CategoryProfile,
    SimulatedEvaluator,
    SimulatedGenerator,
    SimulatorParams,
    default_simulator_params,
    simulate_assess,
)
from .remote import EndpointConfig, RemoteEvaluator, RemoteGenerator

__all__ = [
    "Assessment",
    "CategoryProfile",
    "EndpointConfig",
    "Evaluator",
    "EvaluatorRole",
    "Generator",
    "RemoteEvaluator",
    "RemoteGenerator",
    "SamplingConfig",
    "ScriptedEvaluator",
    "ScriptedGenerator",
    "ScriptedTrajectory",
    "SimulatedEvaluator",
    "SimulatedGenerator",
    "SimulatorParams",
    "default_simulator_params",
    "dump_trajectories",
    "load_trajectories",
    "scripted_assess",
    "simulate_assess",
]
