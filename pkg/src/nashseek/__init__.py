"""Distributed Nash equilibrium seeking over directed communication graphs."""

from .digraph import DiGraph, ScalingMode
from .dynamics import AlgorithmSpec, SeekerState, Variant
from .game import GameConstants, QuadraticGame
from .integrator import IntegrationConfig, Trajectory, integrate

__all__ = [
    "AlgorithmSpec",
    "DiGraph",
    "GameConstants",
    "IntegrationConfig",
    "QuadraticGame",
    "ScalingMode",
    "SeekerState",
    "Trajectory",
    "Variant",
    "integrate",
]
