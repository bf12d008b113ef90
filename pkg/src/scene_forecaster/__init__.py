"""Interaction-aware multi-hypothesis trajectory prediction for road agents.

The package estimates the joint state of a traffic scene (kinematics plus
discrete route and passing-order intentions per agent) with a particle
filter over a lane-graph map, and predicts one deterministic multi-agent
trajectory per intention combination, weighted by its posterior
probability.
"""

from scene_forecaster.config import RunConfig

__version__ = "0.1.0"

__all__ = ["RunConfig", "__version__"]
