"""Simulation and analysis of time-bin entangled photon pairs from a Si micro-ring."""

__version__ = "0.1.0"

from .core import Port, PhaseConfig, build_joint_state, x_fringe_probability  # noqa: E402
from .sim import ExperimentConfig, simulate, simulate_direct  # noqa: E402
from .config import load_config, load_preset  # noqa: E402

__all__ = ["Port", "PhaseConfig", "build_joint_state", "x_fringe_probability", "ExperimentConfig",
           "simulate", "simulate_direct", "load_config", "load_preset", "__version__"]
