"""Stochastic receding-horizon control over lossy sensor and actuator links.

Modules:

- ``model``: plant description, validation, orthogonal/stable decomposition
- ``channels``: Bernoulli and Gilbert-Elliott erasure channels, seeded streams
- ``filtering``: sensor-side Kalman filter and stacked innovation maps
- ``estimation``: controller-side state estimate under sensor dropouts
- ``policy``: saturated innovation feedback, actuator buffer, fallback policy
- ``synthesis``: offline moments, per-instant QP assembly, the controller
- ``qpsolver``: dense ADMM QP solver with polishing
- ``simulation``: closed-loop Monte-Carlo harness and sweeps
- ``config`` / ``cli``: experiment files and the ``netmpc`` command
"""

from .channels import BernoulliChannel, GilbertElliottChannel
from .model import SystemModel, decompose, validate_model
from .policy import PolicyParams, SaturatorSpec
from .qpsolver import QpOptions, QpProblem, QpSolution, solve
from .simulation import AggregateStats, SimConfig, run_monte_carlo, run_path, sweep
from .synthesis import Controller, OfflineMoments, StabilityParams, estimate_moments

__version__ = "0.1.0"

__all__ = [
    "AggregateStats", "BernoulliChannel", "Controller", "GilbertElliottChannel",
    "OfflineMoments", "PolicyParams", "QpOptions", "QpProblem", "QpSolution",
    "SaturatorSpec", "SimConfig", "StabilityParams", "SystemModel", "decompose",
    "estimate_moments", "run_monte_carlo", "run_path", "solve", "sweep", "validate_model",
]
