"""Mixed digital twin platooning testbed.

A cloud coordinator fuses emulated-physical, virtual and human-driven
vehicles into one shared mixed space over a delay-modeled message bus, runs
cloud-side platoon control on the fused view, and records telemetry for the
platooning experiments.
"""

__version__ = "0.1.0"

from .scenario import Scenario, ValidationError, load_preset, load_scenario, parse_scenario

__all__ = [
    "Scenario",
    "ValidationError",
    "load_preset",
    "load_scenario",
    "parse_scenario",
    "__version__",
]
