"""Photon experiments on a node lattice and on optical-element graphs."""
from .config import ScenarioConfig
from .harness import RunSummary, run_scenario

__version__ = "0.1.0"
__all__ = ["ScenarioConfig", "RunSummary", "run_scenario", "__version__"]
