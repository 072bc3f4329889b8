"""Drift prediction and sonar search planning for a disabled submersible."""

from ._accel import backend_name
from .config import ScenarioConfig, load_config

__all__ = ["ScenarioConfig", "backend_name", "load_config"]
__version__ = "0.1.0"
