"""Multi-connectivity URLLC resource allocation for clustered factory robots."""

from .config import ExperimentConfig, load_config
from .env import FactoryEnv, LeaderAction

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "FactoryEnv", "LeaderAction", "load_config", "__version__"]
