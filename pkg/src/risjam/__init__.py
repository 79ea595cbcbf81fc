"""RIS-assisted multiuser OFDMA downlink under jamming.

A block-fading simulator, a primal-dual subgradient scheduler for
user/subchannel/mode/stream selection, and a twin-critic deterministic
policy-gradient agent that steers the surface phases from received-rate
feedback alone.
"""

__version__ = "0.1.0"

from . import agent, allocator, config, env, harness, linkmodel, nn, propagation
from .config import ScenarioConfig, load_scenario
from .env import RisJamEnv

__all__ = [
    "__version__",
    "agent", "allocator", "config", "env", "harness", "linkmodel", "nn",
    "propagation", "ScenarioConfig", "load_scenario", "RisJamEnv",
]
