"""RIS-aided simultaneous terahertz information and power transfer simulator."""

from .scenario import (Scenario, RadioConfig, ArrayGeometry, UserSpec,
                       ScenarioError, load_scenario, save_scenario,
                       default_paper_scenario, default_desk_scenario,
                       make_scenario)
from .thz_channel import build_channels, harvested_powers, ChannelSet

__all__ = [
    "Scenario", "RadioConfig", "ArrayGeometry", "UserSpec", "ScenarioError",
    "load_scenario", "save_scenario", "default_paper_scenario",
    "default_desk_scenario", "make_scenario", "build_channels",
    "harvested_powers", "ChannelSet",
]
