"""Desk-scale simulator for a morphing-array base station with a dual-sector
STAR-BD-RIS serving NOMA users, plus a Meta-SAC agent that learns the joint
beamforming, scheduling, RIS and surface-shape policy."""

from .config import ScenarioConfig, desk_profile, load_config

__all__ = ["ScenarioConfig", "desk_profile", "load_config"]
__version__ = "0.1.0"
