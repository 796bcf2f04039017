"""Discrete-event simulator for collocated LTE/Wi-Fi link aggregation."""

from .lal import LasPolicy
from .sim import Simulator

__version__ = "0.1.0"
__all__ = ["LasPolicy", "Simulator", "__version__"]
