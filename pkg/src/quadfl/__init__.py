"""Feedback-linearized quadrotor: extended plant, linearizing feedback, tracking and verification."""

from .extended_model import CommandBar, DisturbanceSample, ExtendedState, VehicleParams, hover_trim, rhs
from .fl_transform import DomainError, DomainMargins, FlatState, VirtualCommand, fl_feedback, flat_state
from .kernels import BACKEND
from .linear_control import CircleReference, GainSet, HoverReference, WaypointReference
from .simulator import DisturbanceSpec, Scenario, Signal, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CircleReference", "CommandBar", "DisturbanceSample", "DisturbanceSpec",
    "DomainError", "DomainMargins", "ExtendedState", "FlatState", "GainSet", "HoverReference",
    "Scenario", "Signal", "VehicleParams", "VirtualCommand", "WaypointReference",
    "fl_feedback", "flat_state", "hover_trim", "rhs", "simulate",
]
