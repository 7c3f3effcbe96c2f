"""Near-field beamforming toolkit for XL-RIS assisted ISAC systems."""

from .bcd import BcdConfig, SolverReport, init_solution, run_bcd
from .channels import ChannelSet, build_channels
from .geometry import NearFieldBounds, Placement, SystemConfig, near_field_bounds
from .metrics import BeamformingSolution, EvalReport, evaluate, weighted_sum_rate

__all__ = [
    "SystemConfig",
    "Placement",
    "NearFieldBounds",
    "near_field_bounds",
    "ChannelSet",
    "build_channels",
    "BeamformingSolution",
    "EvalReport",
    "evaluate",
    "weighted_sum_rate",
    "BcdConfig",
    "SolverReport",
    "init_solution",
    "run_bcd",
]
