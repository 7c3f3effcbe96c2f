"""Graph neural network that learns joint transmit/RIS beamforming."""

from .model import BeamformingGNN, collate, sample_inputs
from .records import CsiSample, GnnSolution, SchemaError, read_csi, write_solutions
from .training import (
    TrainConfig,
    TrainRun,
    infer,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "BeamformingGNN",
    "CsiSample",
    "GnnSolution",
    "SchemaError",
    "TrainConfig",
    "TrainRun",
    "collate",
    "infer",
    "load_checkpoint",
    "read_csi",
    "sample_inputs",
    "save_checkpoint",
    "train",
    "write_solutions",
]
