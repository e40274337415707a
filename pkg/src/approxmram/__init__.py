"""Approximate ST-MRAM storage for neural-network training.

Stochastic switching and energy models for spin-torque MRAM cells, a
16-bit fixed-point word store with per-bit programming error rates, and a
784-300-10 MLP trained on MNIST with its weights held in that store.
"""

__version__ = "0.1.0"

from .energy import CalibratedModels, EnergyModel, VariabilityModel, calibrate_all, default_models
from .memory import (
    ApproxWeightStore,
    FixedPointFormat,
    ProgrammingProfile,
    TwoTier,
    Uniform,
    dequantize,
    make_profile,
    quantize,
)
from .mnist import Dataset, load_dataset
from .network import TrainConfig, TrainReport, train_and_evaluate
from .switching import CalibrationError, DeviceParams, PulseSpec, SwitchingModel, ber_at, calibrate, tpulse_for_ber

__all__ = [
    "ApproxWeightStore", "CalibratedModels", "CalibrationError", "Dataset", "DeviceParams", "EnergyModel",
    "FixedPointFormat", "ProgrammingProfile", "PulseSpec", "SwitchingModel", "TrainConfig", "TrainReport",
    "TwoTier", "Uniform", "VariabilityModel", "ber_at", "calibrate", "calibrate_all", "default_models",
    "dequantize", "load_dataset", "make_profile", "quantize", "tpulse_for_ber", "train_and_evaluate",
]
