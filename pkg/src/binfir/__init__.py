"""FIR system identification from binary-quantized input and output data."""
from __future__ import annotations

from .estimators import (
    BinaryFIRKnownInput,
    BinaryFIRUnknownInput,
    SmartBinaryFIRKnownInput,
    SmartBinaryFIRUnknownInput,
)
from .exceptions import BinFIRError, ConfigError, DomainError, OutputError, ProtocolError, UnsupportedError
from .harness import ExperimentConfig, load_config, monte_carlo_variance, run_experiment
from .plant import PAPER_SYSTEM, Empirical, Gaussian, SystemSpec, Uniform

__all__ = [
    "BinaryFIRKnownInput",
    "BinaryFIRUnknownInput",
    "SmartBinaryFIRKnownInput",
    "SmartBinaryFIRUnknownInput",
    "BinFIRError",
    "ConfigError",
    "DomainError",
    "OutputError",
    "ProtocolError",
    "UnsupportedError",
    "ExperimentConfig",
    "load_config",
    "monte_carlo_variance",
    "run_experiment",
    "PAPER_SYSTEM",
    "Empirical",
    "Gaussian",
    "SystemSpec",
    "Uniform",
]
