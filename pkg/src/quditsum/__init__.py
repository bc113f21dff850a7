"""Simulation and analysis of QFT-based addition on qudits."""

from .adder import AdderConfig, Backend, BackendError, RunRecord, decode_measure, run_adder
from .channels import ChannelKind, NoiseSpec
from .digits import DigitString, encode_digits
from .tensor import ContractError, DomainError, ResourceError

__version__ = "0.1.0"

__all__ = [
    "AdderConfig",
    "Backend",
    "BackendError",
    "ChannelKind",
    "ContractError",
    "DigitString",
    "DomainError",
    "NoiseSpec",
    "ResourceError",
    "RunRecord",
    "decode_measure",
    "encode_digits",
    "run_adder",
]
