"""Cycle-level simulator for coherent bulk-bitwise processing-in-memory."""

from .config import BASELINES, MODELS, ConfigError, Model, SimConfig, load_config
from .engine import Engine, SimulatorBug
from .memtypes import AddressMap, Opcode, PimOpDescriptor
from .pim import ScopeImage
from .program import parse_program
from .system import Interloper, RunResult, System

__version__ = "0.1.0"

__all__ = [
    "AddressMap", "BASELINES", "ConfigError", "Engine", "Interloper", "MODELS", "Model",
    "Opcode", "PimOpDescriptor", "RunResult", "ScopeImage", "SimConfig", "SimulatorBug",
    "System", "load_config", "parse_program",
]
