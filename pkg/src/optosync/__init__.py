"""Synchronization of three optomechanical resonators on a shared line."""
from .model import (
    CircuitConfig,
    CoherentCoupling,
    ConfigError,
    CouplingMatrix,
    EnvCoupling,
    build_coupling_matrix,
    input_port_circuit,
    linear_stability,
    nonreciprocity,
    output_port_circuit,
    unidirectional_circuit,
)
from .config import CircuitSetup, preset
from .dynamics import CircuitState, SimPlan, Trajectory, integrate, rhs, steady_window

__version__ = "0.1.0"
