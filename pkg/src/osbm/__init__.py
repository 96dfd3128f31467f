"""Oscillating sticky Brownian motion.

Closed-form transition kernel, resolvent and joint laws of position, local
time and occupation time; path simulation by time change and by an Euler
scheme; the sticky coupling of two drifted Brownian motions; and a
verification harness tying the formulas to Monte Carlo.
"""

from .core import CouplingParams, OsbmParams, PathRecord, RngSpec, speed_measure, validate_coupling, validate_params
from .errors import OsbmError
from .kernel import KernelValue, resolvent, transition_density, transition_kernel
from .lawlib import joint_density, localtime_density, occupation_density, phi
from .simulate import SimConfig, sample_terminal, simulate_bm, simulate_osbm, simulate_osbm_euler
from .coupling import build_pair, sample_pairs, simulate_Z
from .verify import VerifyReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "CouplingParams",
    "OsbmParams",
    "PathRecord",
    "RngSpec",
    "speed_measure",
    "validate_coupling",
    "validate_params",
    "OsbmError",
    "KernelValue",
    "resolvent",
    "transition_density",
    "transition_kernel",
    "joint_density",
    "localtime_density",
    "occupation_density",
    "phi",
    "SimConfig",
    "sample_terminal",
    "simulate_bm",
    "simulate_osbm",
    "simulate_osbm_euler",
    "build_pair",
    "sample_pairs",
    "simulate_Z",
    "VerifyReport",
    "run_suite",
]
