"""Finite-time Newton extremum-seeking simulation library.

Core pieces: finite-time flow primitives (:mod:`ftns.flows`), dither and
demodulation signals (:mod:`ftns.dither`), evaluable cost maps
(:mod:`ftns.plant`), the three system right-hand sides and monitors
(:mod:`ftns.controller`), fixed-step integration and sweeps
(:mod:`ftns.sim`), and the config-driven CLI (:mod:`ftns.cli`).
"""

__version__ = "0.1.0"

from .controller import (
    EscState,
    GainSet,
    TargetState,
    averaged_rhs,
    esc_rhs,
    gain_threshold,
    lyapunov_v1,
    lyapunov_v2,
    lyapunov_v3,
    target_rhs,
    to_zg,
)
from .dither import (
    DitherSpec,
    common_period,
    delta1,
    delta2,
    hess_demod,
    probe,
    unvec_sym,
    validate_freqs,
    vec_sym,
)
from .flows import FlowParams, exponents_from_q, gamma, scaled_flow
from .plant import CostModel, PolynomialCost, QuadraticCost, eval_cost, grad_oracle, hess_oracle
from .sim import SimConfig, Trajectory, integrate, settling_time, sup_gap, sweep

__all__ = [
    "__version__",
    "EscState", "GainSet", "TargetState",
    "averaged_rhs", "esc_rhs", "target_rhs", "to_zg",
    "gain_threshold", "lyapunov_v1", "lyapunov_v2", "lyapunov_v3",
    "DitherSpec", "common_period", "delta1", "delta2", "hess_demod",
    "probe", "unvec_sym", "validate_freqs", "vec_sym",
    "FlowParams", "exponents_from_q", "gamma", "scaled_flow",
    "CostModel", "PolynomialCost", "QuadraticCost",
    "eval_cost", "grad_oracle", "hess_oracle",
    "SimConfig", "Trajectory", "integrate", "settling_time", "sup_gap", "sweep",
]
