"""Asymptotic SIR laws of the LMMSE receiver under random spreading.

Limits for individual SIRs, their empirical distribution and the sum of
SIRs, plus a seeded Monte Carlo harness that checks each law against
finite-size simulation.
"""

from __future__ import annotations

from .clt import ADJUDICATED_VARIANT, check_profile_condition, log_sum_moments, sum_clt_moments
from .errors import ConfigError, NumericalError
from .finite_sir import sir_all, sir_direct
from .limits import fluctuation_covariance, limiting_sir_distribution
from .model import EntryLaw, PowerProfile, Prediction, SystemConfig, make_power_profile
from .predict import predict, predict_config
from .spectral import solve_b, stieltjes_m, support_of_F

__version__ = "0.1.0"

__all__ = [
    "ADJUDICATED_VARIANT", "ConfigError", "EntryLaw", "NumericalError", "PowerProfile", "Prediction",
    "SystemConfig", "check_profile_condition", "log_sum_moments", "make_power_profile", "predict",
    "predict_config", "sir_all", "sir_direct", "solve_b", "stieltjes_m", "sum_clt_moments",
    "support_of_F", "fluctuation_covariance", "limiting_sir_distribution",
]
