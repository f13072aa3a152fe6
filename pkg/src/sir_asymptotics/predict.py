"""Assemble every limiting quantity for one system into a ``Prediction``."""

from __future__ import annotations

from .clt import ADJUDICATED_VARIANT, check_profile_condition, log_sum_moments, sum_clt_moments
from .limits import fluctuation_covariance, limiting_sir_distribution
from .model import PowerProfile, Prediction, SystemConfig
from .spectral import solve_b


def predict(c: float, H: PowerProfile, sigma2: float, fourth_moment: float = 3.0,
            variant: str = ADJUDICATED_VARIANT) -> Prediction:
    b = solve_b(c, H, sigma2)
    law = fluctuation_covariance(c, H, sigma2, fourth_moment)
    G = limiting_sir_distribution(c, H, sigma2, b=b)
    moments = sum_clt_moments(c, H, sigma2, variant)
    mu1, rho1 = log_sum_moments(c, H, sigma2, moments.mu, moments.rho)
    return Prediction(b=b, var_coeff=law.variance_coefficient, limiting_sir_dist=G, mu=moments.mu,
                      rho=moments.rho, mu1=mu1, rho1=rho1, variant=variant,
                      assumption_d=check_profile_condition(c, H, sigma2))


def predict_config(config: SystemConfig, finite: bool = False, variant: str = ADJUDICATED_VARIANT) -> Prediction:
    """Prediction for a configuration.

    With ``finite`` the loading is K/N and the profile is the realized H_N,
    which is what a simulation of this exact configuration is centred on.
    """
    H = config.empirical_profile if finite else config.profile
    return predict(config.c, H, config.sigma2, config.entry_law.fourth_moment, variant)
