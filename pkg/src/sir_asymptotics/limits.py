"""Fluctuation law of individual SIRs and the limiting empirical SIR distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PowerProfile, SirRealization
from .spectral import solve_b, stieltjes_m


@dataclass(frozen=True)
class FluctuationLaw:
    """Gaussian limit of sqrt(N)(beta_k - p_k b_N) for finitely many users.

    The covariance is diagonal: users decouple in the limit.
    """

    variance_coefficient: float
    powers: tuple[float, ...] = ()

    def variance(self, p: float) -> float:
        return self.variance_coefficient * p * p

    @property
    def per_user_variance(self) -> np.ndarray:
        return self.variance_coefficient * np.asarray(self.powers, dtype=float) ** 2

    def covariance(self) -> np.ndarray:
        return np.diag(self.per_user_variance)


def resolvent_moments(c: float, H: PowerProfile, sigma2: float) -> tuple[float, float]:
    """(int dF/(x+sigma2), int dF/(x+sigma2)^2) = (m(-sigma2), m'(-sigma2))."""
    b = solve_b(c, H, sigma2)
    pt = stieltjes_m(-sigma2, c, H, start=b)
    return b, float(pt.m_prime.real)


def fluctuation_covariance(c: float, H: PowerProfile, sigma2: float, fourth_moment: float,
                           powers=()) -> FluctuationLaw:
    """Variance coefficient 2 m'(-sigma2) + b^2 (E v^4 - 3) and per-user diagonal."""
    if fourth_moment < 1:
        raise ValueError(f"fourth moment of a unit-variance law is >= 1, got {fourth_moment}")
    b, dm = resolvent_moments(c, H, sigma2)
    coeff = 2.0 * dm + b * b * (fourth_moment - 3.0)
    # Jensen gives m' >= b^2, so coeff >= 0 up to rounding when E v^4 = 1
    coeff = max(coeff, 0.0)
    return FluctuationLaw(coeff, tuple(float(p) for p in powers))


def limiting_sir_distribution(c: float, H: PowerProfile, sigma2: float, b: float | None = None) -> tuple[tuple[float, float], ...]:
    """Atoms of G, the pushforward of H under x -> b x, ascending in location."""
    if b is None:
        b = solve_b(c, H, sigma2)
    return tuple((float(b * p), float(w)) for p, w in H.atoms)


def _sirs(sirs) -> np.ndarray:
    if isinstance(sirs, SirRealization):
        sirs = sirs.sirs
    return np.sort(np.asarray(sirs, dtype=float))


def _atom_cdf(G, x: np.ndarray, left: bool = False) -> np.ndarray:
    loc = np.array([a for a, _ in G])
    mass = np.array([w for _, w in G])
    hit = loc[None, :] < x[:, None] if left else loc[None, :] <= x[:, None]
    return hit @ mass


def ks_against_limit(sirs, G) -> float:
    """sup_x |G_N(x) - G(x)| for the right-continuous ECDF of the SIRs.

    Both functions are step functions, so the supremum is attained at one of
    the jump points, either at the point itself or as a left limit there.
    """
    xs = _sirs(sirs)
    n = xs.size
    pts = np.unique(np.concatenate([xs, [a for a, _ in G]]))
    right = np.searchsorted(xs, pts, side="right") / n
    left = np.searchsorted(xs, pts, side="left") / n
    d_right = np.abs(right - _atom_cdf(G, pts))
    d_left = np.abs(left - _atom_cdf(G, pts, left=True))
    return float(max(d_right.max(), d_left.max()))


def levy_distance(sirs, G, tol: float = 1e-7) -> float:
    """Levy distance between the SIR ECDF and G.

    Metrizes weak convergence, so unlike the sup distance it tends to zero
    when the SIRs concentrate around the atoms of G.
    """
    xs = _sirs(sirs)
    n = xs.size
    locs = np.array([a for a, _ in G])

    def ecdf(x, left=False):
        return np.searchsorted(xs, x, side="left" if left else "right") / n

    def holds(eps):
        # G(x - eps) - eps <= F(x) <= G(x + eps) + eps on every jump point of F, G(. -+ eps)
        pts = np.unique(np.concatenate([xs, locs + eps, locs - eps]))
        lo_ok = _atom_cdf(G, pts - eps) - eps <= ecdf(pts) + 1e-15
        hi_ok = ecdf(pts, left=True) <= _atom_cdf(G, pts + eps, left=True) + eps + 1e-15
        lo_ok_l = _atom_cdf(G, pts - eps, left=True) - eps <= ecdf(pts, left=True) + 1e-15
        hi_ok_r = ecdf(pts) <= _atom_cdf(G, pts + eps) + eps + 1e-15
        return bool(lo_ok.all() and hi_ok.all() and lo_ok_l.all() and hi_ok_r.all())

    lo, hi = 0.0, 1.0
    if holds(0.0):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi
