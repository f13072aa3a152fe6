"""Exact finite-(N, K) LMMSE SIRs.

beta_k = p_k s_k^T (S_k P_k S_k^T + sigma2 I)^{-1} s_k, where S_k, P_k drop
user k.  ``sir_direct`` follows the definition literally; ``sir_all`` gets
every user from a single Cholesky factor of A = S P S^T + sigma2 I through

    s_k^T A_k^{-1} s_k = q_k / (1 - p_k q_k),   q_k = s_k^T A^{-1} s_k.

User indices are 0-based throughout.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import DegenerateSirError, NumericalError
from .model import SirRealization, SystemConfig, empirical_profile, replication_rng
from .spectral import solve_b

DEGENERACY_CLAMP = 1.0 - 1e-12


def sample_signatures(config: SystemConfig, replication_index: int) -> np.ndarray:
    """N x K signature matrix with columns s_k = v_k / sqrt(N).

    A pure function of (config.seed, replication_index, N, K, entry law).
    """
    rng = replication_rng(config.seed, replication_index)
    V = config.entry_law.sample(rng, (config.N, config.K))
    return V / np.sqrt(config.N)


def check_normalization(S: np.ndarray) -> bool:
    """Sanity check on the 1/sqrt(N) scaling: mean squared entry close to 1/N.

    Only meaningful once N*K >= 1e4; smaller matrices pass vacuously.
    """
    N, K = S.shape
    if N * K < 10_000:
        return True
    return 0.8 / N <= float(np.mean(S**2)) <= 1.2 / N


def interference_matrix(S: np.ndarray, powers, sigma2: float) -> np.ndarray:
    """A = S P S^T + sigma2 I."""
    S = np.asarray(S, dtype=float)
    A = (S * np.asarray(powers, dtype=float)) @ S.T
    A[np.diag_indices_from(A)] += sigma2
    return A


def _factor(A: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(A)):
        raise NumericalError("interference matrix has non-finite entries")
    try:
        return cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc


def sir_direct(k: int, S: np.ndarray, powers, sigma2: float) -> float:
    """SIR of user ``k`` by factorizing A_k with column k removed (the oracle path)."""
    S = np.asarray(S, dtype=float)
    powers = np.asarray(powers, dtype=float)
    K = S.shape[1]
    if not 0 <= k < K:
        raise IndexError(f"user index {k} out of range for K={K}")
    others = np.arange(K) != k
    L = _factor(interference_matrix(S[:, others], powers[others], sigma2))
    y = solve_triangular(L, S[:, k], lower=True, check_finite=False)
    return float(powers[k] * (y @ y))


def sir_all(S: np.ndarray, powers, sigma2: float, b_N: float | None = None) -> SirRealization:
    """All K SIRs from one factorization of the full interference matrix.

    Also records (1/N) tr A^{-1} = ||L^{-1}||_F^2 / N.  ``b_N`` defaults to
    the fixed point for c_N = K/N and the empirical law of ``powers``.
    """
    S = np.asarray(S, dtype=float)
    powers = np.asarray(powers, dtype=float)
    N, K = S.shape
    if powers.shape != (K,):
        raise ValueError(f"need {K} powers, got shape {powers.shape}")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    L = _factor(interference_matrix(S, powers, sigma2))
    Y = solve_triangular(L, S, lower=True, check_finite=False)
    q = np.einsum("ij,ij->j", Y, Y)
    pq = powers * q
    bad = np.flatnonzero(pq >= DEGENERACY_CLAMP)
    if bad.size:
        k = int(bad[0])
        raise DegenerateSirError(f"user {k}: p_k q_k = {pq[k]!r} is numerically 1", user=k, pq=float(pq[k]))
    sirs = pq / (1.0 - pq)
    Linv = solve_triangular(L, np.eye(N), lower=True, check_finite=False)
    trace = float(np.einsum("ij,ij->", Linv, Linv)) / N
    if b_N is None:
        b_N = solve_b(K / N, empirical_profile(powers), sigma2)
    return SirRealization(sirs=sirs, trace_resolvent=trace, b_N_used=float(b_N))
