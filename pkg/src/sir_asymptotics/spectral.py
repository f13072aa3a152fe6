"""Deterministic limits: b, the Stieltjes transform m(z) of F^{c,H}, its support.

F^{c,H} is the limiting eigenvalue law of the N x N matrix S P S^T with
K/N -> c and power law H.  Its Stieltjes transform solves

    m = -1 / (z - c * int t dH(t) / (1 + t m)),

equivalently z = z(m) with the explicit inverse

    z(m) = -1/m + c * int t dH(t) / (1 + t m).

For discrete H the inverse map is rational, which is what every routine in
this module leans on: derivatives come from implicit differentiation, real
boundary values and edges from the polynomial numerator of z(m) - x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .errors import ConvergenceError, SupportError
from .model import PowerProfile

B_TOL = 1e-13
B_MAX_ITER = 100_000
RESIDUAL_TOL = 1e-10
EPS_LADDER = (1e-3, 1e-5, 1e-7)
LADDER_TOL = 1e-4


class InverseMap:
    """z(m) and its derivatives for a fixed loading c and discrete profile H.

    Zero-power atoms drop out of every H-integral that carries a factor t, so
    only the positive atoms are kept.
    """

    def __init__(self, c: float, H: PowerProfile):
        if not c > 0:
            raise ValueError(f"c must be positive, got {c}")
        self.c = float(c)
        keep = H.powers > 0
        self.t = H.powers[keep]
        self.w = H.weights[keep]
        self.zero_weight = float(H.weights[~keep].sum())

    def z(self, m):
        m = np.asarray(m)
        tm = 1.0 + np.multiply.outer(m, self.t)
        return -1.0 / m + self.c * (self.w * self.t / tm).sum(axis=-1)

    def dz(self, m):
        m = np.asarray(m)
        tm = 1.0 + np.multiply.outer(m, self.t)
        return 1.0 / m**2 - self.c * (self.w * self.t**2 / tm**2).sum(axis=-1)

    def d2z(self, m):
        m = np.asarray(m)
        tm = 1.0 + np.multiply.outer(m, self.t)
        return -2.0 / m**3 + 2.0 * self.c * (self.w * self.t**3 / tm**3).sum(axis=-1)

    def fixed_point_map(self, m, z):
        """One step of m <- -1 / (z - c int t dH / (1 + t m))."""
        return -1.0 / (z - self.c * np.sum(self.w * self.t / (1.0 + self.t * m)))

    def residual(self, m, z) -> float:
        return abs(m - self.fixed_point_map(m, z))

    @cached_property
    def _numerator_parts(self):
        # z(m) - x = [(-1 - x m) prod(1 + t m) + c m sum_i w_i t_i prod_{j!=i}(1 + t_j m)] / (m prod(1 + t m))
        prod = np.array([1.0])
        for ti in self.t:
            prod = npoly.polymul(prod, [1.0, ti])
        cross = np.array([0.0])
        for i, (ti, wi) in enumerate(zip(self.t, self.w)):
            term = np.array([self.c * wi * ti])
            for j, tj in enumerate(self.t):
                if j != i:
                    term = npoly.polymul(term, [1.0, tj])
            cross = npoly.polyadd(cross, term)
        return prod, npoly.polymul([0.0, 1.0], cross)

    def numerator(self, x: complex) -> np.ndarray:
        """Ascending coefficients of the polynomial whose roots solve z(m) = x."""
        prod, cross = self._numerator_parts
        return npoly.polyadd(npoly.polymul([-1.0, -x], prod), cross)

    def roots(self, x: complex) -> np.ndarray:
        coeffs = np.trim_zeros(self.numerator(x), "b")
        return npoly.polyroots(coeffs)

    def newton(self, m, x, steps: int = 50, tol: float = 1e-15):
        for _ in range(steps):
            step = (self.z(m) - x) / self.dz(m)
            m = m - step
            if abs(step) <= tol * max(1.0, abs(m)):
                break
        return m

    def branch_root(self, x: complex) -> complex:
        """The root of z(m) = x that equals the Stieltjes transform at x.

        For Im x > 0 it is the unique root in the upper half plane.  For real x
        it is the upper-half-plane root when x lies inside the support (the
        boundary value m(x + i0)); outside the support all roots are real and
        the transform is the unique one with z'(m) > 0.
        """
        roots = self.roots(x)
        if np.iscomplexobj(x) and np.imag(x) != 0:
            if np.imag(x) < 0:
                return np.conj(self.branch_root(np.conj(x)))
            return complex(roots[np.argmax(roots.imag)])
        x = float(np.real(x))
        scale = max(1.0, float(np.max(np.abs(roots))))
        upper = roots[roots.imag > 1e-9 * scale]
        if upper.size:
            return complex(upper[np.argmax(upper.imag)])
        real = roots.real
        ok = [r for r in real if r != 0 and self.dz(r) > 0 and np.all(np.abs(1 + self.t * r) > 1e-14)]
        if not ok:
            raise ConvergenceError(f"no admissible real branch at x={x}", roots=roots)
        # exactly one admissible root in exact arithmetic; take the best conditioned
        best = max(ok, key=lambda r: self.dz(r) * r * r)
        return complex(self.newton(best, x))


@dataclass(frozen=True)
class StieltjesPoint:
    z: complex
    m: complex
    m_prime: complex


@dataclass(frozen=True)
class SupportIntervals:
    intervals: tuple[tuple[float, float], ...]
    point_mass_at_zero: float

    def contains(self, x: float, tol: float = 0.0) -> bool:
        if x == 0 and self.point_mass_at_zero > 0:
            return True
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    @property
    def lower(self) -> float:
        return self.intervals[0][0] if self.intervals else 0.0

    @property
    def upper(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0


def solve_b(c: float, H: PowerProfile, sigma2: float, *, tol: float = B_TOL,
            max_iter: int = B_MAX_ITER) -> float:
    """Positive root of 1/b = sigma2 + c int x dH(x) / (1 + x b).

    >>> round(solve_b(1.0, make_power_profile([(1.0, 1.0)]), 1.0), 10)
    0.6180339887
    """
    if not c > 0 or not sigma2 > 0:
        raise ValueError(f"need c > 0 and sigma2 > 0, got c={c}, sigma2={sigma2}")
    t, w = H.powers, H.weights

    def phi(b):
        return 1.0 / (sigma2 + c * float(np.dot(w, t / (1.0 + t * b))))

    def residual(b):
        return 1.0 / b - sigma2 - c * float(np.dot(w, t / (1.0 + t * b)))

    b = 1.0 / sigma2
    prev_step = 0.0
    converged = False
    for _ in range(max_iter):
        nb = phi(b)
        step = nb - b
        if step * prev_step < 0:
            nb = 0.5 * (b + nb)
            step = nb - b
        b, prev_step = nb, step
        if abs(step) <= tol * max(1.0, b):
            converged = True
            break
    if not converged:
        lo, hi = phi(0.0), 1.0 / sigma2
        try:
            b = brentq(lambda v: v - phi(v), lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        except ValueError as exc:
            raise ConvergenceError("fixed point for b did not converge", last_iterate=b,
                                   residual=residual(b)) from exc
    # Newton polish on the residual; keep a step only if it helps
    for _ in range(3):
        g = residual(b)
        dg = -1.0 / b**2 + c * float(np.dot(w, t**2 / (1.0 + t * b) ** 2))
        if dg == 0:
            break
        cand = b - g / dg
        if 0 < cand <= 1.0 / sigma2 and abs(residual(cand)) < abs(g):
            b = cand
        else:
            break
    res = residual(b)
    if abs(res) > 1e-12 * max(1.0, 1.0 / b):
        raise ConvergenceError("fixed point for b missed its residual target", last_iterate=b, residual=res)
    return b


def support_of_F(c: float, H: PowerProfile, grid: int = 400) -> SupportIntervals:
    """Support of F^{c,H} from the increasing branches of the inverse map.

    On the real line, x lies outside the support exactly when x = z(m) for a
    real m with z'(m) > 0.  Each maximal interval of such m (between zeros of
    z' and the singular points 0, -1/t) maps onto one gap; the support is
    what the gaps leave over.  The atom at zero is reported separately.
    """
    imap = InverseMap(c, H)
    poles = np.sort(-1.0 / imap.t)
    scale = 1.0 / imap.t.max() if imap.t.size else 1.0
    span = np.geomspace(1e-10, 1e10, grid)
    near = np.geomspace(1e-12, 0.5, grid // 2)

    segments = []
    breaks = [-np.inf, *poles, 0.0, np.inf]
    for lo, hi in zip(breaks, breaks[1:]):
        if np.isinf(lo):
            ms = hi - max(abs(hi), scale) * span[::-1]
        elif np.isinf(hi):
            ms = scale * span
        else:
            width = hi - lo
            ms = np.concatenate([lo + width * near, hi - width * near[::-1]])
        segments.append((lo, hi, np.unique(ms)))

    gaps = []
    for lo, hi, ms in segments:
        d = imap.dz(ms)
        zeros = []
        for a, b_, da, db in zip(ms, ms[1:], d, d[1:]):
            if da == 0:
                zeros.append(a)
            elif da * db < 0:
                try:
                    zeros.append(brentq(lambda m: float(imap.dz(m)), a, b_, xtol=1e-300, rtol=1e-15))
                except ValueError as exc:
                    raise ConvergenceError("edge bracket failed", bracket=(a, b_)) from exc
        cuts = [lo, *zeros, hi]
        for a, b_ in zip(cuts, cuts[1:]):
            inside = ms[(ms > a) & (ms < b_)]
            if inside.size == 0:
                continue
            probe = inside[inside.size // 2]
            if imap.dz(probe) > 0:
                gaps.append((_z_limit(imap, a, +1), _z_limit(imap, b_, -1)))

    gaps.sort()
    merged: list[list[float]] = []
    for g_lo, g_hi in gaps:
        if merged and g_lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], g_hi)
        else:
            merged.append([g_lo, g_hi])
    intervals = []
    edge = -np.inf
    for g_lo, g_hi in merged:
        if g_lo > edge and g_lo - max(edge, 0.0) > 1e-12 * max(1.0, abs(g_lo)):
            intervals.append((max(edge, 0.0), g_lo))
        edge = max(edge, g_hi)
    if np.isfinite(edge):
        intervals.append((max(edge, 0.0), np.inf))
    intervals = [(float(lo), float(hi)) for lo, hi in intervals if hi > lo]
    mass0 = 1.0 - min(1.0, c * (1.0 - imap.zero_weight))
    return SupportIntervals(tuple(intervals), mass0)


def _z_limit(imap: InverseMap, m: float, side: int) -> float:
    """Value of z approaching m from the right (side=+1) or left (side=-1)."""
    if np.isinf(m):
        return 0.0
    if m == 0:
        return -np.inf if side > 0 else np.inf
    if np.any(np.isclose(1.0 + imap.t * m, 0.0, atol=1e-14)):
        return np.inf if side > 0 else -np.inf
    return float(imap.z(m))


def stieltjes_m(z: complex, c: float, H: PowerProfile, start: complex | None = None,
                support: SupportIntervals | None = None, max_iter: int = 2000) -> StieltjesPoint:
    """Stieltjes transform of F^{c,H} at z, with its derivative.

    Accepts Im z != 0 or real z off the support.  The fixed-point map is
    iterated from ``start`` (continuation from a neighbouring point) or from
    -1/z, then polished by Newton on z(m) = z.  The derivative follows from
    the inverse map: m'(z) = 1 / z'(m).
    """
    z = complex(z)
    imap = InverseMap(c, H)
    if z.imag < 0:
        pt = stieltjes_m(z.conjugate(), c, H, None if start is None else np.conj(start), support, max_iter)
        return StieltjesPoint(z, pt.m.conjugate(), pt.m_prime.conjugate())

    if z.imag == 0:
        x = z.real
        support = support or support_of_F(c, H)
        if support.contains(x):
            raise SupportError(f"z={x} lies inside the support {support.intervals}; "
                               "use stieltjes_boundary for boundary values", z=x)
        if x < 0:
            m = _real_fixed_point(imap, x, start)
        else:
            m = imap.branch_root(x).real
        m = complex(m)
    else:
        m = complex(start) if start is not None and np.imag(start) > 0 else -1.0 / z
        for _ in range(max_iter):
            nm = imap.fixed_point_map(m, z)
            if abs(nm - m) <= 1e-12 * max(1.0, abs(nm)):
                m = nm
                break
            m = nm
        polished = imap.newton(m, z)
        if polished.imag > 0 and np.isfinite(polished):
            m = polished
        if not (m.imag > 0 and imap.residual(m, z) <= RESIDUAL_TOL * max(1.0, abs(m))):
            m = imap.newton(imap.branch_root(z), z)

    res = imap.residual(m, z)
    if not res <= RESIDUAL_TOL * max(1.0, abs(m)):
        raise ConvergenceError(f"Stieltjes fixed point did not converge at z={z}", last_iterate=m, residual=res)
    return StieltjesPoint(z, m, 1.0 / complex(imap.dz(m)))


def _real_fixed_point(imap: InverseMap, x: float, start) -> float:
    # m -> 1 / (-x + c int t/(1+tm)) is increasing and bounded on (0, -1/x] for x < 0
    m = float(np.real(start)) if start is not None and np.real(start) > 0 else -1.0 / x
    for _ in range(B_MAX_ITER):
        nm = float(np.real(imap.fixed_point_map(m, x)))
        if abs(nm - m) <= B_TOL * max(1.0, nm):
            m = nm
            break
        m = nm
    return float(np.real(imap.newton(m, x)))


def stieltjes_boundary(x: float, c: float, H: PowerProfile) -> complex:
    """m(x + i0) by continuation down an epsilon ladder with Richardson extrapolation."""
    imap = InverseMap(c, H)
    ladder = []
    m = None
    for eps in EPS_LADDER:
        z = complex(x, eps)
        if m is None:
            m = imap.branch_root(z)
        cand = imap.newton(m, z)
        if not (cand.imag > 0 and np.isfinite(cand)):
            cand = imap.newton(imap.branch_root(z), z)
        m = cand
        ladder.append(m)
    (e2, m2), (e3, m3) = zip(EPS_LADDER[1:], ladder[1:])
    if abs(m2 - m3) > LADDER_TOL:
        raise ConvergenceError(f"boundary continuation unstable at x={x}", ladder=ladder)
    est = m3 + (m3 - m2) * e3 / (e2 - e3)
    return complex(est.real, max(est.imag, 0.0))


def boundary_values(xs, c: float, H: PowerProfile) -> np.ndarray:
    """Vectorized m(x + i0) from the polynomial branch, Newton-polished.

    Used by the real-axis quadrature, where edge-adjacent nodes sit too close
    to square-root branch points for the epsilon ladder to settle.
    """
    imap = InverseMap(c, H)
    out = np.empty(len(xs), dtype=complex)
    for i, x in enumerate(np.asarray(xs, dtype=float)):
        m = imap.branch_root(x)
        polished = imap.newton(m, x, steps=4)
        if np.isfinite(polished) and (m.imag == 0 or polished.imag > 0):
            m = polished
        out[i] = m
    return out


def mp_edges(c: float) -> tuple[float, float]:
    """Marchenko-Pastur edges ((1 - sqrt c)^2, (1 + sqrt c)^2)."""
    r = math.sqrt(c)
    return (1.0 - r) ** 2, (1.0 + r) ** 2
