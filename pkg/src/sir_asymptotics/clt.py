"""Mean and variance of the Gaussian limit of sum_k (beta_k - b_N p_k).

Gaussian entries only.  Both moments go through the linear spectral
statistic tr A^{-1}, with f(x) = 1/(x + sigma2):

    rho = sigma2^2 Var_f / a^2,
    mu  = (2c m'(-sigma2) int x^2/(1+xb)^3 dH - sigma2 M_f) / a,

where a = int dH/(1+xb)^2, Var_f is the limiting variance of tr A^{-1} and
M_f the limiting mean of tr A^{-1} - N b_N.  Var_f is a double contour
integral in the m-plane; M_f is a real-axis integral of the phase of
m^2 z'(m) over the support.

For equal powers everything reduces to Marchenko-Pastur closed forms after
replacing sigma2 by sigma2/p and b by p b.  Several prefactor conventions
are carried side by side (see ``VARIANTS``); ``ADJUDICATED_VARIANT`` is the
one that matches simulation.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.integrate import quad

from .errors import ContourError, ConvergenceError, NumericalError
from .model import PowerProfile, make_power_profile
from .spectral import InverseMap, boundary_values, mp_edges, solve_b, stieltjes_m, support_of_F

# prefactor conventions for the equal-power closed forms; the first three are
# the historical candidates, noise_scaled carries the sigma2^2 / sigma2 factors
CANDIDATE_VARIANTS = ("power_weight", "resolvent_weight", "bare")
VARIANTS = CANDIDATE_VARIANTS + ("noise_scaled",)
ADJUDICATED_VARIANT = "noise_scaled"

ANGULAR_NODES = 64
REAL_AXIS_NODES = 512
CROSSCHECK_TOL = 1e-9
CONTOUR_MARGIN = 1e-8
NEGATIVE_RHO_TOL = 1e-8


class Method(enum.Enum):
    CLOSED_FORM_EQUAL_POWER = "closed_form_equal_power"
    CONTOUR_QUADRATURE = "contour_quadrature"


@dataclass(frozen=True)
class SumCltMoments:
    mu: float
    rho: float
    method: Method
    variant: str = ADJUDICATED_VARIANT
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    return variant


def load_adjudication() -> dict:
    """The frozen adjudication record shipped with the package."""
    text = resources.files("sir_asymptotics").joinpath("data/adjudication.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------- equal power

def _reduced(c: float, p: float, sigma2: float) -> tuple[float, float]:
    """(sigma2/p, p b): the p = 1 problem with the same SIRs."""
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    s = sigma2 / p
    return s, solve_b(c, make_power_profile([(1.0, 1.0)]), s)


def bare_variance(c: float, s: float) -> float:
    """2c / ((s + c - 1)^2 + 4 s)^2: limiting Var tr (SS^T + s I)^{-1}."""
    return 2.0 * c / ((s + c - 1.0) ** 2 + 4.0 * s) ** 2


def rho_equal_power_candidates(c: float, p: float, sigma2: float) -> dict[str, float]:
    s, bt = _reduced(c, p, sigma2)
    bare = bare_variance(c, s)
    return {
        "power_weight": (1.0 + p) ** 4 * bare,
        "resolvent_weight": (1.0 + bt) ** 4 * bare,
        "bare": bare,
        "noise_scaled": s * s * (1.0 + bt) ** 4 * bare,
    }


def rho_equal_power(c: float, p: float, sigma2: float, variant: str = ADJUDICATED_VARIANT) -> float:
    return rho_equal_power_candidates(c, p, sigma2)[_check_variant(variant)]


def edge_term(c: float, s: float) -> float:
    """-1/(4(a+s)) - 1/(4(b+s)) with a, b the Marchenko-Pastur edges."""
    lo, hi = mp_edges(c)
    return -0.25 / (lo + s) - 0.25 / (hi + s)


def arcsine_term(c: float, s: float, nodes: int = ANGULAR_NODES) -> float:
    """(1/2pi) int_a^b dx / ((x+s) sqrt(4c - (x-1-c)^2)).

    x = 1 + c + 2 sqrt(c) sin(theta) cancels the square root exactly and
    leaves a smooth periodic integrand, so Gauss-Legendre converges fast.
    The result is cross-checked against adaptive quadrature with the
    algebraic endpoint weight on the raw integrand.
    """
    r = math.sqrt(c)
    t, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * math.pi * t
    val = 0.5 * math.pi * float(np.sum(w / (1.0 + c + s + 2.0 * r * np.sin(theta)))) / (2.0 * math.pi)
    lo, hi = mp_edges(c)
    # sqrt(4c - (x-1-c)^2) = sqrt((x-lo)(hi-x)); quad's 'alg' weight absorbs it
    ref, err = quad(lambda x: 1.0 / (x + s), lo, hi, weight="alg", wvar=(-0.5, -0.5),
                    epsabs=1e-13, epsrel=1e-13, limit=200)
    ref /= 2.0 * math.pi
    if abs(val - ref) > CROSSCHECK_TOL * max(1.0, abs(ref)):
        raise ConvergenceError("angular and adaptive quadrature disagree", angular=val,
                               adaptive=ref, achieved=abs(val - ref), quad_error=err)
    return val


def trace_mean_equal_power(c: float, s: float) -> float:
    """Limiting E[tr (SS^T + s I)^{-1}] - N b_N."""
    return -(edge_term(c, s) + arcsine_term(c, s))


def mu_equal_power_candidates(c: float, p: float, sigma2: float) -> dict[str, float]:
    s, bt = _reduced(c, p, sigma2)
    dm = stieltjes_m(-s, c, make_power_profile([(1.0, 1.0)]), start=bt).m_prime.real
    t1 = 2.0 * c * dm / (1.0 + bt) ** 3
    M = trace_mean_equal_power(c, s)
    bracket = t1 - M
    return {
        "power_weight": (1.0 + p) ** 2 * bracket,
        "resolvent_weight": (1.0 + bt) ** 2 * bracket,
        "bare": bracket,
        "noise_scaled": (1.0 + bt) ** 2 * (t1 - s * M),
    }


def mu_equal_power(c: float, p: float, sigma2: float, variant: str = ADJUDICATED_VARIANT) -> float:
    return mu_equal_power_candidates(c, p, sigma2)[_check_variant(variant)]


def equal_power_moments(c: float, p: float, sigma2: float, variant: str = ADJUDICATED_VARIANT) -> SumCltMoments:
    rhos = rho_equal_power_candidates(c, p, sigma2)
    mus = mu_equal_power_candidates(c, p, sigma2)
    _check_variant(variant)
    return SumCltMoments(mus[variant], rhos[variant], Method.CLOSED_FORM_EQUAL_POWER, variant,
                         {"rho_candidates": rhos, "mu_candidates": mus})


# ------------------------------------------------------------- general profile

def _h_moments(H: PowerProfile, b: float) -> dict[str, float]:
    t = H.powers
    return {
        "a": H.expect(lambda x: 1.0 / (1.0 + x * b) ** 2),
        "g1": H.expect(lambda x: 1.0 / (1.0 + x * b)),
        "x2_3": H.expect(lambda x: x * x / (1.0 + x * b) ** 3),
        "x2_2": H.expect(lambda x: x * x / (1.0 + x * b) ** 2),
        "has_mass": bool(np.any(t > 0)),
    }


@dataclass(frozen=True)
class _Poles:
    """Roots of z(m) + sigma2 = 0: the physical one (b) and the rest."""

    b: float
    kappa_b: float
    others: np.ndarray
    kappa: np.ndarray


def _poles(c: float, H: PowerProfile, sigma2: float, b: float) -> _Poles:
    imap = InverseMap(c, H)
    if imap.t.size == 0:
        return _Poles(b, b * b, np.empty(0, complex), np.empty(0, complex))
    roots = np.array([imap.newton(r, -sigma2) for r in imap.roots(-sigma2)], dtype=complex)
    j = int(np.argmin(np.abs(roots - b)))
    if abs(roots[j] - b) > 1e-8 * max(1.0, b):
        raise ContourError("fixed point b is not a root of z(m) + sigma2", b=b, roots=roots)
    others = np.delete(roots, j)
    dz = np.asarray(imap.dz(roots), dtype=complex)
    if np.any(np.abs(dz) < 1e-12):
        raise ContourError("repeated root of z(m) + sigma2; residues are not simple", roots=roots)
    return _Poles(b, float(1.0 / dz[j].real), others, 1.0 / np.delete(dz, j))


def trace_variance_residues(c: float, H: PowerProfile, sigma2: float, b: float | None = None) -> float:
    """Var of tr A^{-1} by residues alone: -2 kappa_b sum_j kappa_j / (r_j - b)^2."""
    b = solve_b(c, H, sigma2) if b is None else b
    P = _poles(c, H, sigma2, b)
    return float(np.real(-2.0 * P.kappa_b * np.sum(P.kappa / (P.others - b) ** 2)))


def _contour_geometry(P: _Poles, scale: tuple[float, float]) -> tuple[float, float, float]:
    re = P.others.real
    center = 0.5 * (re.min() + re.max())
    half = float(np.max(np.abs(P.others - center)))
    gap = (P.b - center) - half
    if gap <= 0:
        raise ContourError("cannot separate b from the other roots with a circle", b=P.b, roots=P.others)
    r1 = (half + 0.3 * gap) * scale[0]
    r2 = (half + 0.6 * gap) * scale[1]
    if not (r1 < r2):
        raise ContourError("inner contour must lie inside the outer one", r1=r1, r2=r2)
    return center, r1, r2


def trace_variance_contour(c: float, H: PowerProfile, sigma2: float, b: float | None = None,
                           radius_scale: tuple[float, float] = (1.0, 1.0), min_nodes: int = 64,
                           max_nodes: int = 1 << 16, tol: float = 1e-14) -> tuple[float, dict]:
    """Var of tr A^{-1} as -(1/2pi^2) double contour integral in the m-plane.

    Two concentric counterclockwise circles enclose every root of
    z(m) + sigma2 except b.  The inner integral over m1 is a sum of residues
    at the enclosed roots; the outer one is the trapezoid rule on the circle,
    refined by doubling until it settles.
    """
    b = solve_b(c, H, sigma2) if b is None else b
    P = _poles(c, H, sigma2, b)
    if P.others.size == 0:
        return 0.0, {"roots": [], "nodes": 0}
    imap = InverseMap(c, H)
    center, r1, r2 = _contour_geometry(P, radius_scale)
    for name, r in (("inner", r1), ("outer", r2)):
        dist = np.abs(np.abs(np.append(P.others, P.b) - center) - r)
        if np.any(dist < CONTOUR_MARGIN):
            raise ContourError(f"a root lies within {CONTOUR_MARGIN} of the {name} contour; adjust the radius",
                               radius=r, center=center)
    inside1 = np.abs(P.others - center) < r1
    if not inside1.all() or abs(P.b - center) < r2:
        raise ContourError("root classification changed under the chosen radii", center=center, r1=r1, r2=r2)

    def integral(n):
        theta = 2.0 * np.pi * np.arange(n) / n
        m2 = center + r2 * np.exp(1j * theta)
        g = 1.0 / (imap.z(m2) + sigma2)
        inner = 2j * np.pi * (P.kappa[None, :] / (P.others[None, :] - m2[:, None]) ** 2).sum(axis=1)
        terms = g * inner * 1j * (m2 - center) * (2.0 * np.pi / n)
        return np.sum(terms), float(np.sum(np.abs(terms)))

    n = min_nodes
    prev, _ = integral(n)
    while True:
        n *= 2
        cur, mass = integral(n)
        # the rounding floor scales with the size of the summands, not the sum
        if abs(cur - prev) <= tol * max(1.0, mass):
            break
        if n >= max_nodes:
            raise ConvergenceError("contour trapezoid did not settle", nodes=n, change=abs(cur - prev))
        prev = cur
    var = float(np.real(-cur / (2.0 * np.pi**2)))
    diag = {"roots": [complex(r) for r in P.others], "b": P.b, "center": center, "radii": (r1, r2),
            "nodes": n, "imag_part": float(np.imag(cur))}
    return var, diag


def rho_general(c: float, H: PowerProfile, sigma2: float, variant: str = ADJUDICATED_VARIANT,
                radius_scale: tuple[float, float] = (1.0, 1.0)) -> SumCltMoments:
    """rho for a discrete profile by m-plane contour quadrature.

    ``variant`` selects the weight: noise_scaled gives sigma2^2 Var/a^2,
    resolvent_weight gives Var/a^2.  mu is left as nan; see ``sum_clt_moments``.
    """
    if variant not in ("noise_scaled", "resolvent_weight"):
        raise ValueError("general profiles support the noise_scaled and resolvent_weight weights only")
    b = solve_b(c, H, sigma2)
    var, diag = trace_variance_contour(c, H, sigma2, b, radius_scale)
    if var < -NEGATIVE_RHO_TOL:
        raise ContourError("negative variance; contour orientation or classification is wrong", value=var, **diag)
    var = max(var, 0.0)
    a = _h_moments(H, b)["a"]
    weight = sigma2**2 if variant == "noise_scaled" else 1.0
    diag["trace_variance"] = var
    return SumCltMoments(float("nan"), weight * var / a**2, Method.CONTOUR_QUADRATURE, variant, diag)


def trace_mean_residue(c: float, H: PowerProfile, sigma2: float, b: float | None = None) -> float:
    """Limiting E[tr A^{-1}] - N b_N from the residue at m = b.

    Equals -(1/2 z'(b)) (2/b + z''(b)/z'(b)); used as an oracle for the
    real-axis quadrature.
    """
    b = solve_b(c, H, sigma2) if b is None else b
    imap = InverseMap(c, H)
    if imap.t.size == 0:
        return 0.0
    dz, d2z = float(imap.dz(b)), float(imap.d2z(b))
    return -0.5 * (2.0 / b + d2z / dz) / dz


def trace_mean_real_axis(c: float, H: PowerProfile, sigma2: float, nodes: int = REAL_AXIS_NODES,
                         refine: bool = True, tol: float = 1e-12, max_nodes: int = 8192) -> float:
    """Real-axis phase integral for the trace mean; see ``_phase_integral``.

    With ``refine`` the node count doubles from ``nodes`` until two
    successive values agree to ``tol`` (relative).
    """
    val = _phase_integral(c, H, sigma2, nodes)
    while refine and nodes < max_nodes:
        nodes *= 2
        nxt = _phase_integral(c, H, sigma2, nodes)
        if abs(nxt - val) <= tol * max(1.0, abs(nxt)):
            return nxt
        val = nxt
    if refine:
        raise ConvergenceError("real-axis quadrature did not settle", nodes=nodes)
    return val


def _phase_integral(c: float, H: PowerProfile, sigma2: float, nodes: int) -> float:
    """-(1/2pi) int (x+sigma2)^{-2} arg(1 - c int t^2 m^2/(1+tm)^2 dH) dx over the support.

    Each support interval is mapped by x = mid + half sin(phi), which turns
    the square-root edge behaviour of Im m into a smooth integrand, then
    integrated with Gauss-Legendre in phi.  Off the support m is real and the
    phase vanishes, so the bounded intervals carry the whole integral.
    """
    imap = InverseMap(c, H)
    if imap.t.size == 0:
        return 0.0
    support = support_of_F(c, H)
    t, w = np.polynomial.legendre.leggauss(nodes)
    phi = 0.5 * np.pi * t
    total = 0.0
    for lo, hi in support.intervals:
        if not np.isfinite(hi):
            raise NumericalError("unbounded support interval", interval=(lo, hi))
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x = mid + half * np.sin(phi)
        m = boundary_values(x, c, H)
        tm = 1.0 + np.multiply.outer(m, imap.t)
        g = 1.0 - c * (imap.w * imap.t**2 * m[:, None] ** 2 / tm**2).sum(axis=1)
        ang = _edge_regularized_phase(m, g, x)
        jumps = np.abs(np.diff(ang))
        if np.any(jumps > np.pi):
            k = int(np.argmax(jumps))
            raise ContourError(f"phase jumps across the branch cut near x={x[k]:.12g}", abscissa=float(x[k]))
        dx = half * np.cos(phi) * (0.5 * np.pi) * w
        total += float(np.sum(-ang / (x + sigma2) ** 2 * dx))
    return total / (2.0 * np.pi)


def _edge_regularized_phase(m: np.ndarray, g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Principal arg of g, with edge-adjacent nodes fixed up.

    Within a few ulps of a square-root edge the two boundary roots coalesce,
    Im m is lost to rounding and arg g is noise.  The exact limit there is
    +-pi/2, which is what the nearest resolved node carries, so degenerate
    nodes at either end take that node's phase.  A degenerate node in the
    interior means the support is wrong and raises.
    """
    ang = np.angle(g)
    bad = (np.abs(m.imag) <= 1e-7 * np.abs(m)) | (np.abs(g) <= 1e-9)
    if not bad.any():
        return ang
    good = np.flatnonzero(~bad)
    if good.size == 0:
        raise ContourError("no node resolves the boundary value on this interval", interval=(x[0], x[-1]))
    first, last = good[0], good[-1]
    if bad[first:last + 1].any():
        k = first + int(np.flatnonzero(bad[first:last + 1])[0])
        raise ContourError(f"boundary value is real inside the support near x={x[k]:.12g}", abscissa=float(x[k]))
    ang[:first] = ang[first]
    ang[last + 1:] = ang[last]
    return ang


def mu_general(c: float, H: PowerProfile, sigma2: float, variant: str = ADJUDICATED_VARIANT,
               nodes: int = REAL_AXIS_NODES) -> float:
    """mu for a discrete profile via the real-axis phase integral.

    noise_scaled: (T1 - sigma2 M) / a.  resolvent_weight: (T1 + M) / a, the
    sign and weight exactly as in the historical statement.
    """
    if variant not in ("noise_scaled", "resolvent_weight"):
        raise ValueError("general profiles support the noise_scaled and resolvent_weight weights only")
    b = solve_b(c, H, sigma2)
    mom = _h_moments(H, b)
    if not mom["has_mass"]:
        return 0.0
    dm = stieltjes_m(-sigma2, c, H, start=b).m_prime.real
    t1 = 2.0 * c * dm * mom["x2_3"]
    M = trace_mean_real_axis(c, H, sigma2, nodes)
    return (t1 - sigma2 * M) / mom["a"] if variant == "noise_scaled" else (t1 + M) / mom["a"]


def sum_clt_moments(c: float, H: PowerProfile, sigma2: float, variant: str = ADJUDICATED_VARIANT) -> SumCltMoments:
    """Closed forms for a single positive atom, contour quadrature otherwise."""
    _check_variant(variant)
    if H.is_single_atom and H.powers[0] > 0:
        return equal_power_moments(c, float(H.powers[0]), sigma2, variant)
    if not np.any(H.powers > 0):
        return SumCltMoments(0.0, 0.0, Method.CONTOUR_QUADRATURE, variant, {})
    r = rho_general(c, H, sigma2, variant)
    mu = mu_general(c, H, sigma2, variant)
    return SumCltMoments(mu, r.rho, Method.CONTOUR_QUADRATURE, variant, r.diagnostics)


# ------------------------------------------------------- profile condition

def check_profile_condition(c: float, H: PowerProfile, sigma2: float, tol: float = 1e-10) -> dict:
    """Both moment identities the sum CLT needs, evaluated at the solved b.

    Returns {"pass": bool, "residuals": [r1, r2]} with
    r1 = int x/(1+xb)^2 - int x * int (1+xb)^{-2} and
    r2 = int x^2 (int (1+xb)^{-2})^2 + int x^2 (1+xb)^{-4} - 2 int x^2 (1+xb)^{-2} int (1+xb)^{-2}.
    """
    b = solve_b(c, H, sigma2)
    e = H.expect
    a = e(lambda x: (1.0 + x * b) ** -2)
    r1 = e(lambda x: x * (1.0 + x * b) ** -2) - e(lambda x: x) * a
    r2 = (e(lambda x: x * x) * a * a + e(lambda x: x * x * (1.0 + x * b) ** -4)
          - 2.0 * e(lambda x: x * x * (1.0 + x * b) ** -2) * a)
    return {"pass": bool(abs(r1) < tol and abs(r2) < tol), "residuals": [float(abs(r1)), float(abs(r2))]}


def log_sum_moments(c: float, H: PowerProfile, sigma2: float, mu: float, rho: float) -> tuple[float, float]:
    """(mu1, rho1) for sum_k log(1+beta_k) - log(1 + b_N p_k)."""
    b = solve_b(c, H, sigma2)
    mom = _h_moments(H, b)
    if not mom["has_mass"]:
        return 0.0, rho
    dm = stieltjes_m(-sigma2, c, H, start=b).m_prime.real
    mu1 = mu * mom["g1"] - c * dm * mom["x2_2"]
    return float(mu1), float(rho * mom["g1"] ** 2)
