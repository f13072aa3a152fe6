"""Domain types, configuration and the per-replication random source.

Everything here is immutable after construction so configurations can be
shipped to worker processes as-is.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError

P_MAX = 64.0
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class PowerProfile:
    """Discrete power distribution: ``atoms`` is a tuple of (power, weight).

    Powers are strictly increasing and the weights sum to one.  Use
    :func:`make_power_profile` rather than the constructor.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ConfigError("power profile needs at least one atom")
        powers = [p for p, _ in self.atoms]
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise ConfigError(f"powers must be strictly increasing, got {powers}")
        total = sum(w for _, w in self.atoms)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"weights sum to {total!r}, not 1")

    @property
    def powers(self) -> np.ndarray:
        return np.array([p for p, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def is_single_atom(self) -> bool:
        return len(self.atoms) == 1

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of ``fn`` against the profile, i.e. sum_i w_i fn(p_i)."""
        return float(np.dot(self.weights, fn(self.powers)))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.powers[None, :] <= x.reshape(-1, 1)) @ self.weights

    def to_pairs(self) -> list[list[float]]:
        return [[p, w] for p, w in self.atoms]


def make_power_profile(pairs: Iterable[Sequence[float]], p_max: float = P_MAX) -> PowerProfile:
    """Build a normalized profile from ``(power, weight)`` pairs.

    Duplicate powers are merged by summing their weights; weights are then
    rescaled to sum to one.

    >>> make_power_profile([(2.0, 1.0), (2.0, 1.0)]).atoms
    ((2.0, 1.0),)
    """
    merged: dict[float, float] = {}
    for i, pair in enumerate(pairs):
        try:
            p, w = (float(v) for v in pair)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"atom {i}: expected (power, weight), got {pair!r}") from exc
        if not (math.isfinite(p) and math.isfinite(w)):
            raise ConfigError(f"atom {i} ({p}, {w}): non-finite value")
        if p < 0:
            raise ConfigError(f"atom {i} ({p}, {w}): negative power")
        if p > p_max:
            raise ConfigError(f"atom {i} ({p}, {w}): power exceeds bound {p_max}")
        if w <= 0:
            raise ConfigError(f"atom {i} ({p}, {w}): weight must be positive")
        merged[p] = merged.get(p, 0.0) + w
    if not merged:
        raise ConfigError("power profile needs at least one atom")
    total = math.fsum(merged.values())
    atoms = [(p, merged[p] / total) for p in sorted(merged)]
    # absorb the rounding residue into the heaviest atom so the sum is exact
    resid = 1.0 - math.fsum(w for _, w in atoms)
    j = max(range(len(atoms)), key=lambda i: atoms[i][1])
    atoms[j] = (atoms[j][0], atoms[j][1] + resid)
    return PowerProfile(tuple(atoms))


def assign_powers(profile: PowerProfile, K: int) -> np.ndarray:
    """Deterministic per-user powers whose empirical law tracks ``profile``.

    Largest-remainder apportionment of ``K`` users over the atoms; equal
    remainders go to the smaller power.  Returned in nondecreasing order.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    quotas = profile.weights * K
    counts = np.floor(quotas).astype(int)
    # rounding keeps 2.4999999999 and 2.5 in the same tie class
    remainders = np.round(quotas - counts, 9)
    order = sorted(range(len(counts)), key=lambda i: (-remainders[i], i))
    for i in order[: K - counts.sum()]:
        counts[i] += 1
    return np.repeat(profile.powers, counts)


def empirical_profile(powers: Sequence[float], p_max: float = P_MAX) -> PowerProfile:
    """H_N: the empirical distribution of a per-user power list."""
    return make_power_profile(((p, 1.0) for p in powers), p_max=p_max)


class EntryLaw(enum.Enum):
    """Law of the unnormalized signature entries v_ij (mean 0, variance 1)."""

    NORMAL = "normal"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"

    @property
    def fourth_moment(self) -> float:
        return {"normal": 3.0, "rademacher": 1.0, "uniform": 9.0 / 5.0}[self.value]

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self is EntryLaw.NORMAL:
            return rng.standard_normal(shape)
        if self is EntryLaw.RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=shape) - 1.0
        half_width = math.sqrt(3.0)
        return rng.uniform(-half_width, half_width, size=shape)

    @classmethod
    def parse(cls, name: str) -> "EntryLaw":
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = "|".join(m.value for m in cls)
            raise ConfigError(f"entry_law must be one of {choices}, got {name!r}") from None


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Counter-based generator for replication ``replication`` of run ``seed``.

    Philox keyed by the seed; the replication index occupies the upper half of
    the 256-bit counter, so every replication owns a disjoint block of 2**128
    draws and the stream does not depend on scheduling.
    """
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if replication < 0:
        raise ValueError("replication index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed, counter=replication << 128))


@dataclass(frozen=True)
class SystemConfig:
    N: int
    K: int
    sigma2: float
    powers: PowerProfile | tuple[float, ...]
    entry_law: EntryLaw = EntryLaw.NORMAL
    seed: int = 0
    p_max: float = field(default=P_MAX, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N: must be a positive integer, got {self.N!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K: must be a positive integer, got {self.K!r}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ConfigError(f"sigma2: must be positive, got {self.sigma2!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.powers, PowerProfile):
            explicit = tuple(float(p) for p in self.powers)
            if len(explicit) != self.K:
                raise ConfigError(f"powers: explicit list has length {len(explicit)}, expected K={self.K}")
            bad = [p for p in explicit if not 0 <= p <= self.p_max]
            if bad:
                raise ConfigError(f"powers: values outside [0, {self.p_max}]: {bad[:5]}")
            object.__setattr__(self, "powers", explicit)

    @property
    def c(self) -> float:
        return self.K / self.N

    @property
    def user_powers(self) -> np.ndarray:
        if isinstance(self.powers, PowerProfile):
            return assign_powers(self.powers, self.K)
        return np.array(self.powers)

    @property
    def profile(self) -> PowerProfile:
        """The limit profile H (for an explicit list, its empirical law)."""
        if isinstance(self.powers, PowerProfile):
            return self.powers
        return empirical_profile(self.powers, self.p_max)

    @property
    def empirical_profile(self) -> PowerProfile:
        """H_N, the exact empirical law of the assigned powers."""
        return empirical_profile(self.user_powers, self.p_max)

    def replace(self, **changes) -> "SystemConfig":
        fields = dict(N=self.N, K=self.K, sigma2=self.sigma2, powers=self.powers,
                      entry_law=self.entry_law, seed=self.seed, p_max=self.p_max)
        fields.update(changes)
        return SystemConfig(**fields)

    def to_dict(self) -> dict:
        powers = self.powers.to_pairs() if isinstance(self.powers, PowerProfile) else list(self.powers)
        return {
            "N": self.N,
            "K": self.K,
            "sigma2": self.sigma2,
            "powers": powers,
            "entry_law": self.entry_law.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SystemConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        missing = [k for k in ("N", "K", "sigma2", "powers") if k not in doc]
        if missing:
            raise ConfigError(f"config: missing field(s) {', '.join(missing)}")
        unknown = set(doc) - {"N", "K", "sigma2", "powers", "entry_law", "seed"}
        if unknown:
            raise ConfigError(f"config: unknown field(s) {', '.join(sorted(unknown))}")
        N, K = _as_int(doc["N"], "N"), _as_int(doc["K"], "K")
        try:
            sigma2 = float(doc["sigma2"])
        except (TypeError, ValueError):
            raise ConfigError(f"sigma2: not a number: {doc['sigma2']!r}") from None
        raw = doc["powers"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("powers: expected a nonempty list")
        if all(isinstance(x, (list, tuple)) for x in raw):
            powers = make_power_profile(raw)
        elif all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
            powers = tuple(float(x) for x in raw)
        else:
            raise ConfigError("powers: expected [[p, w], ...] or a list of K numbers")
        law = EntryLaw.parse(doc.get("entry_law", "normal"))
        seed = _as_int(doc.get("seed", 0), "seed")
        return cls(N=N, K=K, sigma2=sigma2, powers=powers, entry_law=law, seed=seed)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(doc)


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class SirRealization:
    """One simulated draw: the K exact SIRs plus resolvent diagnostics."""

    sirs: np.ndarray
    trace_resolvent: float  # (1/N) tr A^{-1}
    b_N_used: float


@dataclass(frozen=True)
class Prediction:
    b: float
    var_coeff: float
    limiting_sir_dist: tuple[tuple[float, float], ...]
    mu: float
    rho: float
    mu1: float
    rho1: float
    variant: str = ""
    assumption_d: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "variance_coefficient": self.var_coeff,
            "G_atoms": [list(a) for a in self.limiting_sir_dist],
            "mu": self.mu,
            "rho": self.rho,
            "mu1": self.mu1,
            "rho1": self.rho1,
            "variant": self.variant,
            "assumption_d": self.assumption_d,
        }
