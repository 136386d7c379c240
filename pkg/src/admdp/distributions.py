"""Bidder value distributions.

Continuous kinds expose CDF/PDF/quantile maps plus the virtual-value
transform and its inverse (exact closed forms for the uniform family,
numeric with closed-form CDF/PDF for the log-normal). Discrete kinds
(point mass, finite support) sample and evaluate their CDF but reject
virtual-value queries; they are consumed only by the brute-force
verification tools.

All sampling is inverse-CDF on explicit generator draws, so identical
seeds give identical values everywhere.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

_SQRT2 = math.sqrt(2.0)
_NORM = NormalDist()

# Absolute tolerance on the argument for numeric inversions; monotone
# functions and guaranteed brackets make plain bisection safe.
BISECT_TOL = 1e-10


class DiscreteUnsupported(TypeError):
    """Virtual values are undefined for atomic laws without ironing."""


class OutOfSupport(ValueError):
    """A value fell outside the distribution's support."""


class RegularityError(ValueError):
    """The virtual value failed the grid monotonicity check."""


class AboveSupport(float):
    """Sentinel reserve meaning no bid can ever meet it.

    Compares like +inf so reserve arithmetic works, but keeps a distinct
    type so "bidder filtered out" is testable without magic constants.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls, math.inf)
        return cls._instance

    def __repr__(self):  # pragma: no cover - cosmetic
        return "AboveSupport"


ABOVE_SUPPORT = AboveSupport()


class ValueDistribution:
    """Base interface; concrete kinds implement cdf/pdf/quantile."""

    is_continuous = True

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def cdf(self, v: float) -> float:
        raise NotImplementedError

    def pdf(self, v: float) -> float:
        raise NotImplementedError

    def quantile(self, u: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF sampling from an explicit generator."""
        if size is None:
            return self.quantile(float(rng.random()))
        u = rng.random(size)
        return self.quantile_array(u)

    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        return np.array([self.quantile(float(x)) for x in np.asarray(u).ravel()]).reshape(np.shape(u))

    def _require_in_support(self, v: float) -> None:
        lo, hi = self.support()
        if not (lo <= v <= hi):
            raise OutOfSupport(f"value {v} outside support [{lo}, {hi}]")

    def virtual_value(self, v: float) -> float:
        """v - (1 - F(v)) / f(v)."""
        self._require_in_support(v)
        return v - (1.0 - self.cdf(v)) / self.pdf(v)

    def virtual_value_array(self, v: np.ndarray) -> np.ndarray:
        return np.array([self.virtual_value(float(x)) for x in np.asarray(v).ravel()]).reshape(np.shape(v))

    def inverse_virtual_value(self, y: float) -> float:
        """Smallest v in support with virtual_value(v) >= y.

        Returns the support lower bound when y is below the curve and the
        ABOVE_SUPPORT sentinel when y exceeds it at the support top.
        """
        raise NotImplementedError

    def monopoly_reserve(self) -> float:
        return self.inverse_virtual_value(0.0)


@dataclass(frozen=True)
class Uniform(ValueDistribution):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform needs lo < hi, got [{self.lo}, {self.hi}]")

    def support(self):
        return (self.lo, self.hi)

    def cdf(self, v):
        if v <= self.lo:
            return 0.0
        if v >= self.hi:
            return 1.0
        return (v - self.lo) / (self.hi - self.lo)

    def pdf(self, v):
        return 1.0 / (self.hi - self.lo) if self.lo <= v <= self.hi else 0.0

    def quantile(self, u):
        return self.lo + u * (self.hi - self.lo)

    def quantile_array(self, u):
        return self.lo + np.asarray(u) * (self.hi - self.lo)

    def virtual_value(self, v):
        # v - (hi - v) for any [lo, hi]; strictly increasing, always regular.
        self._require_in_support(v)
        return 2.0 * v - self.hi

    def virtual_value_array(self, v):
        return 2.0 * np.asarray(v) - self.hi

    def inverse_virtual_value(self, y):
        v = 0.5 * (y + self.hi)
        if v < self.lo:
            return self.lo
        if v > self.hi:
            return ABOVE_SUPPORT
        return v


@dataclass(frozen=True)
class ShiftedUniform(Uniform):
    """Uniform on an interval away from the origin (distinct config tag)."""


@dataclass(frozen=True)
class LogNormal(ValueDistribution):
    mu: float
    sigma: float
    _vmap: "VirtualValueMap" = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"lognormal needs sigma > 0, got {self.sigma}")
        object.__setattr__(self, "_vmap", VirtualValueMap(self))

    def support(self):
        return (0.0, math.inf)

    def _z(self, v):
        return (math.log(v) - self.mu) / self.sigma

    def cdf(self, v):
        if v <= 0.0:
            return 0.0
        return _NORM.cdf(self._z(v))

    def sf(self, v) -> float:
        """Upper tail 1 - F(v), stable far into the tail."""
        if v <= 0.0:
            return 1.0
        if v == math.inf:
            return 0.0
        return 0.5 * math.erfc(self._z(v) / _SQRT2)

    def pdf(self, v):
        if v <= 0.0:
            return 0.0
        z = self._z(v)
        return math.exp(-0.5 * z * z) / (v * self.sigma * math.sqrt(2.0 * math.pi))

    def quantile(self, u):
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return math.inf
        return math.exp(self.mu + self.sigma * _NORM.inv_cdf(u))

    def virtual_value(self, v):
        if v <= 0.0:
            raise OutOfSupport(f"value {v} outside support (0, inf)")
        return v - self.sf(v) / self.pdf(v)

    def inverse_virtual_value(self, y):
        return self._vmap.inverse(y)


@dataclass
class VirtualValueMap:
    """Tabulated virtual-value curve for kinds without a closed-form inverse.

    Construction runs the regularity gate: the curve must be nondecreasing
    on a quantile grid spanning the working support, otherwise the owning
    distribution is rejected.
    """

    owner: ValueDistribution
    n_points: int = 1025
    q_lo: float = 1e-9
    q_hi: float = 1.0 - 1e-9

    def __post_init__(self):
        qs = np.linspace(self.q_lo, self.q_hi, self.n_points)
        self.grid = np.array([self.owner.quantile(float(q)) for q in qs])
        self.values = np.array([self.owner.virtual_value(float(v)) for v in self.grid])
        if np.any(np.diff(self.values) < -1e-12):
            raise RegularityError(
                f"{self.owner!r} has a non-monotone virtual value; not regular"
            )

    def inverse(self, y: float) -> float:
        """Smallest v with virtual_value(v) >= y via bracketed bisection."""
        phi = self.owner.virtual_value
        if y <= self.values[0]:
            # Below the tabulated bottom the curve dives to -inf fast;
            # treat as always met and return the support lower bound.
            return self.owner.support()[0]
        if y > self.values[-1]:
            lo, hi = float(self.grid[-1]), 2.0 * float(self.grid[-1])
            for _ in range(120):
                if phi(hi) >= y:
                    break
                lo, hi = hi, 2.0 * hi
            else:
                return ABOVE_SUPPORT
        else:
            k = int(np.searchsorted(self.values, y, side="left"))
            lo, hi = float(self.grid[max(k - 1, 0)]), float(self.grid[k])
        while hi - lo > BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if phi(mid) >= y:
                hi = mid
            else:
                lo = mid
        return hi


@dataclass(frozen=True)
class PointMass(ValueDistribution):
    v: float

    is_continuous = False

    def support(self):
        return (self.v, self.v)

    def cdf(self, x):
        return 1.0 if x >= self.v else 0.0

    def pdf(self, x):
        raise DiscreteUnsupported("point mass has no density")

    def quantile(self, u):
        return self.v

    def quantile_array(self, u):
        return np.full(np.shape(u), self.v)

    def virtual_value(self, v):
        raise DiscreteUnsupported("virtual value undefined for a point mass")

    def inverse_virtual_value(self, y):
        raise DiscreteUnsupported("virtual value undefined for a point mass")


@dataclass(frozen=True)
class FiniteDiscrete(ValueDistribution):
    values: tuple[float, ...]
    probs: tuple[float, ...]

    is_continuous = False

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("support and probability lists must match and be nonempty")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(self.probs)}, not 1")
        order = sorted(range(len(self.values)), key=lambda i: self.values[i])
        object.__setattr__(self, "values", tuple(self.values[i] for i in order))
        object.__setattr__(self, "probs", tuple(self.probs[i] for i in order))
        if any(self.values[i] >= self.values[i + 1] for i in range(len(self.values) - 1)):
            raise ValueError("support points must be distinct")
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    def support(self):
        return (self.values[0], self.values[-1])

    def cdf(self, x):
        k = bisect_left(self.values, x)
        if k < len(self.values) and self.values[k] == x:
            k += 1
        return float(self._cum[k - 1]) if k > 0 else 0.0

    def pdf(self, x):
        raise DiscreteUnsupported("finite-support law has no density")

    def quantile(self, u):
        # Smallest support value whose CDF reaches u (step lookup).
        k = int(np.searchsorted(self._cum, u, side="left"))
        return self.values[min(k, len(self.values) - 1)]

    def quantile_array(self, u):
        ks = np.searchsorted(self._cum, np.asarray(u), side="left")
        return np.asarray(self.values)[np.minimum(ks, len(self.values) - 1)]

    def virtual_value(self, v):
        raise DiscreteUnsupported("virtual value undefined without ironing; use the oracle tools")

    def inverse_virtual_value(self, y):
        raise DiscreteUnsupported("virtual value undefined without ironing; use the oracle tools")


_KINDS = {
    "uniform": lambda p: Uniform(float(p["lo"]), float(p["hi"])),
    "shifted_uniform": lambda p: ShiftedUniform(float(p["lo"]), float(p["hi"])),
    "lognormal": lambda p: LogNormal(float(p.get("mu", 0.0)), float(p.get("sigma", 0.5))),
    "pointmass": lambda p: PointMass(float(p["v"])),
    "discrete": lambda p: FiniteDiscrete(tuple(p["support"]), tuple(p["probs"])),
}


def make_distribution(kind: str, **params) -> ValueDistribution:
    """Build a distribution from a tagged config record."""
    try:
        factory = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown distribution kind {kind!r}; expected one of {sorted(_KINDS)}") from None
    return factory(params)
