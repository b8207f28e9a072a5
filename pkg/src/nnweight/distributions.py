"""Population models: samplers, densities, density ratios, and divergences.

Every distribution here is immutable after construction and density
evaluation is pure, so instances can be shared freely across threads.
Sampling takes an explicit seed (or a ``numpy.random.Generator``) and is
deterministic for a fixed (distribution, n, seed, stream) tuple.

Supported families are 1-D (Beta, Gaussian, Uniform, and a uniform law on
a fat Cantor set) plus independent products of 1-D families.  That covers
every source/target pair used by the estimators and the diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy import integrate, stats


class QuadratureError(RuntimeError):
    """Numerical integration neither converged nor clearly diverged."""


# ---------------------------------------------------------------------------
# Supports


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]."""

    lo: float
    hi: float


@dataclass(frozen=True)
class RealLine:
    """The whole real line."""


@dataclass(frozen=True, eq=False)
class IntervalSet:
    """Ordered, pairwise-disjoint closed subintervals of [0, 1]."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.asarray(self.lows, dtype=float)
        highs = np.asarray(self.highs, dtype=float)
        object.__setattr__(self, "lows", _readonly(lows))
        object.__setattr__(self, "highs", _readonly(highs))
        if lows.ndim != 1 or lows.shape != highs.shape or lows.size == 0:
            raise ValueError("interval bounds must be matching non-empty 1-D arrays")
        if np.any(highs < lows):
            raise ValueError("each interval needs lo <= hi")
        if np.any(lows[1:] <= highs[:-1]):
            raise ValueError("intervals must be sorted and pairwise disjoint")
        if lows[0] < 0.0 or highs[-1] > 1.0:
            raise ValueError("intervals must lie within [0, 1]")

    @property
    def total_length(self) -> float:
        return float(np.sum(self.highs - self.lows))

    @property
    def intervals(self) -> np.ndarray:
        """(k, 2) array of [lo, hi] rows."""
        return np.column_stack([self.lows, self.highs])

    def contains(self, x) -> np.ndarray:
        """Vectorized membership test (intervals are closed)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.lows, x, side="right") - 1
        inside = idx >= 0
        safe = np.where(inside, idx, 0)
        inside &= x <= self.highs[safe]
        return inside


Support = Union[Interval, RealLine, IntervalSet]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def fat_cantor_build(depth: int) -> IntervalSet:
    """Iteratively remove centered open middle pieces from [0, 1].

    At step l (1-based) every current interval loses a centered open
    interval of absolute length 4**-l, so step l removes total measure
    2**(l-1) * 4**-l and the remaining measure tends to 1/2.  All
    endpoints are dyadic rationals, hence exact in binary floats for any
    practical depth.
    """
    if not isinstance(depth, (int, np.integer)) or isinstance(depth, bool):
        raise ValueError("depth must be an integer")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    lows = np.array([0.0])
    highs = np.array([1.0])
    for level in range(1, depth + 1):
        removed = 4.0 ** -level
        mids = 0.5 * (lows + highs)
        left_hi = mids - removed / 2.0
        right_lo = mids + removed / 2.0
        ok = np.all(lows < left_hi) and np.all(right_lo < highs) and np.all(left_hi < right_lo)
        if not ok:
            raise ValueError(f"interval lengths underflow float resolution at depth {level}")
        lows = np.column_stack([lows, right_lo]).reshape(-1)
        highs = np.column_stack([left_hi, highs]).reshape(-1)
    return IntervalSet(lows, highs)


def fat_cantor_contains(x, depth: int = 5) -> np.ndarray:
    """Membership in the depth-level fat Cantor construction."""
    return fat_cantor_build(depth).contains(x)


# ---------------------------------------------------------------------------
# Distribution kinds


@dataclass(frozen=True)
class Beta:
    """Beta(alpha, beta) on [0, 1]."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"Beta {name} must be a positive finite real, got {v!r}")

    @property
    def dim(self) -> int:
        return 1

    def support(self) -> Support:
        return Interval(0.0, 1.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.beta(self.alpha, self.beta, size=n).reshape(n, 1)

    def pdf(self, x) -> np.ndarray:
        return stats.beta.pdf(_coords(x), self.alpha, self.beta)

    def quantile(self, q) -> np.ndarray:
        return stats.beta.ppf(np.asarray(q, dtype=float), self.alpha, self.beta)


@dataclass(frozen=True)
class Gaussian:
    """Normal law parameterized by mean and variance (not standard deviation)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise ValueError(f"Gaussian mean must be finite, got {self.mean!r}")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"Gaussian variance must be a positive finite real, got {self.variance!r}")

    @property
    def dim(self) -> int:
        return 1

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def support(self) -> Support:
        return RealLine()

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size=n).reshape(n, 1)

    def pdf(self, x) -> np.ndarray:
        return stats.norm.pdf(_coords(x), loc=self.mean, scale=self.sd)

    def quantile(self, q) -> np.ndarray:
        return stats.norm.ppf(np.asarray(q, dtype=float), loc=self.mean, scale=self.sd)


@dataclass(frozen=True)
class Uniform:
    """Uniform on [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"Uniform needs finite a < b, got a={self.a!r}, b={self.b!r}")

    @property
    def dim(self) -> int:
        return 1

    def support(self) -> Support:
        return Interval(self.a, self.b)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.a, self.b, size=n).reshape(n, 1)

    def pdf(self, x) -> np.ndarray:
        x = _coords(x)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def quantile(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.a + q * (self.b - self.a)


@dataclass(frozen=True)
class FatCantorUniform:
    """Uniform law on the depth-level fat Cantor interval set."""

    depth: int

    def __post_init__(self):
        fat_cantor_build(self.depth)  # validates depth eagerly

    @cached_property
    def interval_set(self) -> IntervalSet:
        return fat_cantor_build(self.depth)

    @cached_property
    def _cum_lengths(self) -> np.ndarray:
        lengths = self.interval_set.highs - self.interval_set.lows
        return np.concatenate([[0.0], np.cumsum(lengths)])

    @property
    def dim(self) -> int:
        return 1

    def support(self) -> Support:
        return self.interval_set

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # Measure-preserving map from uniform arc length onto the interval union.
        u = rng.uniform(0.0, self.interval_set.total_length, size=n)
        return self._from_arc_length(u).reshape(n, 1)

    def _from_arc_length(self, u: np.ndarray) -> np.ndarray:
        cum = self._cum_lengths
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(cum) - 2)
        return self.interval_set.lows[idx] + (u - cum[idx])

    def pdf(self, x) -> np.ndarray:
        x = _coords(x)
        inside = self.interval_set.contains(x)
        return np.where(inside, 1.0 / self.interval_set.total_length, 0.0)

    def quantile(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self._from_arc_length(q * self.interval_set.total_length)


@dataclass(frozen=True)
class Product:
    """Independent product of 1-D distributions, one per coordinate."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise ValueError("Product needs at least one coordinate")
        for p in parts:
            if getattr(p, "dim", None) != 1:
                raise ValueError("Product coordinates must be 1-D distributions")

    @property
    def dim(self) -> int:
        return len(self.parts)

    def support(self) -> list[Support]:
        return [p.support() for p in self.parts]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.column_stack([p.sample(n, rng)[:, 0] for p in self.parts])

    def pdf(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        out = np.ones(X.shape[0])
        for j, p in enumerate(self.parts):
            out *= p.pdf(X[:, j])
        return out


Distribution = Union[Beta, Gaussian, Uniform, FatCantorUniform, Product]


def _coords(x) -> np.ndarray:
    """Coerce scalar / (m,) / (m, 1) input to a flat coordinate array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError(f"expected 1-D points, got dimension {x.shape[1]}")
        x = x[:, 0]
    return x


# ---------------------------------------------------------------------------
# Pairs and ratios


def _support_subset(s0, s1) -> bool:
    if isinstance(s1, RealLine):
        return True
    if isinstance(s0, RealLine):
        return False
    if isinstance(s0, Interval):
        lows0, highs0 = np.array([s0.lo]), np.array([s0.hi])
    else:
        lows0, highs0 = s0.lows, s0.highs
    if isinstance(s1, Interval):
        lows1, highs1 = np.array([s1.lo]), np.array([s1.hi])
    else:
        lows1, highs1 = s1.lows, s1.highs
    # every piece of s0 must fit inside a single piece of s1
    for lo, hi in zip(lows0, highs0):
        j = np.searchsorted(lows1, lo, side="right") - 1
        if j < 0 or hi > highs1[j]:
            return False
    return True


@dataclass(frozen=True)
class DistributionPair:
    """Target population mu0 and sampling population mu1.

    Construction checks the absolute-continuity proxy support(mu0) within
    support(mu1) for the supported kinds, so downstream density ratios are
    finite off a mu1-null set.
    """

    mu0: Distribution
    mu1: Distribution

    def __post_init__(self):
        if self.mu0.dim != self.mu1.dim:
            raise ValueError("mu0 and mu1 must share the same dimension")
        s0, s1 = self.mu0.support(), self.mu1.support()
        if self.mu0.dim == 1:
            ok = _support_subset(s0, s1)
        else:
            ok = all(_support_subset(a, b) for a, b in zip(s0, s1))
        if not ok:
            raise ValueError("support(mu0) is not contained in support(mu1)")

    @property
    def dim(self) -> int:
        return self.mu0.dim

    def density_ratio(self, x) -> np.ndarray:
        return density_ratio_at(self, x)


def density_at(dist: Distribution, x):
    """Density of ``dist`` at point(s) ``x``; 0 outside the support."""
    out = dist.pdf(x)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def density_ratio_at(pair: DistributionPair, x):
    """f0(x)/f1(x) with +inf where f1 = 0 < f0 and 0 where both vanish."""
    f0 = np.atleast_1d(np.asarray(pair.mu0.pdf(x), dtype=float))
    f1 = np.atleast_1d(np.asarray(pair.mu1.pdf(x), dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(f1 > 0.0, f0 / np.where(f1 > 0.0, f1, 1.0),
                         np.where(f0 > 0.0, np.inf, 0.0))
    return float(ratio[0]) if ratio.size == 1 and np.isscalar(x) else ratio


def ratio_defined_at(pair: DistributionPair, x):
    """False exactly where both densities vanish (the 0/0 convention)."""
    f0 = np.atleast_1d(np.asarray(pair.mu0.pdf(x), dtype=float))
    f1 = np.atleast_1d(np.asarray(pair.mu1.pdf(x), dtype=float))
    defined = (f0 > 0.0) | (f1 > 0.0)
    return bool(defined[0]) if defined.size == 1 and np.isscalar(x) else defined


# ---------------------------------------------------------------------------
# Sampling entry point


def sample_points(dist: Distribution, n: int, seed: int, stream: int = 0):
    """Draw ``n`` iid points as a PointSet; deterministic in (dist, n, seed, stream).

    Concurrent producers should pass distinct ``stream`` ids; streams are
    independent by seed-sequence construction.
    """
    from .nn_index import PointSet

    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))
    return PointSet(dist.sample(int(n), rng))


# ---------------------------------------------------------------------------
# Renyi divergence by adaptive quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the divergence-aware integration scheme.

    The integral is evaluated on a nested sequence of truncated domains.
    If the truncated values grow by more than ``divergence_factor`` across
    two consecutive refinements (twice in a row), the integral is declared
    divergent.  Otherwise the full-domain adaptive quadrature result is
    returned, provided its own error estimate is small and it agrees with
    the widest truncation within ``consistency_tol`` relative tolerance.
    """

    levels: int = 6
    divergence_factor: float = 10.0
    consistency_tol: float = 0.5
    rel_err_accept: float = 1e-3
    abs_err_accept: float = 1e-10


def _support_pieces(support: Support) -> list[tuple[float, float]]:
    if isinstance(support, Interval):
        return [(support.lo, support.hi)]
    if isinstance(support, IntervalSet):
        return list(zip(support.lows.tolist(), support.highs.tolist()))
    return [(-math.inf, math.inf)]


def _breakpoints_within(dist: Distribution, lo: float, hi: float) -> list[float]:
    sup = dist.support()
    pts: list[float] = []
    if isinstance(sup, Interval):
        pts = [sup.lo, sup.hi]
    elif isinstance(sup, IntervalSet):
        pts = np.concatenate([sup.lows, sup.highs]).tolist()
    return [p for p in pts if lo < p < hi]


def _quad_on(fn, lo: float, hi: float, points: list[float]) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if math.isinf(lo) or math.isinf(hi):
            return integrate.quad(fn, lo, hi, limit=400)
        pts = sorted(points) if points else None
        return integrate.quad(fn, lo, hi, points=pts, limit=max(400, 10 * len(points or [])))


def _truncations(pair: DistributionPair, spec: QuadratureSpec) -> list[tuple[float, float]]:
    sup1 = pair.mu1.support()
    if isinstance(sup1, RealLine):
        center = getattr(pair.mu1, "mean", 0.0)
        scale = getattr(pair.mu1, "sd", 1.0)
        return [(center - scale * 4.0 * 2**k, center + scale * 4.0 * 2**k) for k in range(spec.levels)]
    lo = sup1.lo if isinstance(sup1, Interval) else float(sup1.lows[0])
    hi = sup1.hi if isinstance(sup1, Interval) else float(sup1.highs[-1])
    width = hi - lo
    return [(lo + width * 10.0 ** -(k + 1), hi - width * 10.0 ** -(k + 1)) for k in range(spec.levels)]


def _integrate_pair(pair: DistributionPair, integrand, spec: QuadratureSpec) -> float:
    """Shared truncation/divergence machinery for the divergence integrals."""
    sup1 = pair.mu1.support()
    pieces = _support_pieces(sup1)
    full_lo, full_hi = pieces[0][0], pieces[-1][1]

    truncated: list[float] = []
    for lo, hi in _truncations(pair, spec):
        pts = _breakpoints_within(pair.mu0, lo, hi) + _breakpoints_within(pair.mu1, lo, hi)
        value, _ = _quad_on(integrand, lo, hi, pts)
        if not math.isfinite(value):
            return math.inf
        truncated.append(value)
        k = len(truncated) - 1
        if k >= 3:
            prev_ok = truncated[k - 3] > 0 and truncated[k - 2] > 0
            if prev_ok and truncated[k - 1] > spec.divergence_factor * truncated[k - 3] \
                    and truncated[k] > spec.divergence_factor * truncated[k - 2]:
                return math.inf

    pts = _breakpoints_within(pair.mu0, full_lo, full_hi) + _breakpoints_within(pair.mu1, full_lo, full_hi)
    value, err = _quad_on(integrand, full_lo, full_hi, pts)
    if not math.isfinite(value):
        return math.inf
    scale = max(abs(value), 1e-300)
    if err > max(spec.abs_err_accept, spec.rel_err_accept * scale):
        raise QuadratureError(f"quadrature error estimate {err:.3g} too large for value {value:.6g}")
    if abs(truncated[-1] - value) > spec.consistency_tol * scale:
        raise QuadratureError(
            f"truncated integral {truncated[-1]:.6g} inconsistent with full-domain value {value:.6g}"
        )
    return value


def ratio_power_integral(pair: DistributionPair, order: float,
                         quadrature: QuadratureSpec | None = None) -> float:
    """Integral of (f0/f1)**order against mu1; +inf when it diverges.

    This is the quantity exponentiated inside the Renyi divergence and the
    first factor of the variance bound.
    """
    if pair.dim != 1:
        raise ValueError("ratio_power_integral supports 1-D pairs only")
    if order < 1.0:
        raise ValueError("order must be >= 1")
    spec = quadrature or QuadratureSpec()
    f0, f1 = pair.mu0.pdf, pair.mu1.pdf

    def integrand(x: float) -> float:
        d1 = float(f1(x))
        if d1 <= 0.0:
            return 0.0
        d0 = float(f0(x))
        if d0 <= 0.0:
            return 0.0
        return d0**order * d1 ** (1.0 - order)

    return _integrate_pair(pair, integrand, spec)


def renyi_divergence(pair: DistributionPair, order: float,
                     quadrature: QuadratureSpec | None = None) -> float:
    """Renyi divergence of the given order; order 1 is the KL divergence.

    Returns +inf when the defining integral diverges under refinement;
    raises QuadratureError when the quadrature neither converges nor
    shows clear divergence.
    """
    if order < 1.0:
        raise ValueError("order must be >= 1")
    spec = quadrature or QuadratureSpec()
    if order == 1.0:
        f0, f1 = pair.mu0.pdf, pair.mu1.pdf

        def kl_integrand(x: float) -> float:
            d0 = float(f0(x))
            if d0 <= 0.0:
                return 0.0
            d1 = float(f1(x))
            if d1 <= 0.0:
                return math.inf
            return d0 * (math.log(d0) - math.log(d1))

        return _integrate_pair(pair, kl_integrand, spec)
    value = ratio_power_integral(pair, order, spec)
    if math.isinf(value):
        return math.inf
    return math.log(value) / (order - 1.0)
