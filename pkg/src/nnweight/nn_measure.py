"""Nearest-neighbor estimation of moments under a shifted sampling law.

Given data drawn from a sampling distribution mu1 and a Monte Carlo batch
drawn from the target distribution mu0, each data point receives the
fraction of target draws whose nearest neighbor it is.  Those weights
estimate the mu0-mass of the point's Voronoi cell, and the weighted
average of a function over the data estimates its mu0-moment.

The Monte Carlo loop is data-parallel over target draws: neighbor queries
contain no randomness (tie breaking is stateless), and integer counts are
merged by summation, so results are identical for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .distributions import DistributionPair, density_ratio_at, fat_cantor_build
from .nn_index import NNIndex, PointSet


@dataclass(frozen=True)
class MomentFunction:
    """A function of the covariates whose target-population moment is wanted.

    ``fn`` maps an (n, p) array to an (n,) array.  ``moment_order`` is an
    optional hint (the exponent q for which the 2q-th moment is believed
    finite) consumed only by the diagnostics.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    moment_order: Optional[float] = None

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        out = np.asarray(self.fn(X), dtype=float)
        return out.reshape(X.shape[0])


def _first_coord(X: np.ndarray) -> np.ndarray:
    return X[:, 0]


def make_moment_function(name: str, depth: int = 5) -> MomentFunction:
    """Named registry used by config files and the service layer.

    identity           x
    square             x**2
    inv_quarter_power  x**-0.25
    cantor_indicator   2 * 1{x in the depth-level fat Cantor set}
    """
    if name == "identity":
        return MomentFunction(_first_coord, name=name)
    if name == "square":
        return MomentFunction(lambda X: X[:, 0] ** 2, name=name)
    if name == "inv_quarter_power":
        def _inv_quarter(X):
            with np.errstate(divide="ignore"):
                return X[:, 0] ** -0.25

        return MomentFunction(_inv_quarter, name=name, moment_order=2.0)
    if name == "cantor_indicator":
        intervals = fat_cantor_build(depth)
        return MomentFunction(
            lambda X: 2.0 * intervals.contains(X[:, 0]).astype(float),
            name=name,
        )
    raise ValueError(f"unknown moment function {name!r}")


MOMENT_FUNCTION_NAMES = ("identity", "square", "inv_quarter_power", "cantor_indicator")


@dataclass(frozen=True, eq=False)
class VoronoiWeights:
    """Per-point estimates of the target measure of each Voronoi cell.

    Stores the integer assignment counts and the Monte Carlo sample count;
    the weights are counts/m, so they are nonnegative and sum to one as
    exact rationals by construction.
    """

    counts: np.ndarray
    m: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-D array")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if int(counts.sum()) != self.m:
            raise ValueError("counts must sum to the Monte Carlo sample count m")

    @property
    def n(self) -> int:
        return self.counts.size

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.counts / float(self.m)
        w.setflags(write=False)
        return w


def voronoi_weights(index: NNIndex, mu0_samples: PointSet, workers: int = 1) -> VoronoiWeights:
    """Assign each target draw to its nearest data point and count.

    counts[j] is the number of target draws whose 1NN is data point j;
    weights are counts normalized by the number of draws.
    """
    if mu0_samples.p != index.p:
        raise ValueError(
            f"target samples have dimension {mu0_samples.p}, index has {index.p}"
        )
    assign = index.nearest(mu0_samples.points, workers=workers)
    counts = np.bincount(assign, minlength=index.n)
    return VoronoiWeights(counts=counts, m=mu0_samples.n)


@dataclass(frozen=True)
class MomentEstimate:
    """A single scalar estimate with its sample-size and seed metadata."""

    value: float
    n: int
    m: int
    seed: Optional[int] = None


def estimate_moment(weights: VoronoiWeights, data: PointSet, fn: MomentFunction,
                    seed: Optional[int] = None) -> MomentEstimate:
    """Weighted average of ``fn`` over the data: the estimated mu0-moment."""
    if weights.n != data.n:
        raise ValueError(f"weights cover {weights.n} points but data has {data.n}")
    values = fn(data.points)
    bad = np.nonzero(~np.isfinite(values))[0]
    if bad.size:
        j = int(bad[0])
        raise ValueError(
            f"moment function {fn.name or '<anonymous>'} is non-finite at data point "
            f"index {j} (x={data.points[j]!r})"
        )
    value = float(np.dot(weights.counts, values) / weights.m)
    return MomentEstimate(value=value, n=data.n, m=weights.m, seed=seed)


@dataclass(frozen=True, eq=False)
class CellProfile:
    """Per-point records for 1-D figure export, sorted by location."""

    x: np.ndarray
    weight: np.ndarray
    n_weight: np.ndarray
    density_ratio: np.ndarray

    def rows(self):
        """Yield (x, weight, n_weight, density_ratio) tuples."""
        return zip(self.x, self.weight, self.n_weight, self.density_ratio)


def cell_measure_profile(weights: VoronoiWeights, data: PointSet,
                         pair: DistributionPair) -> CellProfile:
    """Estimated cell measures next to the density ratio, sorted by x.

    Both the raw weight and its n-scaled version are exported so either
    normalization can be plotted against the ratio.
    """
    if data.p != 1:
        raise ValueError("cell_measure_profile is defined for 1-D data only")
    if weights.n != data.n:
        raise ValueError(f"weights cover {weights.n} points but data has {data.n}")
    x = data.points[:, 0]
    order = np.argsort(x, kind="stable")
    x = x[order]
    w = weights.weights[order]
    ratio = np.asarray(density_ratio_at(pair, x), dtype=float)
    return CellProfile(x=x, weight=w, n_weight=data.n * w, density_ratio=ratio)
