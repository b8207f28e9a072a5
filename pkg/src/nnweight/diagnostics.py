"""Numerical verification of the estimator's operating assumptions.

Limit statements are operationalized as monotone trends over a grid of
data sizes with seed averaging, and moment finiteness is judged by a
growth heuristic over doubling Monte Carlo sizes.  Both are heuristics,
not proofs; thresholds are empirical defaults recorded here and in the
experiment configs.

Every replicate derives its random streams from its own seed value, so
seed lists can be evaluated in any order, and cross-seed reductions use
exact summation, making reported aggregates invariant to permuting the
seed list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import (
    DistributionPair,
    QuadratureError,
    QuadratureSpec,
    density_ratio_at,
    ratio_power_integral,
    renyi_divergence,
    sample_points,
)
from .nn_index import NNIndex, PointSet, build_index
from .nn_measure import MomentFunction, estimate_moment, voronoi_weights

# stream ids for per-replicate sampling
_STREAM_DATA = 0
_STREAM_TARGET = 1
_STREAM_PROBE = 2


@dataclass(frozen=True)
class HolderConjugates:
    """Exponent pair with 1/p + 1/q = 1; p applies to the density ratio,
    q to the test function.  p = 1 pairs with an explicit infinite q."""

    p: float
    q: float

    def __post_init__(self):
        if self.p < 1.0 or self.q < 1.0:
            raise ValueError("conjugate exponents must be >= 1")
        if self.p == 1.0 or self.q == 1.0:
            if not (math.isinf(self.q) if self.p == 1.0 else math.isinf(self.p)):
                raise ValueError("exponent 1 must pair with an infinite conjugate")
            return
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > 1e-12:
            raise ValueError(f"1/p + 1/q must equal 1, got p={self.p}, q={self.q}")

    @staticmethod
    def from_ratio_exponent(p: float) -> "HolderConjugates":
        if p < 1.0:
            raise ValueError("ratio exponent must be >= 1")
        if p == 1.0:
            return HolderConjugates(1.0, math.inf)
        return HolderConjugates(p, p / (p - 1.0))


@dataclass(frozen=True)
class CheckResult:
    """One named scalar with its parameters, tolerance, and verdict."""

    check: str
    params: dict
    value: float | str
    method: str
    threshold: Optional[float] = None
    passed: Optional[bool] = None


@dataclass
class DiagnosticsReport:
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, result: CheckResult) -> None:
        self.checks.append(result)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks if c.passed is not None)

    def rows(self) -> list[tuple[str, str, str, str, str]]:
        """Machine-readable (check, params, value, threshold, pass) rows."""
        out = []
        for c in self.checks:
            params = " ".join(f"{k}={v}" for k, v in c.params.items())
            value = repr(c.value) if isinstance(c.value, float) else str(c.value)
            threshold = "" if c.threshold is None else repr(c.threshold)
            verdict = "" if c.passed is None else ("pass" if c.passed else "fail")
            out.append((c.check, params, value, threshold, verdict))
        return out

    def format_table(self) -> str:
        header = ("check", "params", "value", "threshold", "pass")
        rows = [header]
        for c in self.checks:
            params = " ".join(f"{k}={v}" for k, v in c.params.items())
            value = f"{c.value:.6g}" if isinstance(c.value, float) else str(c.value)
            threshold = "-" if c.threshold is None else f"{c.threshold:.6g}"
            verdict = "-" if c.passed is None else ("pass" if c.passed else "FAIL")
            rows.append((c.check, params, value, threshold, verdict))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines)


def _fsum_mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _fsum_variance(values: Sequence[float]) -> float:
    k = len(values)
    if k < 2:
        raise ValueError("need at least two replicates for a variance")
    s = math.fsum(values)
    ss = math.fsum(v * v for v in values)
    return max(0.0, (ss - s * s / k) / (k - 1))


# ---------------------------------------------------------------------------
# two-neighbor discrepancy


def nn_discrepancy_moment(index: NNIndex, fn: MomentFunction, probe_samples: PointSet,
                          q: float = 1.0, workers: int = 1) -> float:
    """Monte Carlo estimate of E |fn(nn1) - fn(nn2)|**(2q) over the probes.

    nn1 and nn2 are the first and second nearest data points of each
    probe; the pair is treated as unordered, so exact-distance ties do not
    affect the value.
    """
    if index.n < 2:
        raise ValueError("needs an index over at least 2 points (first and second neighbors)")
    if not (q >= 1.0 and math.isfinite(q)):
        raise ValueError("q must be a finite real >= 1")
    ids, _ = index.nearest_two(probe_samples.points, workers=workers)
    values = fn(index.points.points)
    diff = np.abs(values[ids[:, 0]] - values[ids[:, 1]])
    return float(np.mean(diff ** (2.0 * q)))


# ---------------------------------------------------------------------------
# variance bound


@dataclass(frozen=True)
class VarianceBoundResult:
    empirical_variance: float
    bound_value: float
    ratio_term: float
    discrepancy_term: float
    satisfied: bool
    infinite_bound: bool
    n: int
    m: int
    seeds: tuple[int, ...]


def variance_bound_estimate(pair: DistributionPair, fn: MomentFunction,
                            holder: HolderConjugates, n: int, m: int,
                            seeds: Sequence[int], probe_m: int = 100_000,
                            quadrature: QuadratureSpec | None = None) -> VarianceBoundResult:
    """Replicated estimator variance against its assembled upper bound.

    The bound is twice the product of the p-norm of the density ratio
    under the sampling law and the q-norm of the squared two-neighbor
    discrepancy of ``fn``.  An infinite ratio term makes the bound
    vacuous, which is reported rather than hidden.
    """
    if math.isinf(holder.q):
        raise ValueError("variance bound needs a finite test-function exponent (ratio exponent > 1)")
    seeds = tuple(int(s) for s in seeds)
    values: list[float] = []
    discrepancies: list[float] = []
    for seed in seeds:
        data = sample_points(pair.mu1, n, seed=seed, stream=_STREAM_DATA)
        index = build_index(data, tie_seed=seed)
        draws = sample_points(pair.mu0, m, seed=seed, stream=_STREAM_TARGET)
        values.append(estimate_moment(voronoi_weights(index, draws), data, fn, seed=seed).value)
        probe = sample_points(pair.mu1, probe_m, seed=seed, stream=_STREAM_PROBE)
        discrepancies.append(nn_discrepancy_moment(index, fn, probe, q=holder.q))

    empirical_variance = _fsum_variance(values)
    ratio_integral = ratio_power_integral(pair, holder.p, quadrature)
    infinite = math.isinf(ratio_integral)
    discrepancy_term = _fsum_mean(discrepancies) ** (1.0 / holder.q)
    if infinite:
        bound = math.inf
    else:
        bound = 2.0 * ratio_integral ** (1.0 / holder.p) * discrepancy_term
    return VarianceBoundResult(
        empirical_variance=empirical_variance,
        bound_value=bound,
        ratio_term=math.inf if infinite else ratio_integral ** (1.0 / holder.p),
        discrepancy_term=discrepancy_term,
        satisfied=empirical_variance <= bound,
        infinite_bound=infinite,
        n=int(n),
        m=int(m),
        seeds=seeds,
    )


# ---------------------------------------------------------------------------
# assumption checks


def _moment_growth_verdict(pair: DistributionPair, fn: MomentFunction, exponent: float,
                           seed: int, base_size: int, growth_factor: float) -> tuple[str, float]:
    """Estimate E|fn|**exponent under mu1 at doubling sizes.

    Declared "likely_infinite" when the estimate grows by more than
    ``growth_factor`` across a doubling twice in a row.
    """
    sizes = [base_size, 2 * base_size, 4 * base_size, 8 * base_size]
    estimates = []
    for k, size in enumerate(sizes):
        xs = sample_points(pair.mu1, size, seed=seed, stream=10 + k)
        with np.errstate(over="ignore"):
            vals = np.abs(fn(xs.points)) ** exponent
        estimates.append(float(np.mean(vals)))
    if not all(map(math.isfinite, estimates)):
        return "likely_infinite", estimates[-1]
    growths = [b > growth_factor * a for a, b in zip(estimates, estimates[1:]) if a > 0]
    if len(growths) >= 2 and growths[-1] and growths[-2]:
        return "likely_infinite", estimates[-1]
    return "finite", estimates[-1]


def assumption_check(pair: DistributionPair, fn: MomentFunction,
                     orders: Sequence[float], seed: int = 0,
                     mc_base_size: int = 50_000, growth_factor: float = 3.0,
                     quadrature: QuadratureSpec | None = None) -> DiagnosticsReport:
    """Divergence and moment finiteness verdicts over a grid of orders.

    For each candidate ratio exponent the report carries the divergence
    verdict (quadrature) and the Monte Carlo verdict for the conjugate
    moment of ``fn``.  The feasible range is the sub-grid where both are
    finite; these are verdicts, not failures.
    """
    report = DiagnosticsReport()
    feasible: list[float] = []
    for order in orders:
        if order <= 1.0:
            raise ValueError("assumption grid must contain orders > 1")
        holder = HolderConjugates.from_ratio_exponent(float(order))
        try:
            d = renyi_divergence(pair, holder.p, quadrature)
            renyi_verdict = "infinite" if math.isinf(d) else "finite"
            renyi_value: float | str = d
        except QuadratureError:
            renyi_verdict = "undetermined"
            renyi_value = "undetermined"
        report.add(CheckResult(
            check="renyi_divergence",
            params={"order": order},
            value=renyi_value if isinstance(renyi_value, float) else renyi_value,
            method="adaptive_quadrature",
            passed=None,
        ))
        report.add(CheckResult(
            check="renyi_verdict",
            params={"order": order},
            value=renyi_verdict,
            method="divergence_heuristic",
            passed=None,
        ))
        moment_verdict, moment_value = _moment_growth_verdict(
            pair, fn, 2.0 * holder.q, seed=seed, base_size=mc_base_size,
            growth_factor=growth_factor,
        )
        report.add(CheckResult(
            check="test_function_moment",
            params={"order": order, "exponent": 2.0 * holder.q},
            value=moment_value,
            method="monte_carlo_doubling",
            passed=None,
        ))
        report.add(CheckResult(
            check="test_function_moment_verdict",
            params={"order": order, "exponent": 2.0 * holder.q},
            value=moment_verdict,
            method="growth_heuristic",
            passed=None,
        ))
        if renyi_verdict == "finite" and moment_verdict == "finite":
            feasible.append(float(order))
    report.add(CheckResult(
        check="feasible_orders",
        params={"grid": list(float(o) for o in orders)},
        value=",".join(f"{o:g}" for o in feasible) if feasible else "none",
        method="combined_verdicts",
        passed=None,
    ))
    return report


# ---------------------------------------------------------------------------
# binned cell statistics and the density-ratio limit check


@dataclass(frozen=True, eq=False)
class BinnedCellStats:
    """Seed-pooled per-bin averages of scaled Voronoi weights."""

    edges: np.ndarray
    midpoints: np.ndarray
    counts: np.ndarray
    mean_scaled_weight: np.ndarray      # average of n * weight
    mean_scaled_weight_sq: np.ndarray   # average of (n * weight)**2
    ratio_at_midpoint: np.ndarray


def binned_cell_statistics(pair: DistributionPair, n: int, m: int,
                           seeds: Sequence[int], bins: int = 20,
                           workers: int = 1) -> BinnedCellStats:
    """Pool scaled cell weights into equal-probability bins of mu1."""
    if pair.dim != 1:
        raise ValueError("cell statistics are defined for 1-D pairs only")
    edges = np.asarray(pair.mu1.quantile(np.linspace(0.0, 1.0, bins + 1)), dtype=float)
    sums = np.zeros(bins)
    sums_sq = np.zeros(bins)
    counts = np.zeros(bins, dtype=np.int64)
    for seed in seeds:
        data = sample_points(pair.mu1, n, seed=int(seed), stream=_STREAM_DATA)
        index = build_index(data, tie_seed=int(seed))
        draws = sample_points(pair.mu0, m, seed=int(seed), stream=_STREAM_TARGET)
        w = voronoi_weights(index, draws, workers=workers)
        scaled = n * w.weights
        bin_idx = np.clip(np.searchsorted(edges, data.points[:, 0], side="right") - 1, 0, bins - 1)
        sums += np.bincount(bin_idx, weights=scaled, minlength=bins)
        sums_sq += np.bincount(bin_idx, weights=scaled**2, minlength=bins)
        counts += np.bincount(bin_idx, minlength=bins)
    with np.errstate(invalid="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        mean_sq = np.where(counts > 0, sums_sq / np.maximum(counts, 1), np.nan)
    mids = 0.5 * (edges[:-1] + edges[1:])
    ratio = np.asarray(density_ratio_at(pair, mids), dtype=float)
    return BinnedCellStats(
        edges=edges, midpoints=mids, counts=counts,
        mean_scaled_weight=mean, mean_scaled_weight_sq=mean_sq,
        ratio_at_midpoint=ratio,
    )


def voronoi_limit_check(pair: DistributionPair, n_grid: Sequence[int], m: int,
                        bins: int = 20, seeds: Sequence[int] = (0,),
                        max_deviation: Optional[float] = None,
                        workers: int = 1) -> DiagnosticsReport:
    """Compare seed-averaged scaled cell weights to the density ratio.

    For each n the report carries the maximum relative deviation over the
    interior bins (the two boundary bins are excluded, where the ratio may
    degenerate).  A final row flags whether the deviation is
    non-increasing along the grid.  Bins that received no data points are
    skipped and noted.
    """
    report = DiagnosticsReport()
    deviations: list[float] = []
    for n in n_grid:
        stats = binned_cell_statistics(pair, int(n), m, seeds, bins=bins, workers=workers)
        interior = slice(1, bins - 1)
        counts = stats.counts[interior]
        mean = stats.mean_scaled_weight[interior]
        ratio = stats.ratio_at_midpoint[interior]
        usable = counts > 0
        skipped = int((~usable).sum())
        if skipped:
            report.add(CheckResult(
                check="voronoi_limit_bins_skipped",
                params={"n": int(n)},
                value=float(skipped),
                method="binned_monte_carlo",
                passed=None,
            ))
        rel = np.abs(mean[usable] - ratio[usable]) / np.where(ratio[usable] > 0, ratio[usable], 1.0)
        dev = float(rel.max()) if rel.size else math.nan
        deviations.append(dev)
        report.add(CheckResult(
            check="voronoi_limit_max_deviation",
            params={"n": int(n), "bins": bins, "seeds": len(tuple(seeds)), "m": m},
            value=dev,
            method="binned_monte_carlo",
            threshold=max_deviation,
            passed=None if max_deviation is None else bool(dev <= max_deviation),
        ))
    if len(deviations) > 1:
        monotone = all(b <= a for a, b in zip(deviations, deviations[1:]))
        report.add(CheckResult(
            check="voronoi_limit_trend",
            params={"n_grid": [int(n) for n in n_grid]},
            value="non-increasing" if monotone else "not monotone",
            method="binned_monte_carlo",
            passed=monotone,
        ))
    return report
