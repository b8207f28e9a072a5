"""Config-driven experiment runners.

Each runner consumes a validated request model and returns a plain result
object with rows ready for serialization.  All randomness derives from a
master seed through named spawn keys, so any (request, master_seed) pair
reproduces byte-identical results regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import schemas
from .covariate_shift import (
    Loss,
    constant_predictor,
    empirical_risk,
    estimate_test_error,
    fit_ridge,
    select_hypothesis,
)
from .diagnostics import (
    CheckResult,
    DiagnosticsReport,
    HolderConjugates,
    assumption_check,
    variance_bound_estimate,
    voronoi_limit_check,
)
from .distributions import (
    Beta,
    Distribution,
    DistributionPair,
    FatCantorUniform,
    Gaussian,
    Uniform,
)
from .missing_data import (
    Query,
    complete_case_functional,
    ingest_table,
    nn_weighted_functional,
    preprocess,
    synthetic_mar_table,
)
from .nn_index import PointSet, build_index
from .nn_measure import (
    MomentFunction,
    cell_measure_profile,
    estimate_moment,
    make_moment_function,
    voronoi_weights,
)


@dataclass(frozen=True)
class ExampleSetup:
    """A named benchmark pair with its test function and known limit."""

    name: str
    pair: DistributionPair
    fn: MomentFunction
    limit: float


def example_setup(name: str) -> ExampleSetup:
    """The three reference examples used by the benchmark table.

    beta        target Beta(0.75, 1), sampling Beta(1.25, 1), fn x**-0.25, limit 1.5
    gaussian    target Normal(0, 2.1), sampling Normal(0, 1), fn x**2, limit 2.1
    fat_cantor  target uniform on the depth-5 fat Cantor set, sampling
                Uniform(0, 1), fn twice the set indicator, limit 2
    """
    if name == "beta":
        return ExampleSetup(
            name, DistributionPair(Beta(0.75, 1.0), Beta(1.25, 1.0)),
            make_moment_function("inv_quarter_power"), 1.5,
        )
    if name == "gaussian":
        return ExampleSetup(
            name, DistributionPair(Gaussian(0.0, 2.1), Gaussian(0.0, 1.0)),
            make_moment_function("square"), 2.1,
        )
    if name == "fat_cantor":
        return ExampleSetup(
            name, DistributionPair(FatCantorUniform(5), Uniform(0.0, 1.0)),
            make_moment_function("cantor_indicator", depth=5), 2.0,
        )
    raise ValueError(f"unknown example {name!r}; pick from beta, gaussian, fat_cantor")


EXAMPLE_NAMES = ("beta", "gaussian", "fat_cantor")


def _cell_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)))


def _cell_tie_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key) + (255,))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class MeasureCell:
    """One (pair, n, m, replicate) evaluation of the weighted estimator."""

    value: float
    mu0_direct: float
    n: int
    m: int
    replicate: int


def run_measure_cell(pair: DistributionPair, fn: MomentFunction, n: int, m: int,
                     master_seed: int, replicate: int, cell_key: tuple[int, ...] = (),
                     workers: int = 1) -> MeasureCell:
    """Draw data and target samples, weight, and average the function.

    Also evaluates the direct Monte Carlo average of ``fn`` over a fresh
    target sample of the same size, the natural comparison column.
    """
    key = tuple(cell_key) + (int(n), int(replicate))
    rng = _cell_rng(master_seed, *key)
    data = PointSet(pair.mu1.sample(int(n), rng))
    index = build_index(data, tie_seed=_cell_tie_seed(master_seed, *key))
    draws = PointSet(pair.mu0.sample(int(m), rng))
    weights = voronoi_weights(index, draws, workers=workers)
    est = estimate_moment(weights, data, fn, seed=replicate)
    direct = PointSet(pair.mu0.sample(int(m), rng))
    return MeasureCell(
        value=est.value,
        mu0_direct=float(np.mean(fn(direct.points))),
        n=int(n), m=int(m), replicate=int(replicate),
    )


# ---------------------------------------------------------------------------
# benchmark table


@dataclass(frozen=True)
class Table1Row:
    example: str
    n: int
    replicate: Optional[int]  # None marks the seed-averaged summary row
    value: float
    mu0_direct: float
    limit: float


@dataclass(frozen=True)
class Table1Result:
    rows: tuple[Table1Row, ...]

    def summary(self) -> list[Table1Row]:
        return [r for r in self.rows if r.replicate is None]


def run_table1(req: schemas.Table1Request) -> Table1Result:
    """Seed-replicated estimates for each example and data size."""
    rows: list[Table1Row] = []
    for ex_idx, name in enumerate(req.examples):
        setup = example_setup(name)
        for n in req.n_grid:
            cells = [
                run_measure_cell(setup.pair, setup.fn, n, req.m, req.master_seed,
                                 rep, cell_key=(1, ex_idx), workers=req.threads)
                for rep in range(req.seeds)
            ]
            rows.extend(
                Table1Row(name, n, c.replicate, c.value, c.mu0_direct, setup.limit)
                for c in cells
            )
            rows.append(Table1Row(
                name, n, None,
                float(np.mean([c.value for c in cells])),
                float(np.mean([c.mu0_direct for c in cells])),
                setup.limit,
            ))
    return Table1Result(rows=tuple(rows))


# ---------------------------------------------------------------------------
# figure data


@dataclass(frozen=True)
class FigureDataResult:
    rows: tuple[tuple[float, float, float, float], ...]  # x, weight, n_weight, ratio
    subinterval_rows: tuple[tuple[float, float, float, float], ...]
    n: int
    m: int


def run_figure_data(req: schemas.FigureDataRequest) -> FigureDataResult:
    """Per-point cell weights next to the density ratio, sorted by location."""
    pair, _ = resolve_pair_and_fn(req.example, req.pair, req.fn)
    if pair.dim != 1:
        raise ValueError("figure data is defined for 1-D pairs")
    key = (2, int(req.n))
    rng = _cell_rng(req.master_seed, *key)
    data = PointSet(pair.mu1.sample(req.n, rng))
    index = build_index(data, tie_seed=_cell_tie_seed(req.master_seed, *key))
    draws = PointSet(pair.mu0.sample(req.m, rng))
    weights = voronoi_weights(index, draws, workers=req.threads)
    profile = cell_measure_profile(weights, data, pair)
    rows = tuple(
        (float(x), float(w), float(nw), float(r)) for x, w, nw, r in profile.rows()
    )
    lo, hi = req.subinterval if req.subinterval else (None, None)
    sub = tuple(r for r in rows if lo is not None and lo <= r[0] <= hi)
    return FigureDataResult(rows=rows, subinterval_rows=sub, n=req.n, m=req.m)


def resolve_pair_and_fn(example: Optional[str], pair_model: Optional[schemas.PairModel],
                        fn_model: Optional[schemas.MomentFunctionModel]
                        ) -> tuple[DistributionPair, MomentFunction]:
    """Resolve a named example or an explicit pair/function description."""
    if example is not None:
        setup = example_setup(example)
        pair, fn = setup.pair, setup.fn
    elif pair_model is not None:
        pair = pair_model.build()
        fn = make_moment_function("identity")
    else:
        raise ValueError("request needs either an example name or an explicit pair")
    if fn_model is not None:
        fn = fn_model.build()
    return pair, fn


# ---------------------------------------------------------------------------
# missing-data demo


QUERY_TRANSFORMS = {
    "y": lambda X, Y: Y[:, 0],
    "y_squared": lambda X, Y: Y[:, 0] ** 2,
    "log_y": lambda X, Y: np.log(Y[:, 0]),
}


def build_query(model: schemas.QueryModel) -> Query:
    transform = QUERY_TRANSFORMS[model.transform]
    where = None
    if model.filter_kind != "none":
        bound = float(model.filter_value)
        if model.filter_kind == "x_below":
            where = lambda X, Y, b=bound: X[:, 0] < b
        else:
            where = lambda X, Y, b=bound: X[:, 0] > b
    parts = [f"{model.transform}"]
    if where is not None:
        parts.append(f"{model.filter_kind} {model.filter_value:g}")
    return Query(transform=transform, where=where, description=" ".join(parts))


@dataclass(frozen=True)
class MarDemoRow:
    method: str
    query: str
    value: Optional[float]
    n_observed: int
    n_missing: int
    replicate: Optional[int]


@dataclass(frozen=True)
class MarDemoResult:
    rows: tuple[MarDemoRow, ...]
    analytic_target: Optional[float]
    nn_closer_count: Optional[int]
    seeds: int


def run_mar_demo(req: schemas.MarDemoRequest) -> MarDemoResult:
    """Weighted versus complete-case estimates, with the analytic target
    for the synthetic model."""
    query = build_query(req.query)
    rows: list[MarDemoRow] = []
    if req.source == "csv":
        table = preprocess(req.to_table())
        nn = nn_weighted_functional(table, query, tie_seed=_cell_tie_seed(req.master_seed, 3))
        cc = complete_case_functional(table, query)
        for est in (nn, cc):
            rows.append(MarDemoRow(est.method, query.description, est.value,
                                   est.n_observed, est.n_missing, None))
        return MarDemoResult(rows=tuple(rows), analytic_target=None,
                             nn_closer_count=None, seeds=0)

    target = _synthetic_target(req.query)
    nn_closer = 0
    for rep in range(req.seeds):
        seed = int(_cell_rng(req.master_seed, 3, rep).integers(2**31))
        table = preprocess(synthetic_mar_table(req.rows, seed=seed))
        nn = nn_weighted_functional(table, query, tie_seed=seed)
        cc = complete_case_functional(table, query)
        rows.append(MarDemoRow("nn_weighted", query.description, nn.value,
                               nn.n_observed, nn.n_missing, rep))
        rows.append(MarDemoRow("complete_case", query.description, cc.value,
                               cc.n_observed, cc.n_missing, rep))
        if target is not None and nn.value is not None and cc.value is not None:
            nn_closer += abs(nn.value - target) < abs(cc.value - target)
    return MarDemoResult(
        rows=tuple(rows), analytic_target=target,
        nn_closer_count=nn_closer if target is not None else None,
        seeds=req.seeds,
    )


def _synthetic_target(query_model: schemas.QueryModel) -> Optional[float]:
    """Quadrature value of the filtered transform over the missing population."""
    from scipy import integrate

    from .missing_data import SyntheticMARModel

    model = SyntheticMARModel()

    def missing_weight(x: float) -> float:
        return 1.0 - float(model.observe_probability(np.array([x]))[0])

    if query_model.transform == "y":
        mean_fn = lambda x: x
    elif query_model.transform == "y_squared":
        mean_fn = lambda x: x * x + model.noise_sd**2
    else:
        return None  # no closed conditional mean for log under Gaussian noise
    lo, hi = 0.0, 1.0
    if query_model.filter_kind == "x_below":
        hi = min(hi, query_model.filter_value)
    elif query_model.filter_kind == "x_above":
        lo = max(lo, query_model.filter_value)
    num, _ = integrate.quad(lambda x: mean_fn(x) * missing_weight(x), lo, hi)
    den, _ = integrate.quad(missing_weight, 0.0, 1.0)
    if query_model.filter_kind == "none":
        # unfiltered query: plain conditional mean over the missing population
        den_f, _ = integrate.quad(missing_weight, lo, hi)
        return num / den_f
    # filtered weighted functional: indicator-weighted mean over all missing rows
    return num / den


# ---------------------------------------------------------------------------
# covariate-shift demo


@dataclass(frozen=True)
class ShiftDemoRow:
    hypothesis: str
    risk: float
    method: str
    replicate: int


@dataclass(frozen=True)
class ShiftDemoResult:
    rows: tuple[ShiftDemoRow, ...]
    estimated_test_error: Optional[float]
    true_test_risk: Optional[float]
    selected: Optional[str]
    selected_count: Optional[dict[str, int]]
    seeds: int


def run_shift_demo(req: schemas.ShiftDemoRequest) -> ShiftDemoResult:
    if req.scenario == "linear_shift":
        return _linear_shift_demo(req)
    return _constant_selection_demo(req)


def _linear_shift_demo(req: schemas.ShiftDemoRequest) -> ShiftDemoResult:
    """Fit a line on the training law, estimate its risk under the shifted
    test law, and compare to a hidden-label oracle."""
    loss = Loss.squared_error()
    rows: list[ShiftDemoRow] = []
    estimates, oracles = [], []
    for rep in range(req.seeds):
        rng = _cell_rng(req.master_seed, 4, rep)
        train_X = rng.normal(0.0, 1.0, size=(req.train_rows, 1))
        train_Y = 2.0 * train_X[:, 0] + rng.normal(0.0, req.noise_sd, size=req.train_rows)
        val_X = rng.normal(0.0, 1.0, size=(req.validation_rows, 1))
        val_Y = 2.0 * val_X[:, 0] + rng.normal(0.0, req.noise_sd, size=req.validation_rows)
        test_X = rng.normal(0.0, req.test_sd_scale, size=(req.test_rows, 1))

        h = fit_ridge(train_X, train_Y)
        val_losses = loss(h(val_X), val_Y)
        est = estimate_test_error(val_X, val_losses, test_X,
                                  tie_seed=_cell_tie_seed(req.master_seed, 4, rep))
        # oracle: labels for the test law stay hidden from the estimator
        oracle_X = rng.normal(0.0, req.test_sd_scale, size=(100_000, 1))
        oracle_Y = 2.0 * oracle_X[:, 0] + rng.normal(0.0, req.noise_sd, size=100_000)
        true_risk = float(loss(h(oracle_X), oracle_Y).mean())
        estimates.append(est.value)
        oracles.append(true_risk)
        rows.append(ShiftDemoRow(h.label, est.value, "nn_test_error", rep))
        rows.append(ShiftDemoRow(h.label, true_risk, "hidden_label_oracle", rep))
    return ShiftDemoResult(
        rows=tuple(rows),
        estimated_test_error=float(np.mean(estimates)),
        true_test_risk=float(np.mean(oracles)),
        selected=None, selected_count=None, seeds=req.seeds,
    )


def _constant_selection_demo(req: schemas.ShiftDemoRequest) -> ShiftDemoResult:
    """Two constant predictors under a shifted test law; the weighted risk
    should pick the one matching the test region."""
    loss = Loss.squared_error()
    rows: list[ShiftDemoRow] = []
    counts = {"const=0": 0, "const=1": 0}
    last_selected = ""
    for rep in range(req.seeds):
        rng = _cell_rng(req.master_seed, 5, rep)
        train_X = rng.uniform(0.0, 1.0, size=(req.train_rows, 1))
        train_Y = (train_X[:, 0] > 0.8).astype(float) + rng.normal(0.0, req.noise_sd, size=req.train_rows)
        test_X = rng.uniform(0.8, 1.0, size=(req.test_rows, 1))
        h0, h1 = constant_predictor(0.0), constant_predictor(1.0)
        best, risks = select_hypothesis([h0, h1], train_X, train_Y, test_X, loss,
                                        tie_seed=_cell_tie_seed(req.master_seed, 5, rep))
        counts[best.label] += 1
        last_selected = best.label
        for h, r in zip((h0, h1), risks):
            rows.append(ShiftDemoRow(h.label, r.value, "one_nn_risk", rep))
            rows.append(ShiftDemoRow(h.label, empirical_risk(train_X, train_Y, h, loss),
                                     "training_risk", rep))
    return ShiftDemoResult(
        rows=tuple(rows), estimated_test_error=None, true_test_risk=None,
        selected=max(counts, key=counts.get) if req.seeds else last_selected,
        selected_count=counts, seeds=req.seeds,
    )


# ---------------------------------------------------------------------------
# diagnostics runner


def run_diagnostics(req: schemas.DiagnosticsRequest) -> DiagnosticsReport:
    pair, fn = resolve_pair_and_fn(req.example, req.pair, req.fn)
    seeds = [int(_cell_rng(req.master_seed, 6, r).integers(2**31)) for r in range(req.seeds)]
    report = DiagnosticsReport()
    if "assumptions" in req.checks:
        sub = assumption_check(pair, fn, orders=req.orders, seed=req.master_seed)
        report.checks.extend(sub.checks)
    if "voronoi_limit" in req.checks:
        sub = voronoi_limit_check(pair, n_grid=req.n_grid, m=req.m, bins=req.bins,
                                  seeds=seeds, max_deviation=req.tolerances.max_deviation,
                                  workers=req.threads)
        report.checks.extend(sub.checks)
    if "variance_bound" in req.checks:
        holder = HolderConjugates.from_ratio_exponent(req.orders[-1] if req.orders else 2.0)
        res = variance_bound_estimate(pair, fn, holder, n=req.n_grid[-1], m=req.m,
                                      seeds=seeds, probe_m=min(req.m, 100_000))
        report.add(CheckResult(
            check="variance_bound",
            params={"n": req.n_grid[-1], "order": holder.p, "seeds": len(seeds)},
            value=res.empirical_variance,
            method="replicated_monte_carlo",
            threshold=None if math.isinf(res.bound_value) else res.bound_value,
            passed=res.satisfied,
        ))
        if res.infinite_bound:
            report.add(CheckResult(
                check="variance_bound_vacuous",
                params={"order": holder.p},
                value="infinite ratio term",
                method="adaptive_quadrature",
                passed=None,
            ))
    if "discrepancy_trend" in req.checks:
        from .diagnostics import nn_discrepancy_moment
        from .distributions import sample_points

        values = []
        for n in req.n_grid:
            per_seed = []
            for seed in seeds:
                data = sample_points(pair.mu1, int(n), seed=seed, stream=0)
                index = build_index(data, tie_seed=seed)
                probe = sample_points(pair.mu1, min(req.m, 50_000), seed=seed, stream=2)
                per_seed.append(nn_discrepancy_moment(index, fn, probe, q=1.0))
            values.append(float(np.mean(per_seed)))
            report.add(CheckResult(
                check="nn_discrepancy_moment",
                params={"n": int(n), "exponent": 2.0},
                value=values[-1],
                method="monte_carlo",
                passed=None,
            ))
        if len(values) > 1:
            report.add(CheckResult(
                check="nn_discrepancy_trend",
                params={"n_grid": [int(n) for n in req.n_grid]},
                value="non-increasing" if all(b <= a for a, b in zip(values, values[1:])) else "not monotone",
                method="monte_carlo",
                passed=all(b <= a for a, b in zip(values, values[1:])),
            ))
    return report
