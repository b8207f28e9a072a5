"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The statistical
criteria are evaluated at fixed master seeds, so the whole gate is
deterministic and reproducible.  Budget is a few minutes on one core;
the benchmark grid fixture dominates.
"""

import math
import sys
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from nnweight.covariate_shift import (
    Loss,
    constant_predictor,
    estimate_test_error,
    fit_ridge,
    select_hypothesis,
)
from nnweight.diagnostics import (
    HolderConjugates,
    binned_cell_statistics,
    variance_bound_estimate,
    voronoi_limit_check,
)
from nnweight.distributions import (
    Beta,
    DistributionPair,
    Gaussian,
    Uniform,
    renyi_divergence,
)
from nnweight.experiments import EXAMPLE_NAMES, example_setup, run_measure_cell
from nnweight.missing_data import (
    MARTable,
    Query,
    complete_case_functional,
    nn_weighted_functional,
    preprocess,
    synthetic_mar_table,
)
from nnweight.nn_index import PointSet, build_index
from nnweight.nn_measure import MomentFunction, VoronoiWeights, estimate_moment, make_moment_function

MASTER = 20240810
BETA_PAIR = DistributionPair(Beta(0.75, 1.0), Beta(1.25, 1.0))
UNIFORM_PAIR = DistributionPair(Uniform(0.0, 1.0), Uniform(0.0, 1.0))
GAUSS_PAIR = DistributionPair(Gaussian(0.0, 2.1), Gaussian(0.0, 1.0))

TOLERANCES = {"beta": 0.03, "gaussian": 0.08, "fat_cantor": 0.06}
LIMITS = {"beta": 1.5, "gaussian": 2.1, "fat_cantor": 2.0}
REPLICATES = {"beta": 30, "gaussian": 10, "fat_cantor": 10}
N_GRID = (100, 1000, 10_000)
M = 1_000_000


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    print(line, file=sys.stderr)


@pytest.fixture(scope="module")
def grids():
    """Seed-replicated estimates per (example, n) at the benchmark budget."""
    out = {}
    for name in EXAMPLE_NAMES:
        setup = example_setup(name)
        ex_idx = EXAMPLE_NAMES.index(name)
        for n in N_GRID:
            cells = [
                run_measure_cell(setup.pair, setup.fn, n, M, MASTER, rep,
                                 cell_key=(1, ex_idx))
                for rep in range(REPLICATES[name])
            ]
            out[(name, n)] = np.array([c.value for c in cells])
    return out


def test_criterion_1_benchmark_table_reproduction(grids):
    ok = True
    details = []
    for name in EXAMPLE_NAMES:
        mean = float(grids[(name, 10_000)].mean())
        gap = abs(mean - LIMITS[name])
        good = gap <= TOLERANCES[name]
        ok &= good
        details.append(f"{name} mean={mean:.4f} |gap|={gap:.4f}<=tol {TOLERANCES[name]}")
    report("criterion 1 (table reproduction, n=1e4, m=1e6)", ok, "; ".join(details))
    assert ok


def test_criterion_2_convergence_trend(grids):
    ok = True
    details = []
    for name in EXAMPLE_NAMES:
        maes = [float(np.abs(grids[(name, n)] - LIMITS[name]).mean()) for n in N_GRID]
        good = maes[2] < maes[1] < maes[0]
        ok &= good
        details.append(f"{name} MAE {maes[0]:.4f}>{maes[1]:.4f}>{maes[2]:.4f}")
    report("criterion 2 (error decreasing in n)", ok, "; ".join(details))
    assert ok


def test_criterion_3_variance_trend(grids):
    v_small = float(grids[("beta", 100)].var(ddof=1))
    v_large = float(grids[("beta", 10_000)].var(ddof=1))
    ok = v_large < 0.25 * v_small
    report("criterion 3 (variance trend, beta, 30 seeds)", ok,
           f"var(n=1e4)={v_large:.3g} vs 25% of var(n=1e2)={0.25 * v_small:.3g}")
    assert ok


def test_criterion_4_variance_bound():
    res = variance_bound_estimate(
        BETA_PAIR, make_moment_function("inv_quarter_power"),
        HolderConjugates.from_ratio_exponent(2.0),
        n=1000, m=200_000, seeds=[MASTER + k for k in range(30)], probe_m=100_000,
    )
    ok = res.satisfied and not res.infinite_bound
    report("criterion 4 (variance bound, beta, order 2, n=1e3, 30 seeds)", ok,
           f"empirical var={res.empirical_variance:.3g} <= bound={res.bound_value:.3g}")
    assert ok


def test_criterion_5_voronoi_limit():
    rep_uniform = voronoi_limit_check(
        UNIFORM_PAIR, n_grid=[1000], m=100_000, bins=20,
        seeds=[MASTER + k for k in range(150)], max_deviation=0.05,
    )
    row = [c for c in rep_uniform.checks if c.check == "voronoi_limit_max_deviation"][0]
    uniform_ok = bool(row.passed)

    rep_beta = voronoi_limit_check(
        BETA_PAIR, n_grid=list(N_GRID), m=200_000, bins=20,
        seeds=[MASTER + k for k in range(20)],
    )
    trend = [c for c in rep_beta.checks if c.check == "voronoi_limit_trend"][0]
    devs = [c.value for c in rep_beta.checks if c.check == "voronoi_limit_max_deviation"]
    beta_ok = bool(trend.passed)

    ok = uniform_ok and beta_ok
    report("criterion 5 (cell-measure limit)", ok,
           f"uniform max dev={row.value:.4f}<=0.05; beta devs {', '.join(f'{d:.4f}' for d in devs)} non-increasing={beta_ok}")
    assert ok


def test_criterion_6_second_moment_bound():
    stats = binned_cell_statistics(
        BETA_PAIR, n=1000, m=200_000, seeds=[MASTER + k for k in range(10)], bins=20,
    )
    interior = slice(1, 19)
    usable = stats.counts[interior] > 0
    lhs = stats.mean_scaled_weight_sq[interior][usable]
    rhs = 2.5 * stats.ratio_at_midpoint[interior][usable] ** 2
    worst = float(np.max(lhs / rhs))
    ok = bool(np.all(lhs <= rhs))
    report("criterion 6 (squared cell measure bound, beta, n=1e3)", ok,
           f"max bin ratio lhs/rhs={worst:.3f} (must be <= 1)")
    assert ok


def test_criterion_7_exactness():
    # normalization as exact rationals
    rng = np.random.default_rng(MASTER)
    data = PointSet(rng.random((100, 1)))
    index = build_index(data, tie_seed=0)
    draws = PointSet(rng.random((10_000, 1)))
    from nnweight.nn_measure import voronoi_weights

    w = voronoi_weights(index, draws)
    norm_ok = int(w.counts.sum()) == w.m and sum(Fraction(int(c), w.m) for c in w.counts) == Fraction(1)

    # constant-function reproduction: bitwise for dyadic constants, a few ulp in general
    dyadic = estimate_moment(w, data, MomentFunction(lambda X: np.full(X.shape[0], 0.5))).value
    general = estimate_moment(w, data, MomentFunction(lambda X: np.full(X.shape[0], math.pi))).value
    const_ok = dyadic == 0.5 and abs(general - math.pi) <= 64 * np.finfo(float).eps * math.pi

    # dual-form identity is asserted inside the estimator on every call
    dual_ok = True
    for seed in range(50):
        r = np.random.default_rng(seed)
        n_obs, n_mis = int(r.integers(1, 40)), int(r.integers(1, 40))
        table = MARTable(
            covariates=r.normal(size=(n_obs + n_mis, 2)),
            responses=np.concatenate([r.normal(size=n_obs), np.full(n_mis, np.nan)]).reshape(-1, 1),
        )
        est = nn_weighted_functional(table, Query(transform=lambda X, Y: Y[:, 0] ** 2 + X[:, 1]),
                                     tie_seed=seed)
        dual_ok &= est.status == "ok"

    # exact-NN agreement with an independent brute-force scan: the returned
    # neighbor must sit in the oracle's minimal-distance set (ties as sets)
    nn_ok = True
    r = np.random.default_rng(MASTER + 1)
    for trial in range(1000):
        n = int(r.integers(1, 201))
        p = int(r.integers(1, 6))
        pts = r.normal(size=(n, p))
        x = r.normal(size=p)
        got_i, got_d = build_index(PointSet(pts), tie_seed=trial).query_knn(x, 1)[0]
        d = np.sqrt(((pts - x) ** 2).sum(axis=1))
        nn_ok &= d[got_i] == d.min() and got_d == pytest.approx(d.min(), rel=1e-12)

    ok = norm_ok and const_ok and dual_ok and nn_ok
    report("criterion 7 (exactness)", ok,
           f"normalization={norm_ok}, constant={const_ok}, dual-form={dual_ok}, nn-oracle(1000)={nn_ok}")
    assert ok


def test_criterion_8_mar_consistency():
    from nnweight.missing_data import SyntheticMARModel

    model = SyntheticMARModel()
    num, _ = integrate.quad(lambda x: x * (1.0 - model.observe_probability(np.array([x]))[0]), 0, 1)
    den, _ = integrate.quad(lambda x: 1.0 - model.observe_probability(np.array([x]))[0], 0, 1)
    target = num / den

    errs, cc_worse = [], 0
    for k in range(10):
        table = preprocess(synthetic_mar_table(20_000, seed=MASTER + k))
        nn = nn_weighted_functional(table, Query.mean_response(), tie_seed=MASTER + k)
        cc = complete_case_functional(table, Query.mean_response())
        errs.append(abs(nn.value - target))
        cc_worse += abs(cc.value - target) > abs(nn.value - target)
    mean_err = float(np.mean(errs))
    ok = mean_err <= 0.02 and cc_worse >= 8
    report("criterion 8 (MAR consistency, N=2e4, 10 seeds)", ok,
           f"target={target:.4f}, nn mean err={mean_err:.4f}<=0.02, complete-case worse {cc_worse}/10")
    assert ok


def test_criterion_9_covariate_shift():
    rel_errors = []
    loss = Loss.squared_error()
    for k in range(10):
        rng = np.random.default_rng(MASTER + k)
        train_X = rng.normal(0.0, 1.0, size=(2000, 1))
        train_Y = 2.0 * train_X[:, 0] + rng.normal(0, 0.5, size=2000)
        val_X = rng.normal(0.0, 1.0, size=(2000, 1))
        val_Y = 2.0 * val_X[:, 0] + rng.normal(0, 0.5, size=2000)
        test_X = rng.normal(0.0, np.sqrt(1.5), size=(4000, 1))
        h = fit_ridge(train_X, train_Y)
        est = estimate_test_error(val_X, loss(h(val_X), val_Y), test_X, tie_seed=k)
        oracle_X = rng.normal(0.0, np.sqrt(1.5), size=(100_000, 1))
        oracle_Y = 2.0 * oracle_X[:, 0] + rng.normal(0, 0.5, size=100_000)
        true_risk = float(loss(h(oracle_X), oracle_Y).mean())
        rel_errors.append(abs(est.value - true_risk) / true_risk)
    mean_rel = float(np.mean(rel_errors))

    wins = 0
    for k in range(10):
        rng = np.random.default_rng(MASTER + 100 + k)
        train_X = rng.uniform(0, 1, size=(3000, 1))
        train_Y = (train_X[:, 0] > 0.8).astype(float) + rng.normal(0, 0.1, size=3000)
        test_X = rng.uniform(0.8, 1.0, size=(1500, 1))
        h0, h1 = constant_predictor(0.0), constant_predictor(1.0)
        best, _ = select_hypothesis([h0, h1], train_X, train_Y, test_X, loss, tie_seed=k)
        wins += best is h1

    ok = mean_rel <= 0.10 and wins >= 9
    report("criterion 9 (covariate shift, 10 seeds)", ok,
           f"test-error rel err={mean_rel:.4f}<=0.10; shift-correct selection {wins}/10")
    assert ok


def test_criterion_10_out_of_reach_and_assumption_verdicts():
    # The voyage-database totals (10,644,376 weighted / 11,569,160 complete-case)
    # are not reproducible here: the database is not bundled. The same pipeline
    # is exercised on synthetic tables by criteria 7 and 8 instead.
    beta_finite = math.isfinite(renyi_divergence(BETA_PAIR, 2.0))
    gauss_infinite = math.isinf(renyi_divergence(GAUSS_PAIR, 2.0))
    # symbolic oracles
    assert (2.0 / 2.1 - 1.0) < 0 and (2.0 * (-0.5) + 0.25) > -1.0
    ok = beta_finite and gauss_infinite
    report("criterion 10 (assumption verdicts match symbolic oracles)", ok,
           f"beta order-2 finite={beta_finite}; gaussian order-2 infinite={gauss_infinite}; "
           "voyage totals not reproducible (dataset not bundled), pipeline covered by criteria 7-8")
    assert ok
