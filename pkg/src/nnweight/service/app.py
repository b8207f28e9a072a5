"""HTTP surface for the experiment runners.

Runs are synchronous: the response returns when the computation is done,
so clients running full-scale benchmarks should disable request timeouts.
Everything needed to reproduce a run rides in the request body, and the
response echoes the resolved request back.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__, experiments, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="nnweight",
        description="Nearest-neighbor importance weighting experiment service",
        version=__version__,
    )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/table1", response_model=schemas.Table1Response)
    def table1(req: schemas.Table1Request) -> schemas.Table1Response:
        result = _run(experiments.run_table1, req)
        rows = [
            schemas.Table1RowModel(
                example=r.example, n=r.n, replicate=r.replicate,
                value=r.value, mu0_direct=r.mu0_direct, limit=r.limit,
            )
            for r in result.rows
        ]
        return schemas.Table1Response(rows=rows, config=req)

    @app.post("/v1/figure-data", response_model=schemas.FigureDataResponse)
    def figure_data(req: schemas.FigureDataRequest) -> schemas.FigureDataResponse:
        result = _run(experiments.run_figure_data, req)

        def models(rows):
            return [
                schemas.FigureRowModel(x=x, weight=w, n_weight=nw, density_ratio=r)
                for x, w, nw, r in rows
            ]

        return schemas.FigureDataResponse(
            rows=models(result.rows),
            subinterval_rows=models(result.subinterval_rows),
            config=req,
        )

    @app.post("/v1/mar-demo", response_model=schemas.MarDemoResponse)
    def mar_demo(req: schemas.MarDemoRequest) -> schemas.MarDemoResponse:
        result = _run(experiments.run_mar_demo, req)
        rows = [
            schemas.MarDemoRowModel(
                method=r.method, query=r.query, value=r.value,
                n_observed=r.n_observed, n_missing=r.n_missing, replicate=r.replicate,
            )
            for r in result.rows
        ]
        return schemas.MarDemoResponse(
            rows=rows, analytic_target=result.analytic_target,
            nn_closer_count=result.nn_closer_count, config=req,
        )

    @app.post("/v1/shift-demo", response_model=schemas.ShiftDemoResponse)
    def shift_demo(req: schemas.ShiftDemoRequest) -> schemas.ShiftDemoResponse:
        result = _run(experiments.run_shift_demo, req)
        rows = [
            schemas.ShiftDemoRowModel(
                hypothesis=r.hypothesis, risk=r.risk, method=r.method, replicate=r.replicate,
            )
            for r in result.rows
        ]
        return schemas.ShiftDemoResponse(
            rows=rows,
            estimated_test_error=result.estimated_test_error,
            true_test_risk=result.true_test_risk,
            selected=result.selected,
            selected_count=result.selected_count,
            config=req,
        )

    @app.post("/v1/diagnostics", response_model=schemas.DiagnosticsResponse)
    def diagnostics(req: schemas.DiagnosticsRequest) -> schemas.DiagnosticsResponse:
        report = _run(experiments.run_diagnostics, req)
        rows = [
            schemas.DiagnosticsRowModel(
                check=check, params=params, value=value, threshold=threshold, verdict=verdict,
            )
            for check, params, value, threshold, verdict in report.rows()
        ]
        return schemas.DiagnosticsResponse(
            rows=rows, all_passed=report.all_passed,
            table_text=report.format_table(), config=req,
        )

    return app


def _run(runner, req):
    try:
        return runner(req)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


app = create_app()
