"""Command-line client for the experiment service.

Each verb loads a config file, sends the validated request to the service
(by default an in-process instance, or ``--server URL`` for a remote one),
and writes the response as comma-separated files with the resolved config
embedded in ``#`` comment lines.

Exit codes: 0 success, 1 validation error, 2 tolerance failure in check
modes.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Optional

import httpx
from pydantic import BaseModel

from . import __version__
from .config import ConfigError, load_config

_ENDPOINTS = {
    "table1": "/v1/table1",
    "figure_data": "/v1/figure-data",
    "mar_demo": "/v1/mar-demo",
    "shift_demo": "/v1/shift-demo",
    "diagnostics": "/v1/diagnostics",
}
_VERB_TO_KIND = {
    "table1": "table1",
    "figure-data": "figure_data",
    "mar-demo": "mar_demo",
    "shift-demo": "shift_demo",
    "diagnostics": "diagnostics",
}

# a full-scale run can take minutes; warn past this single-core budget
_RUNTIME_WARN_SECONDS = 900.0


def _post(path: str, payload: dict, server: Optional[str]) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    async def go() -> httpx.Response:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://nnweight.local",
                                     timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _config_preamble(kind: str, config: dict) -> list[str]:
    return [
        f"# nnweight {kind} run",
        f"# config: {json.dumps(config, sort_keys=True)}",
        f"# master_seed: {config.get('master_seed')}",
    ]


def _write_csv(path: Path, kind: str, config: dict, header: list[str],
               rows: list[list]) -> None:
    lines = _config_preamble(kind, config)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sig6(value) -> str:
    if value is None:
        return "undefined"
    return f"{value:.6g}"


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nnweight",
        description="Nearest-neighbor importance weighting experiments",
    )
    parser.add_argument("--version", action="version", version=f"nnweight {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in _VERB_TO_KIND:
        p = sub.add_parser(verb, help=f"run the {verb} experiment from a config file")
        p.add_argument("--config", required=True, help="path to the experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config master seed")
        p.add_argument("--out", default=None, help="output file path (default from config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for neighbor queries")
        p.add_argument("--server", default=None, help="base URL of a running service (default: in-process)")
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    args = parser.parse_args(argv)

    if args.verb == "serve":
        import uvicorn

        uvicorn.run("nnweight.service.app:app", host=args.host, port=args.port)
        return 0

    kind = _VERB_TO_KIND[args.verb]
    try:
        loaded = load_config(args.config, seed_override=args.seed,
                             threads_override=args.threads, expected_kind=kind)
    except ConfigError as exc:
        print("config validation failed:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 1

    request = loaded.request
    if kind == "table1":
        est = request.estimated_seconds()
        if est > _RUNTIME_WARN_SECONDS:
            print(f"warning: estimated runtime around {est/60:.0f} minutes on one core",
                  file=sys.stderr)

    try:
        response = _post(_ENDPOINTS[kind], request.model_dump(mode="json"), args.server)
    except httpx.HTTPError as exc:
        print(f"service request failed: {exc}", file=sys.stderr)
        return 1
    if response.status_code in (400, 422):
        print("request rejected by the service:", file=sys.stderr)
        detail = response.json().get("detail", response.text)
        if isinstance(detail, list):
            for item in detail:
                loc = ".".join(str(p) for p in item.get("loc", []))
                print(f"  - {loc}: {item.get('msg')}", file=sys.stderr)
        else:
            print(f"  - {detail}", file=sys.stderr)
        return 1
    if response.status_code != 200:
        print(f"service error {response.status_code}: {response.text}", file=sys.stderr)
        return 1

    body = response.json()
    out = Path(args.out or loaded.out or f"{args.verb.replace('-', '_')}.csv")
    return _emit(kind, body, out)


def _emit(kind: str, body: dict, out: Path) -> int:
    config = body["config"]
    if kind == "table1":
        rows = [
            [r["example"], r["n"], "mean" if r["replicate"] is None else r["replicate"],
             r["value"], r["mu0_direct"], r["limit"]]
            for r in body["rows"]
        ]
        _write_csv(out, kind, config, ["example", "n", "replicate", "value", "mu0_direct", "limit"], rows)
        print(f"wrote {out}")
        for r in body["rows"]:
            if r["replicate"] is None:
                print(f"  {r['example']:>10}  n={r['n']:<7} mean={_sig6(r['value'])} "
                      f"mu0_direct={_sig6(r['mu0_direct'])} limit={_sig6(r['limit'])}")
        return 0
    if kind == "figure_data":
        header = ["x", "weight", "n_weight", "density_ratio"]
        rows = [[r["x"], r["weight"], r["n_weight"], r["density_ratio"]] for r in body["rows"]]
        _write_csv(out, kind, config, header, rows)
        print(f"wrote {out} ({len(rows)} points)")
        if body["subinterval_rows"]:
            sub_out = out.with_name(out.stem + "_subinterval" + out.suffix)
            sub_rows = [[r["x"], r["weight"], r["n_weight"], r["density_ratio"]]
                        for r in body["subinterval_rows"]]
            _write_csv(sub_out, kind, config, header, sub_rows)
            print(f"wrote {sub_out} ({len(sub_rows)} points)")
        return 0
    if kind == "mar_demo":
        rows = [
            [r["method"], r["query"], r["value"], r["n_observed"],
             r["n_observed"] + r["n_missing"]]
            for r in body["rows"]
        ]
        if body.get("analytic_target") is not None:
            rows.append(["analytic_target", body["rows"][0]["query"], body["analytic_target"], "", ""])
        _write_csv(out, kind, config, ["method", "query", "value", "n", "N"], rows)
        print(f"wrote {out}")
        values: dict[str, list[float]] = {}
        for r in body["rows"]:
            if r["value"] is not None:
                values.setdefault(r["method"], []).append(r["value"])
        for method, vals in values.items():
            print(f"  {method:>14}: mean={_sig6(sum(vals)/len(vals))} over {len(vals)} runs")
        if body.get("analytic_target") is not None:
            print(f"  analytic_target: {_sig6(body['analytic_target'])}")
        if body.get("nn_closer_count") is not None:
            print(f"  nn_weighted closer to target in {body['nn_closer_count']}"
                  f"/{config['seeds']} runs")
        return 0
    if kind == "shift_demo":
        rows = [[r["hypothesis"], r["risk"], r["method"]] for r in body["rows"]]
        _write_csv(out, kind, config, ["hypothesis", "risk", "method"], rows)
        print(f"wrote {out}")
        if body.get("estimated_test_error") is not None:
            print(f"  estimated test error: {_sig6(body['estimated_test_error'])}")
        if body.get("true_test_risk") is not None:
            print(f"  hidden-label true risk: {_sig6(body['true_test_risk'])}")
        if body.get("selected") is not None:
            print(f"  selected hypothesis: {body['selected']} {body.get('selected_count')}")
        return 0
    # diagnostics
    rows = [[r["check"], r["params"], r["value"], r["threshold"], r["verdict"]]
            for r in body["rows"]]
    _write_csv(out, kind, config, ["check", "params", "value", "threshold", "pass"], rows)
    print(f"wrote {out}")
    print(body["table_text"])
    if not body["all_passed"]:
        print("one or more checks failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
