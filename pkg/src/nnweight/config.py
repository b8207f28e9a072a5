"""Experiment config files: a flat key/value format with nested sections.

The grammar is INI as read by ``configparser``: ``[section]`` headers,
``key = value`` lines, ``#``/``;`` comments.  Lists are comma-separated.
The ``[experiment]`` section picks the experiment kind and its scalar
settings; distribution pairs live in ``[pair.mu0]`` / ``[pair.mu1]``,
the test function in ``[eta]``, demo queries in ``[query]``, tabular
column roles in ``[schema]``, file inputs in ``[source]``, and check
thresholds in ``[tolerances]``.

Loading is all-or-nothing: every problem is collected and reported
together, and nothing runs on a partially valid config.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ValidationError

from . import schemas

EXPERIMENT_KINDS = ("table1", "figure_data", "mar_demo", "shift_demo", "diagnostics")

_COMMON_KEYS = {"kind", "master_seed", "threads", "out"}
_KEYS_BY_KIND = {
    "table1": _COMMON_KEYS | {"examples", "n_grid", "m", "seeds"},
    "figure_data": _COMMON_KEYS | {"example", "n", "m", "subinterval"},
    "mar_demo": _COMMON_KEYS | {"source", "rows", "seeds"},
    "shift_demo": _COMMON_KEYS | {
        "scenario", "train_rows", "validation_rows", "test_rows",
        "noise_sd", "test_sd_scale", "seeds",
    },
    "diagnostics": _COMMON_KEYS | {"example", "checks", "orders", "n_grid", "m", "bins", "seeds"},
}


class ConfigError(ValueError):
    """Carries every problem found in a config file."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class LoadedConfig:
    kind: str
    request: BaseModel
    out: Optional[str] = None


class _Collector:
    def __init__(self):
        self.problems: list[str] = []

    def add(self, msg: str) -> None:
        self.problems.append(msg)

    def parse(self, section: str, key: str, raw: str, kind: type):
        try:
            if kind is int:
                return int(raw)
            if kind is float:
                return float(raw)
            return raw
        except ValueError:
            self.add(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}")
            return None

    def parse_list(self, section: str, key: str, raw: str, kind: type) -> list:
        out = []
        for item in raw.split(","):
            item = item.strip()
            if item:
                value = self.parse(section, key, item, kind)
                if value is not None:
                    out.append(value)
        return out


def _section(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(parser[name]) if parser.has_section(name) else {}


def _distribution_dict(section: dict[str, str], name: str, errors: _Collector) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, raw in section.items():
        if key == "kind":
            out["kind"] = raw.strip()
        elif key == "depth":
            out["depth"] = errors.parse(name, key, raw, int)
        else:
            out[key] = errors.parse(name, key, raw, float)
    return out


def load_config(path: str | Path, *, seed_override: Optional[int] = None,
                threads_override: Optional[int] = None,
                expected_kind: Optional[str] = None) -> LoadedConfig:
    """Parse and validate a config file into a request model.

    Raises ConfigError listing every problem found.
    """
    errors = _Collector()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError([f"cannot read config file: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"config syntax error: {exc}"]) from exc

    if not parser.has_section("experiment"):
        raise ConfigError(["missing [experiment] section"])
    exp = _section(parser, "experiment")
    kind = exp.get("kind", "").strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError([f"[experiment] kind must be one of {EXPERIMENT_KINDS}, got {kind!r}"])
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError([
            f"config declares kind = {kind} but the {expected_kind} command was invoked"
        ])

    for key in exp:
        if key not in _KEYS_BY_KIND[kind]:
            errors.add(f"[experiment] unknown key {key!r} for kind {kind}")

    payload: dict[str, Any] = {}
    if "master_seed" in exp:
        payload["master_seed"] = errors.parse("experiment", "master_seed", exp["master_seed"], int)
    if "threads" in exp:
        payload["threads"] = errors.parse("experiment", "threads", exp["threads"], int)
    if seed_override is not None:
        payload["master_seed"] = int(seed_override)
    if threads_override is not None:
        payload["threads"] = int(threads_override)

    if kind == "table1":
        if "examples" in exp:
            payload["examples"] = errors.parse_list("experiment", "examples", exp["examples"], str)
        if "n_grid" in exp:
            payload["n_grid"] = errors.parse_list("experiment", "n_grid", exp["n_grid"], int)
        for key in ("m", "seeds"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], int)
        model: type[BaseModel] = schemas.Table1Request
    elif kind == "figure_data":
        if "example" in exp:
            payload["example"] = exp["example"].strip()
        for key in ("n", "m"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], int)
        if "subinterval" in exp:
            bounds = errors.parse_list("experiment", "subinterval", exp["subinterval"], float)
            if len(bounds) == 2:
                payload["subinterval"] = tuple(bounds)
            else:
                errors.add("[experiment] subinterval needs exactly two comma-separated bounds")
        _attach_pair_and_fn(parser, payload, errors)
        model = schemas.FigureDataRequest
    elif kind == "mar_demo":
        if "source" in exp:
            payload["source"] = exp["source"].strip()
        for key in ("rows", "seeds"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], int)
        query = _section(parser, "query")
        qmodel: dict[str, Any] = {}
        if "transform" in query:
            qmodel["transform"] = query["transform"].strip()
        if "filter" in query:
            parts = query["filter"].split()
            qmodel["filter_kind"] = parts[0]
            if parts[0] != "none":
                if len(parts) == 2:
                    qmodel["filter_value"] = errors.parse("query", "filter", parts[1], float)
                else:
                    errors.add("[query] filter needs the form 'x_below VALUE' or 'x_above VALUE'")
        if qmodel:
            payload["query"] = qmodel
        source = _section(parser, "source")
        if payload.get("source") == "csv":
            csv_path = source.get("path")
            if not csv_path:
                errors.add("[source] path is required for csv input")
            else:
                try:
                    payload["csv_text"] = Path(csv_path).read_text(encoding="utf-8")
                except OSError as exc:
                    errors.add(f"[source] cannot read {csv_path!r}: {exc}")
            schema = _section(parser, "schema")
            if not schema:
                errors.add("missing [schema] section mapping columns to roles")
            else:
                payload["table_schema"] = dict(schema)
        model = schemas.MarDemoRequest
    elif kind == "shift_demo":
        if "scenario" in exp:
            payload["scenario"] = exp["scenario"].strip()
        for key in ("train_rows", "validation_rows", "test_rows", "seeds"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], int)
        for key in ("noise_sd", "test_sd_scale"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], float)
        model = schemas.ShiftDemoRequest
    else:  # diagnostics
        if "example" in exp:
            payload["example"] = exp["example"].strip()
        if "checks" in exp:
            payload["checks"] = errors.parse_list("experiment", "checks", exp["checks"], str)
        if "orders" in exp:
            payload["orders"] = errors.parse_list("experiment", "orders", exp["orders"], float)
        if "n_grid" in exp:
            payload["n_grid"] = errors.parse_list("experiment", "n_grid", exp["n_grid"], int)
        for key in ("m", "bins", "seeds"):
            if key in exp:
                payload[key] = errors.parse("experiment", key, exp[key], int)
        tol = _section(parser, "tolerances")
        if tol:
            tmodel: dict[str, Any] = {}
            if "max_deviation" in tol:
                tmodel["max_deviation"] = errors.parse("tolerances", "max_deviation", tol["max_deviation"], float)
            payload["tolerances"] = tmodel
        _attach_pair_and_fn(parser, payload, errors)
        model = schemas.DiagnosticsRequest

    if errors.problems:
        raise ConfigError(errors.problems)
    try:
        request = model.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError([
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        ]) from exc
    return LoadedConfig(kind=kind, request=request, out=exp.get("out"))


def _attach_pair_and_fn(parser: configparser.ConfigParser, payload: dict[str, Any],
                        errors: _Collector) -> None:
    mu0 = _section(parser, "pair.mu0")
    mu1 = _section(parser, "pair.mu1")
    if mu0 or mu1:
        if not (mu0 and mu1):
            errors.add("a custom pair needs both [pair.mu0] and [pair.mu1] sections")
        else:
            payload["pair"] = {
                "mu0": _distribution_dict(mu0, "pair.mu0", errors),
                "mu1": _distribution_dict(mu1, "pair.mu1", errors),
            }
    eta = _section(parser, "eta")
    if eta:
        fn: dict[str, Any] = {}
        if "name" in eta:
            fn["name"] = eta["name"].strip()
        if "depth" in eta:
            fn["depth"] = errors.parse("eta", "depth", eta["depth"], int)
        payload["fn"] = fn
