"""Command-line workflows: simulate, fit, forecast, network, diagnose, varma-check, compare.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or
divergence, 4 input/output error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .diagnostics import (
    aggregate_returns,
    adf_test,
    corbit_grid,
    leverage_split,
    moment_stats,
    sample_acf,
    spurious_scan,
)
from .estimation import (
    FitConfig,
    FitError,
    fit,
    fit_univariate_garch,
    fitted_trace,
    rescale_variance,
    riskmetrics,
    univariate_variance,
)
from .forecast import forecast
from .market import coc_network, log_returns, read_price_csv
from .model import GlobalParams, OrderSpec, ThresholdParams, model_masks
from .network import (
    NetworkTopology,
    connection_weights,
    from_edges,
    read_adjacency_csv,
    read_edge_csv,
    simulation_topology,
    stage_neighborhoods,
    write_edge_csv,
)
from .panel import ReturnPanel, read_panel_csv, write_cov_trace, write_panel_csv
from .simulate import SimulationConfig, simulate
from .varma import build_T_all, build_transfer, verify_varma_identity, write_transfer_csv

log = logging.getLogger("gngarch")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
VARMA_TOL = 1e-8


class ConfigError(Exception):
    pass


class NumericError(Exception):
    pass


class InputError(Exception):
    pass


# --- configuration schemas ------------------------------------------------------------

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM}
_RAGGED = {"type": "array", "items": _NUMS}
_PATH = {"type": "string"}

ORDERS_SCHEMA = {
    "type": "object",
    "properties": {
        "p": {"type": "integer", "minimum": 0},
        "q": {"type": "integer", "minimum": 1},
        "s": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "rp": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "required": ["p", "q", "s", "rp"],
    "additionalProperties": False,
}
PARAMS_SCHEMA = {
    "type": "object",
    "properties": {"alpha0": _NUM, "alpha": _NUMS, "gamma": _NUMS, "beta": _RAGGED, "delta": _RAGGED},
    "required": ["alpha0", "alpha", "gamma", "beta", "delta"],
    "additionalProperties": False,
}
THRESHOLD_SCHEMA = {
    "type": "object",
    "properties": {
        "alpha0": _NUM,
        "alpha_pos": _NUMS,
        "alpha_neg": _NUMS,
        "alpha_inter": _NUMS,
        "gamma": _NUMS,
        "beta": _RAGGED,
        "delta": _RAGGED,
    },
    "required": ["alpha0", "alpha_pos", "alpha_neg", "alpha_inter", "gamma", "beta", "delta"],
    "additionalProperties": False,
}
GRAPH_SCHEMA = {
    "type": "object",
    "properties": {
        "edges": _PATH,
        "adjacency": _PATH,
        "edge_list": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
        "d": {"type": "integer", "minimum": 1},
        "labels": {"type": "array", "items": {"type": "string"}},
        "builtin": {"enum": ["simulation"]},
    },
    "additionalProperties": False,
}
SIM_SCHEMA = {
    "type": "object",
    "properties": {
        "T_total": {"type": "integer", "minimum": 1},
        "burn_frac": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer"},
        "x0": _NUMS,
        "sigma0": _RAGGED,
        "divergence_threshold": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
FIT_SCHEMA = {
    "type": "object",
    "properties": {
        "loss": {"enum": ["mse", "qlike", "nll"]},
        "epochs": {"type": "integer", "minimum": 1},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "adam_beta1": _NUM,
        "adam_beta2": _NUM,
        "adam_eps": _NUM,
        "grad_step": {"type": "number", "exclusiveMinimum": 0},
        "param_floor": {"type": "number", "exclusiveMinimum": 0},
        "gradient": {"enum": ["analytic", "fd"]},
        "tol": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}


def _command_schema(props: dict) -> dict:
    base = {"seed": {"type": "integer"}}
    base.update(props)
    return {"type": "object", "properties": base, "additionalProperties": False}


SCHEMAS = {
    "simulate": _command_schema(
        {"graph": GRAPH_SCHEMA, "orders": ORDERS_SCHEMA, "params": PARAMS_SCHEMA, "threshold_params": THRESHOLD_SCHEMA, "simulation": SIM_SCHEMA}
    ),
    "fit": _command_schema(
        {"graph": GRAPH_SCHEMA, "orders": ORDERS_SCHEMA, "init": PARAMS_SCHEMA, "fit": FIT_SCHEMA, "data": _PATH}
    ),
    "forecast": _command_schema({"graph": GRAPH_SCHEMA, "params": _PATH, "data": _PATH, "horizon": {"type": "integer", "minimum": 1}}),
    "network": _command_schema({"prices": _PATH, "quantile": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}),
    "diagnose": _command_schema(
        {
            "panel": _PATH,
            "fit": _PATH,
            "graph": GRAPH_SCHEMA,
            "max_lag": {"type": "integer", "minimum": 1},
            "max_stage": {"type": "integer", "minimum": 1},
            "windows": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        }
    ),
    "varma-check": _command_schema(
        {
            "graph": GRAPH_SCHEMA,
            "orders": ORDERS_SCHEMA,
            "params": PARAMS_SCHEMA,
            "simulation": SIM_SCHEMA,
            "data": _PATH,
            "params_file": _PATH,
            "export_transfer": {"type": "boolean"},
        }
    ),
    "compare": _command_schema(
        {
            "graph": GRAPH_SCHEMA,
            "data": _PATH,
            "fit": _PATH,
            "orders": ORDERS_SCHEMA,
            "fit_config": FIT_SCHEMA,
            "window": {"type": "integer", "minimum": 1},
            "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        }
    ),
}


# --- helpers ---------------------------------------------------------------------------


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _load_config(args) -> dict:
    cfg = _read_json(args.config) if args.config else {}
    try:
        jsonschema.validate(cfg, SCHEMAS[args.command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def _reader(fn, path, *a):
    try:
        return fn(path, *a)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except (ValueError, KeyError, IndexError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from None


def _graph_from_file(path) -> NetworkTopology:
    try:
        with open(path) as fh:
            head = fh.readline().strip().split(",")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if [h.strip() for h in head[:2]] == ["src", "dst"]:
        return _reader(read_edge_csv, path)
    return _reader(read_adjacency_csv, path)


def _graph(doc: dict | None, override: str | None = None, labels=None) -> NetworkTopology:
    if override:
        top = _graph_from_file(override)
    elif not doc or doc.get("builtin") == "simulation":
        top = simulation_topology()
    elif "edges" in doc:
        top = _reader(read_edge_csv, doc["edges"], labels)
    elif "adjacency" in doc:
        top = _reader(read_adjacency_csv, doc["adjacency"])
    elif "edge_list" in doc:
        if "d" not in doc:
            raise ConfigError("graph.edge_list needs graph.d")
        try:
            top = from_edges(doc["d"], [tuple(e) for e in doc["edge_list"]], doc.get("labels", ()))
        except ValueError as exc:
            raise ConfigError(f"graph: {exc}") from None
    else:
        raise ConfigError("graph needs one of edges, adjacency, edge_list or builtin")
    if labels is not None and top.labels != tuple(labels):
        if sorted(top.labels) == sorted(labels):
            # align node order with the panel's columns
            idx = {lab: k for k, lab in enumerate(labels)}
            edges = {(idx[top.labels[i]], idx[top.labels[j]]) for i, j in top.edges}
            top = NetworkTopology(len(labels), frozenset(edges), tuple(labels))
        elif top.d == len(labels) and top.labels == tuple(str(i) for i in range(top.d)):
            top = NetworkTopology(top.d, top.edges, tuple(labels))
        else:
            raise ConfigError("graph node labels do not match the panel columns")
    return top


def _orders(doc) -> OrderSpec:
    try:
        return OrderSpec.from_dict(doc) if doc else OrderSpec()
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"orders: {exc}") from None


def _params(doc, orders: OrderSpec, cls=GlobalParams):
    try:
        p = cls.from_dict(doc)
        p.check_orders(orders)
        p.validate()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"params: {exc}") from None
    return p


def _params_file(path):
    doc = _read_json(path)
    if "orders" not in doc or "params" not in doc:
        raise ConfigError(f"{path}: expected 'orders' and 'params' keys")
    orders = _orders(doc["orders"])
    return _params(doc["params"], orders), orders


def _fit_config(doc: dict, args=None) -> FitConfig:
    doc = dict(doc or {})
    if args is not None:
        for key in ("loss", "epochs", "lr"):
            val = getattr(args, key, None)
            if val is not None:
                doc[key] = val
    try:
        return FitConfig(**doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"fit config: {exc}") from None


def _out_dir(args, default="out") -> Path:
    out = Path(args.out or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from None
    return out


def _out_file(args, name: str, suffix: str) -> tuple[Path, Path]:
    """``--out`` may name the primary file or a directory to put it in."""
    target = Path(args.out or ".")
    if target.suffix == suffix:
        target.parent.mkdir(parents=True, exist_ok=True)
        return target, target.parent
    target.mkdir(parents=True, exist_ok=True)
    return target / name, target


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def _versions() -> dict:
    import numba
    import scipy

    return {
        "gngarch": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _meta(args, cfg: dict, **extra) -> dict:
    doc = {
        "command": args.command,
        "config": cfg,
        "config_sha256": hashlib.sha256(_canonical(cfg).encode()).hexdigest(),
        "seed": args.seed if args.seed is not None else cfg.get("seed"),
        "versions": _versions(),
    }
    doc.update(extra)
    return doc


def _write_rows(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --- commands ----------------------------------------------------------------------------


def cmd_simulate(args, cfg) -> int:
    orders = _orders(cfg.get("orders"))
    if "threshold_params" in cfg:
        params = _params(cfg["threshold_params"], orders, ThresholdParams)
    elif "params" in cfg:
        params = _params(cfg["params"], orders)
    else:
        params = GlobalParams.gngarch11(0.05, 0.20, 0.60, 0.05, 0.05)
        if params.orders() != orders:
            raise ConfigError("params are required for non-default orders")
    top = _graph(cfg.get("graph"), args.graph)
    sim_doc = dict(cfg.get("simulation", {}))
    if args.seed is not None:
        sim_doc["seed"] = args.seed
    elif "seed" in cfg and "seed" not in sim_doc:
        sim_doc["seed"] = cfg["seed"]
    try:
        for key in ("x0", "sigma0"):
            if key in sim_doc:
                sim_doc[key] = np.asarray(sim_doc[key], dtype=float)
        sim = SimulationConfig(**sim_doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"simulation: {exc}") from None

    res = simulate(params, orders, top, sim)
    out = _out_dir(args)
    div = {"diverged": res.diverged, "divergence_step": res.divergence_step, "max_abs_return": res.max_abs_return}
    meta = _meta(
        args,
        cfg,
        seed=sim.seed,
        params=params.to_dict(),
        orders=orders.to_dict(),
        graph={"d": top.d, "edges": sorted(map(list, top.edges)), "labels": list(top.labels)},
        T_total=sim.T_total,
        burn_in=sim.burn,
        samples=int(res.returns.shape[0]),
        n_repairs=res.n_repairs,
        **div,
    )
    _write_json(out / "meta.json", meta)
    if res.diverged:
        log.error("simulation diverged at step %d", res.divergence_step)
        _write_json(out / "divergence.json", div)
        return EXIT_NUMERIC
    write_panel_csv(out / "panel.csv", res.panel())
    write_panel_csv(out / "variance.csv", res.variance_panel())
    write_cov_trace(out / "cov_trace.csv", res.sigma, res.times)
    write_edge_csv(out / "graph.csv", top)
    log.info("wrote %d samples to %s", res.returns.shape[0], out)
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    data = args.data or cfg.get("data")
    if not data:
        raise ConfigError("fit needs --data or config 'data'")
    panel = _reader(read_panel_csv, data)
    top = _graph(cfg.get("graph"), args.graph, panel.labels)
    orders = _orders(cfg.get("orders"))
    init = _params(cfg["init"], orders) if "init" in cfg else None
    config = _fit_config(cfg.get("fit"), args)
    try:
        rep = fit(panel, orders, top, config, init)
    except FitError as exc:
        raise NumericError(str(exc)) from None
    path, _ = _out_file(args, "report.json", ".json")
    doc = rep.to_dict()
    doc["meta"] = _meta(args, cfg, data=str(data), fit_config=config.to_dict())
    _write_json(path, doc)
    for w in rep.warnings:
        log.warning(w)
    log.info("final %s loss %.6g, theta %s", config.loss.value, rep.final_loss, np.round(rep.theta_hat.to_vector(), 4).tolist())
    return EXIT_OK


def cmd_forecast(args, cfg) -> int:
    pfile = args.params or cfg.get("params")
    data = args.data or cfg.get("data")
    if not pfile or not data:
        raise ConfigError("forecast needs params and data")
    params, orders = _params_file(pfile)
    panel = _reader(read_panel_csv, data)
    top = _graph(cfg.get("graph"), args.graph, panel.labels)
    horizon = args.horizon if args.horizon is not None else cfg.get("horizon", 1)
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    try:
        states = forecast(params, orders, top, panel, horizon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    sig = np.array([s.pd for s in states])
    steps = np.arange(1, horizon + 1)
    write_cov_trace(out / "forecast_cov.csv", sig, steps)
    _write_rows(out / "forecast_variance.csv", ["step", *panel.labels], ([k, *np.diag(S)] for k, S in zip(steps, sig)))
    _write_json(out / "meta.json", _meta(args, cfg, horizon=horizon, repaired=[bool(s.repaired) for s in states]))
    return EXIT_OK


def cmd_network(args, cfg) -> int:
    prices_path = args.prices or cfg.get("prices")
    if not prices_path:
        raise ConfigError("network needs --prices")
    q = args.quantile if args.quantile is not None else cfg.get("quantile", 0.70)
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile must lie in (0, 1), got {q}")
    prices = _reader(read_price_csv, prices_path)
    try:
        top, R = coc_network(log_returns(prices), threshold_quantile=q)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    path, out = _out_file(args, "edges.csv", ".csv")
    write_edge_csv(path, top)
    _write_rows(out / "integrated_corr.csv", ["ticker", *top.labels], ([lab, *row] for lab, row in zip(top.labels, R)))
    _write_json(out / "network_meta.json", _meta(args, cfg, quantile=q, n_edges=len(top.edges), d=top.d))
    log.info("%d nodes, %d edges", top.d, len(top.edges))
    return EXIT_OK


def cmd_diagnose(args, cfg) -> int:
    panel_path = args.panel or cfg.get("panel")
    if not panel_path:
        raise ConfigError("diagnose needs --panel")
    panel = _reader(read_panel_csv, panel_path)
    max_lag = args.max_lag if args.max_lag is not None else cfg.get("max_lag", 20)
    if max_lag < 1:
        raise ConfigError("max-lag must be >= 1")
    windows = cfg.get("windows", [1, 7, 30])
    out = _out_dir(args)

    fit_path = args.fit or cfg.get("fit")
    graph_given = args.graph or cfg.get("graph")
    sd = None
    top = None
    if fit_path and graph_given:
        params, orders = _params_file(fit_path)
        top = _graph(cfg.get("graph"), args.graph, panel.labels)
        h = np.diagonal(fitted_trace(params, orders, top, panel), axis1=1, axis2=2).T  # (d, T-1)
        sd = np.sqrt(np.maximum(h, 0.0))
    elif fit_path or graph_given:
        log.warning("conditional-sd diagnostics need both --fit and --graph; skipping them")

    acf_rows, moments, adf_rows = [], {}, []
    for i, lab in enumerate(panel.labels):
        x = panel.values[i]
        series = {"returns": x, "abs_returns": np.abs(x)}
        if sd is not None:
            series["cond_sd"] = sd[i]
        for name, s in series.items():
            res = sample_acf(s, max_lag)
            acf_rows += [[lab, name, int(k), v, res.band] for k, v in zip(res.lags, res.values)]
        kurt, skew = moment_stats(x)
        moments[lab] = {"kurtosis": kurt, "skewness": skew}
        res = adf_test(x)
        adf_rows.append([lab, res.statistic, res.lags, res.nobs, res.reject_5pct])
    _write_rows(out / "acf.csv", ["node", "series", "lag", "acf", "band"], acf_rows)
    _write_json(out / "moments.json", moments)
    _write_rows(out / "adf.csv", ["node", "statistic", "lags", "nobs", "reject_5pct"], adf_rows)
    for w in windows:
        rows = []
        for i, lab in enumerate(panel.labels):
            try:
                qq = aggregate_returns(panel.values[i], w)
            except ValueError as exc:
                log.warning("qq window %d for %s: %s", w, lab, exc)
                continue
            rows += [[lab, k + 1, a, b] for k, (a, b) in enumerate(zip(qq.sample, qq.theoretical))]
        _write_rows(out / f"qq_{w}.csv", ["node", "k", "sample", "normal"], rows)
    scan = spurious_scan(panel) if panel.d >= 2 else []
    _write_rows(out / "spurious.csv", ["i", "j", "r2", "dw", "flagged"], ([r["i"], r["j"], r["r2"], r["dw"], r["flagged"]] for r in scan))

    if sd is not None:
        lev = leverage_split(panel.slice(1), sd)  # sd[:, t-1] belongs to panel column t
        _write_rows(
            out / "leverage.csv",
            ["node", "class", "q1", "median", "q3", "n"],
            [row for s in lev for row in ([s.node, "positive", *s.positive, s.n_positive], [s.node, "negative", *s.negative, s.n_negative])],
        )
        r_max = args.max_stage if args.max_stage is not None else cfg.get("max_stage", 3)
        if r_max < 1:
            raise ConfigError("max-stage must be >= 1")
        corbit_grid(sd**2, top, max_lag, r_max).write_csv(out / "corbit.csv")
    _write_json(out / "meta.json", _meta(args, cfg, panel=str(panel_path), conditional=sd is not None))
    return EXIT_OK


def cmd_varma_check(args, cfg) -> int:
    data = args.data or cfg.get("data")
    pfile = args.params or cfg.get("params_file")
    if data:
        if not pfile:
            raise ConfigError("varma-check on data needs --params")
        params, orders = _params_file(pfile)
        panel = _reader(read_panel_csv, data)
        top = _graph(cfg.get("graph"), args.graph, panel.labels)
        X = panel.X
        from .model import filter_trace

        h, sig = filter_trace(params, orders, model_masks(top, orders), X)
        # sig[t - 1] pairs with column t
        X, h, sig = X[1:], h[:-1], sig[:-1]
        source = {"data": str(data), "params": str(pfile)}
    else:
        orders = _orders(cfg.get("orders"))
        params = _params(cfg["params"], orders) if "params" in cfg else GlobalParams.gngarch11(0.05, 0.20, 0.60, 0.05, 0.05)
        top = _graph(cfg.get("graph"), args.graph)
        sim_doc = dict(cfg.get("simulation", {}))
        if args.seed is not None:
            sim_doc["seed"] = args.seed
        try:
            sim = SimulationConfig(**sim_doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"simulation: {exc}") from None
        res = simulate(params, orders, top, sim)
        if res.diverged:
            raise NumericError(f"simulation diverged at step {res.divergence_step}")
        X, h, sig = res.returns, res.h, res.sigma
        source = {"simulation": {"seed": sim.seed, "T_total": sim.T_total, "burn_in": sim.burn}}
    r_max = max(orders.max_stage, 1)
    W = connection_weights(stage_neighborhoods(top, r_max))
    transfer = build_transfer(params, orders, model_masks(top, orders), build_T_all(top, W, orders.max_stage))
    rv, rc = verify_varma_identity(X, h, sig, transfer)
    doc = {"variance_residual": rv, "covariance_residual": rc, "tolerance": VARMA_TOL, "passed": max(rv, rc) < VARMA_TOL, **source}
    out = _out_dir(args)
    _write_json(out / "varma.json", doc)
    if args.export_transfer or cfg.get("export_transfer"):
        write_transfer_csv(out / "transfer", transfer)
    print(json.dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_NUMERIC


def cmd_compare(args, cfg) -> int:
    data = args.data or cfg.get("data")
    if not data:
        raise ConfigError("compare needs --data")
    panel = _reader(read_panel_csv, data)
    top = _graph(cfg.get("graph"), args.graph, panel.labels)
    window = args.window if args.window is not None else cfg.get("window", 252)
    if window < 1:
        raise ConfigError("window must be >= 1")
    lam = args.lam if args.lam is not None else cfg.get("lambda", 0.94)
    fit_path = args.fit or cfg.get("fit")
    try:
        if fit_path:
            params, orders = _params_file(fit_path)
        else:
            orders = _orders(cfg.get("orders"))
            params = fit(panel, orders, top, _fit_config(cfg.get("fit_config"))).theta_hat
        uni_cfg = _fit_config(cfg.get("fit_config"))
        tail = panel.slice(1)  # columns with a one-step forecast
        gn = np.diagonal(fitted_trace(params, orders, top, panel), axis1=1, axis2=2).T
        gn = rescale_variance(gn, tail, min(window, tail.T))
        rm = riskmetrics(panel, lam, window)[:, 1:]
        uni = np.empty_like(gn)
        for i in range(panel.d):
            rep = fit_univariate_garch(panel.values[i], uni_cfg)
            uni[i] = univariate_variance(rep.theta_hat, panel.values[i])[:-1]
    except FitError as exc:
        raise NumericError(str(exc)) from None
    out = _out_dir(args)
    header = ["time", "squared_return", "gngarch_rescaled", "riskmetrics", "univariate_garch"]
    for i, lab in enumerate(panel.labels):
        r2 = tail.values[i] ** 2
        _write_rows(out / f"compare_{lab}.csv", header, zip(tail.times, r2, gn[i], rm[i], uni[i]))
    _write_json(out / "meta.json", _meta(args, cfg, params=params.to_dict(), window=window, riskmetrics_lambda=lam))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "network": cmd_network,
    "diagnose": cmd_diagnose,
    "varma-check": cmd_varma_check,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory (or file for fit / network)")
    common.add_argument("--seed", type=int, help="RNG seed; overrides the config")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(prog="gngarch", description="Generalised network GARCH toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a panel")
    p.add_argument("--graph", help="edge-list or adjacency CSV")

    p = sub.add_parser("fit", parents=[common], help="fit parameters to a panel")
    p.add_argument("--data", help="panel CSV")
    p.add_argument("--graph")
    p.add_argument("--loss", choices=["mse", "qlike", "nll"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("forecast", parents=[common], help="multi-step covariance forecast")
    p.add_argument("--params", help="params or fit report JSON")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("network", parents=[common], help="correlation-of-correlation network from prices")
    p.add_argument("--prices")
    p.add_argument("--quantile", type=float)

    p = sub.add_parser("diagnose", parents=[common], help="stylised facts and pre-model tests")
    p.add_argument("--panel")
    p.add_argument("--fit", help="fit report JSON")
    p.add_argument("--graph")
    p.add_argument("--max-lag", type=int, dest="max_lag")
    p.add_argument("--max-stage", type=int, dest="max_stage")

    p = sub.add_parser("varma-check", parents=[common], help="verify the VARMA identities")
    p.add_argument("--data")
    p.add_argument("--params")
    p.add_argument("--graph")
    p.add_argument("--export-transfer", action="store_true", dest="export_transfer")

    p = sub.add_parser("compare", parents=[common], help="variance traces against baselines")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--fit")
    p.add_argument("--window", type=int)
    p.add_argument("--lambda", type=float, dest="lam")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NumericError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
