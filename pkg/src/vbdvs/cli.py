"""Command-line interface: ``vbdvs {simulate,fit,montecarlo,forecast-eval}``.

Each run is described by a plain ``key = value`` config file (``#`` starts a
comment) plus command-line overrides; ``--set key=value`` and the dedicated
flags win over the file.  Unknown keys are rejected.  The effective config
is written to ``<out>/config.txt`` and can be fed back unchanged.

Exit codes: 0 success, 1 invalid input or config, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from typing import Dict

import numpy as np

from . import pipeline as pl
from . import simulate as sim
from .errors import InvalidArgumentError, NumericalFailureError
from .estimator import FitOptions, PriorConfig, fit_vbdvs
from .statespace import RegressionData

logger = logging.getLogger("vbdvs")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(InvalidArgumentError):
    pass


# --- config schema ---------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _int_list(s: str):
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _str_list(s: str):
    return tuple(v.strip() for v in s.split(",") if v.strip())


# key -> (parser, default); None default means "unset"
_COMMON = {
    "seed": (int, 0),
    "out": (str, "."),
    "threads": (int, 1),
}
_PRIOR = {
    "prior": (str, "prior3"),
    **{name: (float, None) for name in
       ("m0", "p0_scale", "a0", "b0", "c0", "d0", "g0", "h0", "c_spike", "delta")},
}
_FIT = {
    "max_iter": (int, 100),
    "tol": (float, 1e-4),
    "fixed_sigma2": (_opt_float, None),
    "dvs_enabled": (_bool, True),
    "scale_y": (_bool, True),
}
SCHEMAS: Dict[str, dict] = {
    "simulate": {**_COMMON, "T": (int, 200), "p": (int, 100)},
    "fit": {**_COMMON, **_PRIOR, **_FIT, "y": (str, "y.csv"), "x": (str, "x.csv")},
    "montecarlo": {**_COMMON, **_PRIOR, **_FIT, "T": (int, 200), "p": (int, 100),
                   "replications": (int, 100), "record_timing": (_bool, True)},
    "forecast-eval": {
        **_COMMON, **_PRIOR,
        "source": (str, "synthetic"),
        "T": (int, 300), "p": (int, 30),
        "panel": (str, ""), "schema": (str, ""), "target": (str, ""),
        "target_transform": (_bool, False),
        "outlier_kappa": (_opt_float, 4.5),
        "horizons": (_int_list, (1,)),
        "lags": (int, 2),
        "window": (float, 0.5),
        "models": (_str_list, ("AR", "VBDVS/X")),
        "benchmark": (str, "AR"),
        "refit_every": (int, 1),
        "max_iter": (int, 100),
        "tol": (float, 1e-4),
    },
}


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    return str(v)


def parse_config_text(text: str, command: str) -> dict:
    """Parse ``key = value`` lines against the command's schema (values only, no defaults)."""
    schema = SCHEMAS[command]
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value, schema)
    return out


def _coerce(key, value, schema):
    if key not in schema:
        raise ConfigError(f"unknown config key {key!r}; allowed: {', '.join(sorted(schema))}")
    try:
        return schema[key][0](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def resolve_config(command: str, file_values: dict, overrides: dict) -> dict:
    """Defaults, then file values, then overrides."""
    cfg = {k: d for k, (_, d) in SCHEMAS[command].items()}
    cfg.update(file_values)
    cfg.update(overrides)
    return cfg


def serialize_config(cfg: dict) -> str:
    lines = [f"{k} = {_format_value(v)}" for k, v in sorted(cfg.items()) if v is not None]
    return "\n".join(lines) + "\n"


def _prior_from(cfg) -> PriorConfig:
    names = {f.name for f in fields(PriorConfig)}
    overrides = {k: cfg[k] for k in names if cfg.get(k) is not None}
    return PriorConfig.preset(cfg["prior"], **overrides)


def _fit_options(cfg) -> FitOptions:
    return FitOptions(max_iter=cfg["max_iter"], tol=cfg["tol"], fixed_sigma2=cfg["fixed_sigma2"],
                      dvs_enabled=cfg["dvs_enabled"], scale_y=cfg["scale_y"])


# --- file output -----------------------------------------------------------

def _fmt(x) -> str:
    return sim._fmt(x)


def write_columns(path, header, index, columns):
    """CSV with a leading index column then one column per entry of ``columns``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in zip(index, zip(*columns)):
            w.writerow([_fmt(i)] + [_fmt(v) for v in row])


def write_matrix(path, name, M):
    M = np.asarray(M, dtype=float)
    M = M[:, None] if M.ndim == 1 else M
    header = ["t"] + ([name] if M.shape[1] == 1 else [f"{name}{j + 1}" for j in range(M.shape[1])])
    write_columns(path, header, range(1, M.shape[0] + 1), list(M.T))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(sim._json_floats(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands --------------------------------------------------------------

def cmd_simulate(cfg):
    draw = sim.simulate_dgp(sim.default_config(cfg["T"], cfg["p"], cfg["seed"]))
    out = cfg["out"]
    write_matrix(os.path.join(out, "y.csv"), "y", draw.y)
    write_matrix(os.path.join(out, "x.csv"), "x", draw.x)
    write_matrix(os.path.join(out, "beta_true.csv"), "beta", draw.beta_true)
    write_matrix(os.path.join(out, "sigma2_true.csv"), "sigma2", draw.sigma2_true)


def _read_values(path):
    if not os.path.isfile(path):
        raise InvalidArgumentError(f"input file not found: {path}")
    _, _, values = pl.read_panel(path)
    return values


def cmd_fit(cfg):
    y = _read_values(cfg["y"])
    X = _read_values(cfg["x"])
    if y.shape[1] != 1:
        raise InvalidArgumentError(f"{cfg['y']}: expected exactly one data column")
    if X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("y and x files have different row counts")
    start = time.perf_counter()
    fit = fit_vbdvs(RegressionData(y[:, 0], X), _prior_from(cfg), _fit_options(cfg))
    wall_ms = 1000.0 * (time.perf_counter() - start)
    out = cfg["out"]
    write_matrix(os.path.join(out, "coeff_mean.csv"), "beta", fit.coefficients)
    write_matrix(os.path.join(out, "pip.csv"), "pip", fit.pip)
    write_matrix(os.path.join(out, "sigma2.csv"), "sigma2", fit.sigma2)
    write_json(os.path.join(out, "diagnostics.json"), {
        "iterations_run": int(fit.iterations_run),
        "final_delta": float(fit.final_delta),
        "converged": bool(fit.converged),
        "wall_ms": wall_ms,
        "T": int(y.shape[0]),
        "p": int(X.shape[1]),
    })


def cmd_montecarlo(cfg):
    summary = sim.run_monte_carlo(cfg["T"], cfg["p"], cfg["replications"], _prior_from(cfg),
                                  seed=cfg["seed"], opts=_fit_options(cfg),
                                  n_jobs=cfg["threads"], timing=cfg["record_timing"])
    out = cfg["out"]
    sim.write_replications_csv(summary, os.path.join(out, "replications.csv"))
    sim.write_summary_json(summary, os.path.join(out, "summary.json"))


def _load_forecast_panel(cfg) -> pl.ForecastPanel:
    if cfg["source"] == "synthetic":
        y, X, _ = sim.simulate_forecast_panel(cfg["T"], cfg["p"], cfg["seed"])
        return pl.ForecastPanel(y, X)
    if cfg["source"] != "csv":
        raise ConfigError(f"source must be 'synthetic' or 'csv', got {cfg['source']!r}")
    for key in ("panel", "schema", "target"):
        if not cfg[key]:
            raise ConfigError(f"source = csv requires {key!r}")
    if not os.path.isfile(cfg["panel"]):
        raise InvalidArgumentError(f"input file not found: {cfg['panel']}")
    if not os.path.isfile(cfg["schema"]):
        raise InvalidArgumentError(f"input file not found: {cfg['schema']}")
    _, names, values = pl.read_panel(cfg["panel"])
    schema = pl.read_schema(cfg["schema"])
    if cfg["target"] not in names:
        raise InvalidArgumentError(f"target column {cfg['target']!r} not in panel")
    j = names.index(cfg["target"])
    preds = [n for i, n in enumerate(names) if i != j]
    Xraw = np.delete(values, j, axis=1)
    if cfg["target_transform"]:
        # y_t = 400 ln(P_t / P_{t-1}); the h-step target is then the average of y
        ycol = np.concatenate([[np.nan], pl.build_target(values[:, j], 1)])
    else:
        code, _ = schema[cfg["target"]]
        t = pl.apply_transform(values[:, j], code)
        ycol = np.concatenate([np.full(values.shape[0] - t.shape[0], np.nan), t])
    Xt, first = pl.transform_panel(preds, Xraw, schema, cfg["outlier_kappa"])
    start = max(first, int(np.argmax(np.isfinite(ycol))))
    X = Xt[start - first:]
    mask = np.array([schema[n][1] for n in preds], dtype=bool)
    return pl.ForecastPanel(ycol[start:], X, mask, preds)


def _window_job(args):
    panel, task, spec, prior = args
    return pl.run_expanding_window(panel, task, spec, prior)


def cmd_forecast_eval(cfg):
    panel = _load_forecast_panel(cfg)
    prior = _prior_from(cfg)
    names = list(dict.fromkeys([cfg["benchmark"], *cfg["models"]]))
    specs = {}
    for name in names:
        if name not in pl.MODEL_SPECS:
            raise ConfigError(f"unknown model {name!r}; choose from {sorted(pl.MODEL_SPECS)}")
        base = pl.MODEL_SPECS[name]
        specs[name] = pl.ModelSpec(base.name, base.kind, base.n_factors, base.h0,
                                   refit_every=cfg["refit_every"], max_iter=cfg["max_iter"],
                                   tol=cfg["tol"])
    jobs = []
    for h in cfg["horizons"]:
        task = pl.ForecastTask(h=h, lags=cfg["lags"], window=cfg["window"],
                               target_transform=cfg["target_transform"])
        jobs += [(panel, task, specs[n], prior) for n in names]
    if cfg["threads"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["threads"]) as pool:
            results = list(pool.map(_window_job, jobs))
    else:
        results = [_window_job(j) for j in jobs]

    by_key = {(r.model, r.h): r for r in results}
    out = cfg["out"]
    with open(os.path.join(out, "forecasts.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "h", "origin", "point", "variance", "realized", "log_pred_lik"])
        for r in results:
            for rec in r.records:
                w.writerow([r.model, r.h, rec.origin] + [_fmt(v) for v in
                           (rec.point, rec.variance, rec.realized, rec.log_pred_lik)])
    evals = {}
    for h in cfg["horizons"]:
        bench = by_key[(cfg["benchmark"], h)]
        block = {}
        for name in names:
            res = by_key[(name, h)]
            # compare on the origins both models produced
            common = sorted({r.origin for r in res.records} & {r.origin for r in bench.records})
            mine = [r for r in res.records if r.origin in common]
            theirs = [r for r in bench.records if r.origin in common]
            s = pl.evaluate_oos(mine, theirs)
            block[name] = {"msfe": s.msfe, "alpl": s.alpl, "rel_msfe": s.rel_msfe,
                           "rel_alpl": s.rel_alpl, "n": s.n,
                           "failed_origins": list(res.failed_origins)}
        evals[f"h={h}"] = block
    write_json(os.path.join(out, "eval.json"), {"benchmark": cfg["benchmark"], "results": evals})


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "montecarlo": cmd_montecarlo,
    "forecast-eval": cmd_forecast_eval,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vbdvs", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    return ap


def load_config(args) -> dict:
    file_values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_values = parse_config_text(fh.read(), args.command)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    schema = SCHEMAS[args.command]
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        overrides[k] = _coerce(k, v, schema)
    for k in ("out", "seed", "threads"):
        if getattr(args, k) is not None:
            overrides[k] = getattr(args, k)
    cfg = resolve_config(args.command, file_values, overrides)
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        os.makedirs(cfg["out"], exist_ok=True)
        with open(os.path.join(cfg["out"], "config.txt"), "w") as fh:
            fh.write(serialize_config(cfg))
        COMMANDS[args.command](cfg)
    except NumericalFailureError as exc:
        print(f"vbdvs {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgumentError, OSError) as exc:
        print(f"vbdvs {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
