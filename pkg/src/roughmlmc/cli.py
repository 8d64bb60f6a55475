"""Command line entry point: ``roughmlmc <subcommand> [flags]``.

Parameters resolve as built-in defaults, then the matching ``[subcommand]``
section of an INI file given by ``--config``, then explicit flags.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .diagnostics import greedy_count, holder_norm, p_variation, read_path_csv
from .errors import ConfigError, DomainError, InfeasiblePlan, NumericalFailure
from .fbm import FbmSpec, cholesky_sample, hosking_sample
from .mlmc import (
    COST_MODELS,
    MlmcConstants,
    cost_model,
    estimate_constants,
    mlmc_estimate,
    modeled_cost,
    modeled_mse,
    pilot_run,
    plan_mlmc,
)
from .rates import (
    STRONG_MODES,
    CompareConfig,
    compare_mlmc_classical,
    fit_rate,
    strong_error_curve,
    weak_error_curve,
)
from .rde import FUNCTIONALS, check_order, make_problem, simplified_euler_path
from .rng import RngStream

SCHEMA_VERSION = 1
STREAM_SINGLE = 3

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INFEASIBLE = 0, 2, 3, 4


def _fraction(text):
    """Floats, also written as ``a/b``."""
    if isinstance(text, (int, float)):
        return float(text)
    num, sep, den = str(text).partition("/")
    try:
        return float(num) / float(den) if sep else float(num)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _optional(kind):
    def parse(text):
        if text is None or str(text).lower() in ("auto", "none", ""):
            return None
        return kind(text)

    parse.__name__ = kind.__name__
    return parse


@dataclass(frozen=True)
class Param:
    name: str
    kind: object
    default: object
    help: str = ""
    choices: tuple | None = None


_COMMON = [
    Param("seed", int, 0, "master seed"),
    Param("output", str, None, "output file (stdout if omitted)"),
    Param("workers", int, 1, "worker processes"),
]
_HURST = Param("hurst", _fraction, 0.4, "Hurst index in (0, 1)")
_PROBLEM = Param("problem", str, "sphere", "sphere or scalar-linear:a")
_ORDER = Param("order", int, 3, "scheme step order", (2, 3))
_FORMAT = Param("format", str, "csv", "output format", ("csv", "json"))

PARAMS = {
    "simulate-fbm": [
        _HURST,
        Param("steps", int, 64),
        Param("horizon", _fraction, 1.0),
        Param("components", int, 1),
        Param("method", str, "hosking", "", ("hosking", "cholesky")),
        _FORMAT,
    ],
    "solve": [_PROBLEM, _HURST, Param("steps", int, 64), _ORDER, _FORMAT],
    "strong-rate": [
        _PROBLEM,
        _HURST,
        Param("mesh-ladder", _int_list, (64, 128, 256, 512, 1024, 2048, 4096), "comma list of step counts"),
        Param("paths", int, 10_000),
        _ORDER,
        Param("mode", str, "terminal", "", STRONG_MODES),
        Param("max-mesh", _optional(_fraction), None, "fit window upper mesh"),
        _FORMAT,
    ],
    "weak-rate": [
        _PROBLEM,
        _HURST,
        Param("mesh-ladder", _int_list, (64, 128, 256, 512, 1024, 2048, 4096)),
        Param("paths", int, 10_000),
        _ORDER,
        Param("functional", str, "f", "", tuple(FUNCTIONALS)),
        Param("reference", _fraction, 0.0, "exact value of E f(Y_1)"),
        Param("max-mesh", _optional(_fraction), None),
        _FORMAT,
    ],
    "mlmc": [
        _PROBLEM,
        _HURST,
        Param("epsilon", _fraction, 0.05, "root-mean-square error target"),
        Param("h0", _fraction, 1 / 64, "coarsest mesh"),
        Param("M", int, 2, "refinement factor"),
        Param("d1", _optional(_fraction), None, "error split (auto)"),
        Param("alpha", _optional(_fraction), None, "weak rate (auto: beta/2)"),
        Param("beta", _optional(_fraction), None, "variance rate (auto: pilot fit)"),
        Param("c1", _optional(_fraction), None),
        Param("c2-prime", _optional(_fraction), None),
        Param("c2", _optional(_fraction), None),
        Param("c3", _fraction, 1.0, "cost per step"),
        Param("functional", str, "g", "", tuple(FUNCTIONALS)),
        Param("cost-model", str, "giles", "", COST_MODELS),
        Param("pilot-levels", int, 5),
        Param("pilot-samples", int, 1000),
        Param("max-level", int, 12, "largest admissible L"),
        _ORDER,
    ],
    "compare": [
        Param("n0", int, 100),
        Param("h0", _fraction, 1 / 64),
        Param("levels", int, 7),
        Param("M", int, 2),
        Param("beta", _fraction, 0.6, "sample decay N_l = n0 M^{-l(1+beta)/2}"),
        _HURST,
        Param("functional", str, "g", "", tuple(FUNCTIONALS)),
        _PROBLEM,
        _ORDER,
    ],
    "diagnostics": [
        Param("input", str, None, "path CSV (t, x1, x2, ...)"),
        Param("p", _fraction, 2.0),
        Param("alpha", _fraction, 1.0, "greedy threshold"),
        Param("exponent", _optional(_fraction), None, "Hoelder exponent (auto: 1/p)"),
    ],
}


def _key(name):
    return name.replace("-", "_")


def build_parser():
    parser = argparse.ArgumentParser(prog="roughmlmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, params in PARAMS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="INI file with a [%s] section" % command)
        for param in params + _COMMON:
            default = param.default if not isinstance(param.default, tuple) else ",".join(map(str, param.default))
            p.add_argument(
                "--" + param.name,
                dest=_key(param.name),
                type=str,
                default=None,
                help=f"{param.help} (default {default})".strip(),
            )
    return parser


def _convert(param: Param, raw, source):
    try:
        value = param.kind(raw) if raw is not None else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{param.name}: {exc} (from {source})") from None
    if param.choices is not None and value not in param.choices:
        raise ConfigError(f"{param.name} must be one of {param.choices}, got {value!r}")
    return value


def parse_config(argv=None):
    """Resolve a fully typed configuration dict for one subcommand."""
    args = build_parser().parse_args(argv)
    command = args.command
    params = {_key(p.name): p for p in PARAMS[command] + _COMMON}
    config = {k: p.default for k, p in params.items()}
    if args.config:
        ini = configparser.ConfigParser()
        ini.optionxform = str
        try:
            with open(args.config) as fh:
                ini.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        for section in ini.sections():
            if section not in PARAMS:
                raise ConfigError(f"unknown config section [{section}]")
        if ini.has_section(command):
            for raw_key, raw in ini.items(command):
                key = _key(raw_key)
                if key not in params:
                    raise ConfigError(f"unknown key {raw_key!r} in section [{command}]")
                config[key] = _convert(params[key], raw, args.config)
    for key, param in params.items():
        raw = getattr(args, key)
        if raw is not None:
            config[key] = _convert(param, raw, "command line")
    config["command"] = command
    validate(config)
    return config


def validate(cfg):
    """Check module preconditions before any simulation starts."""
    command = cfg["command"]
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be nonnegative")
    if "hurst" in cfg and not 0 < cfg["hurst"] < 1:
        raise ConfigError(f"fbm: Hurst index must satisfy H in (0,1), got {cfg['hurst']}")
    if "problem" in cfg:
        make_problem(cfg["problem"])
    if "order" in cfg:
        check_order(cfg["order"], cfg["hurst"])
    if command in ("simulate-fbm", "solve"):
        FbmSpec(cfg["hurst"], cfg.get("horizon", 1.0), cfg["steps"], cfg.get("components", 1))
    if command in ("strong-rate", "weak-rate"):
        ladder = cfg["mesh_ladder"]
        if len(ladder) < 2 or any(n < 1 for n in ladder) or len(set(ladder)) != len(ladder):
            raise ConfigError("rates: mesh-ladder needs at least two distinct positive step counts")
        if cfg["paths"] < 2:
            raise ConfigError("rates: at least two paths are needed for standard errors")
    if command == "mlmc":
        if not cfg["epsilon"] > 0:
            raise ConfigError("mlmc: epsilon must be positive")
        if cfg["M"] < 2 or not cfg["h0"] > 0:
            raise ConfigError("mlmc: need M >= 2 and h0 > 0")
        steps0 = 1 / cfg["h0"]
        if abs(steps0 - round(steps0)) > 1e-9:
            raise ConfigError("mlmc: h0 must divide the unit horizon")
        if cfg["d1"] is not None and not cfg["d1"] > 1:
            raise ConfigError("mlmc: d1 must exceed 1")
    if command == "compare":
        CompareConfig(**_compare_kwargs(cfg))
    if command == "diagnostics":
        if not cfg["input"]:
            raise ConfigError("diagnostics: --input is required")
        if cfg["p"] < 1 or not cfg["alpha"] > 0:
            raise ConfigError("diagnostics: need p >= 1 and alpha > 0")
    return cfg


def _compare_kwargs(cfg):
    keys = ("n0", "h0", "levels", "M", "beta", "hurst", "functional", "problem", "order", "seed")
    return {k: cfg[k] for k in keys}


# ---------------------------------------------------------------- output


def _public_config(cfg):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.items()) if k not in ("output", "workers")}


def format_csv(header, rows, cfg, notes=()):
    """Comment lines with the resolved config, a header row, then repr floats."""
    buf = io.StringIO()
    buf.write(f"# roughmlmc {__version__} schema {SCHEMA_VERSION}\n")
    for k, v in _public_config(cfg).items():
        buf.write(f"# {k} = {v}\n")
    for line in notes:
        buf.write(f"# {line}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def format_json(payload, cfg):
    doc = {"schema_version": SCHEMA_VERSION, "config": _public_config(cfg), **payload}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def atomic_write(path, text):
    """Write via a temporary file in the target directory and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, cfg, started, wall, extra=None):
    if cfg["output"] is None:
        sys.stdout.write(text)
        return
    atomic_write(cfg["output"], text)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": _public_config(cfg),
        "seed": cfg["seed"],
        "workers": cfg["workers"],
        "started_at": started,
        "wall_clock_seconds": wall,
    }
    if extra:
        meta.update(extra)
    atomic_write(cfg["output"] + ".meta.json", json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


# ------------------------------------------------------------- commands


def _single_stream(cfg):
    return RngStream(cfg["seed"], (STREAM_SINGLE, 0))


def cmd_simulate_fbm(cfg):
    spec = FbmSpec(cfg["hurst"], cfg["horizon"], cfg["steps"], cfg["components"])
    sampler = hosking_sample if cfg["method"] == "hosking" else cholesky_sample
    grid = sampler(spec, _single_stream(cfg))
    header = ["t"] + [f"x{c + 1}" for c in range(spec.n_components)]
    rows = np.column_stack([grid.times(), grid.path().T])
    return header, rows, {}


def cmd_solve(cfg):
    problem = make_problem(cfg["problem"])
    spec = FbmSpec(cfg["hurst"], problem.horizon, cfg["steps"], problem.n_drivers)
    grid = hosking_sample(spec, _single_stream(cfg))
    path = simplified_euler_path(problem.y0, grid, problem.fields, cfg["order"])
    header = ["t"] + [f"y{c + 1}" for c in range(path.states.shape[1])]
    return header, np.column_stack([path.times, path.states]), {}


def _fit_summary(ladder, max_mesh):
    try:
        fit = fit_rate(ladder, max_mesh=max_mesh)
    except DomainError as exc:
        return {"fit_error": str(exc)}
    return {"slope": fit.slope, "slope_stderr": fit.slope_stderr, "intercept": fit.intercept, "window": list(fit.window)}


def cmd_strong_rate(cfg):
    problem = make_problem(cfg["problem"])
    ladder = strong_error_curve(problem, cfg["hurst"], cfg["mesh_ladder"], cfg["paths"], cfg["seed"],
                                cfg["order"], cfg["mode"], cfg["workers"])
    return ["mesh", "error", "stderr"], ladder.rows(), {"fit": _fit_summary(ladder, cfg["max_mesh"])}


def cmd_weak_rate(cfg):
    problem = make_problem(cfg["problem"])
    ladder = weak_error_curve(problem, cfg["functional"], cfg["hurst"], cfg["mesh_ladder"], cfg["paths"],
                              cfg["seed"], cfg["order"], cfg["reference"], cfg["workers"])
    return ["mesh", "error", "stderr"], ladder.rows(), {"fit": _fit_summary(ladder, cfg["max_mesh"])}


def _resolve_constants(cfg, problem):
    """Use given constants, filling the rest from a pilot run."""
    given = {k: cfg[k] for k in ("c1", "c2_prime", "c2", "alpha", "beta")}
    report = {"pilot": None}
    if all(v is not None for v in given.values()):
        return MlmcConstants(given["c1"], given["c2_prime"], given["c2"], cfg["c3"], given["alpha"], given["beta"]), report
    levels = cfg["pilot_levels"]
    stats = pilot_run(problem, cfg["hurst"], cfg["h0"], cfg["M"], levels, cfg["pilot_samples"],
                      cfg["functional"], cfg["seed"], cfg["order"], workers=cfg["workers"])
    meshes = [cfg["h0"] * float(cfg["M"]) ** -l for l in range(levels)]
    fit = estimate_constants(stats, meshes, alpha=given["alpha"], half_beta=given["alpha"] is None,
                             cost_per_step=cfg["c3"])
    c = fit.constants
    values = {"c1": c.c1, "c2_prime": c.c2_prime, "c2": c.c2, "alpha": c.alpha, "beta": c.beta}
    values.update({k: v for k, v in given.items() if v is not None})
    if given["beta"] is not None and given["alpha"] is None:
        values["alpha"] = values["beta"] / 2
    constants = MlmcConstants(values["c1"], values["c2_prime"], values["c2"], cfg["c3"], values["alpha"], values["beta"])
    report["pilot"] = {
        "levels": [asdict(s) for s in stats],
        "fitted_alpha": fit.alpha_fitted,
        "fitted_beta": fit.beta_fitted,
        "beta_capped": fit.capped,
    }
    return constants, report


def cmd_mlmc(cfg):
    problem = make_problem(cfg["problem"])
    constants, report = _resolve_constants(cfg, problem)
    plan = plan_mlmc(cfg["epsilon"], constants, cfg["h0"], cfg["M"], cfg["d1"], max_level=cfg["max_level"])
    t0 = time.perf_counter()
    result = mlmc_estimate(plan, problem, cfg["hurst"], cfg["functional"], cfg["seed"], cfg["order"], cfg["workers"])
    seconds = time.perf_counter() - t0
    costs = cost_model(plan, cfg["cost_model"])
    payload = {
        "constants": asdict(constants),
        "plan": {"L": plan.L, "samples": list(plan.samples), "d1": plan.d1, "M": plan.M, "h0": plan.h0},
        "estimate": result.estimate,
        "estimator_variance": result.variance,
        "levels": [{k: v for k, v in asdict(s).items() if k != "seconds"} for s in result.levels],
        "modeled_mse": modeled_mse(plan, constants),
        "modeled_cost": modeled_cost(plan, constants),
        "cost_model": asdict(costs),
        **report,
    }
    return None, payload, {"measured_seconds": seconds}


def cmd_compare(cfg):
    rep = compare_mlmc_classical(CompareConfig(**_compare_kwargs(cfg)), cfg["workers"])
    payload = rep.to_dict()
    timing = {k: payload.pop(k) for k in ("mlmc_seconds", "classical_seconds")}
    return None, payload, timing


def cmd_diagnostics(cfg):
    try:
        with open(cfg["input"]) as fh:
            path = read_path_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {cfg['input']}: {exc}") from None
    p = cfg["p"]
    exponent = cfg["exponent"] if cfg["exponent"] is not None else min(1.0, 1.0 / p)
    payload = {
        "p_variation": p_variation(path, p),
        "holder_norm": holder_norm(path, exponent),
        "holder_exponent": exponent,
        "greedy_count": greedy_count(path, p, cfg["alpha"]),
    }
    return None, payload, {}


COMMANDS = {
    "simulate-fbm": cmd_simulate_fbm,
    "solve": cmd_solve,
    "strong-rate": cmd_strong_rate,
    "weak-rate": cmd_weak_rate,
    "mlmc": cmd_mlmc,
    "compare": cmd_compare,
    "diagnostics": cmd_diagnostics,
}


def run_experiment(cfg):
    """Run one resolved configuration and write its outputs."""
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    header, data, extra = COMMANDS[cfg["command"]](cfg)
    wall = time.perf_counter() - t0
    fmt = cfg.get("format", "json")
    if header is None:
        text = format_json(data, cfg)
    elif fmt == "json":
        payload = {"columns": header, "rows": [list(map(float, r)) for r in data]}
        payload.update({k: v for k, v in extra.items() if k == "fit"})
        text = format_json(payload, cfg)
    else:
        notes = []
        if "fit" in extra:
            notes = [f"fit {k} = {v}" for k, v in sorted(extra["fit"].items())]
        text = format_csv(header, data, cfg, notes)
    _emit(text, cfg, started, wall, extra)
    if "fit" in extra and "slope" in extra["fit"]:
        fit = extra["fit"]
        print(f"fitted slope {fit['slope']:.4f} +/- {1.96 * fit['slope_stderr']:.4f}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_experiment(cfg)
    except InfeasiblePlan as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
