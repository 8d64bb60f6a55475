"""Convergence-rate ladders, log-log rate fits and the MLMC versus classical comparison."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .fbm import FbmSpec, coarsen_increments, hosking_batch
from .mlmc import CHUNK, MlmcPlan, cost_model, mlmc_estimate, run_tasks
from .rde import FUNCTIONALS, Problem, check_order, make_problem, solve_linear_batch
from .rng import RngStream

STREAM_RATES = 1
STREAM_CLASSICAL = 2
Z_95 = 1.96
STRONG_MODES = ("terminal", "sup", "exact")


@dataclass
class ErrorLadder:
    """Monte Carlo errors per mesh, finest last."""

    meshes: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    paths: int
    kind: str = "strong"

    def __post_init__(self):
        self.meshes = np.asarray(self.meshes, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        self.stderrs = np.asarray(self.stderrs, dtype=float)
        if np.any(np.diff(self.meshes) >= 0):
            raise DomainError("ladder meshes must be strictly decreasing")
        if np.any(self.stderrs < 0):
            raise DomainError("standard errors must be nonnegative")

    @property
    def steps(self):
        return np.rint(1.0 / self.meshes).astype(int)

    def confidence_band(self):
        return self.errors - Z_95 * self.stderrs, self.errors + Z_95 * self.stderrs

    def rows(self):
        return [(float(h), float(e), float(s)) for h, e, s in zip(self.meshes, self.errors, self.stderrs)]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_stderr: float
    window: tuple

    def predict(self, mesh):
        return math.exp(self.intercept) * np.asarray(mesh, dtype=float) ** self.slope


def fit_rate(ladder: ErrorLadder, max_mesh=None, window=None) -> RateFit:
    """Least-squares slope of log error against log mesh.

    The window is either an index range ``(i0, i1)`` (half open) or every
    point with mesh <= ``max_mesh``.
    """
    n = len(ladder.meshes)
    if window is None:
        idx = np.arange(n) if max_mesh is None else np.flatnonzero(ladder.meshes <= max_mesh)
        if len(idx) == 0:
            raise DomainError(f"no ladder point has mesh <= {max_mesh}")
        window = (int(idx[0]), int(idx[-1]) + 1)
    i0, i1 = window
    if i1 - i0 < 2:
        raise DomainError("a rate fit needs at least two points")
    h = ladder.meshes[i0:i1]
    e = ladder.errors[i0:i1]
    if np.any(e <= 0):
        raise DomainError("errors must be positive on the fit window")
    x, y = np.log(h), np.log(e)
    if len(x) == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return RateFit(float(slope), float(y[0] - slope * x[0]), 0.0, (i0, i1))
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), (i0, i1))


def _grid_sizes(steps, mode):
    sizes = set(steps)
    if mode in ("terminal", "sup"):
        sizes |= {2 * n for n in steps}
    return sorted(sizes)


def _ladder_chunk(task):
    problem, hurst, steps, mode, functional, seed, order, start, count, engine = task
    sizes = _grid_sizes(steps, mode)
    fine = sizes[-1]
    for n in sizes:
        if fine % n:
            raise DomainError(f"grid size {n} does not divide the finest grid {fine}")
    spec = FbmSpec(hurst, problem.horizon, fine, problem.n_drivers)
    streams = [RngStream(seed, (STREAM_RATES, i), engine) for i in range(start, start + count)]
    inc = hosking_batch(spec, streams)
    keep = mode == "sup"
    grids, states = {}, {}
    for n in sizes:
        grids[n] = coarsen_increments(inc, fine // n)
        states[n] = solve_linear_batch(problem.y0, grids[n], problem.fields.matrices, order, keep_path=keep)
    out = np.empty((count, len(steps)))
    for j, n in enumerate(steps):
        if mode == "weak":
            out[:, j] = FUNCTIONALS[functional](states[n])
        elif mode == "terminal":
            out[:, j] = np.linalg.norm(states[n] - states[2 * n], axis=-1)
        elif mode == "sup":
            diff = states[n] - states[2 * n][:, ::2]
            out[:, j] = np.linalg.norm(diff, axis=-1).max(axis=1)
        else:
            exact = problem.exact_terminal(inc)
            out[:, j] = np.linalg.norm(states[n] - exact, axis=-1)
    return out


def ladder_samples(problem: Problem, hurst, steps, n_paths, seed=0, order=3, mode="terminal",
                   functional="terminal", workers=1, engine="philox", start=0):
    """Per-path error samples, shape ``(n_paths, len(steps))``.

    Path ``i`` (counting from ``start``) uses one fBM grid from stream
    ``(seed, (1, i))`` at the finest size needed; all coarser grids are
    exact block sums of it.
    """
    check_order(order, hurst)
    steps = tuple(sorted(int(n) for n in steps))
    if mode not in STRONG_MODES + ("weak",):
        raise DomainError(f"unknown ladder mode {mode!r}")
    if mode == "weak" and functional not in FUNCTIONALS:
        raise DomainError(f"unknown functional {functional!r}")
    tasks = [
        (problem, hurst, steps, mode, functional, seed, order, s, min(CHUNK, start + n_paths - s), engine)
        for s in range(start, start + n_paths, CHUNK)
    ]
    return np.concatenate(run_tasks(_ladder_chunk, tasks, workers))


def ladder_from_samples(samples, steps, horizon, kind, reference=None):
    steps = np.asarray(sorted(steps))
    n = samples.shape[0]
    means = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(steps))
    errors = means if reference is None else np.abs(means - reference)
    return ErrorLadder(horizon / steps, errors, se, n, kind)


def strong_error_curve(problem: Problem, hurst, steps, n_paths, seed=0, order=3, mode="terminal",
                       workers=1) -> ErrorLadder:
    """Mean of ``|Y^N - Y^2N|`` at the terminal time (or sup over the coarse
    grid with ``mode="sup"``, or ``|Y^N - Y|`` against the closed form with
    ``mode="exact"``) for each N in ``steps``."""
    if mode not in STRONG_MODES:
        raise DomainError(f"strong mode must be one of {STRONG_MODES}")
    samples = ladder_samples(problem, hurst, steps, n_paths, seed, order, mode, workers=workers)
    return ladder_from_samples(samples, steps, problem.horizon, "strong")


def weak_error_curve(problem: Problem, functional, hurst, steps, n_paths, seed=0, order=3,
                     reference=0.0, workers=1) -> ErrorLadder:
    """``|E f(Y^N) - reference|`` for each N, with Monte Carlo standard errors."""
    samples = ladder_samples(problem, hurst, steps, n_paths, seed, order, "weak", functional, workers)
    return ladder_from_samples(samples, steps, problem.horizon, "weak", reference)


def power_ladder(lo, hi):
    """Step counts ``2**lo .. 2**hi``."""
    return tuple(2**k for k in range(lo, hi + 1))


# ------------------------------------------------------- MLMC vs classical


@dataclass
class CompareConfig:
    n0: int = 100
    h0: float = 1 / 64
    levels: int = 7
    M: int = 2
    beta: float = 0.6
    hurst: float = 0.4
    functional: str = "g"
    problem: str = "sphere"
    order: int = 3
    seed: int = 0
    horizon: float = 1.0

    def __post_init__(self):
        if self.n0 < 1 or self.levels < 0:
            raise ConfigError("n0 must be >= 1 and levels >= 0")
        if self.functional not in FUNCTIONALS:
            raise ConfigError(f"unknown functional {self.functional!r}")

    def samples(self):
        """``N_l = ceil(n0 M^{-l(1+beta)/2})``."""
        decay = (1 + self.beta) / 2
        return tuple(max(1, math.ceil(self.n0 * float(self.M) ** (-decay * l) - 1e-9))
                     for l in range(self.levels + 1))

    def plan(self):
        return MlmcPlan(self.M, self.h0, self.levels, self.samples(), None, self.horizon)


@dataclass
class CompareReport:
    config: dict
    samples: list
    mlmc_estimate: float
    mlmc_variance: float
    classical_estimate: float
    classical_variance: float
    classical_paths: float
    classical_paths_run: int
    classical_sample_variance: float
    mlmc_cost: float
    classical_cost: float
    mlmc_seconds: float
    classical_seconds: float
    level_variances: list = field(default_factory=list)

    @property
    def variance_ratio(self):
        return self.mlmc_variance / self.classical_variance

    def to_dict(self):
        out = asdict(self)
        out["variance_ratio"] = self.variance_ratio
        return out


def _classical_chunk(task):
    problem, hurst, n, functional, seed, order, start, count, horizon = task
    spec = FbmSpec(hurst, horizon, n, problem.n_drivers)
    streams = [RngStream(seed, (STREAM_CLASSICAL, i)) for i in range(start, start + count)]
    return FUNCTIONALS[functional](problem.terminal_batch(hosking_batch(spec, streams), order))


def classical_samples(problem: Problem, hurst, n_steps, n_paths, functional="g", seed=0, order=3,
                      horizon=1.0, workers=1):
    tasks = [
        (problem, hurst, n_steps, functional, seed, order, s, min(CHUNK, n_paths - s), horizon)
        for s in range(0, n_paths, CHUNK)
    ]
    return np.concatenate(run_tasks(_classical_chunk, tasks, workers))


def compare_mlmc_classical(config: CompareConfig, workers=1) -> CompareReport:
    """Run both estimators at equal modeled cost (paths times grid size).

    The classical estimator uses the finest MLMC mesh.  The cost-matched
    path count is generally fractional; ``ceil`` of it is simulated and the
    estimator variance is reported as sample variance over the matched
    (fractional) count so that both variances refer to exactly equal cost.
    """
    problem = make_problem(config.problem)
    check_order(config.order, config.hurst)
    plan = config.plan()
    costs = cost_model(plan, "linear")
    t0 = time.perf_counter()
    result = mlmc_estimate(plan, problem, config.hurst, config.functional, config.seed, config.order, workers)
    t1 = time.perf_counter()
    n_run = max(2, math.ceil(costs.classical_paths - 1e-9))
    values = classical_samples(problem, config.hurst, plan.steps(plan.L), n_run, config.functional,
                               config.seed, config.order, config.horizon, workers)
    t2 = time.perf_counter()
    s2 = float(np.var(values, ddof=1))
    return CompareReport(
        config=asdict(config),
        samples=list(plan.samples),
        mlmc_estimate=result.estimate,
        mlmc_variance=result.variance,
        classical_estimate=float(values.mean()),
        classical_variance=s2 / costs.classical_paths,
        classical_paths=costs.classical_paths,
        classical_paths_run=n_run,
        classical_sample_variance=s2,
        mlmc_cost=costs.mlmc_cost,
        classical_cost=costs.classical_cost,
        mlmc_seconds=t1 - t0,
        classical_seconds=t2 - t1,
        level_variances=[s.sample_variance for s in result.levels],
    )


def pooled_comparison(config: CompareConfig, seeds, workers=1):
    """Per-seed reports plus seed-averaged estimator variances and their ratio."""
    reports = []
    for s in seeds:
        cfg = CompareConfig(**{**asdict(config), "seed": int(s)})
        reports.append(compare_mlmc_classical(cfg, workers))
    v_ml = float(np.mean([r.mlmc_variance for r in reports]))
    v_cl = float(np.mean([r.classical_variance for r in reports]))
    return reports, v_ml, v_cl
