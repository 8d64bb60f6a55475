"""Multilevel Monte Carlo: coupled level sampling, planning and cost models.

Conventions: level ``l`` uses mesh ``h_l = h0 * M**-l``.  The planner works
with the model

    bias      <= c1 h_L^alpha
    Var Y_0   <= c2' / N_0
    Var Y_l   <= c2 h_l^beta / N_l
    cost_l    <= c3 N_l (1/h_l + 1/h_{l-1})      (c3 N_0 / h0 at level 0)

where only the coarsest mesh ``h0`` enters (not the horizon and the number
of coarse steps separately).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasiblePlan
from .fbm import FbmSpec, coarsen_increments, hosking_batch
from .rde import FUNCTIONALS, Problem
from .rng import RngStream

# first entry of every stream key used by the estimator
STREAM_MLMC = 0
CHUNK = 256
BETA_ONE_TOL = 1e-6


@dataclass(frozen=True)
class MlmcConstants:
    c1: float
    c2_prime: float
    c2: float
    c3: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("c1", "c2_prime", "c2", "c3", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.beta > 2 * self.alpha * (1 + 1e-12):
            raise DomainError(f"need beta <= 2 alpha, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class MlmcPlan:
    M: int
    h0: float
    L: int
    samples: tuple
    d1: float | None = None
    horizon: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise DomainError("refinement factor M must be an integer >= 2")
        if not self.h0 > 0:
            raise DomainError("h0 must be positive")
        if self.L < 0 or len(self.samples) != self.L + 1:
            raise DomainError(f"need L+1={self.L + 1} sample counts, got {len(self.samples)}")
        if any(n < 1 for n in self.samples):
            raise DomainError("every level needs at least one sample")
        if self.d1 is not None and not self.d1 > 1:
            raise DomainError("d1 must exceed 1")
        object.__setattr__(self, "samples", tuple(self.samples))

    def mesh(self, level):
        return self.h0 * float(self.M) ** (-level)

    def steps(self, level):
        n = self.horizon / self.mesh(level)
        if abs(n - round(n)) > 1e-9 * n:
            raise DomainError(f"mesh {self.mesh(level)} does not divide horizon {self.horizon}")
        return int(round(n))


# ---------------------------------------------------------------- planning


def choose_L(epsilon, d1, constants: MlmcConstants, h0, M):
    """Smallest L with bias ``c1 h_L^alpha <= epsilon / d1``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    ratio = d1 * constants.c1 * h0**constants.alpha / epsilon
    if ratio <= 1.0:
        return 0
    # guard against log(8)/log(2) landing a hair above 3
    x = math.log(ratio) / (constants.alpha * math.log(M))
    return max(0, math.ceil(x - 1e-12))


def _geometric(M, beta, L):
    """``sum_{l=1}^{L} M^{l(1-beta)/2}``, continuous in real L and beta."""
    x = 0.5 * (1.0 - beta) * math.log(M)
    if abs(x) < 1e-15:
        return float(L)
    return math.exp(x) * math.expm1(L * x) / math.expm1(x)


def sqrt_multiplier(epsilon, constants: MlmcConstants, h0, M, L):
    """Square root of the Lagrange multiplier for a fixed (possibly real) L."""
    c = constants
    budget = epsilon**2 - c.c1**2 * h0 ** (2 * c.alpha) * float(M) ** (-2 * c.alpha * L)
    if budget <= 0:
        raise InfeasiblePlan(
            f"bias at L={L} alone exceeds epsilon={epsilon}; increase L"
        )
    head = math.sqrt(c.c2_prime * c.c3 * h0 ** (-c.beta))
    tail = math.sqrt(c.c2 * c.c3) * math.sqrt((M + 1) / M) * _geometric(M, c.beta, L)
    return (head + tail) * h0 ** (-(1 - c.beta) / 2) / budget


def allocate_samples_lagrange(epsilon, constants: MlmcConstants, h0, M, L, rounded=True):
    """Cost-optimal sample counts for a given number of levels.

    ``L`` may be real-valued (levels ``0..ceil(L)`` are returned); the
    modeled variance then exactly fills ``epsilon^2`` minus the squared bias.
    Valid for every beta in (0, 1], including beta = 1.
    """
    c = constants
    s = sqrt_multiplier(epsilon, c, h0, M, L)
    n_levels = math.ceil(L - 1e-12) if L > 0 else 0
    raw = [s * math.sqrt(c.c2_prime * h0 / c.c3)]
    base = s * math.sqrt(c.c2 / c.c3) * h0 ** ((1 + c.beta) / 2) * math.sqrt(M / (M + 1))
    raw += [base * float(M) ** (-l * (1 + c.beta) / 2) for l in range(1, n_levels + 1)]
    if not rounded:
        return raw
    return tuple(max(1, math.ceil(n)) for n in raw)


def real_level_count(epsilon, d1, constants: MlmcConstants, h0, M):
    """Un-rounded level count ``log(d1 c1 h0^alpha / epsilon) / (alpha log M)``."""
    c = constants
    return math.log(d1 * c.c1 * h0**c.alpha / epsilon) / (c.alpha * math.log(M))


def allocate_samples_closed_form(epsilon, d1, constants: MlmcConstants, h0, M, rounded=True):
    """Explicit sample counts for beta < 1, with L taken from :func:`choose_L`.

    The expression substitutes the un-rounded level count, i.e. a bias of
    exactly ``epsilon / d1``, into the Lagrange allocation.
    """
    c = constants
    if c.beta >= 1:
        raise DomainError("closed-form allocation needs beta < 1; use allocate_samples_lagrange")
    if not d1 > 1:
        raise DomainError("d1 must exceed 1")
    if d1 * c.c1 * h0**c.alpha <= epsilon:
        raise DomainError("bias target already met at level 0; closed form is undefined")
    kappa = (1 - c.beta) / (2 * c.alpha)
    r = float(M) ** ((1 - c.beta) / 2)
    growth = d1**kappa * c.c1**kappa * h0 ** ((1 - c.beta) / 2) * epsilon ** (-kappa)
    bracket = math.sqrt(c.c2_prime * h0 ** (-c.beta)) + math.sqrt(c.c2) * math.sqrt(
        (M + 1) / M
    ) * r * (growth - 1) / (r - 1)
    stat = epsilon**2 * (1 - d1**-2)
    L = choose_L(epsilon, d1, c, h0, M)
    raw = [math.sqrt(c.c2_prime * h0**c.beta) / stat * bracket]
    lead = math.sqrt(c.c2) * math.sqrt(M / (M + 1)) * h0**c.beta / stat * bracket
    raw += [lead * float(M) ** (-l * (1 + c.beta) / 2) for l in range(1, L + 1)]
    if not rounded:
        return raw
    return tuple(max(1, math.ceil(n)) for n in raw)


def modeled_variance(samples, constants: MlmcConstants, h0, M):
    c = constants
    v = c.c2_prime / samples[0]
    for l, n in enumerate(samples[1:], start=1):
        v += c.c2 * (h0 * float(M) ** -l) ** c.beta / n
    return v


def modeled_mse(plan: MlmcPlan, constants: MlmcConstants):
    """Squared bias bound plus modeled estimator variance."""
    bias = constants.c1 * plan.mesh(plan.L) ** constants.alpha
    return bias**2 + modeled_variance(plan.samples, constants, plan.h0, plan.M)


def modeled_cost(plan: MlmcPlan, constants: MlmcConstants):
    c3 = constants.c3
    cost = c3 * plan.samples[0] / plan.h0
    for l in range(1, plan.L + 1):
        cost += c3 * plan.samples[l] * (1 / plan.mesh(l) + 1 / plan.mesh(l - 1))
    return cost


def level_count_cost(L, epsilon, constants: MlmcConstants, h0, M):
    """Modeled cost of the optimal allocation as a function of (real) L."""
    c = constants
    budget = epsilon**2 - c.c1**2 * h0 ** (2 * c.alpha) * float(M) ** (-2 * c.alpha * L)
    if budget <= 0:
        return math.inf
    head = math.sqrt(c.c2_prime * c.c3 * h0 ** (-c.beta))
    tail = math.sqrt(c.c2 * c.c3) * math.sqrt((M + 1) / M) * _geometric(M, c.beta, L)
    return (head + tail) ** 2 * h0 ** (-(1 - c.beta)) / budget


def numeric_optimal_L(epsilon, constants: MlmcConstants, h0, M, max_L=100):
    """Integer L minimizing :func:`level_count_cost`."""
    costs = [level_count_cost(L, epsilon, constants, h0, M) for L in range(max_L + 1)]
    best = int(np.argmin(costs))
    if not math.isfinite(costs[best]):
        raise InfeasiblePlan(f"no L <= {max_L} meets epsilon={epsilon}")
    return best


def c4_prime(constants: MlmcConstants, d1, M):
    """Leading complexity coefficient when alpha = beta/2, as a function of d1."""
    c = constants
    beta = c.beta
    r = float(M) ** ((1 - beta) / 2)
    variance_part = (
        c.c1 ** ((1 - beta) / beta) * c.c2 ** (1 / beta) / (d1**2 - 1)
        * float(M) ** (3 * (1 - beta) / 2) / (M * (r - 1) ** 2)
    )
    bias_part = c.c1 ** (2 / beta) * M / (M - 1)
    return c.c3 * d1 ** (2 / beta) * (M + 1) * (variance_part + bias_part)


def optimal_d1(constants: MlmcConstants, M):
    """Error split minimizing :func:`c4_prime` (requires alpha = beta/2)."""
    c = constants
    beta = c.beta
    if not 0 < beta < 1:
        raise DomainError(f"optimal d1 needs beta in (0, 1), got {beta}")
    if not math.isclose(c.alpha, beta / 2, rel_tol=1e-9):
        raise DomainError("optimal d1 formula assumes alpha = beta/2")
    r = float(M) ** ((1 - beta) / 2)
    f1 = (
        c.c1 ** ((1 - beta) / beta) * c.c2 ** (1 / beta) * c.c3 * (M + 1) / M
        * float(M) ** (3 * (1 - beta) / 2) / (r - 1) ** 2
    )
    f2 = c.c1 ** (2 / beta) * c.c3 * M * (M + 1) / (M - 1)
    disc = math.sqrt((1 - beta) ** 2 * f1**2 + 4 * beta * f1 * f2)
    return math.sqrt(1 - (1 - beta) * f1 / (2 * f2) + disc / (2 * f2))


def complexity_beta1(L, epsilon, constants: MlmcConstants, h0, M):
    """Modeled cost for beta = 1 as a function of the level count."""
    c = constants
    budget = epsilon**2 - c.c1**2 * h0 ** (2 * c.alpha) * float(M) ** (-2 * c.alpha * L)
    if budget <= 0:
        return math.inf
    lead = math.sqrt(c.c2_prime * c.c3 / h0) + math.sqrt(c.c2 * c.c3) * math.sqrt((M + 1) / M) * L
    return lead**2 / budget


def optimal_L_beta1(epsilon, constants: MlmcConstants, h0, M):
    """Asymptotically optimal level count for beta = 1 and the implied d1.

    Returns ``(L, d1)`` with L rounded up.
    """
    c = constants
    if abs(c.beta - 1) > BETA_ONE_TOL:
        raise DomainError(f"this level rule needs beta = 1, got {c.beta}")
    if c.alpha < 0.5:
        raise DomainError("this level rule needs alpha >= 1/2")
    a, lm = c.alpha, math.log(M)
    log_inv = math.log(1 / epsilon)
    shift = math.sqrt(c.c2_prime / (c.c2 * h0) * M / (M + 1)) * a * lm
    scale = c.c1**2 * h0 ** (2 * a)
    inner = scale * (1 + shift) + scale * log_inv
    L_real = math.log(math.sqrt(inner) / epsilon) / (a * lm)
    d1 = math.sqrt(1 + shift + log_inv)
    return max(0, math.ceil(L_real - 1e-12)), d1


@dataclass(frozen=True)
class ComplexityConstants:
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float


def complexity_constants(constants: MlmcConstants, d1, h0, M):
    """Coefficients of the expansion

        cost <= c4 eps^-2(1+kappa) + c5 eps^-1/alpha + c6 eps^-(2+kappa) + c7 eps^-2 + c8

    with kappa = (1 - beta) / (2 alpha).  Only c4, c5 > 0 and c8 < 0 are
    guaranteed; the sign of c6 depends on the constants.
    """
    c = constants
    if not d1 > 1:
        raise DomainError("d1 must exceed 1")
    if c.beta >= 1:
        raise DomainError("the expansion is singular at beta = 1; use optimal_L_beta1")
    kappa = (1 - c.beta) / (2 * c.alpha)
    r = float(M) ** ((1 - c.beta) / 2)
    split = 1 - d1**-2
    geo = math.sqrt((M + 1) / M) * r / (r - 1)
    e1 = math.sqrt(c.c2_prime * h0 ** (-c.beta)) - math.sqrt(c.c2) * geo
    c4 = (
        c.c1**kappa * c.c2 ** (1 + kappa) * c.c3 * d1 ** (2 * kappa) / split
        * (M + 1) / M * r**3 / (r - 1) ** 2
    )
    c5 = c.c1 ** (1 / c.alpha) * c.c3 * d1 ** (1 / c.alpha) * M * (M + 1) / (M - 1)
    c6 = (
        (c.c1**kappa + c.c2**kappa) * math.sqrt(c.c2) * c.c3 * d1 ** (2 * kappa) / split
        * h0 ** (-(1 - c.beta) / 2) * geo * e1
    )
    c7 = c.c3 * h0 ** (-(1 - c.beta)) / split * e1**2
    c8 = -2 * c.c3 / h0 / (M - 1)
    return ComplexityConstants(c4, c5, c6, c7, c8)


def _check_rates(alpha, beta):
    if not alpha > 0 or not beta > 0 or beta > 2 * alpha * (1 + 1e-12):
        raise DomainError(f"need 0 < beta <= 2 alpha, got alpha={alpha}, beta={beta}")


def mlmc_exponent(alpha, beta):
    """Cost exponent a in cost ~ eps^-a for the multilevel estimator."""
    _check_rates(alpha, beta)
    return (1 + 2 * alpha - beta) / alpha


def classical_exponent(alpha):
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return 2 + 1 / alpha


def default_d1(constants: MlmcConstants, M):
    if abs(constants.beta - 1) <= BETA_ONE_TOL:
        return None
    if math.isclose(constants.alpha, constants.beta / 2, rel_tol=1e-9) and constants.beta < 1:
        return optimal_d1(constants, M)
    return math.sqrt(2)


def plan_mlmc(epsilon, constants: MlmcConstants, h0=1 / 64, M=2, d1=None, horizon=1.0, max_level=None):
    """Levels and sample counts meeting ``MSE <= epsilon^2`` in the model.

    d1 defaults to the optimized split when alpha = beta/2, the beta = 1
    level rule when beta = 1, and sqrt(2) otherwise.
    """
    beta_one = abs(constants.beta - 1) <= BETA_ONE_TOL
    if beta_one and d1 is None:
        L, d1 = optimal_L_beta1(epsilon, constants, h0, M)
    else:
        if d1 is None:
            d1 = default_d1(constants, M)
        L = choose_L(epsilon, d1, constants, h0, M)
    bias2 = lambda L: constants.c1**2 * h0 ** (2 * constants.alpha) * float(M) ** (-2 * constants.alpha * L)
    while bias2(L) >= epsilon**2:
        L += 1
    if max_level is not None and L > max_level:
        raise InfeasiblePlan(f"plan needs L={L} levels, above the limit {max_level}")
    samples = allocate_samples_lagrange(epsilon, constants, h0, M, L)
    plan = MlmcPlan(M, h0, L, samples, d1, horizon)
    if modeled_mse(plan, constants) > epsilon**2 * (1 + 1e-12):
        raise InfeasiblePlan("rounded plan violates the error budget")
    return plan


# ------------------------------------------------------------ cost models

COST_MODELS = ("giles", "linear", "quadratic")


@dataclass(frozen=True)
class CostReport:
    model: str
    mlmc_cost: float
    classical_cost: float
    classical_paths: float
    ratio: float


def cost_model(plan: MlmcPlan, model="linear", samples=None) -> CostReport:
    """Modeled work of the MLMC run and of cost-matched classical MC.

    ``giles``: c3=1 in ``N_0/h_0 + sum N_l (1/h_l + 1/h_{l-1})``.
    ``linear``: each level costs its sample count times its finest grid size.
    ``quadratic``: as linear with squared grid sizes (an O(n^2) generator).

    The classical estimator runs at the finest mesh with the number of
    paths that equalizes the linear cost.  ``ratio`` is the
    quadratic-to-linear weighted mean grid size of the MLMC run.
    ``samples`` overrides the plan's (possibly non-integer) counts.
    """
    if model not in COST_MODELS:
        raise DomainError(f"unknown cost model {model!r}; expected one of {COST_MODELS}")
    N = np.asarray(plan.samples if samples is None else samples, dtype=float)
    sizes = np.array([plan.horizon / plan.mesh(l) for l in range(plan.L + 1)])
    linear = float(np.sum(N * sizes))
    quadratic = float(np.sum(N * sizes**2))
    paths = linear / sizes[-1]
    if model == "linear":
        mlmc, classical = linear, paths * sizes[-1]
    elif model == "quadratic":
        mlmc, classical = quadratic, paths * sizes[-1] ** 2
    else:
        per_level = sizes.copy()
        per_level[1:] += sizes[:-1]
        mlmc = float(np.sum(N * per_level)) / plan.horizon
        classical = paths * sizes[-1] / plan.horizon
    return CostReport(model, float(mlmc), float(classical), float(paths), quadratic / linear)


# -------------------------------------------------------------- estimator


@dataclass
class LevelStats:
    level: int
    mean: float
    sample_variance: float
    samples: int
    cost_units: float
    seconds: float = 0.0


@dataclass
class MlmcResult:
    estimate: float
    levels: list = field(default_factory=list)

    @property
    def variance(self):
        """Estimated variance of the estimator, sum of level variances over N_l."""
        return float(sum(s.sample_variance / s.samples for s in self.levels))


def _level_chunk(task):
    level, plan, problem, hurst, functional, seed, order, start, count, engine = task
    func = FUNCTIONALS[functional]
    n = plan.steps(level)
    spec = FbmSpec(hurst, plan.horizon, n, problem.n_drivers)
    streams = [RngStream(seed, (STREAM_MLMC, level, i), engine) for i in range(start, start + count)]
    inc = hosking_batch(spec, streams)
    fine = func(problem.terminal_batch(inc, order))
    if level == 0:
        return fine
    coarse = func(problem.terminal_batch(coarsen_increments(inc, plan.M), order))
    return fine - coarse


def level_samples(level, plan, problem: Problem, hurst, functional="g", seed=0, order=3,
                  start=0, count=None, engine="philox"):
    """Coupled samples ``P_l - P_{l-1}`` (just ``P_0`` at level 0).

    Sample ``i`` draws its fine grid from stream ``(seed, (0, level, i))``;
    the coarse grid is obtained by summing groups of ``M`` fine increments.
    """
    if count is None:
        count = plan.samples[level]
    out = []
    for s in range(start, start + count, CHUNK):
        c = min(CHUNK, start + count - s)
        out.append(_level_chunk((level, plan, problem, hurst, functional, seed, order, s, c, engine)))
    return np.concatenate(out) if out else np.zeros(0)


def coupled_level_sample(level, plan, problem: Problem, hurst, functional="g", rng=None, order=3):
    """One coupled sample driven by the given stream."""
    if not 0 <= level <= plan.L:
        raise DomainError(f"level {level} outside [0, {plan.L}]")
    func = FUNCTIONALS[functional]
    spec = FbmSpec(hurst, plan.horizon, plan.steps(level), problem.n_drivers)
    inc = hosking_batch(spec, [rng])
    value = func(problem.terminal_batch(inc, order))[0]
    if level:
        value -= func(problem.terminal_batch(coarsen_increments(inc, plan.M), order))[0]
    return float(value)


def _chunk_tasks(plan, problem, hurst, functional, seed, order, engine):
    tasks = []
    for level, N in enumerate(plan.samples):
        for s in range(0, N, CHUNK):
            tasks.append((level, plan, problem, hurst, functional, seed, order, s, min(CHUNK, N - s), engine))
    return tasks


def run_tasks(fn, tasks, workers=1):
    """Map ``fn`` over tasks, in order, optionally in worker processes."""
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def mlmc_estimate(plan: MlmcPlan, problem: Problem, hurst, functional="g", seed=0, order=3,
                  workers=1, engine="philox") -> MlmcResult:
    """Sum of level means; bit-identical for a given seed and any ``workers``."""
    tasks = _chunk_tasks(plan, problem, hurst, functional, seed, order, engine)
    t0 = time.perf_counter()
    chunks = run_tasks(_level_chunk, tasks, workers)
    elapsed = time.perf_counter() - t0
    stats = []
    for level, N in enumerate(plan.samples):
        values = np.concatenate([c for t, c in zip(tasks, chunks) if t[0] == level])
        steps = plan.steps(level) + (plan.steps(level - 1) if level else 0)
        var = float(np.var(values, ddof=1)) if N > 1 else 0.0
        stats.append(LevelStats(level, float(np.mean(values)), var, N, float(N * steps)))
    total_units = sum(s.cost_units for s in stats)
    for s in stats:
        s.seconds = elapsed * s.cost_units / total_units
    estimate = float(sum(s.mean for s in stats))
    return MlmcResult(estimate, stats)


def pilot_run(problem: Problem, hurst, h0=1 / 64, M=2, levels=4, samples=200, functional="g",
              seed=0, order=3, horizon=1.0, workers=1):
    """Fixed-sample run over ``levels`` levels for estimating the constants."""
    plan = MlmcPlan(M, h0, levels - 1, (samples,) * levels, None, horizon)
    return mlmc_estimate(plan, problem, hurst, functional, seed, order, workers).levels


# --------------------------------------------------- constant estimation


class InsufficientPilot(DomainError):
    pass


@dataclass(frozen=True)
class ConstantsFit:
    constants: MlmcConstants
    alpha_fitted: float
    beta_fitted: float
    capped: bool


def _loglog(x, y):
    A = np.column_stack([np.ones(len(x)), np.log(x)])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    return math.exp(coef[0]), float(coef[1])


def estimate_constants(stats, meshes, *, alpha=None, half_beta=False, cost_per_step=1.0,
                       min_levels=3, min_samples=100):
    """Fit the model constants from pilot level statistics.

    ``beta`` and ``c2`` come from a log-log least-squares fit of the level
    variances (levels >= 1), ``c2'`` is the level-0 variance, and
    ``alpha``/``c1`` from the absolute level means.  ``alpha`` may be
    fixed, or set to ``beta/2`` with ``half_beta``.  beta is capped at
    ``2 alpha`` and the cap reported.
    """
    stats = list(stats)
    meshes = np.asarray(meshes, dtype=float)
    if len(stats) < min_levels:
        raise InsufficientPilot(f"need at least {min_levels} pilot levels, got {len(stats)}")
    if any(s.samples < min_samples for s in stats):
        raise InsufficientPilot(f"every pilot level needs at least {min_samples} samples")
    h = meshes[1:]
    var = np.array([s.sample_variance for s in stats[1:]])
    mean = np.abs([s.mean for s in stats[1:]])
    if np.any(var <= 0) or np.any(mean <= 0):
        raise InsufficientPilot("pilot levels with zero mean or variance cannot be fitted")
    c2, beta = _loglog(h, var)
    c2_prime = stats[0].sample_variance
    if half_beta:
        alpha = beta / 2
    if alpha is None:
        c1, alpha_fit = _loglog(h, mean)
        alpha = alpha_fit
    else:
        alpha_fit = alpha
        c1 = math.exp(float(np.mean(np.log(mean) - alpha * np.log(h))))
    capped = beta > 2 * alpha
    if capped:
        beta = 2 * alpha
    constants = MlmcConstants(c1, c2_prime, c2, cost_per_step, alpha, beta)
    return ConstantsFit(constants, alpha_fit, beta if not capped else 2 * alpha, capped)
