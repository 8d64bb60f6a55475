import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from roughmlmc.errors import DomainError, InfeasiblePlan
from roughmlmc.mlmc import (
    InsufficientPilot,
    LevelStats,
    MlmcConstants,
    MlmcPlan,
    allocate_samples_closed_form,
    allocate_samples_lagrange,
    c4_prime,
    choose_L,
    classical_exponent,
    complexity_beta1,
    complexity_constants,
    cost_model,
    coupled_level_sample,
    estimate_constants,
    level_samples,
    mlmc_estimate,
    mlmc_exponent,
    modeled_cost,
    modeled_mse,
    modeled_variance,
    numeric_optimal_L,
    optimal_d1,
    optimal_L_beta1,
    pilot_run,
    plan_mlmc,
    real_level_count,
)
from roughmlmc.rde import make_problem
from roughmlmc.rng import RngStream

UNIT = MlmcConstants(1.0, 1.0, 1.0, 1.0, 0.3, 0.6)

positive = st.floats(0.1, 10.0)


@st.composite
def constants(draw, beta_max=0.95):
    alpha = draw(st.floats(0.15, 1.0))
    beta = draw(st.floats(0.1, min(2 * alpha, beta_max)))
    return MlmcConstants(draw(positive), draw(positive), draw(positive), draw(positive), alpha, beta)


def test_constants_validation():
    with pytest.raises(DomainError):
        MlmcConstants(1, 1, 1, 1, 0.3, 0.7)
    with pytest.raises(DomainError):
        MlmcConstants(0, 1, 1, 1, 0.3, 0.6)


def test_plan_validation():
    with pytest.raises(DomainError):
        MlmcPlan(2, 1 / 8, 1, (10,))
    with pytest.raises(DomainError):
        MlmcPlan(1, 1 / 8, 0, (10,))
    with pytest.raises(DomainError):
        MlmcPlan(2, 1 / 8, 1, (10, 0))
    with pytest.raises(DomainError):
        MlmcPlan(2, 1 / 8, 0, (10,), d1=1.0)
    p = MlmcPlan(2, 1 / 8, 2, (10, 5, 2))
    assert p.mesh(2) == 1 / 32 and p.steps(2) == 32


def test_choose_L_examples():
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, 1.0, 0.6)
    assert choose_L(0.125, 1.0, c, 1.0, 2) == 3
    assert choose_L(1.0, 1.0, c, 1.0, 2) == 0
    assert choose_L(0.01, math.sqrt(2), UNIT, 1.0, 2) == 24


@given(constants(), st.floats(1e-4, 1e-1), st.sampled_from([2, 3, 4]))
def test_choose_L_is_smallest_meeting_bias(c, eps, M):
    d1, h0 = math.sqrt(2), 1 / 16
    L = choose_L(eps, d1, c, h0, M)
    bias = lambda L: c.c1 * (h0 * M**-L) ** c.alpha
    assert bias(L) <= eps / d1 * (1 + 1e-9)
    if L > 0:
        assert bias(L - 1) > eps / d1


def test_level_zero_allocation_is_single_level_budget():
    c = MlmcConstants(0.5, 3.0, 1.0, 1.0, 0.5, 0.6)
    eps, h0 = 0.3, 1 / 16
    budget = eps**2 - c.c1**2 * h0 ** (2 * c.alpha)
    assert allocate_samples_lagrange(eps, c, h0, 2, 0) == (math.ceil(c.c2_prime / budget),)


def test_lagrange_infeasible_when_bias_exceeds_epsilon():
    with pytest.raises(InfeasiblePlan):
        allocate_samples_lagrange(0.01, UNIT, 1.0, 2, 2)


@given(constants(beta_max=1.0), st.integers(1, 12))
def test_lagrange_counts_non_increasing(c, L):
    h0, M = 1 / 16, 2
    eps = 2 * c.c1 * (h0 * M**-L) ** c.alpha
    raw = allocate_samples_lagrange(eps, c, h0, M, L, rounded=False)
    assert all(a >= b for a, b in zip(raw[1:], raw[2:]))


@given(constants(), st.floats(0.5, 3.0))
def test_lagrange_fills_the_variance_budget_exactly(c, decades):
    h0, M = 1 / 16, 2
    eps = c.c1 * h0**c.alpha * 10**-decades
    L = choose_L(eps, math.sqrt(2), c, h0, M)
    raw = allocate_samples_lagrange(eps, c, h0, M, L, rounded=False)
    bias2 = c.c1**2 * (h0 * M**-L) ** (2 * c.alpha)
    assert modeled_variance(raw, c, h0, M) == pytest.approx(eps**2 - bias2, rel=1e-9)


def test_allocation_is_stationary():
    c = MlmcConstants(1.3, 0.7, 2.0, 1.0, 0.4, 0.6)
    h0, M, L, eps = 1 / 16, 2, 5, 0.2
    raw = np.array(allocate_samples_lagrange(eps, c, h0, M, L, rounded=False))
    sizes = np.array([1 / h0] + [1 / (h0 * M**-l) + 1 / (h0 * M ** -(l - 1)) for l in range(1, L + 1)])
    var = np.array([c.c2_prime] + [c.c2 * (h0 * M**-l) ** c.beta for l in range(1, L + 1)])
    target = var @ (1 / raw)
    base = sizes @ raw
    for i in range(L + 1):
        for j in range(L + 1):
            if i == j:
                continue
            # move level i by 10% and restore the variance with level j
            for factor in (0.9, 1.1):
                n = raw.copy()
                n[i] *= factor
                rest = target - sum(var[k] / n[k] for k in range(L + 1) if k != j)
                if rest <= 0:
                    continue
                n[j] = var[j] / rest
                assert sizes @ n > base


def test_closed_form_rejects_beta_one():
    c = MlmcConstants(1, 1, 1, 1, 0.5, 1.0)
    with pytest.raises(DomainError):
        allocate_samples_closed_form(1e-3, math.sqrt(2), c, 1 / 8, 2)


@given(constants(), st.floats(0.3, 3.0), st.floats(1.05, 4.0))
def test_closed_form_matches_lagrange_at_unrounded_L(c, decades, d1):
    h0, M = 1 / 16, 2
    eps = d1 * c.c1 * h0**c.alpha * 10**-decades
    closed = allocate_samples_closed_form(eps, d1, c, h0, M, rounded=False)
    lag = allocate_samples_lagrange(eps, c, h0, M, real_level_count(eps, d1, c, h0, M), rounded=False)
    assert len(closed) == len(lag)
    assert np.allclose(closed, lag, rtol=1e-8)


def test_closed_form_grows_with_d1():
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, 0.3, 0.6)
    a = allocate_samples_closed_form(1e-3, 1.5, c, 1 / 64, 2, rounded=False)
    b = allocate_samples_closed_form(1e-3, 50.0, c, 1 / 64, 2, rounded=False)
    # more levels at large d1; the shared levels get more samples
    assert all(y > x for x, y in zip(a, b))


def test_optimal_d1_limits_and_domain():
    small = MlmcConstants(1.0, 1.0, 1e-12, 1.0, 0.3, 0.6)
    assert optimal_d1(small, 2) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(DomainError):
        optimal_d1(MlmcConstants(1, 1, 1, 1, 0.5, 1.0), 2)
    with pytest.raises(DomainError):
        optimal_d1(MlmcConstants(1, 1, 1, 1, 0.5, 0.6), 2)


def test_optimal_d1_unit_constants():
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, 0.3, 0.6)
    d1 = optimal_d1(c, 2)
    grid = np.arange(1.0001, 10.0, 1e-4)
    assert d1 == pytest.approx(grid[np.argmin(c4_prime(c, grid, 2))], abs=2e-4)
    h = 1e-5
    deriv = (c4_prime(c, d1 + h, 2) - c4_prime(c, d1 - h, 2)) / (2 * h)
    # relative to the size of c4', since roundoff of the difference is ~1e-16 c4' / h
    assert abs(deriv) / c4_prime(c, d1, 2) < 1e-8


def test_c5_example_and_signs():
    cc = complexity_constants(MlmcConstants(1.0, 1.0, 1.0, 1.0, 0.5, 0.6), math.sqrt(2), 1.0, 2)
    assert cc.c5 == pytest.approx(12.0)
    assert cc.c4 > 0 and cc.c8 == pytest.approx(-2.0)
    with pytest.raises(DomainError):
        complexity_constants(MlmcConstants(1, 1, 1, 1, 0.5, 1.0), 2.0, 1.0, 2)


@given(constants(), st.floats(1.05, 5.0), st.sampled_from([2, 3, 4]))
def test_leading_constants_sum_to_c4_prime(c, d1, M):
    c = MlmcConstants(c.c1, c.c2_prime, c.c2, c.c3, c.beta / 2, c.beta)
    cc = complexity_constants(c, d1, 1 / 16, M)
    assert cc.c4 + cc.c5 == pytest.approx(c4_prime(c, d1, M), rel=1e-10)


def test_beta_one_rule():
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, 0.5, 1.0)
    prev = 0
    for eps in (1e-2, 1e-3, 1e-4):
        L, d1 = optimal_L_beta1(eps, c, 1.0, 2)
        assert abs(L - numeric_optimal_L(eps, c, 1.0, 2)) <= 1
        assert d1 > prev
        prev = d1
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        L, _ = optimal_L_beta1(eps, c, 1.0, 2)
        ratios.append(complexity_beta1(L, eps, c, 1.0, 2) * eps**2 / math.log(1 / eps) ** 2)
    assert max(ratios) / min(ratios) < 2
    with pytest.raises(DomainError):
        optimal_L_beta1(1e-3, UNIT, 1.0, 2)


def test_exponents():
    assert mlmc_exponent(0.3, 0.6) == pytest.approx(10 / 3)
    assert classical_exponent(0.3) == pytest.approx(16 / 3)
    with pytest.raises(DomainError):
        mlmc_exponent(0.3, 0.7)


@given(constants(beta_max=1.0), st.floats(0.3, 3.0))
def test_planned_mse_within_budget(c, decades):
    eps = c.c1 * (1 / 16) ** c.alpha * 10**-decades
    plan = plan_mlmc(eps, c, h0=1 / 16)
    assert modeled_mse(plan, c) <= eps**2 * (1 + 1e-12)


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.6), (0.3, 0.6)])
def test_modeled_cost_exponent(alpha, beta):
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, alpha, beta)
    eps = [0.05 * 2.0**-k for k in range(3, 9)]
    costs = [modeled_cost(plan_mlmc(e, c, h0=1 / 8), c) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(costs), 1)[0]
    assert slope == pytest.approx(-mlmc_exponent(alpha, beta), abs=0.1)


def test_cost_model_single_level_and_homogeneity():
    p = MlmcPlan(2, 1 / 64, 0, (50,))
    for m in ("giles", "linear", "quadratic"):
        r = cost_model(p, m)
        assert r.mlmc_cost == pytest.approx(r.classical_cost)
    p = MlmcPlan(2, 1 / 64, 3, (80, 40, 20, 10))
    q = MlmcPlan(2, 1 / 64, 3, (160, 80, 40, 20))
    a, b = cost_model(p, "quadratic"), cost_model(q, "quadratic")
    assert b.mlmc_cost == pytest.approx(2 * a.mlmc_cost)
    assert b.ratio == pytest.approx(a.ratio)
    with pytest.raises(DomainError):
        cost_model(p, "cubic")


def test_cost_model_giles_convention():
    p = MlmcPlan(2, 1 / 4, 1, (10, 3))
    assert cost_model(p, "giles").mlmc_cost == pytest.approx(10 * 4 + 3 * (8 + 4))
    assert modeled_cost(p, UNIT) == pytest.approx(10 * 4 + 3 * (8 + 4))


def test_estimate_constants_exact_power_law():
    h = 2.0 ** -np.arange(4, 9)
    stats = [LevelStats(l, 0.5 * h[l] ** 0.3, 4 * h[l] ** 0.6, 200, 0.0) for l in range(5)]
    stats[0] = LevelStats(0, 0.8, 0.25, 200, 0.0)
    fit = estimate_constants(stats, h)
    assert fit.constants.beta == pytest.approx(0.6, abs=1e-10)
    assert fit.constants.c2 == pytest.approx(4.0, rel=1e-10)
    assert fit.constants.alpha == pytest.approx(0.3, abs=1e-10)
    assert fit.constants.c1 == pytest.approx(0.5, rel=1e-10)
    assert fit.constants.c2_prime == 0.25
    assert not fit.capped


def test_estimate_constants_noisy_means_and_cap(rng):
    h = 2.0 ** -np.arange(3, 10)
    means = 0.5 * h**0.3 * (1 + 0.05 * rng.standard_normal(len(h)))
    stats = [LevelStats(l, means[l], 4 * h[l] ** 0.9, 150, 0.0) for l in range(len(h))]
    fit = estimate_constants(stats, h)
    x, y = np.log(h[1:]), np.log(means[1:])
    res = np.polyfit(x, y, 1, cov=True)
    assert abs(fit.alpha_fitted - 0.3) < 3 * math.sqrt(res[1][0, 0]) + 1e-3
    assert fit.capped and fit.constants.beta == pytest.approx(2 * fit.constants.alpha)


def test_estimate_constants_needs_pilot():
    h = [1 / 8, 1 / 16]
    stats = [LevelStats(l, 0.1, 0.1, 200, 0.0) for l in range(2)]
    with pytest.raises(InsufficientPilot):
        estimate_constants(stats, h)
    stats = [LevelStats(l, 0.1, 0.1, 20, 0.0) for l in range(3)]
    with pytest.raises(InsufficientPilot):
        estimate_constants(stats, [1 / 8, 1 / 16, 1 / 32])


SPHERE = make_problem("sphere")


def test_level_zero_is_single_level_sample():
    plan = MlmcPlan(2, 1 / 16, 2, (4, 2, 1))
    a = coupled_level_sample(0, plan, SPHERE, 0.4, "g", RngStream(3, (0, 0, 1)))
    b = level_samples(0, plan, SPHERE, 0.4, "g", seed=3, start=1, count=1)[0]
    assert a == b
    with pytest.raises(DomainError):
        coupled_level_sample(3, plan, SPHERE, 0.4, "g", RngStream(3))


def test_single_level_estimate():
    plan = MlmcPlan(2, 1 / 16, 0, (30,))
    res = mlmc_estimate(plan, SPHERE, 0.4, "g", seed=2)
    direct = level_samples(0, plan, SPHERE, 0.4, "g", seed=2)
    assert res.estimate == pytest.approx(direct.mean(), rel=0, abs=0)


def test_zero_field_zero_variance():
    plan = MlmcPlan(2, 1 / 8, 2, (20, 10, 5))
    res = mlmc_estimate(plan, make_problem("scalar-linear:0"), 0.4, "terminal", seed=1)
    assert res.estimate == 1.0
    assert res.variance == 0.0


def test_estimate_deterministic_across_workers():
    plan = MlmcPlan(2, 1 / 16, 2, (300, 40, 10))
    a = mlmc_estimate(plan, SPHERE, 0.4, "g", seed=5, workers=1)
    b = mlmc_estimate(plan, SPHERE, 0.4, "g", seed=5, workers=2)
    assert a.estimate == b.estimate
    assert [s.sample_variance for s in a.levels] == [s.sample_variance for s in b.levels]


def test_level_variance_decays():
    plan = MlmcPlan(2, 1 / 64, 4, (10, 400, 400, 400, 400))
    res = mlmc_estimate(plan, SPHERE, 0.4, "f", seed=8)
    fine_g = [np.var(level_samples(l, plan, SPHERE, 0.4, "g", seed=8), ddof=1) for l in (1, 4)]
    assert fine_g[1] < fine_g[0]
    assert res.levels[0].samples == 10


def test_telescoping_unbiased():
    # mean of 50 two-level estimates versus single-level MC at the finest mesh
    plan = MlmcPlan(2, 1 / 8, 2, (40, 20, 10))
    ests = [mlmc_estimate(plan, SPHERE, 0.4, "g", seed=s).estimate for s in range(50)]
    fine = MlmcPlan(2, 1 / 32, 0, (2000,))
    ref = level_samples(0, fine, SPHERE, 0.4, "g", seed=999)
    m1, s1 = np.mean(ests), np.std(ests, ddof=1) / math.sqrt(len(ests))
    m2, s2 = ref.mean(), ref.std(ddof=1) / math.sqrt(len(ref))
    assert abs(m1 - m2) < 1.96 * (s1 + s2)


@pytest.mark.slow
def test_sphere_pilot_beta_in_band():
    h = [1 / 64 * 2.0**-l for l in range(5)]
    stats = pilot_run(SPHERE, 0.4, 1 / 64, 2, levels=5, samples=2000, functional="g", seed=4)
    fit = estimate_constants(stats, h, half_beta=True)
    assert 0.4 <= fit.beta_fitted <= 0.8
