"""Diffusion-limit tests.

Claims covered:
    - rho(t) starts at 0, increases to rho_bar, and hits the closed values
    - the stationary linkage identities g'(inf) = 2 rate v and
      h'(inf) = 2 rate rho_bar (1 - rho_bar) hold for random models of both
      families
    - the variance ODE solution is zero at 0, nondecreasing, equals the
      exact per-edge Binomial variance for one-state models, and balances
      at rho_bar (1 - rho_bar) + v
    - the delta-selection rule keeps only g' (delta < 1) or h' (delta > 1)
    - Euler-Maruyama: determinism, stability guard, stationary variance and
      autocorrelation against the closed OU laws, halved-step bias check
    - ensemble-vs-limit discrepancy: KS at the computed lattice floor,
      variance ratio near one, degenerate ensembles flagged by a large KS
"""

import math

import numpy as np
import pytest

from edgedyn.background import validate_generator
from edgedyn.diffusion import (
    build_diffusion_spec,
    fclt_discrepancy,
    fluctuation_variance,
    lattice_ks_distance,
    normalized_fluctuations,
    rho_t,
    simulate_ou,
    simulate_ou_ensemble,
)
from edgedyn.errors import InsufficientReplications, StepTooLarge
from edgedyn.regime import RegimeModel, transient_distribution
from edgedyn.resample import (
    ContinuousResampleSpec,
    RatePairLaw,
    ScaledResampleLaw,
    Uniform,
    embedded_model,
)
from edgedyn.resample import stationary_mean as resample_mean
from edgedyn.resample import stationary_variance as resample_variance
from edgedyn.simulate import stationary_sample_resample_ct

GEN_A = validate_generator([[-2.0, 2.0], [3.0, -3.0]])
MODEL_A = RegimeModel(GEN_A, np.array([0.3, 0.5]), np.array([1.0, 0.1]), 45, 1.0)
LAW_B = ScaledResampleLaw(RatePairLaw.independent(Uniform(0, 5), Uniform(0, 3)), delta=1.0)


def random_regime_model(rng, d, delta=1.0):
    Q = rng.uniform(0.2, 1.5, size=(d, d))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return RegimeModel(
        validate_generator(Q), rng.uniform(0.1, 2.0, d), rng.uniform(0.1, 2.0, d), 50, delta
    )


def random_scaled_law(rng, n_atoms, delta=1.0):
    atoms = [
        (u, d, w)
        for u, d, w in zip(
            rng.uniform(0.1, 3.0, n_atoms),
            rng.uniform(0.1, 3.0, n_atoms),
            rng.dirichlet(np.ones(n_atoms)),
        )
    ]
    return ScaledResampleLaw(RatePairLaw.from_atoms(atoms), delta=delta)


# -- mean path ----------------------------------------------------------------------

def test_rho_limits_and_spot_value():
    spec = build_diffusion_spec(LAW_B)
    assert spec.rho(0.0) == 0.0
    assert spec.rho(1e3) == pytest.approx(0.625, abs=1e-12)
    assert rho_t(LAW_B, math.log(2.0) / 4.0) == pytest.approx(0.3125, abs=1e-14)
    assert rho_t(MODEL_A, 1e3) == pytest.approx(19.0 / 51.0, rel=1e-12)


# -- linkage identities --------------------------------------------------------------

def test_one_state_regime_ingredients():
    model = RegimeModel(validate_generator([[0.0]]), np.array([0.7]), np.array([0.3]), 9)
    spec = build_diffusion_spec(model)
    assert spec.g_prime(0.0) == pytest.approx(0.0, abs=1e-15)
    assert spec.g_prime(3.0) == pytest.approx(0.0, abs=1e-15)
    rho = 0.7
    assert spec.h_prime(math.inf) == pytest.approx(2.0 * 1.0 * rho * (1 - rho), rel=1e-12)


def test_linkage_identities_regime_family():
    rng = np.random.default_rng(60)
    for _ in range(6):
        spec = build_diffusion_spec(random_regime_model(rng, int(rng.integers(1, 4))))
        assert spec.g_prime(math.inf) == pytest.approx(2 * spec.rate * spec.v, abs=1e-10)
        assert spec.h_prime(math.inf) == pytest.approx(
            2 * spec.rate * spec.rho_bar * (1 - spec.rho_bar), abs=1e-10
        )


def test_linkage_identities_resample_family():
    rng = np.random.default_rng(61)
    for _ in range(6):
        spec = build_diffusion_spec(random_scaled_law(rng, int(rng.integers(1, 5))))
        assert spec.g_prime(math.inf) == pytest.approx(2 * spec.rate * spec.v, abs=1e-10)
        assert spec.h_prime(math.inf) == pytest.approx(
            2 * spec.rate * spec.rho_bar * (1 - spec.rho_bar), abs=1e-10
        )


def test_resample_spot_values():
    spec = build_diffusion_spec(LAW_B)
    assert spec.g_prime(math.inf) == pytest.approx(0.5859375, abs=1e-12)
    assert spec.h_prime(math.inf) == pytest.approx(1.875, abs=1e-12)


def test_noise_is_nonnegative_on_grid():
    rng = np.random.default_rng(62)
    for spec in (
        build_diffusion_spec(random_regime_model(rng, 3)),
        build_diffusion_spec(random_scaled_law(rng, 3)),
    ):
        for t in np.linspace(0.0, 10.0, 25):
            assert spec.g_prime(t) >= -1e-13
            assert spec.h_prime(t) >= 0.0


# -- variance ODE ---------------------------------------------------------------------

def test_fluctuation_variance_zero_start():
    assert fluctuation_variance(build_diffusion_spec(MODEL_A), 0.0) == 0.0


def test_fluctuation_variance_stationary_balance():
    spec = build_diffusion_spec(MODEL_A)
    target = spec.rho_bar * (1 - spec.rho_bar) + spec.v
    assert fluctuation_variance(spec, math.inf) == pytest.approx(target, rel=1e-10)
    assert fluctuation_variance(spec, 80.0) == pytest.approx(target, rel=1e-8)


def test_fluctuation_variance_one_state_is_binomial():
    # per-edge variance rho(t)(1 - rho(t)): exact for every t when d = 1
    model = RegimeModel(validate_generator([[0.0]]), np.array([0.7]), np.array([0.3]), 9)
    spec = build_diffusion_spec(model)
    for t in (0.3, 1.0, 2.5):
        r = spec.rho(t)
        assert fluctuation_variance(spec, t) == pytest.approx(r * (1 - r), rel=1e-9)
    # and the transient ODE of the finite model carries the same variance
    t = 1.0
    p = transient_distribution(model, 0, 0, t)
    marg = p[:, 0]
    m = np.arange(10)
    var_exact = (m - m @ marg) ** 2 @ marg
    assert var_exact / 9 == pytest.approx(fluctuation_variance(spec, t), rel=1e-7)


def test_fluctuation_variance_monotone_when_noise_is():
    # monotone noise integrand implies a monotone variance curve bounded by
    # the balance value; a constant up-rate with heavier down-rates makes
    # both g' and h' nondecreasing
    law = ScaledResampleLaw(
        RatePairLaw.from_atoms([(1.0, 1.0, 0.5), (1.0, 3.0, 0.5)]), delta=1.0
    )
    spec = build_diffusion_spec(law)
    grid = np.linspace(0.0, 3.0, 16)
    noise = [spec.noise(t) for t in grid]
    assert all(b >= a - 1e-12 for a, b in zip(noise, noise[1:]))
    values = [fluctuation_variance(spec, t) for t in grid]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] <= spec.stationary_variance() + 1e-12


def test_fluctuation_variance_can_overshoot_with_decreasing_noise():
    # the uniform-rates setup has E up > E down, so the noise integrand
    # decays and the variance curve overshoots its stationary value
    spec = build_diffusion_spec(LAW_B)
    peak = fluctuation_variance(spec, 0.4)
    assert peak > spec.stationary_variance()
    assert fluctuation_variance(spec, 30.0) == pytest.approx(
        spec.stationary_variance(), rel=1e-9
    )


# -- delta selection (slow/fast modulation) ----------------------------------------------

def test_delta_selection_rule():
    rng = np.random.default_rng(63)
    slow = build_diffusion_spec(random_scaled_law(rng, 3, delta=0.5))
    fast = build_diffusion_spec(random_scaled_law(rng, 3, delta=1.5))
    both = build_diffusion_spec(random_scaled_law(rng, 3, delta=1.0))
    for t in (0.1, 1.0, 5.0):
        assert slow.noise(t) == slow.g_prime(t)
        assert fast.noise(t) == fast.h_prime(t)
        assert both.noise(t) == both.g_prime(t) + both.h_prime(t)


def test_normalized_fluctuations_scaling():
    spec = build_diffusion_spec(
        ScaledResampleLaw(RatePairLaw.from_atoms([(2.0, 1.0, 1.0)]), delta=0.5)
    )
    vals = np.array([10.0, 20.0])
    out = normalized_fluctuations(vals, 16, spec, 1e9)
    # N^{delta/2} = 2 for delta = 1/2, N = 16; center is N rho_bar = 32/3
    assert out == pytest.approx((vals - 16 * (2.0 / 3.0)) / 2.0, rel=1e-9)


# -- Euler-Maruyama ------------------------------------------------------------------------

def test_ou_zero_noise_is_identically_zero():
    from edgedyn.diffusion import DiffusionSpec

    spec = DiffusionSpec(rate=1.0, rho_bar=0.5, v=0.0, delta=1.0,
                         g_prime=lambda t: 0.0, h_prime=lambda t: 0.0, kind="regime")
    times, values = simulate_ou(spec, horizon=2.0, dt=0.01, seed=4)
    assert np.all(values == 0.0)
    assert times[-1] == pytest.approx(2.0)


def test_ou_determinism():
    spec = build_diffusion_spec(LAW_B)
    _, a = simulate_ou(spec, 3.0, 0.01, seed=9)
    _, b = simulate_ou(spec, 3.0, 0.01, seed=9)
    assert np.array_equal(a, b)


def test_ou_step_guard():
    spec = build_diffusion_spec(LAW_B)  # rate = 4
    with pytest.raises(StepTooLarge):
        simulate_ou(spec, 1.0, dt=0.1, seed=0)


def test_ou_stationary_variance_and_autocorrelation():
    spec = build_diffusion_spec(LAW_B)
    horizon = 8.0 / spec.rate
    dt = 0.01 / spec.rate
    tau = 0.5 / spec.rate
    vals = simulate_ou_ensemble(spec, horizon + tau, dt, 10_000, seed=1,
                                sample_times=[horizon, horizon + tau])
    target = spec.stationary_variance()
    sample_var = vals[:, 0].var(ddof=1)
    # 3 sigma of a Gaussian sample variance plus Euler bias rate*dt/2
    tol = target * (3.0 * math.sqrt(2.0 / 10_000) + 0.01)
    assert abs(sample_var - target) < tol
    corr = np.corrcoef(vals[:, 0], vals[:, 1])[0, 1]
    assert abs(corr - math.exp(-spec.rate * tau)) < 3.5 * math.sqrt(1.0 / 10_000) * (
        1 - math.exp(-2 * spec.rate * tau)
    ) + 0.01


def test_ou_halved_step_within_mc_error():
    spec = build_diffusion_spec(LAW_B)
    horizon = 8.0 / spec.rate
    coarse = simulate_ou_ensemble(spec, horizon, 0.02 / spec.rate, 8000, seed=3)[:, 0]
    fine = simulate_ou_ensemble(spec, horizon, 0.01 / spec.rate, 8000, seed=4)[:, 0]
    target = spec.stationary_variance()
    mc = 3.0 * math.sqrt(2.0 / 8000) * target
    assert abs(coarse.var(ddof=1) - fine.var(ddof=1)) < 2 * mc


# -- ensemble discrepancy ---------------------------------------------------------------------

def test_fclt_discrepancy_resample_desk_scale():
    # N = 45 uniform-rates setup: KS sits at the computed lattice floor
    # (0.0602) and the variance ratio matches the exact finite-N value.
    spec_model = ContinuousResampleSpec(LAW_B.increments, period=1.0 / 45)
    values = stationary_sample_resample_ct(spec_model, 45, 10_000, seed=42)
    spec = build_diffusion_spec(LAW_B)
    ks, var_ratio = fclt_discrepancy(values, spec, t=40.0, n_edges=45)
    assert abs(ks - 0.0602) < 0.02
    exact_ratio = resample_variance(embedded_model(LAW_B, 45))[0] / 45 / fluctuation_variance(spec, 40.0)
    assert abs(var_ratio - exact_ratio) < 3.0 * math.sqrt(2.0 / 10_000)


def test_fclt_variance_ratio_tends_to_one():
    # exact finite-N ratios shrink toward 1; empirical ratios track them
    spec = build_diffusion_spec(LAW_B)
    sigma2 = spec.stationary_variance()
    exact_gaps, emp_ok = [], []
    for n, reps in ((45, 20_000), (100, 20_000), (200, 20_000)):
        exact_ratio = resample_variance(embedded_model(LAW_B, n))[0] / n / sigma2
        exact_gaps.append(abs(exact_ratio - 1.0))
        values = stationary_sample_resample_ct(
            ContinuousResampleSpec(LAW_B.increments, period=n ** -1.0), n, reps, seed=500 + n
        )
        ybar = normalized_fluctuations(values, n, spec, 1e9)
        emp_ok.append(abs(ybar.var(ddof=1) / sigma2 - exact_ratio) < 3.0 * math.sqrt(2.0 / reps))
    assert exact_gaps[0] > exact_gaps[1] > exact_gaps[2]
    assert all(emp_ok)


def test_fclt_degenerate_ensemble_flagged():
    spec = build_diffusion_spec(LAW_B)
    values = np.full(500, 28)
    ks, _ = fclt_discrepancy(values, spec, t=40.0, n_edges=45)
    assert ks > 0.4


def test_fclt_requires_replications():
    spec = build_diffusion_spec(LAW_B)
    with pytest.raises(InsufficientReplications):
        fclt_discrepancy(np.array([3.0]), spec, t=1.0, n_edges=45)


def test_lattice_ks_distance_shape_vs_granularity():
    # exact stationary law at N = 45: raw KS at the 0.060 floor, corrected
    # KS far below it
    from edgedyn.resample import kernel_stationary

    model = embedded_model(LAW_B, 45, nodes=24)
    pmf = kernel_stationary(model)
    mean = resample_mean(model)
    sd = math.sqrt(resample_variance(model)[0])
    rng = np.random.default_rng(7)
    samples = rng.choice(np.arange(46), p=pmf, size=200_000)
    raw, corrected = lattice_ks_distance(samples, mean, sd)
    assert abs(raw - 0.0602) < 0.01
    assert corrected < 0.02
