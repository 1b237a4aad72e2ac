"""Simulator tests.

Claims covered:
    - path validity: counts stay in [0, N], event times increase strictly,
      continuous-time events move the count by one, no death fires at 0
    - bit-for-bit determinism for every simulator under a fixed seed
    - long-run laws match the analytic stationary distributions (chi-square)
    - per-edge and aggregate regime simulators agree in distribution, and
      edges are conditionally independent given the regime path
    - the continuous resampling model observed at slot boundaries matches
      the slotted chain driven by the embedded law
    - ensemble statistics: unbiased moments, histogram mass, normalization
    - the vectorized stationary samplers agree with the event simulators
"""

import numpy as np
import pytest
from stat_helpers import chisq_gof_pvalue, chisq_two_sample_pvalue

from edgedyn import regime, resample
from edgedyn.background import validate_generator
from edgedyn.errors import InsufficientReplications
from edgedyn.regime import RegimeModel
from edgedyn.resample import (
    ContinuousResampleSpec,
    RatePairLaw,
    ResampleModel,
    TransitionLaw,
    embed_continuous,
)
from edgedyn.simulate import (
    build_ensemble,
    ensemble_stats,
    regime_ensemble,
    resample_ensemble,
    simulate_regime_aggregate,
    simulate_regime_per_edge,
    simulate_resample_continuous,
    simulate_resample_discrete,
    stationary_sample_regime,
    stationary_sample_resample,
    subsampled_stationary_counts,
)

GEN_A = validate_generator([[-2.0, 2.0], [3.0, -3.0]])
LAM_A = np.array([0.3, 0.5])
MU_A = np.array([1.0, 0.1])


def model_a(n_edges, delta=1.0):
    return RegimeModel(GEN_A, LAM_A, MU_A, n_edges, delta)


MIX_LAW = TransitionLaw.from_atoms([(0.9, 0.9, 0.5), (0.7, 0.7, 0.5)])


# -- path validity ------------------------------------------------------------------

def test_aggregate_path_validity():
    path = simulate_regime_aggregate(model_a(6), horizon=200.0, seed=1)
    assert path.counts.min() >= 0 and path.counts.max() <= 6
    assert np.all(np.diff(path.times) > 0)
    dy = np.diff(path.counts)
    dx = np.diff(path.modulators)
    # every event is either an edge flip or a regime jump, never both
    assert np.all(np.abs(dy) <= 1)
    assert np.all((dy == 0) | (dx == 0))
    assert np.all((np.abs(dy) == 1) | (dx != 0))


def test_aggregate_first_event_from_empty_is_birth():
    for s in range(5):
        path = simulate_regime_aggregate(model_a(4), horizon=50.0, y0=0, seed=s)
        changes = np.diff(path.counts)
        first = changes[changes != 0][0]
        assert first == 1


def test_aggregate_death_never_fires_at_zero():
    path = simulate_regime_aggregate(model_a(3), horizon=500.0, seed=7)
    at_zero = path.counts[:-1] == 0
    assert np.all(np.diff(path.counts)[at_zero] >= 0)


def test_determinism_all_simulators():
    spec = ContinuousResampleSpec(RatePairLaw.from_atoms([(1.0, 0.5, 1.0)]), period=0.5)
    runs = [
        lambda s: simulate_regime_aggregate(model_a(5), 30.0, seed=s),
        lambda s: simulate_regime_per_edge(model_a(4), 30.0, seed=s),
        lambda s: simulate_resample_discrete(ResampleModel(MIX_LAW, 6), 100, seed=s),
        lambda s: simulate_resample_continuous(spec, 5, 30.0, seed=s),
    ]
    for run in runs:
        a, b = run(42), run(42)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.modulators, b.modulators)


def test_values_at_beyond_horizon_raises():
    path = simulate_regime_aggregate(model_a(3), horizon=10.0, seed=0)
    with pytest.raises(ValueError):
        path.values_at([11.0])


# -- stationary laws ----------------------------------------------------------------

def test_one_state_time_average():
    model = RegimeModel(validate_generator([[0.0]]), np.array([1.0]), np.array([1.0]), 10)
    path = simulate_regime_aggregate(model, horizon=2000.0, seed=3)
    samples = subsampled_stationary_counts(path, 900, 2.0, 100.0)
    # autocorrelation time 1/gamma = 0.5, Var Y = 2.5
    assert abs(samples.mean() - 5.0) < 3.0 * np.sqrt(2.5 / 900) * 1.3


def test_aggregate_matches_joint_stationary_chi_square():
    model = model_a(5)
    path = simulate_regime_aggregate(model, horizon=61_000.0, seed=11)
    samples = subsampled_stationary_counts(path, 20_000, 3.0, 50.0)
    pmf = regime.stationary_joint(model).edge_marginal()
    assert chisq_gof_pvalue(samples, pmf) > 0.01


def test_per_edge_single_edge_matches_aggregate_law():
    model = model_a(1)
    agg = simulate_regime_aggregate(model, horizon=30_500.0, seed=5)
    per = simulate_regime_per_edge(model, horizon=30_500.0, seed=6)
    a = subsampled_stationary_counts(agg, 10_000, 3.0, 50.0)
    b = subsampled_stationary_counts(per, 10_000, 3.0, 50.0)
    assert chisq_two_sample_pvalue(a, b, 2) > 0.01


def test_per_edge_vs_aggregate_chi_square():
    model = model_a(5)
    agg = simulate_regime_aggregate(model, horizon=61_000.0, seed=21)
    per = simulate_regime_per_edge(model, horizon=61_000.0, seed=22)
    a = subsampled_stationary_counts(agg, 20_000, 3.0, 50.0)
    b = subsampled_stationary_counts(per, 20_000, 3.0, 50.0)
    assert chisq_two_sample_pvalue(a, b, 6) > 0.01


def test_edges_conditionally_independent_given_regime_path():
    # fixed regime path, fresh edge seeds: Y(T) | path is Binomial(N, p_T),
    # so the conditional variance must match N p (1 - p)
    model = model_a(30)
    reps, t_end = 2500, 12.0
    samples = np.array([
        simulate_regime_per_edge(model, t_end, seed=(900, i), regime_seed=77).value_at(t_end)
        for i in range(reps)
    ], dtype=float)
    p_hat = samples.mean() / model.n_edges
    binom_var = model.n_edges * p_hat * (1.0 - p_hat)
    sample_var = samples.var(ddof=1)
    m4 = ((samples - samples.mean()) ** 4).mean()
    se_var = np.sqrt(max(m4 - sample_var**2, 0.0) / reps)
    assert abs(sample_var - binom_var) < 3.0 * se_var + 1e-9


# -- resampling simulators ------------------------------------------------------------

def test_resample_kill_all_law():
    # (p, r) = (1, 0): every edge dies, none is born
    law = TransitionLaw.deterministic(1.0, 0.0)
    path = simulate_resample_discrete(ResampleModel(law, 8), 20, y0=5, seed=0)
    assert np.all(path.counts[1:] == 0)


def test_resample_long_run_mean_and_lag1():
    model = ResampleModel(MIX_LAW, 20)
    slots = 120
    ens = resample_ensemble(model, slots, replications=4000, root_seed=17)
    stats = ensemble_stats(ens, [slots - 1, slots])
    mean_th = resample.stationary_mean(model)
    var_th = resample.stationary_variance(model)[0]
    cov_th = resample.lag1_covariance(model)
    assert abs(stats.mean[1] - mean_th) < 3.0 * np.sqrt(var_th / 4000)
    # sample covariance SE ~ sqrt((1 + rho^2) / n) * var
    se_cov = var_th * np.sqrt(2.0 / 4000)
    assert abs(stats.cov1[0] - cov_th) < 3.0 * se_cov


def test_resample_distribution_matches_kernel():
    model = ResampleModel(MIX_LAW, 6)
    samples = stationary_sample_resample(model, 20_000, seed=5)
    pmf = resample.kernel_stationary(model)
    assert chisq_gof_pvalue(samples, pmf) > 0.01


def test_continuous_starts_at_y0():
    spec = ContinuousResampleSpec(RatePairLaw.from_atoms([(1.0, 0.5, 1.0)]), period=0.5)
    path = simulate_resample_continuous(spec, 7, 10.0, y0=4, seed=8)
    assert path.counts[0] == 4
    assert path.value_at(0.0) == 4


def test_continuous_slot_boundaries_match_embedded_discrete():
    spec = ContinuousResampleSpec(
        RatePairLaw.from_atoms([(1.0, 0.5, 0.4), (0.3, 2.0, 0.6)]), period=0.8
    )
    n_edges = 5
    ct = simulate_resample_continuous(spec, n_edges, horizon=12_900.0, seed=31)
    boundary = ct.values_at(0.8 * np.arange(100, 16_000))
    embedded = ResampleModel(embed_continuous(spec), n_edges)
    disc = simulate_resample_discrete(embedded, 16_000, seed=32)
    assert chisq_two_sample_pvalue(boundary, disc.counts[100:], 6) > 0.01


def test_continuous_single_long_slot_reaches_pair_equilibrium():
    # period >> 1/(up+down): the slot-end state is Binomial(N, up/(up+down))
    spec = ContinuousResampleSpec(RatePairLaw.from_atoms([(2.0, 3.0, 1.0)]), period=60.0)
    counts = [
        simulate_resample_continuous(spec, 6, 60.0, seed=(50, i)).value_at(60.0)
        for i in range(4000)
    ]
    from scipy.stats import binom

    pmf = binom.pmf(np.arange(7), 6, 0.4)
    assert chisq_gof_pvalue(np.array(counts), pmf) > 0.01


# -- ensembles and their statistics ----------------------------------------------------

def test_ensemble_stream_separation():
    ens = regime_ensemble(model_a(4), 20.0, replications=3, root_seed=5)
    seeds = [p.seed for p in ens.paths]
    assert len(set(seeds)) == 3
    # replication 1 is reproducible in isolation
    solo = simulate_regime_aggregate(model_a(4), 20.0, seed=(5, 1))
    assert np.array_equal(solo.counts, ens.paths[1].counts)


def test_ensemble_stats_replicated_path_has_zero_variance():
    base = simulate_regime_aggregate(model_a(4), 20.0, seed=(5, 0))
    ens = build_ensemble(4, 5, lambda key: base)
    stats = ensemble_stats(ens, [5.0, 10.0])
    assert stats.var == pytest.approx([0.0, 0.0], abs=1e-12)


def test_ensemble_stats_histogram_mass_and_normalization():
    model = ResampleModel(MIX_LAW, 12)
    ens = resample_ensemble(model, 40, replications=300, root_seed=9)
    stats = ensemble_stats(
        ens, [30, 40], normalization=(np.array([6.0, 6.0]), np.array([2.0, 2.0]))
    )
    for counts, _ in stats.histograms:
        assert counts.sum() == 300
    assert stats.normalized_histograms is not None
    counts, edges = stats.normalized_histograms[0]
    assert counts.sum() == 300
    assert edges.min() >= (0 - 6.0) / 2.0 - 1e-9


def test_ensemble_stats_requires_two_replications():
    ens = build_ensemble(1, 3, lambda key: simulate_regime_aggregate(model_a(3), 5.0, seed=key))
    with pytest.raises(InsufficientReplications):
        ensemble_stats(ens, [1.0])


# -- vectorized stationary samplers ------------------------------------------------------

def test_fast_regime_sampler_matches_joint_stationary():
    model = model_a(5)
    samples = stationary_sample_regime(model, 20_000, seed=13, horizon=30.0)
    pmf = regime.stationary_joint(model).edge_marginal()
    assert chisq_gof_pvalue(samples, pmf) > 0.01


def test_fast_regime_sampler_matches_event_simulator():
    model = model_a(5)
    slow = np.array([
        simulate_regime_aggregate(model, 25.0, seed=(77, i)).value_at(25.0)
        for i in range(4000)
    ])
    fast = stationary_sample_regime(model, 4000, seed=78, horizon=25.0)
    assert chisq_two_sample_pvalue(slow, fast, 6) > 0.01


def test_fast_regime_sampler_general_y0():
    # start from the full graph: same stationary law after burn-in
    model = model_a(5)
    full = stationary_sample_regime(model, 20_000, seed=14, horizon=30.0, y0=5)
    pmf = regime.stationary_joint(model).edge_marginal()
    assert chisq_gof_pvalue(full, pmf) > 0.01


def test_fast_resample_sampler_matches_event_simulator():
    model = ResampleModel(MIX_LAW, 9)
    slow = np.array([
        simulate_resample_discrete(model, 100, seed=(55, i)).value_at(100)
        for i in range(4000)
    ])
    fast = stationary_sample_resample(model, 4000, seed=56, slots=100)
    assert chisq_two_sample_pvalue(slow, fast, 10) > 0.01
