"""Exact stochastic simulation for both edge-count models.

Event paths are sampled with the direct (Gillespie) method for the
continuous-time models and with exact binomial thinning for the slotted
resampling model; numpy's ``Generator.binomial`` performs exact inversion
for small n*p and exact accept-reject sampling otherwise, never a Normal
approximation.  Replication i of an ensemble draws from the counter-based
stream keyed by (root_seed, i), so every path is independently
reproducible and replications can run concurrently.

Distribution-level Monte Carlo (many stationary samples) goes through the
vectorized samplers at the bottom of the module.  The regime sampler is
distribution-exact: conditionally on the regime path the edges are i.i.d.
two-state chains, so the per-edge presence probability is propagated in
closed form across regime segments and Y(T) is drawn from the resulting
Binomial mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .background import validate_generator
from .errors import InsufficientReplications
from .regime import RegimeModel
from .resample import ContinuousResampleSpec, RatePairLaw, ResampleModel, embed_continuous

#: burn-in horizon = BURN_IN_FACTOR relaxation times, unless overridden
BURN_IN_FACTOR = 20.0


def rng_stream(*key: int) -> np.random.Generator:
    """Counter-based stream for a structured integer key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return rng_stream(*seed)
    return rng_stream(int(seed))


@dataclass(frozen=True)
class EdgeCountPath:
    """One simulated path of (time, modulator, edge count).

    ``times`` are event times (or slot indices), strictly increasing and
    starting at 0.  ``modulators`` hold the regime state for regime paths,
    the atom index (-1 when the law is continuous) for slotted resampling,
    and the slot index for the continuous resampling model.  The last value
    persists up to ``horizon``.
    """

    times: np.ndarray
    modulators: np.ndarray
    counts: np.ndarray
    n_edges: int
    horizon: float
    kind: str
    seed: tuple

    def value_at(self, t: float) -> int:
        return int(self.counts[self._index(t)])

    def values_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if times.max() > self.horizon:
            raise ValueError("requested time beyond the simulated horizon")
        idx = np.searchsorted(self.times, times, side="right") - 1
        return self.counts[np.maximum(idx, 0)]

    def _index(self, t: float) -> int:
        if t > self.horizon:
            raise ValueError("requested time beyond the simulated horizon")
        return max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)


def _make_path(times, modulators, counts, n_edges, horizon, kind, seed) -> EdgeCountPath:
    path = EdgeCountPath(
        times=np.asarray(times, dtype=float),
        modulators=np.asarray(modulators, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        n_edges=n_edges,
        horizon=float(horizon),
        kind=kind,
        seed=seed if isinstance(seed, tuple) else (seed,),
    )
    if path.counts.min() < 0 or path.counts.max() > n_edges:
        raise AssertionError("edge count left [0, N]")
    if np.any(np.diff(path.times) <= 0):
        raise AssertionError("event times must increase strictly")
    return path


# -- regime-switching model ------------------------------------------------------


def simulate_regime_aggregate(
    model: RegimeModel,
    horizon: float,
    y0: int = 0,
    seed=0,
    scaled: bool = False,
    x0: int | None = None,
) -> EdgeCountPath:
    """Direct-method simulation of the joint chain (X, Y).

    Three event channels: birth at rate lambda_X (N - Y), death at rate
    mu_X Y, and a regime jump; total rates are recomputed per event.  The
    edge count moves by exactly one per edge event, so cost is per event,
    not per edge.  ``scaled`` speeds the regime jumps up by N^delta.
    """
    if not 0 <= y0 <= model.n_edges:
        raise ValueError("y0 must lie in 0..N")
    rng = _as_rng(seed)
    N = model.n_edges
    lam, mu = model.up_rates, model.down_rates
    Qeff = model.effective_Q(scaled)
    exit_rates = -np.diag(Qeff)
    jump_cum = [np.cumsum(np.maximum(np.delete(Qeff[i], i), 0.0)) for i in range(model.d)]
    jump_targets = [np.delete(np.arange(model.d), i) for i in range(model.d)]

    x = int(rng.choice(model.d, p=model.pi())) if x0 is None else int(x0)
    y = y0
    t = 0.0
    times, mods, counts = [0.0], [x], [y]
    while True:
        birth = lam[x] * (N - y)
        death = mu[x] * y
        total = birth + death + exit_rates[x]
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        u = rng.random() * total
        if u < birth:
            y += 1
        elif u < birth + death:
            y -= 1
        else:
            x = int(jump_targets[x][np.searchsorted(jump_cum[x], u - birth - death)])
        times.append(t)
        mods.append(x)
        counts.append(y)
    return _make_path(times, mods, counts, N, horizon, "regime-aggregate", seed)


def simulate_regime_per_edge(
    model: RegimeModel,
    horizon: float,
    seed=0,
    scaled: bool = False,
    regime_seed=None,
) -> EdgeCountPath:
    """Per-edge simulation sharing one regime path; starts empty.

    Every edge owns a stream keyed off the path seed and flips with the
    regime-dependent hazard; the returned count is the running sum.  Only
    intended for validation at small N -- distributionally identical to
    :func:`simulate_regime_aggregate`.  ``regime_seed`` pins the regime
    path independently of the edge streams (conditional-law checks).
    """
    from .background import sample_regime_path

    key = seed if isinstance(seed, tuple) else (seed,)
    regime_key = key + (0,) if regime_seed is None else (
        regime_seed if isinstance(regime_seed, tuple) else (int(regime_seed),)
    )
    chain = model.chain
    if scaled:
        chain = validate_generator(model.effective_Q(True))
    regime_path = sample_regime_path(chain, horizon, rng_stream(*regime_key))
    segments = list(regime_path.segments())
    lam, mu = model.up_rates, model.down_rates

    flip_times: list[float] = []
    flip_deltas: list[int] = []
    for edge in range(model.n_edges):
        edge_rng = rng_stream(*key, edge + 1)
        state = 0
        t = 0.0
        for start, end, regime in segments:
            t = max(t, start)
            while True:
                rate = mu[regime] if state else lam[regime]
                if rate <= 0.0:
                    break
                t += edge_rng.exponential(1.0 / rate)
                if t >= end:
                    break
                state ^= 1
                flip_times.append(t)
                flip_deltas.append(1 if state else -1)
            t = min(t, end)  # residual clock is memoryless; redraw next segment

    order = np.argsort(flip_times, kind="stable")
    times = np.concatenate(([0.0], np.asarray(flip_times, dtype=float)[order]))
    counts = np.concatenate(([0], np.cumsum(np.asarray(flip_deltas)[order])))
    seg_starts = np.array([s for s, _, _ in segments])
    seg_states = np.array([x for _, _, x in segments])
    mods = seg_states[np.maximum(np.searchsorted(seg_starts, times, side="right") - 1, 0)]
    return _make_path(times, mods, counts, model.n_edges, horizon, "regime-per-edge", seed)


# -- resampling model ---------------------------------------------------------------


def simulate_resample_discrete(
    model: ResampleModel,
    slots: int,
    y0: int = 0,
    seed=0,
) -> EdgeCountPath:
    """Slotted simulation: per slot one (P, R) atom applied to all edges.

    Y_m = Bin(Y_{m-1}, R_m) + Bin(N - Y_{m-1}, 1 - P_m) with exact binomial
    sampling.  The modulator column records the drawn atom index.
    """
    if not 0 <= y0 <= model.n_edges:
        raise ValueError("y0 must lie in 0..N")
    rng = _as_rng(seed)
    law = model.law
    cum_w = np.cumsum(law.w)
    N = model.n_edges
    y = y0
    counts = np.empty(slots + 1, dtype=np.int64)
    atoms = np.empty(slots + 1, dtype=np.int64)
    counts[0], atoms[0] = y0, -1
    for m in range(1, slots + 1):
        idx = int(np.searchsorted(cum_w, rng.random()))
        y = int(rng.binomial(y, law.r[idx])) + int(rng.binomial(N - y, 1.0 - law.p[idx]))
        counts[m], atoms[m] = y, idx
    return _make_path(np.arange(slots + 1, dtype=float), atoms, counts, N, slots,
                      "resample-discrete", seed)


def _draw_rate_pair(pairs: RatePairLaw, rng: np.random.Generator) -> tuple[float, float]:
    if pairs.is_atomic:
        idx = int(np.searchsorted(np.cumsum(pairs.weights), rng.random()))
        return float(pairs.up_atoms[idx]), float(pairs.down_atoms[idx])
    up = rng.uniform(pairs.up_marginal.lo, pairs.up_marginal.hi)
    down = rng.uniform(pairs.down_marginal.lo, pairs.down_marginal.hi)
    return float(up), float(down)


def simulate_resample_continuous(
    spec: ContinuousResampleSpec,
    n_edges: int,
    horizon: float,
    y0: int = 0,
    seed=0,
) -> EdgeCountPath:
    """Piecewise-constant-rate simulation of the continuous resampling model.

    Each slot of length ``spec.period`` draws a fresh (up, down) rate pair
    and runs the aggregate birth-death dynamics; observed at slot
    boundaries this matches the slotted chain driven by the embedded
    transition law.  The modulator column records the slot index.
    """
    if not 0 <= y0 <= n_edges:
        raise ValueError("y0 must lie in 0..N")
    rng = _as_rng(seed)
    y = y0
    t = 0.0
    times, mods, counts = [0.0], [0], [y0]
    n_slots = int(math.ceil(horizon / spec.period))
    for slot in range(n_slots):
        slot_end = min((slot + 1) * spec.period, horizon)
        up, down = _draw_rate_pair(spec.rates, rng)
        while True:
            birth = up * (n_edges - y)
            death = down * y
            total = birth + death
            if total <= 0.0:
                break
            t_next = t + rng.exponential(1.0 / total)
            if t_next >= slot_end:
                break
            t = t_next
            if rng.random() * total < birth:
                y += 1
            else:
                y -= 1
            times.append(t)
            mods.append(slot)
            counts.append(y)
        t = slot_end
    return _make_path(times, mods, counts, n_edges, horizon, "resample-continuous", seed)


# -- ensembles ------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Independent replications; path i used the stream (root_seed, i)."""

    paths: tuple[EdgeCountPath, ...]
    root_seed: int

    @property
    def replications(self) -> int:
        return len(self.paths)

    def values_at(self, times) -> np.ndarray:
        """(replications, len(times)) matrix of edge counts."""
        return np.stack([p.values_at(times) for p in self.paths])


def build_ensemble(replications: int, root_seed: int, factory) -> TrajectoryEnsemble:
    """Assemble an ensemble; ``factory(seed_tuple)`` must return a path."""
    paths = tuple(factory((root_seed, i)) for i in range(replications))
    return TrajectoryEnsemble(paths=paths, root_seed=root_seed)


def regime_ensemble(model, horizon, replications, root_seed, y0=0, scaled=False):
    return build_ensemble(
        replications, root_seed,
        lambda key: simulate_regime_aggregate(model, horizon, y0=y0, seed=key, scaled=scaled),
    )


def resample_ensemble(model, slots, replications, root_seed, y0=0):
    return build_ensemble(
        replications, root_seed,
        lambda key: simulate_resample_discrete(model, slots, y0=y0, seed=key),
    )


@dataclass(frozen=True)
class EnsembleStats:
    """Cross-replication statistics at the requested times.

    ``cov1[j]`` is the sample covariance between the counts at times[j] and
    times[j+1] (NaN for the last entry).  Histogram masses sum to the
    replication count; normalized histograms are present when a
    (center, scale) normalization was supplied.
    """

    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    cov1: np.ndarray
    histograms: list
    normalized_histograms: list | None
    replications: int


def ensemble_stats(
    ensemble: TrajectoryEnsemble,
    times,
    normalization: tuple | None = None,
    bins="fd",
) -> EnsembleStats:
    """Unbiased moments and histograms of the ensemble at given times.

    ``normalization`` supplies per-time (center, scale) arrays; the
    normalized histograms then describe (Y - center) / scale.
    """
    if ensemble.replications < 2:
        raise InsufficientReplications("need at least two replications")
    times = np.asarray(times, dtype=float)
    values = ensemble.values_at(times).astype(float)
    mean = values.mean(axis=0)
    var = values.var(axis=0, ddof=1)
    cov1 = np.full(times.size, np.nan)
    for j in range(times.size - 1):
        cov1[j] = np.cov(values[:, j], values[:, j + 1], ddof=1)[0, 1]

    histograms = [_histogram(values[:, j], bins) for j in range(times.size)]
    normalized = None
    if normalization is not None:
        center, scale = (np.asarray(a, dtype=float) for a in normalization)
        normalized = [
            _histogram((values[:, j] - center[j]) / scale[j], bins)
            for j in range(times.size)
        ]
    return EnsembleStats(
        times=times, mean=mean, var=var, cov1=cov1,
        histograms=histograms, normalized_histograms=normalized,
        replications=ensemble.replications,
    )


def _histogram(data: np.ndarray, bins):
    if np.ptp(data) == 0.0:  # all mass in one point; FD bins would degenerate
        edges = np.array([data[0] - 0.5, data[0] + 0.5])
        return np.array([data.size]), edges
    counts, edges = np.histogram(data, bins=bins)
    return counts, edges


# -- vectorized stationary sampling ---------------------------------------------------


def default_regime_burn_in(model: RegimeModel) -> float:
    """20 relaxation times 1/gamma_star."""
    _, _, gamma_star = model.starred()
    return BURN_IN_FACTOR / gamma_star


def default_resample_burn_in(model: ResampleModel) -> int:
    """20 / (2 - E P - E R) slots."""
    law = model.law
    relax = 2.0 - law.expect(law.p) - law.expect(law.r)
    return int(math.ceil(BURN_IN_FACTOR / relax))


def stationary_sample_regime(
    model: RegimeModel,
    replications: int,
    seed: int,
    horizon: float | None = None,
    y0: int = 0,
    scaled: bool = False,
) -> np.ndarray:
    """Exact stationary-protocol samples of Y(horizon), vectorized.

    Simulates the regime path of every replication (vectorized across
    replications), propagates the closed-form per-edge presence probability
    through the segments, and draws Y from the conditional Binomial law.
    Identical in distribution to running the event simulator per path.
    """
    rng = _as_rng(seed)
    if horizon is None:
        horizon = default_regime_burn_in(model)
    Qeff = model.effective_Q(scaled)
    exit_rates = -np.diag(Qeff)
    lam, gamma = model.up_rates, model.gamma
    rho = lam / gamma
    d = model.d
    cum_rows = np.zeros((d, d))
    for i in range(d):
        cum_rows[i] = np.cumsum(np.maximum(np.where(np.arange(d) == i, 0.0, Qeff[i]), 0.0))

    x = rng.choice(d, size=replications, p=model.pi())
    t = np.zeros(replications)
    p_dn = np.zeros(replications)  # presence probability of a down-start edge
    p_up = np.ones(replications)
    active = np.ones(replications, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        xi = x[idx]
        rates = exit_rates[xi]
        tau = np.where(rates > 0, rng.exponential(1.0, size=idx.size) / np.maximum(rates, 1e-300),
                       np.inf)
        seg_end = np.minimum(t[idx] + tau, horizon)
        dt = seg_end - t[idx]
        decay = np.exp(-gamma[xi] * dt)
        p_dn[idx] = rho[xi] + (p_dn[idx] - rho[xi]) * decay
        p_up[idx] = rho[xi] + (p_up[idx] - rho[xi]) * decay
        jumping = t[idx] + tau < horizon
        if jumping.any():
            j = idx[jumping]
            u = rng.random(j.size) * exit_rates[x[j]]
            x[j] = (u[:, None] < cum_rows[x[j]]).argmax(axis=1)
        t[idx] = seg_end
        active[idx] = seg_end < horizon

    n_down = model.n_edges - y0
    return rng.binomial(n_down, p_dn) + rng.binomial(y0, p_up)


def stationary_sample_resample(
    model: ResampleModel,
    replications: int,
    seed: int,
    slots: int | None = None,
    y0: int = 0,
) -> np.ndarray:
    """Y after ``slots`` resampling epochs, vectorized across replications."""
    rng = _as_rng(seed)
    if slots is None:
        slots = default_resample_burn_in(model)
    law = model.law
    cum_w = np.cumsum(law.w)
    y = np.full(replications, y0, dtype=np.int64)
    for _ in range(slots):
        idx = np.searchsorted(cum_w, rng.random(replications))
        y = rng.binomial(y, law.r[idx]) + rng.binomial(model.n_edges - y, 1.0 - law.p[idx])
    return y


def stationary_sample_resample_ct(
    spec: ContinuousResampleSpec,
    n_edges: int,
    replications: int,
    seed: int,
    slots: int | None = None,
    y0: int = 0,
) -> np.ndarray:
    """Slot-boundary samples of the continuous resampling model.

    Rate pairs are drawn exactly from the continuous law (no quadrature);
    the within-slot transition is the closed-form two-state kernel, so the
    returned samples follow the embedded slotted chain exactly.
    """
    rng = _as_rng(seed)
    if slots is None:
        embedded = ResampleModel(law=embed_continuous(spec), n_edges=n_edges)
        slots = default_resample_burn_in(embedded)
    pairs = spec.rates
    y = np.full(replications, y0, dtype=np.int64)
    for _ in range(slots):
        if pairs.is_atomic:
            idx = np.searchsorted(np.cumsum(pairs.weights), rng.random(replications))
            up, down = pairs.up_atoms[idx], pairs.down_atoms[idx]
        else:
            up = rng.uniform(pairs.up_marginal.lo, pairs.up_marginal.hi, size=replications)
            down = rng.uniform(pairs.down_marginal.lo, pairs.down_marginal.hi, size=replications)
        total = up + down
        safe = np.maximum(total, 1e-300)
        decay = np.exp(-safe * spec.period)
        p = np.where(total > 0, (down + up * decay) / safe, 1.0)
        r = np.where(total > 0, (up + down * decay) / safe, 1.0)
        y = rng.binomial(y, r) + rng.binomial(n_edges - y, 1.0 - p)
    return y


def subsampled_stationary_counts(path: EdgeCountPath, n_samples: int,
                                 spacing: float, burn_in: float) -> np.ndarray:
    """Edge counts read off one long path at regularly spaced times."""
    times = burn_in + spacing * np.arange(n_samples)
    if times[-1] > path.horizon:
        raise ValueError("path too short for the requested subsampling")
    return path.values_at(times)
