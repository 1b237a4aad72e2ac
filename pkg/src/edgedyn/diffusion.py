"""Diffusion (functional CLT) limits for both models.

After centering by N rho(t) and scaling by sqrt(N), the edge count
converges to a mean-reverting Gaussian diffusion

    dYbar(t) = -rate * Ybar(t) dt + sqrt(g'(t) + h'(t)) dB(t),

with rate = gamma_star (regime model) or E Gamma (resampling model).
g' carries the modulation noise and survives alone when delta < 1; h'
carries the Poissonian edge noise and survives alone when delta > 1.
The module evaluates the integrands, integrates the variance ODE by
quadrature, simulates the limiting SDE by Euler-Maruyama, and quantifies
the gap between a simulated ensemble and the limit law.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import kstest, norm

from .background import chain_summary
from .errors import InsufficientReplications, QuadratureFailure, StepTooLarge
from .regime import RegimeModel, scaled_variance_expansion
from .resample import ScaledResampleLaw, scaled_moments
from .simulate import TrajectoryEnsemble, rng_stream

#: exponential tail cutoff: contributions beyond this many 1/(2 rate) windows
#: are below double precision
_TAIL_WINDOWS = 40.0


@dataclass(frozen=True)
class DiffusionSpec:
    """Evaluable ingredients of the limiting SDE.

    ``g_prime``/``h_prime`` are the time derivatives of the predictable
    quadratic variations; ``noise`` applies the delta-selection rule
    (only g' for delta < 1, only h' for delta > 1, the sum at delta = 1).
    """

    rate: float
    rho_bar: float
    v: float
    delta: float
    g_prime: Callable[[float], float]
    h_prime: Callable[[float], float]
    kind: str

    def rho(self, t: float) -> float:
        return self.rho_bar * -math.expm1(-self.rate * t)

    def noise(self, t: float) -> float:
        if self.delta < 1.0:
            return self.g_prime(t)
        if self.delta > 1.0:
            return self.h_prime(t)
        return self.g_prime(t) + self.h_prime(t)

    def stationary_variance(self) -> float:
        """Balance point of the variance ODE at t = infinity."""
        return self.noise(math.inf) / (2.0 * self.rate)


def rho_t(model, t: float) -> float:
    """Scaled mean path rho(t) = rho_bar (1 - exp(-rate t)) for either model."""
    return build_diffusion_spec(model).rho(t)


def build_diffusion_spec(model) -> DiffusionSpec:
    """Construct the limit ingredients from a regime model or a scaled law."""
    if isinstance(model, RegimeModel):
        return _regime_spec(model)
    if isinstance(model, ScaledResampleLaw):
        return _resample_spec(model)
    raise TypeError(f"no diffusion limit for {type(model).__name__}")


def _regime_spec(model: RegimeModel) -> DiffusionSpec:
    summary = chain_summary(model.chain)
    pi, D = summary.pi, summary.D
    lam, gamma = model.up_rates, model.gamma
    lam_star, mu_star, gamma_star = model.starred()
    expansion = scaled_variance_expansion(model)
    rho_bar = expansion.rho_bar

    def rho(t):
        return rho_bar * -math.expm1(-gamma_star * t)

    def g_prime(t):
        centered = lam - rho(t) * gamma
        return 2.0 * float((pi * centered) @ D @ centered)

    def h_prime(t):
        r = rho(t)
        return lam_star * (1.0 - r) + mu_star * r

    return DiffusionSpec(
        rate=gamma_star, rho_bar=rho_bar, v=expansion.v, delta=model.delta,
        g_prime=g_prime, h_prime=h_prime, kind="regime",
    )


def _resample_spec(law: ScaledResampleLaw) -> DiffusionSpec:
    inc = law.increments
    mean_up, mean_dn = inc.mean_up(), inc.mean_down()
    var_up, var_dn, cov = inc.var_up(), inc.var_down(), inc.cov()
    rate = mean_up + mean_dn
    moments = scaled_moments(law)
    rho_bar = moments.rho_bar

    def rho(t):
        return rho_bar * -math.expm1(-rate * t)

    def g_prime(t):
        r = rho(t)
        return (1.0 - r) ** 2 * var_up - 2.0 * r * (1.0 - r) * cov + r**2 * var_dn

    def h_prime(t):
        r = rho(t)
        return mean_up * (1.0 - r) + mean_dn * r

    return DiffusionSpec(
        rate=rate, rho_bar=rho_bar, v=moments.v, delta=law.delta,
        g_prime=g_prime, h_prime=h_prime, kind="resample",
    )


def fluctuation_variance(spec: DiffusionSpec, t: float) -> float:
    """Variance of the limit at time t from a zero start.

    Solves s'(t) = -2 rate s(t) + noise(t), s(0) = 0, via the explicit
    convolution integral evaluated by adaptive quadrature.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 0.0
    if math.isinf(t):
        return spec.stationary_variance()
    upper = min(t, _TAIL_WINDOWS / (2.0 * spec.rate))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                lambda u: math.exp(-2.0 * spec.rate * u) * spec.noise(t - u),
                0.0, upper, epsabs=1e-12, epsrel=1e-11, limit=200,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if abserr > 1e-8 * max(1.0, abs(value)):
        raise QuadratureFailure(f"quadrature error estimate {abserr:.3e} too large")
    return value


def simulate_ou(spec: DiffusionSpec, horizon: float, dt: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama path of the limiting SDE from 0; returns (times, values)."""
    values = simulate_ou_ensemble(spec, horizon, dt, 1, seed, full_paths=True)
    times = dt * np.arange(values.shape[1])
    return times, values[0]


def simulate_ou_ensemble(
    spec: DiffusionSpec,
    horizon: float,
    dt: float,
    n_paths: int,
    seed,
    sample_times=None,
    full_paths: bool = False,
):
    """Vectorized Euler-Maruyama ensemble of the limiting SDE.

    Returns the (n_paths, len(sample_times)) matrix of values at
    ``sample_times`` (default: the horizon only), or all steps when
    ``full_paths`` is set.  Requires dt * rate < 0.1.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt * spec.rate >= 0.1:
        raise StepTooLarge(f"dt * rate = {dt * spec.rate:.3f} >= 0.1")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(int(seed))
    n_steps = int(round(horizon / dt))
    noise_sd = np.array([math.sqrt(max(spec.noise(k * dt), 0.0) * dt) for k in range(n_steps)])
    decay = 1.0 - spec.rate * dt

    y = np.zeros(n_paths)
    if full_paths:
        out = np.zeros((n_paths, n_steps + 1))
    else:
        times = np.asarray([horizon] if sample_times is None else sample_times, dtype=float)
        sample_idx = np.rint(times / dt).astype(int)
        out = np.zeros((n_paths, times.size))
        hits = {}
        for col, idx in enumerate(sample_idx):
            hits.setdefault(int(idx), []).append(col)
        for col in hits.get(0, []):
            out[:, col] = y
    for k in range(n_steps):
        y = decay * y + noise_sd[k] * rng.standard_normal(n_paths)
        if full_paths:
            out[:, k + 1] = y
        else:
            for col in hits.get(k + 1, []):
                out[:, col] = y
    return out


def normalized_fluctuations(values, n_edges: int, spec: DiffusionSpec, t: float) -> np.ndarray:
    """Ybar = (Y - N rho(t)) / N^{max(delta,1)/2 ... } per the scaling rule.

    For delta <= 1 the normalization is N^{delta/2} when delta < 1 and
    sqrt(N) at delta = 1 (and above).
    """
    scale = float(n_edges) ** (min(spec.delta, 1.0) / 2.0)
    return (np.asarray(values, dtype=float) - n_edges * spec.rho(t)) / scale


def fclt_discrepancy(
    ensemble_or_values,
    spec: DiffusionSpec,
    t: float,
    n_edges: int | None = None,
) -> tuple[float, float]:
    """(KS distance, variance ratio) of the scaled ensemble vs the limit law.

    Accepts a TrajectoryEnsemble (read at time t) or a plain array of edge
    counts sampled at t.  The reference law is Normal(0, fluctuation
    variance at t); thresholds are applied by callers, not here.
    """
    if isinstance(ensemble_or_values, TrajectoryEnsemble):
        ens = ensemble_or_values
        if ens.replications < 2:
            raise InsufficientReplications("need at least two replications")
        values = ens.values_at([t])[:, 0]
        n_edges = ens.paths[0].n_edges
    else:
        values = np.asarray(ensemble_or_values, dtype=float)
        if values.size < 2:
            raise InsufficientReplications("need at least two values")
        if n_edges is None:
            raise ValueError("n_edges required for raw value arrays")
    ybar = normalized_fluctuations(values, n_edges, spec, t)
    sigma2 = fluctuation_variance(spec, t)
    ks = kstest(ybar, "norm", args=(0.0, math.sqrt(sigma2))).statistic
    var_ratio = ybar.var(ddof=1) / sigma2
    return float(ks), float(var_ratio)


def lattice_ks_distance(values, center: float, scale: float) -> tuple[float, float]:
    """Raw and continuity-corrected KS of integer data vs the standard normal.

    ``values`` are integer counts; the fitted normal is for
    (Y - center)/scale.  The raw statistic is the plain empirical KS, which
    for lattice data is floored near pmf_max/2 by the granularity; the
    corrected statistic compares the empirical CDF at lattice midpoints and
    measures shape deviation alone.
    """
    values = np.asarray(values)
    lo, hi = int(values.min()), int(values.max())
    support = np.arange(lo, hi + 1)
    counts = np.bincount(values - lo, minlength=support.size)
    ecdf = np.cumsum(counts) / values.size
    z_at = norm.cdf((support - center) / scale)
    z_mid = norm.cdf((support + 0.5 - center) / scale)
    ecdf_left = np.concatenate(([0.0], ecdf[:-1]))
    raw = max(np.abs(ecdf - z_at).max(), np.abs(z_at - ecdf_left).max())
    corrected = np.abs(ecdf - z_mid).max()
    return float(raw), float(corrected)
