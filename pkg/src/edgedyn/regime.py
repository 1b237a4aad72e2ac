"""Analytics for the regime-switching edge model.

The number of present edges Y lives on {0..N}; an absent edge appears at
rate lambda_i and a present one vanishes at rate mu_i while the background
chain sits in state i.  This module provides the closed-form factorial
moments, the joint stationary distribution (two independent routes), the
transient distribution by ODE integration, and the two-term variance
expansion under the speed-up Q -> N^delta Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp

from .background import Array, Generator, chain_summary, stationary_distribution
from .errors import NumericallyUnstable, SingularSystem, StepSizeUnderflow

#: beyond this N the moment-to-distribution recursion is refused
FROM_MOMENTS_MAX_N = 30
#: decimal digits used for the extended-precision recursion
FROM_MOMENTS_DPS = 60


@dataclass(frozen=True)
class RegimeModel:
    """Background chain plus per-state edge rates.

    Parameters
    ----------
    chain : Generator
        Validated background generator.
    up_rates, down_rates : (d,) arrays
        Appearance and disappearance hazards per regime, both >= 0 with
        up + down > 0 componentwise.
    n_edges : int
        Number of potential edges N.
    delta : float
        Time-scaling exponent; scaled operations replace Q by N^delta Q.
    """

    chain: Generator
    up_rates: Array
    down_rates: Array
    n_edges: int
    delta: float = 1.0

    def __post_init__(self):
        lam = np.asarray(self.up_rates, dtype=float)
        mu = np.asarray(self.down_rates, dtype=float)
        object.__setattr__(self, "up_rates", lam)
        object.__setattr__(self, "down_rates", mu)
        if lam.shape != (self.chain.d,) or mu.shape != (self.chain.d,):
            raise ValueError("rate vectors must have one entry per regime")
        if lam.min() < 0 or mu.min() < 0:
            raise ValueError("rates must be nonnegative")
        if np.any(lam + mu <= 0):
            raise ValueError("up + down rates must be componentwise positive")
        if self.n_edges < 1:
            raise ValueError("n_edges must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def d(self) -> int:
        return self.chain.d

    @property
    def gamma(self) -> Array:
        return self.up_rates + self.down_rates

    def effective_Q(self, scaled: bool) -> Array:
        if scaled:
            return float(self.n_edges) ** self.delta * self.chain.Q
        return self.chain.Q

    def pi(self) -> Array:
        return stationary_distribution(self.chain)

    def starred(self) -> tuple[float, float, float]:
        """Stationary averages (lambda_star, mu_star, gamma_star)."""
        pi = self.pi()
        return float(pi @ self.up_rates), float(pi @ self.down_rates), float(pi @ self.gamma)

    def rho_bar(self) -> float:
        """Long-run per-edge presence probability lambda_star / gamma_star."""
        lam_star, _, gam_star = self.starred()
        return lam_star / gam_star


@dataclass(frozen=True)
class FactorialMomentTable:
    """Per-regime factorial moments e[k][i] = E[(Y)_k 1{X=i}], k = 1..kmax."""

    e: dict[int, Array]

    def total(self, k: int) -> float:
        """E[(Y)_k], summed over regimes."""
        return float(self.e[k].sum())

    @property
    def kmax(self) -> int:
        return max(self.e)


@dataclass(frozen=True)
class JointStationaryDistribution:
    """Joint stationary probabilities p[m, i] = P(Y = m, X = i)."""

    p: Array

    @property
    def n_edges(self) -> int:
        return self.p.shape[0] - 1

    def edge_marginal(self) -> Array:
        return self.p.sum(axis=1)

    def regime_marginal(self) -> Array:
        return self.p.sum(axis=0)

    def mean(self) -> float:
        m = np.arange(self.p.shape[0])
        return float(m @ self.edge_marginal())

    def variance(self) -> float:
        m = np.arange(self.p.shape[0])
        marg = self.edge_marginal()
        mu = float(m @ marg)
        return float((m - mu) ** 2 @ marg)

    def factorial_moment(self, k: int) -> Array:
        """Per-regime E[(Y)_k 1{X=i}] computed directly from the table."""
        m = np.arange(self.p.shape[0], dtype=float)
        falling = np.ones_like(m)
        for j in range(k):
            falling = falling * (m - j)
        falling = np.maximum(falling, 0.0)
        return falling @ self.p

    def total_variation(self, other: "JointStationaryDistribution") -> float:
        return 0.5 * float(np.abs(self.p - other.p).sum())


def _finalize_joint(p: Array) -> JointStationaryDistribution:
    if p.min() < -1e-12:
        raise NumericallyUnstable(f"joint probability {p.min():.3e} below clipping tolerance")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise NumericallyUnstable(f"joint probabilities sum to {total!r}")
    return JointStationaryDistribution(p=p / total)


def factorial_moments(model: RegimeModel, kmax: int, scaled: bool = False) -> FactorialMomentTable:
    """Factorial moments e_k by the closed recursion, cross-checked.

    The recursion e_k = k (N-k+1) e_{k-1} Lambda (k Lambda + k M - Q)^{-1}
    is seeded at e_1 = N pi Lambda (Lambda + M - Q)^{-1}; the equivalent
    product formula k! (N)_k pi Lambda F_1 ... Lambda F_k is evaluated
    independently and both must agree to 1e-9 relative.  e_k = 0 for k > N.
    """
    N = model.n_edges
    if not 1 <= kmax <= N + 1:
        raise ValueError("kmax must lie in 1..N+1")
    Q = model.effective_Q(scaled)
    lam = model.up_rates
    gamma = model.gamma
    pi = model.pi()
    d = model.d

    resolvents = {}
    for k in range(1, min(kmax, N) + 1):
        A = k * np.diag(gamma) - Q
        try:
            resolvents[k] = np.linalg.inv(A)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"resolvent at level {k} is singular") from exc

    table: dict[int, Array] = {}
    prev = N * (pi * lam) @ resolvents[1]
    table[1] = prev
    for k in range(2, min(kmax, N) + 1):
        prev = k * (N - k + 1) * (prev * lam) @ resolvents[k]
        table[k] = prev
    for k in range(N + 1, kmax + 1):
        table[k] = np.zeros(d)

    # independent product-formula route, accumulated as a matrix product
    prefix = np.eye(d)
    for k in range(1, min(kmax, N) + 1):
        prefix = prefix @ (lam[:, None] * resolvents[k])
        log_pref = _log_falling(N, k) + math.lgamma(k + 1)
        ek_prod = math.exp(log_pref) * (pi @ prefix)
        scale = max(1.0, float(np.abs(ek_prod).max()))
        if np.abs(table[k] - ek_prod).max() > 1e-9 * scale:
            raise NumericallyUnstable(
                f"recursion and product formula disagree at k={k}"
            )
    return FactorialMomentTable(e=table)


def _log_falling(N: int, k: int) -> float:
    """log (N)_k, the falling factorial N (N-1) ... (N-k+1), in log space."""
    return math.lgamma(N + 1) - math.lgamma(N - k + 1)


def stationary_mean(model: RegimeModel, scaled: bool = False) -> float:
    """E Y = e_1 . 1; equals N rho_bar + O(N^{1-delta}) when scaled."""
    return factorial_moments(model, 1, scaled=scaled).total(1)


def stationary_variance_exact(model: RegimeModel, scaled: bool = False) -> float:
    """Exact Var Y from the first two factorial moments."""
    table = factorial_moments(model, 2, scaled=scaled)
    mean = table.total(1)
    return table.total(2) + mean - mean * mean


def joint_generator(model: RegimeModel, scaled: bool = False) -> Array:
    """Dense generator of the joint chain on states (m, i), m*d + i indexed."""
    N, d = model.n_edges, model.d
    Q = model.effective_Q(scaled)
    lam, mu = model.up_rates, model.down_rates
    size = (N + 1) * d
    G = np.zeros((size, size))
    for m in range(N + 1):
        for i in range(d):
            s = m * d + i
            if m < N:
                G[s, (m + 1) * d + i] += lam[i] * (N - m)
            if m > 0:
                G[s, (m - 1) * d + i] += mu[i] * m
            for j in range(d):
                if j != i:
                    G[s, m * d + j] += Q[i, j]
    np.fill_diagonal(G, G.diagonal() - G.sum(axis=1))
    return G


def stationary_joint(model: RegimeModel, method: str = "generator-solve",
                     scaled: bool = False) -> JointStationaryDistribution:
    """Joint stationary law of (Y, X) by one of two routes.

    ``generator-solve`` (default) solves the (N+1)d-state balance equations
    directly.  ``from-moments`` runs the downward recursion from the
    factorial-moment table in extended precision; it refuses N > 30 because
    the recursion alternates sums of factorially large terms.
    """
    if method == "generator-solve":
        return _stationary_joint_direct(model, scaled)
    if method == "from-moments":
        return _stationary_joint_from_moments(model, scaled)
    raise ValueError(f"unknown method {method!r}")


def _stationary_joint_direct(model: RegimeModel, scaled: bool) -> JointStationaryDistribution:
    G = joint_generator(model, scaled)
    size = G.shape[0]
    A = G.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("joint stationary solve failed") from exc
    return _finalize_joint(x.reshape(model.n_edges + 1, model.d))


def _stationary_joint_from_moments(model: RegimeModel, scaled: bool) -> JointStationaryDistribution:
    N, d = model.n_edges, model.d
    if N > FROM_MOMENTS_MAX_N:
        raise NumericallyUnstable(
            f"moment recursion is ill-conditioned for N = {N} > {FROM_MOMENTS_MAX_N}; "
            "use generator-solve"
        )
    with mp.workdps(FROM_MOMENTS_DPS):
        Q = mp.matrix(model.effective_Q(scaled).tolist())
        lam = [mp.mpf(v) for v in model.up_rates]
        gamma = [mp.mpf(v) for v in model.gamma]
        pi = _mp_stationary(Q, d)

        # factorial moments e_k (row vectors), k = 1..N
        e = {}
        row = mp.matrix([[pi[i] * lam[i] for i in range(d)]]) * _mp_resolvent(Q, gamma, 1, d)
        e[1] = N * row
        for k in range(2, N + 1):
            prev = e[k - 1]
            scaled_prev = mp.matrix([[prev[0, i] * lam[i] for i in range(d)]])
            e[k] = k * (N - k + 1) * scaled_prev * _mp_resolvent(Q, gamma, k, d)

        # downward recursion: e_{i,m} = sum_{k >= m} (k)_m p_i(k)
        p = mp.zeros(N + 1, d)
        for i in range(d):
            p[N, i] = e[N][0, i] / mp.factorial(N)
        for m in range(N - 1, 0, -1):
            for i in range(d):
                tail = mp.fsum(mp.ff(k, m) * p[k, i] for k in range(m + 1, N + 1))
                p[m, i] = (e[m][0, i] - tail) / mp.factorial(m)
        for i in range(d):
            tail = mp.fsum(p[k, i] for k in range(1, N + 1))
            p[0, i] = pi[i] - tail
        out = np.array([[float(p[m, i]) for i in range(d)] for m in range(N + 1)])
    return _finalize_joint(out)


def _mp_stationary(Q: mp.matrix, d: int) -> list:
    if d == 1:
        return [mp.mpf(1)]
    A = Q.T.copy()
    for j in range(d):
        A[d - 1, j] = mp.mpf(1)
    b = mp.matrix([mp.mpf(0)] * d)
    b[d - 1] = mp.mpf(1)
    return list(mp.lu_solve(A, b))


def _mp_resolvent(Q: mp.matrix, gamma: list, k: int, d: int) -> mp.matrix:
    A = mp.zeros(d, d)
    for i in range(d):
        for j in range(d):
            A[i, j] = -Q[i, j]
        A[i, i] += k * gamma[i]
    return A ** -1


def transient_distribution(
    model: RegimeModel,
    y0: int,
    x0,
    t: float,
    scaled: bool = False,
) -> Array:
    """Distribution p[m, i] at time t from the point mass (y0, x0).

    ``x0`` may be a regime index or a probability vector over regimes.
    Integration uses adaptive explicit Runge-Kutta at absolute tolerance
    1e-12; probability mass is checked to 1e-8 at the output time.
    """
    return transient_trajectory(model, y0, x0, [t], scaled=scaled)[-1]


def transient_trajectory(
    model: RegimeModel,
    y0: int,
    x0,
    times,
    scaled: bool = False,
) -> Array:
    """Distributions at several output times; shape (len(times), N+1, d)."""
    N, d = model.n_edges, model.d
    if not 0 <= y0 <= N:
        raise ValueError("y0 must lie in 0..N")
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times.min() < 0:
        raise ValueError("times must be nonnegative")
    x0_vec = np.zeros(d)
    if np.isscalar(x0) or isinstance(x0, (int, np.integer)):
        x0_vec[int(x0)] = 1.0
    else:
        x0_vec[:] = np.asarray(x0, dtype=float)
        if abs(x0_vec.sum() - 1.0) > 1e-12 or x0_vec.min() < 0:
            raise ValueError("x0 must be a probability vector")

    p0 = np.zeros((N + 1) * d)
    p0[y0 * d: (y0 + 1) * d] = x0_vec

    t_end = float(times.max())
    if t_end == 0.0:
        return np.tile(p0.reshape(1, N + 1, d), (times.size, 1, 1))

    GT = joint_generator(model, scaled).T

    sol = solve_ivp(
        lambda _, p: GT @ p,
        (0.0, t_end),
        p0,
        method="RK45",
        t_eval=np.sort(np.unique(np.append(times, t_end))),
        rtol=1e-10,
        atol=1e-12,
    )
    if not sol.success:
        raise StepSizeUnderflow(f"transient integration failed: {sol.message}")
    masses = sol.y.sum(axis=0)
    if np.abs(masses - 1.0).max() > 1e-8:
        raise NumericallyUnstable("probability mass drifted beyond 1e-8")

    out = np.empty((times.size, N + 1, d))
    for j, t in enumerate(times):
        col = int(np.searchsorted(sol.t, t))
        out[j] = np.clip(sol.y[:, col], 0.0, None).reshape(N + 1, d)
    return out


@dataclass(frozen=True)
class ScaledVarianceExpansion:
    """Two-term stationary variance expansion under Q -> N^delta Q.

    Var Y ~ N rho_bar (1 - rho_bar) + N^{2-delta} v; the coefficient v is
    a quadratic form in the deviation matrix and vanishes for d = 1.
    """

    rho_bar: float
    v: float

    def predict(self, n_edges: int, delta: float) -> float:
        return n_edges * self.rho_bar * (1.0 - self.rho_bar) + n_edges ** (2.0 - delta) * self.v


def scaled_variance_expansion(model: RegimeModel) -> ScaledVarianceExpansion:
    """Compute (rho_bar, v) with v = pi (L - rho G) D (L - rho G) 1 / gamma_star."""
    summary = chain_summary(model.chain)
    pi, D = summary.pi, summary.D
    gamma_star = float(pi @ model.gamma)
    rho_bar = float(pi @ model.up_rates) / gamma_star
    centered = model.up_rates - rho_bar * model.gamma
    v = float((pi * centered) @ D @ centered) / gamma_star
    return ScaledVarianceExpansion(rho_bar=rho_bar, v=v)
