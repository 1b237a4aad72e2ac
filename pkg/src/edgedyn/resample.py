"""Analytics for the synchronized-resampling edge model.

Each slot draws one transition pair (P, R) -- P the probability an absent
edge stays absent, R the probability a present edge stays present -- and
applies it to all N edges at once.  The module provides the closed-form
stationary mean/variance/lag-1 covariance, the stationary distribution as
the fixed point of the one-slot transition kernel, the embedding of a
continuous-time model with piecewise-constant random rates, and the scaled
small-increment expansion P = 1 - up/N^delta, R = 1 - down/N^delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import (
    DegenerateDenominator,
    NoConvergence,
    SingularSystem,
    UnstableSecondMoment,
    ZeroRateAtom,
)

ATOM_WEIGHT_TOL = 1e-12
#: default Gauss-Legendre nodes per dimension when discretizing a continuous law
QUADRATURE_NODES = 64


@dataclass(frozen=True)
class Uniform:
    """Uniform law on [lo, hi], the only named continuous marginal."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform law needs hi > lo")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    @property
    def second_moment(self) -> float:
        return self.var + self.mean**2

    def log_mgf(self, s):
        """log E exp(s X), stable near s = 0 and vectorized in s."""
        s = np.asarray(s, dtype=float)
        c = self.hi - self.lo
        small = np.abs(c * s) < 1e-4
        s_safe = np.where(small, 1.0, s)
        exact = self.lo * s + np.log(np.expm1(c * s_safe) / (c * s_safe))
        # cumulant series: mean s + c^2 s^2 / 24 - c^4 s^4 / 2880
        series = self.mean * s + c**2 * s**2 / 24.0 - c**4 * s**4 / 2880.0
        out = np.where(small, series, exact)
        return out if out.ndim else float(out)

    def quadrature(self, nodes: int):
        """Gauss-Legendre nodes and probability weights on [lo, hi]."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        return mid + half * x, w / 2.0


@dataclass(frozen=True)
class RatePairLaw:
    """Joint law of a nonnegative (up, down) intensity pair.

    Either a finite weighted atom mixture, or independent named marginals
    (discretized by Gauss-Legendre quadrature when atoms are required).
    """

    up_atoms: np.ndarray | None = None
    down_atoms: np.ndarray | None = None
    weights: np.ndarray | None = None
    up_marginal: Uniform | None = None
    down_marginal: Uniform | None = None

    @classmethod
    def from_atoms(cls, atoms) -> "RatePairLaw":
        """Build from an iterable of (up, down, weight) triples."""
        up, down, w = (np.array(col, dtype=float) for col in zip(*atoms))
        if np.any(up < 0) or np.any(down < 0):
            raise ValueError("intensities must be nonnegative")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > ATOM_WEIGHT_TOL:
            raise ValueError("weights must be positive and sum to one")
        return cls(up_atoms=up, down_atoms=down, weights=w)

    @classmethod
    def independent(cls, up: Uniform, down: Uniform) -> "RatePairLaw":
        return cls(up_marginal=up, down_marginal=down)

    @property
    def is_atomic(self) -> bool:
        return self.up_atoms is not None

    def atoms(self, nodes: int = QUADRATURE_NODES):
        """Atom representation (up, down, weight); tensor-product quadrature
        with ``nodes`` points per dimension for continuous marginals."""
        if self.is_atomic:
            return self.up_atoms, self.down_atoms, self.weights
        ux, uw = self.up_marginal.quadrature(nodes)
        dx, dw = self.down_marginal.quadrature(nodes)
        up = np.repeat(ux, nodes)
        down = np.tile(dx, nodes)
        w = np.repeat(uw, nodes) * np.tile(dw, nodes)
        return up, down, w

    # moment accessors (closed form for named marginals, sums for atoms)

    def mean_up(self) -> float:
        if self.is_atomic:
            return float(self.weights @ self.up_atoms)
        return self.up_marginal.mean

    def mean_down(self) -> float:
        if self.is_atomic:
            return float(self.weights @ self.down_atoms)
        return self.down_marginal.mean

    def second_up(self) -> float:
        if self.is_atomic:
            return float(self.weights @ self.up_atoms**2)
        return self.up_marginal.second_moment

    def second_down(self) -> float:
        if self.is_atomic:
            return float(self.weights @ self.down_atoms**2)
        return self.down_marginal.second_moment

    def cross_moment(self) -> float:
        """E[up * down]; factorizes under independence."""
        if self.is_atomic:
            return float(self.weights @ (self.up_atoms * self.down_atoms))
        return self.up_marginal.mean * self.down_marginal.mean

    def var_up(self) -> float:
        return self.second_up() - self.mean_up() ** 2

    def var_down(self) -> float:
        return self.second_down() - self.mean_down() ** 2

    def cov(self) -> float:
        return self.cross_moment() - self.mean_up() * self.mean_down()


@dataclass(frozen=True)
class TransitionLaw:
    """Finite mixture law of the per-slot pair (P, R).

    Atoms live in (0, 1] x [0, 1); the boundary values p = 1 (births
    blocked) and r = 0 (all edges die) are admitted for degenerate cases.
    """

    p: np.ndarray
    r: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)
        if not (p.shape == r.shape == w.shape):
            raise ValueError("atom arrays must share a shape")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > ATOM_WEIGHT_TOL:
            raise ValueError("weights must be positive and sum to one")
        if np.any(p <= 0) or np.any(p > 1):
            raise ValueError("stay-absent probabilities must lie in (0, 1]")
        if np.any(r < 0) or np.any(r >= 1):
            raise ValueError("stay-present probabilities must lie in [0, 1)")

    @classmethod
    def deterministic(cls, p: float, r: float) -> "TransitionLaw":
        return cls(p=np.array([p]), r=np.array([r]), w=np.array([1.0]))

    @classmethod
    def from_atoms(cls, atoms) -> "TransitionLaw":
        p, r, w = (np.array(col, dtype=float) for col in zip(*atoms))
        return cls(p=p, r=r, w=w)

    def expect(self, values: np.ndarray) -> float:
        return float(self.w @ values)

    def swapped(self) -> "TransitionLaw":
        """Roles of P and R exchanged: the law driving N - Y.

        Requires r > 0 and p < 1 so the swapped atoms stay in the domain.
        """
        return TransitionLaw(p=self.r.copy(), r=self.p.copy(), w=self.w)


@dataclass(frozen=True)
class ResampleModel:
    """Transition-pair law plus the number of potential edges."""

    law: TransitionLaw
    n_edges: int

    def __post_init__(self):
        if self.n_edges < 1:
            raise ValueError("n_edges must be >= 1")


def stationary_mean(model: ResampleModel) -> float:
    """E Y = N (1 - E P) / (2 - E P - E R)."""
    law = model.law
    mean_p = law.expect(law.p)
    mean_r = law.expect(law.r)
    denom = 2.0 - mean_p - mean_r
    if denom <= 1e-14:
        raise DegenerateDenominator("E P = E R = 1: the chain never moves")
    return model.n_edges * (1.0 - mean_p) / denom


def stationary_variance(model: ResampleModel) -> tuple[float, float, float]:
    """Stationary variance and its (gamma1, gamma2) size decomposition.

    Returns (Var Y, gamma1, gamma2) with Var Y = gamma1 N^2 + gamma2 N.
    Two independent evaluations -- the second-factorial-moment route and the
    coefficient route -- must agree to 1e-9 relative; gamma1 >= 0 with
    equality exactly for deterministic laws.
    """
    law = model.law
    n = model.n_edges
    mean_p, mean_r = law.expect(law.p), law.expect(law.r)
    shrink_sq = law.expect((law.p + law.r - 1.0) ** 2)
    if shrink_sq >= 1.0 - 1e-12:
        raise UnstableSecondMoment("E[(P+R-1)^2] >= 1: second moment diverges")

    alpha = stationary_mean(model)
    p_bar, r_bar = 1.0 - law.p, 1.0 - law.r
    beta = (
        n * (n - 1) * law.expect(p_bar**2)
        + 2.0 * (n - 1) * alpha * law.expect((law.p + law.r - 1.0) * p_bar)
    ) / (1.0 - shrink_sq)
    variance = alpha - alpha**2 + beta

    e_pb, e_rb = law.expect(p_bar), law.expect(r_bar)
    e_pb2, e_rb2 = law.expect(p_bar**2), law.expect(r_bar**2)
    e_pr = law.expect(p_bar * r_bar)
    denom = 1.0 - shrink_sq
    gamma1 = (e_rb2 * e_pb**2 - 2.0 * e_pr * e_pb * e_rb + e_pb2 * e_rb**2) / (
        denom * (e_pb + e_rb) ** 2
    )
    gamma2 = (-e_rb2 * e_pb + 2.0 * e_pb * e_rb - e_pb2 * e_rb) / (denom * (e_pb + e_rb))

    decomposed = gamma1 * n**2 + gamma2 * n
    if abs(decomposed - variance) > 1e-9 * max(1.0, abs(variance)):
        raise UnstableSecondMoment(
            f"variance routes disagree: {variance!r} vs {decomposed!r}"
        )
    return variance, gamma1, gamma2


def lag1_covariance(model: ResampleModel) -> float:
    """Stationary covariance of the edge counts in consecutive slots."""
    law = model.law
    mean_p, mean_r = law.expect(law.p), law.expect(law.r)
    mean = stationary_mean(model)
    variance, _, _ = stationary_variance(model)
    second = variance + mean**2
    return (mean_p + mean_r - 1.0) * second + (1.0 - mean_p) * model.n_edges * mean - mean**2


def transition_kernel(model: ResampleModel) -> np.ndarray:
    """One-slot kernel K[k, j] = P(Y_next = j | Y = k).

    Given (P, R), the next count is Bin(k, R) survivors plus
    Bin(N - k, 1 - P) newcomers; rows mix the convolution over atoms.
    """
    law = model.law
    n = model.n_edges
    K = np.zeros((n + 1, n + 1))
    for p, r, w in zip(law.p, law.r, law.w):
        for k in range(n + 1):
            survive = binom.pmf(np.arange(k + 1), k, r)
            born = binom.pmf(np.arange(n - k + 1), n - k, 1.0 - p)
            K[k] += w * np.convolve(survive, born)
    return K


def kernel_stationary(model: ResampleModel, max_iters: int = 100_000) -> np.ndarray:
    """Stationary distribution of the one-slot kernel.

    Solves the balance equations directly for N <= 200 and falls back to
    Aitken-accelerated power iteration above.  The returned vector v is
    verified to satisfy ||v K - v||_1 < 1e-12.
    """
    K = transition_kernel(model)
    n = model.n_edges
    if n <= 200:
        A = (K.T - np.eye(n + 1)).copy()
        A[-1, :] = 1.0
        b = np.zeros(n + 1)
        b[-1] = 1.0
        try:
            v = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("kernel stationary solve failed") from exc
        v = np.clip(v, 0.0, None)
        v /= v.sum()
    else:
        v = np.full(n + 1, 1.0 / (n + 1))
        for sweep in range(max_iters):
            v1 = v @ K
            v2 = v1 @ K
            denom = v2 - 2.0 * v1 + v
            mask = np.abs(denom) > 1e-14
            accel = v2.copy()
            accel[mask] = v[mask] - (v1[mask] - v[mask]) ** 2 / denom[mask]
            accel = np.clip(accel, 0.0, None)
            total = accel.sum()
            v_next = accel / total if total > 0 else v2
            if np.abs(v_next - v).sum() < 1e-15:
                v = v_next
                break
            v = v_next
        else:
            raise NoConvergence("power iteration did not converge", max_iters=max_iters)
    residual = np.abs(v @ K - v).sum()
    if residual >= 1e-12:
        raise NoConvergence(f"fixed-point residual {residual:.3e}", max_iters=max_iters)
    return v


@dataclass(frozen=True)
class ContinuousResampleSpec:
    """Continuous-time model: piecewise-constant random rates over slots.

    Over the slot [(i-1) period, i period) a fresh (up, down) rate pair is
    drawn from ``rates`` and every edge flips with those hazards.
    """

    rates: RatePairLaw
    period: float

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")


def embed_continuous(spec: ContinuousResampleSpec, nodes: int = QUADRATURE_NODES) -> TransitionLaw:
    """Transition-pair law of the slot-boundary chain.

    Each rate atom (up, down) with total g = up + down maps to

        P = down / g + up / g * exp(-g * period),
        R = up / g + down / g * exp(-g * period),

    with weights preserved; continuous laws are first discretized.
    """
    up, down, w = spec.rates.atoms(nodes)
    total = up + down
    if np.any(total <= 0):
        raise ZeroRateAtom("an atom has up + down = 0; no transition happens")
    decay = np.exp(-total * spec.period)
    p = (down + up * decay) / total
    r = (up + down * decay) / total
    return TransitionLaw(p=p, r=r, w=w)


@dataclass(frozen=True)
class ScaledResampleLaw:
    """Slot-increment law under P = 1 - up/N^delta, R = 1 - down/N^delta."""

    increments: RatePairLaw
    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.increments.mean_up() + self.increments.mean_down() <= 0:
            raise ValueError("mean up + down intensity must be positive")

    def rho_bar(self) -> float:
        up, down = self.increments.mean_up(), self.increments.mean_down()
        return up / (up + down)

    def mean_total(self) -> float:
        """E(up + down), the mean-reversion rate of the diffusion limit."""
        return self.increments.mean_up() + self.increments.mean_down()


@dataclass(frozen=True)
class ScaledResampleMoments:
    """Coefficients of Var Y ~ N rho_bar (1 - rho_bar) + N^{2-delta} v."""

    rho_bar: float
    v: float
    delta: float

    def predict(self, n_edges: int) -> float:
        return (
            n_edges * self.rho_bar * (1.0 - self.rho_bar)
            + n_edges ** (2.0 - self.delta) * self.v
        )


def scaled_moments(law: ScaledResampleLaw) -> ScaledResampleMoments:
    """rho_bar and the variance coefficient v of the scaled model.

    v = (E dn^2 (E up)^2 - 2 E(up dn) E up E dn + E up^2 (E dn)^2)
        / (2 (E up + E dn)^3),

    equivalently Var(up - rho_bar (up + dn)) / (2 E(up + dn)).
    """
    inc = law.increments
    e_up, e_dn = inc.mean_up(), inc.mean_down()
    numer = (
        inc.second_down() * e_up**2
        - 2.0 * inc.cross_moment() * e_up * e_dn
        + inc.second_up() * e_dn**2
    )
    v = numer / (2.0 * (e_up + e_dn) ** 3)
    return ScaledResampleMoments(rho_bar=law.rho_bar(), v=v, delta=law.delta)


def scaled_lag1_correlation(law: ScaledResampleLaw, n_edges: int) -> float:
    """Leading-order lag-1 autocorrelation 1 - (E up + E dn) / N^delta."""
    return 1.0 - law.mean_total() / float(n_edges) ** law.delta


def embedded_model(law: ScaledResampleLaw, n_edges: int,
                   nodes: int = QUADRATURE_NODES) -> ResampleModel:
    """Finite-N model realizing the scaling: period 1/N^delta, rates = increments."""
    spec = ContinuousResampleSpec(rates=law.increments,
                                  period=float(n_edges) ** -law.delta)
    return ResampleModel(law=embed_continuous(spec, nodes), n_edges=n_edges)
