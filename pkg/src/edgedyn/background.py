"""Background Markov chain: generator validation, stationary law, deviation
matrix, the resolvent family (k*Gamma - N*Q)^{-1} with its large-N expansion,
and exact continuous-time path sampling.

All linear algebra is direct (LAPACK factorizations with partial pivoting);
the chain dimension d is small, so determinism beats iteration everywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import NegativeOffDiagonal, Reducible, RowSumNonzero, SingularSystem

Array = NDArray[np.float64]

#: absolute tolerance for input validation (row sums, weights)
INPUT_TOL = 1e-12
#: absolute tolerance for identity checks (pi Q = 0, D 1 = 0, ...)
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class Generator:
    """Validated transition-rate matrix of an irreducible d-state chain.

    Off-diagonal entries are nonnegative jump rates, rows sum to zero, and
    the support graph is strongly connected.  Construct via
    :func:`validate_generator`; the matrix is never mutated afterwards.
    """

    Q: Array

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def exit_rates(self) -> Array:
        """Total jump rate q_i = -Q[i, i] out of each state."""
        return -np.diag(self.Q)


@dataclass(frozen=True)
class ChainSummary:
    """Stationary vector pi and deviation matrix D of a chain."""

    pi: Array
    D: Array


@dataclass(frozen=True)
class ResolventExpansion:
    """Large-N expansion (k Gamma - N Q)^{-1} ~ leading + correction/N.

    ``leading`` is the rank-one matrix (1/(k gamma_star)) * ones pi^T and
    ``correction`` is independent of k.
    """

    leading: Array
    correction: Array
    gamma_star: float


def validate_generator(Q) -> Generator:
    """Validate a rate matrix and wrap it as a :class:`Generator`.

    Parameters
    ----------
    Q : (d, d) array_like
        Candidate transition-rate matrix.

    Raises
    ------
    NegativeOffDiagonal, RowSumNonzero, Reducible
        If the matrix is not a generator of an irreducible chain.
    """
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"generator must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("generator entries must be finite")
    d = Q.shape[0]
    off = Q[~np.eye(d, dtype=bool)]
    if off.size and off.min() < 0:
        raise NegativeOffDiagonal(f"negative off-diagonal rate {off.min()!r}")
    row_sums = Q.sum(axis=1)
    worst = np.abs(row_sums).max() if d else 0.0
    if worst > INPUT_TOL:
        raise RowSumNonzero(f"row sums must vanish, worst |sum| = {worst:.3e}")
    if not _strongly_connected(Q):
        raise Reducible("support graph of the generator is not strongly connected")
    Q.setflags(write=False)
    return Generator(Q)


def _strongly_connected(Q: Array) -> bool:
    """Breadth-first reachability on the support graph, both directions."""
    d = Q.shape[0]
    if d == 1:
        return True
    support = Q > 0.0
    np.fill_diagonal(support, False)
    return _reaches_all(support, 0) and _reaches_all(support.T, 0)


def _reaches_all(adj: NDArray[np.bool_], start: int) -> bool:
    d = adj.shape[0]
    seen = np.zeros(d, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def stationary_distribution(gen: Generator) -> Array:
    """Solve pi Q = 0, sum(pi) = 1 by one direct linear solve."""
    d = gen.d
    if d == 1:
        return np.ones(1)
    A = gen.Q.T.copy()
    A[-1, :] = 1.0  # replace one redundant balance equation by normalization
    b = np.zeros(d)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("stationary solve failed") from exc
    residual = np.abs(pi @ gen.Q).max()
    if residual > IDENTITY_TOL:
        raise SingularSystem(f"stationary residual {residual:.3e} exceeds tolerance")
    return pi


def deviation_matrix(gen: Generator, pi: Array) -> Array:
    """Deviation matrix D = (ones pi^T - Q)^{-1} - ones pi^T.

    Satisfies D 1 = 0 and pi D = 0; the direct formula is used rather than
    any factorized route.
    """
    one_pi = np.outer(np.ones(gen.d), pi)
    try:
        fundamental = np.linalg.inv(one_pi - gen.Q)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("fundamental matrix inversion failed") from exc
    return fundamental - one_pi


def chain_summary(gen: Generator) -> ChainSummary:
    """Stationary vector and deviation matrix in one call."""
    pi = stationary_distribution(gen)
    return ChainSummary(pi=pi, D=deviation_matrix(gen, pi))


def resolvent_exact(gen: Generator, gamma: Array, k: int, N: float) -> Array:
    """Exact resolvent (k Gamma - N Q)^{-1}, Gamma = diag(gamma)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be componentwise positive")
    A = k * np.diag(gamma) - N * gen.Q
    try:
        return np.linalg.solve(A, np.eye(gen.d))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("resolvent solve failed") from exc


def resolvent_expansion(gen: Generator, gamma: Array, k: int) -> ResolventExpansion:
    """First-order large-N expansion of the resolvent family.

    Returns the rank-one leading term (1/(k gamma_star)) ones pi^T together
    with the 1/N coefficient

        E = (I - ones pi^T Gamma / gamma_star) D (I - gamma pi^T / gamma_star),

    which does not depend on k.  The remainder is O(N^{-2}).
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be componentwise positive")
    summary = chain_summary(gen)
    pi, D = summary.pi, summary.D
    gamma_star = float(pi @ gamma)
    ones = np.ones(gen.d)
    leading = np.outer(ones, pi) / (k * gamma_star)
    left = np.eye(gen.d) - np.outer(ones, pi * gamma) / gamma_star
    right = np.eye(gen.d) - np.outer(gamma, pi) / gamma_star
    correction = left @ D @ right
    return ResolventExpansion(leading=leading, correction=correction, gamma_star=gamma_star)


@dataclass(frozen=True)
class RegimePath:
    """Piecewise-constant sample path of the background chain.

    ``states[j]`` holds on ``[times[j], times[j+1])``; the final segment ends
    at ``horizon``.
    """

    times: Array
    states: NDArray[np.int64]
    horizon: float

    def state_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t, side="right") - 1)
        return int(self.states[max(idx, 0)])

    def segments(self):
        """Yield (start, end, state) triples covering [0, horizon]."""
        ends = np.append(self.times[1:], self.horizon)
        for start, end, state in zip(self.times, ends, self.states):
            yield float(start), float(end), int(state)

    def occupation_fractions(self, d: int) -> Array:
        frac = np.zeros(d)
        for start, end, state in self.segments():
            frac[state] += end - start
        return frac / self.horizon


def sample_regime_path(
    gen: Generator,
    horizon: float,
    seed: int | np.random.Generator,
    x0: int | None = None,
) -> RegimePath:
    """Exact CTMC sample path over [0, horizon].

    Holding times are exponential with the exit rate of the current state and
    jumps follow the embedded chain.  ``x0 = None`` draws the initial state
    from the stationary distribution.  Identical seeds give identical paths.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else default_stream(seed)
    if x0 is None:
        pi = stationary_distribution(gen)
        x = int(rng.choice(gen.d, p=pi))
    else:
        x = int(x0)
    exit_rates = gen.exit_rates
    times = [0.0]
    states = [x]
    t = 0.0
    while True:
        rate = exit_rates[x]
        if rate <= 0.0:  # absorbing only for d = 1
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        row = np.maximum(gen.Q[x], 0.0)
        row[x] = 0.0
        x = int(rng.choice(gen.d, p=row / rate))
        times.append(t)
        states.append(x)
    return RegimePath(
        times=np.array(times), states=np.array(states, dtype=np.int64), horizon=float(horizon)
    )


def default_stream(seed: int) -> np.random.Generator:
    """Counter-based generator for a bare integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
