"""Large-deviations numerics for both models at speed N.

Local cumulants are birth-death shaped, Lambda(theta) = A (e^theta - 1)
+ B (e^{-theta} - 1) for the regime model and a log-mixture of such
exponents for the resampling model; their Legendre transforms are computed
by safeguarded Newton on Lambda'(theta) = y with a bisection fallback.
Occupation-measure costs use the nonnegative-vector variational form
sup_{u > 0} (-sum_i g_i (Q u)_i / u_i), optimized in log coordinates.

Conventions: the default ``convention="drift"`` attaches the birth term to
(1 - x), matching the model drift (an absent fraction 1 - x feeds births);
``convention="printed"`` swaps the attachment to x, evaluating the
alternative display form.  Rates of impossible velocities (births from a
full graph, deaths from an empty one) are +inf, signalled by the returned
value, not an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .background import Generator
from .errors import MgfDiverges, NoConvergence, UnsupportedDimension
from .regime import RegimeModel
from .resample import ScaledResampleLaw

CONVENTIONS = ("drift", "printed")
#: initial bracket half-width for the Legendre solver; expanded geometrically
_BRACKET_START = 1.0
_BRACKET_MAX = 200.0


# -- cumulant families ---------------------------------------------------------------


@dataclass(frozen=True)
class BirthDeathCumulant:
    """Lambda(theta) = up (e^theta - 1) + down (e^{-theta} - 1)."""

    up: float
    down: float

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = self.up * np.expm1(theta) + self.down * np.expm1(-theta)
        return out if out.ndim else float(out)

    def slope(self, theta: float) -> float:
        return self.up * math.exp(theta) - self.down * math.exp(-theta)

    def curvature(self, theta: float) -> float:
        return self.up * math.exp(theta) + self.down * math.exp(-theta)

    def slope_range(self) -> tuple[float, float]:
        lo = -math.inf if self.down > 0 else 0.0
        hi = math.inf if self.up > 0 else 0.0
        return lo, hi

    def boundary_rate(self, side: int) -> float:
        """lim theta -> side*inf of (0 - Lambda(theta)) when the slope
        saturates at 0 on that side."""
        return self.up if side < 0 else self.down


@dataclass(frozen=True)
class MixtureCumulant:
    """Lambda(theta) = log sum_j w_j exp(a_j (e^theta - 1) + b_j (e^{-theta} - 1))."""

    a: np.ndarray
    b: np.ndarray
    log_w: np.ndarray

    def _exponents(self, theta: float) -> np.ndarray:
        return self.log_w + self.a * math.expm1(theta) + self.b * math.expm1(-theta)

    def value(self, theta):
        if np.ndim(theta) == 0:
            return float(logsumexp(self._exponents(float(theta))))
        grid = np.asarray(theta, dtype=float)
        out = np.empty(grid.size)
        chunk = max(1, 4_000_000 // max(self.a.size, 1))  # bound the work matrix
        for start in range(0, grid.size, chunk):
            part = grid[start:start + chunk]
            exps = (self.log_w[None, :]
                    + np.expm1(part)[:, None] * self.a[None, :]
                    + np.expm1(-part)[:, None] * self.b[None, :])
            out[start:start + chunk] = logsumexp(exps, axis=1)
        return out

    def _weights(self, theta: float) -> np.ndarray:
        e = self._exponents(theta)
        e -= e.max()
        w = np.exp(e)
        return w / w.sum()

    def slope(self, theta: float) -> float:
        w = self._weights(theta)
        return float(w @ (self.a * math.exp(theta) - self.b * math.exp(-theta)))

    def curvature(self, theta: float) -> float:
        w = self._weights(theta)
        drift = self.a * math.exp(theta) - self.b * math.exp(-theta)
        mean = float(w @ drift)
        second = float(w @ (self.a * math.exp(theta) + self.b * math.exp(-theta)))
        return second + float(w @ (drift - mean) ** 2)

    def slope_range(self) -> tuple[float, float]:
        lo = -math.inf if np.any(self.b > 0) else 0.0
        hi = math.inf if np.any(self.a > 0) else 0.0
        return lo, hi

    def boundary_rate(self, side: int) -> float:
        if side < 0:  # theta -> -inf; requires all b = 0
            return -float(logsumexp(self.log_w - self.a))
        return -float(logsumexp(self.log_w - self.b))


def legendre_transform(cumulant, y: float) -> float:
    """sup_theta (theta y - Lambda(theta)) for a convex cumulant.

    Returns +inf when y lies outside the closed range of Lambda' (velocity
    of an impossible sign); at a saturated range edge the supremum is the
    limiting value.  Interior points use safeguarded Newton on
    Lambda'(theta) = y with bisection fallback.
    """
    lo, hi = cumulant.slope_range()
    if y < lo or y > hi:
        return math.inf
    if y == lo == 0.0 or (y == 0.0 and lo == hi == 0.0):
        return cumulant.boundary_rate(-1)
    if y == hi == 0.0:
        return cumulant.boundary_rate(+1)

    # bracket the root of Lambda'(theta) = y
    left, right = -_BRACKET_START, _BRACKET_START
    while cumulant.slope(left) > y:
        left *= 2.0
        if left < -_BRACKET_MAX:
            return y * left - cumulant.value(left)  # numerically saturated
    while cumulant.slope(right) < y:
        right *= 2.0
        if right > _BRACKET_MAX:
            return y * right - cumulant.value(right)

    theta = 0.5 * (left + right)
    tol = 1e-12 * max(1.0, abs(y))
    for _ in range(200):
        resid = cumulant.slope(theta) - y
        if abs(resid) <= tol:
            break
        if resid > 0:
            right = theta
        else:
            left = theta
        curv = cumulant.curvature(theta)
        step = resid / curv if curv > 0 else 0.0
        candidate = theta - step
        if not left < candidate < right:
            candidate = 0.5 * (left + right)  # bisection fallback
        if abs(candidate - theta) < 1e-15 * max(1.0, abs(theta)):
            theta = candidate
            break
        theta = candidate
    return theta * y - cumulant.value(theta)


# -- regime model --------------------------------------------------------------------


def _regime_coefficients(x: float, g, model: RegimeModel, convention: str):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    g = np.asarray(g, dtype=float)
    if g.shape != (model.d,) or g.min() < 0 or abs(g.sum() - 1.0) > 1e-9:
        raise ValueError("g must be a probability vector over regimes")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    birth_mass = (1.0 - x) if convention == "drift" else x
    death_mass = x if convention == "drift" else (1.0 - x)
    up = birth_mass * float(g @ model.up_rates)
    down = death_mass * float(g @ model.down_rates)
    return BirthDeathCumulant(up=up, down=down)


def cumulant_regime(x: float, g, theta, model: RegimeModel,
                    convention: str = "drift"):
    """Local cumulant sum_i g_i (birth_i (e^theta - 1) + death_i (e^{-theta} - 1)).

    With ``convention="printed"`` the birth term carries the weight x and
    the death term 1 - x; the default attaches x to deaths, matching the
    drift of the edge-count dynamics.
    """
    return _regime_coefficients(x, g, model, convention).value(theta)


def local_rate_regime(x: float, g, y: float, model: RegimeModel,
                      convention: str = "drift") -> float:
    """Legendre transform of the regime local cumulant at velocity y."""
    return legendre_transform(_regime_coefficients(x, g, model, convention), y)


def occupation_cost_density(g, model, restarts: int = 8) -> float:
    """Donsker-Varadhan-type occupation cost sup_{u>0} (-sum g_i (Qu)_i / u_i).

    The supremum is scale invariant, so it is taken over u = exp(w) with
    w_1 = 0; zero-weight states are removed from the running coordinates
    (their limit contribution is through the exit rates only).  Multiple
    restarts guard against flat starts; the value at u = 1 (zero) is always
    a feasible lower bound.
    """
    Q = model.chain.Q if isinstance(model, RegimeModel) else model.Q
    if not isinstance(model, (RegimeModel, Generator)):
        raise TypeError("model must be a RegimeModel or Generator")
    g = np.asarray(g, dtype=float)
    d = Q.shape[0]
    if g.shape != (d,) or g.min() < 0 or abs(g.sum() - 1.0) > 1e-9:
        raise ValueError("g must be a probability vector over regimes")

    support = np.flatnonzero(g > 0.0)
    if support.size == 1:
        i = support[0]
        return float(-Q[i, i] * g[i])
    Qs = Q[np.ix_(support, support)].copy()
    np.fill_diagonal(Qs, np.diag(Q)[support])  # keep full exit rates
    gs = g[support]
    m = support.size

    def neg_objective(w):
        u = np.exp(np.concatenate(([0.0], w)))
        flow = Qs @ u
        val = -float(gs @ (flow / u))
        grad_u = -(gs / u) @ Qs + gs * flow / u**2
        return -val, -(grad_u * u)[1:]

    best = 0.0  # u = 1 is feasible and gives exactly zero
    rng = np.random.default_rng(1234)
    starts = [np.zeros(m - 1)] + [rng.normal(0.0, 2.0, m - 1) for _ in range(restarts - 1)]
    converged = False
    for w0 in starts:
        res = minimize(neg_objective, w0, jac=True, method="L-BFGS-B")
        if np.isfinite(res.fun):
            converged = True
            best = max(best, -float(res.fun))
    if not converged:
        raise NoConvergence("occupation-cost ascent failed from every start")
    return best


# -- resampling model -----------------------------------------------------------------


def _resample_mixture(x: float, law: ScaledResampleLaw, nodes: int = 64) -> MixtureCumulant:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    up, down, w = law.increments.atoms(nodes)
    if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
        raise MgfDiverges("rate atoms must be finite for the MGF to exist")
    return MixtureCumulant(a=(1.0 - x) * up, b=x * down, log_w=np.log(w))


def cumulant_resample(x: float, theta, law: ScaledResampleLaw):
    """log E exp(x down (e^{-theta} - 1) + (1 - x) up (e^theta - 1)).

    Uses the closed-form uniform MGFs when the law has independent named
    marginals, exact weighted exponentials for atom laws.
    """
    inc = law.increments
    if inc.is_atomic:
        return _resample_mixture(x, law).value(theta)
    theta_arr = np.asarray(theta, dtype=float)
    s_down = x * np.expm1(-theta_arr)
    s_up = (1.0 - x) * np.expm1(theta_arr)
    out = inc.down_marginal.log_mgf(s_down) + inc.up_marginal.log_mgf(s_up)
    return out if np.ndim(theta) else float(out)


def local_rate_resample(x: float, y: float, law: ScaledResampleLaw,
                        nodes: int = 64) -> float:
    """Legendre transform of the resampling local cumulant at velocity y.

    Continuous laws are discretized by Gauss-Legendre quadrature (``nodes``
    per dimension), which is spectrally accurate for these entire-function
    integrands.
    """
    return legendre_transform(_resample_mixture(x, law, nodes), y)


# -- path functionals ------------------------------------------------------------------


@dataclass(frozen=True)
class PathFunction:
    """Piecewise-linear scaled edge-count path on a uniform grid over [0, T]."""

    values: np.ndarray
    horizon: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least two grid values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("path values must lie in [0, 1]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.values.size)

    def node_slopes(self) -> np.ndarray:
        """f' per node: right-segment slope, left slope at the last node."""
        dt = self.horizon / (self.values.size - 1)
        slopes = np.diff(self.values) / dt
        return np.append(slopes, slopes[-1])


@dataclass(frozen=True)
class OccupationProfile:
    """Time-indexed regime distribution on a uniform grid over [0, T]."""

    values: np.ndarray
    horizon: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("need a (grid, d) value matrix")
        if v.min() < -1e-12 or np.abs(v.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("profile rows must be probability vectors")

    @classmethod
    def constant(cls, g, horizon: float, n_grid: int = 2) -> "OccupationProfile":
        g = np.asarray(g, dtype=float)
        return cls(values=np.tile(g, (n_grid, 1)), horizon=horizon)

    def at_times(self, times: np.ndarray) -> np.ndarray:
        """Componentwise linear interpolation (stays on the simplex)."""
        grid = np.linspace(0.0, self.horizon, self.values.shape[0])
        return np.stack(
            [np.interp(times, grid, self.values[:, i]) for i in range(self.values.shape[1])],
            axis=1,
        )


def path_cost(f: PathFunction, model, profile: OccupationProfile | None = None,
              convention: str = "drift") -> float:
    """Action integral of the path: trapezoidal quadrature of the local rate.

    For the regime model an occupation profile is required and the
    occupation cost density is added to the integrand; for the resampling
    law the profile is ignored.  Any infinite local rate makes the cost
    +inf.
    """
    times = f.grid
    slopes = f.node_slopes()
    if isinstance(model, RegimeModel):
        if profile is None:
            raise ValueError("the regime-model path cost needs an occupation profile")
        if abs(profile.horizon - f.horizon) > 1e-12:
            raise ValueError("profile and path horizons differ")
        g_nodes = profile.at_times(times)
        integrand = np.empty(times.size)
        for j in range(times.size):
            rate = local_rate_regime(f.values[j], g_nodes[j], slopes[j], model, convention)
            if math.isinf(rate):
                return math.inf
            integrand[j] = rate + occupation_cost_density(g_nodes[j], model, restarts=2)
    elif isinstance(model, ScaledResampleLaw):
        integrand = np.empty(times.size)
        for j in range(times.size):
            rate = local_rate_resample(f.values[j], slopes[j], model)
            if math.isinf(rate):
                return math.inf
            integrand[j] = rate
    else:
        raise TypeError(f"no path cost for {type(model).__name__}")
    return float(np.trapezoid(integrand, times))


def minimize_over_profiles(f: PathFunction, model: RegimeModel,
                           g1_steps: int = 41,
                           convention: str = "drift") -> tuple[float, OccupationProfile]:
    """Pointwise-optimal occupation profile for a two-regime model.

    The objective decouples across time given f, so each grid node runs a
    one-dimensional search of g_1 over {0, 1/(steps-1), ..., 1}; refining
    the grid can only lower the returned cost.  Returns (cost, profile).
    """
    if model.d != 2:
        raise UnsupportedDimension("profile optimization is implemented for d = 2")
    times = f.grid
    slopes = f.node_slopes()
    g1_grid = np.linspace(0.0, 1.0, g1_steps)
    # occupation cost is time-independent: precompute along the grid once
    j_density = np.array([
        occupation_cost_density(np.array([g1, 1.0 - g1]), model, restarts=2)
        for g1 in g1_grid
    ])

    integrand = np.empty(times.size)
    best_g1 = np.empty(times.size)
    for j in range(times.size):
        best_val, best_arg = math.inf, g1_grid[0]
        for g1, dens in zip(g1_grid, j_density):
            rate = local_rate_regime(f.values[j], np.array([g1, 1.0 - g1]),
                                     slopes[j], model, convention)
            total = rate + dens
            if total < best_val:
                best_val, best_arg = total, g1
        integrand[j] = best_val
        best_g1[j] = best_arg
    cost = float(np.trapezoid(integrand, times))
    profile = OccupationProfile(
        values=np.column_stack([best_g1, 1.0 - best_g1]), horizon=f.horizon
    )
    return cost, profile
