"""Extremum functionals, bound maps and the shrinking-bound iteration.

At a local extremum u(t) = v the delayed value is pinned to -(mu/sigma)*v, and
the variation of constants formula over one delay interval gives

    Q(k)(v, x, y) = v + (mu/sigma)*v*exp(mu*(a+c*v))
                    - sigma * int_{-(a+c*v)}^0 exp(-mu*theta) * H(k)(v, x, y)(theta) dtheta

where the profile H(k) is the extremal shape of the delayed segment given a
far bound x and a near bound y. A positive maximum v satisfies Q(k)(v, M, N) <= 0
and a negative minimum satisfies Q(k)(v, N, M) >= 0, so the roots of Q(k) give
new bounds. Iterating from (M0, N0) yields nested absorbing intervals; a limit of
(0, 0) certifies global asymptotic stability of the steady state.
"""

import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import lambertw

from src.logger import logger
from src.model import DerivedConstants, DomainError, Params, derived_constants, validate

ORDERS = (1, 2)
INV_E = math.exp(-1.0)

DEFAULT_ROOT_TOL = 1e-12
DEFAULT_TOL = 1e-9
DEFAULT_MAX_N = 10_000
DEFAULT_QUADRATURE_TOL = 1e-10
BURN_IN_FACTOR = 5.0

_TINY = sys.float_info.min
_RTOL = 4 * sys.float_info.epsilon


class BracketError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


class GasVerdict(str, Enum):
    GAS_CONE = "GAS_cone"
    GAS_FIXED_POINT = "GAS_fixed_point"
    NOT_CERTIFIED = "NotCertified"


@dataclass(frozen=True)
class BoundPair:
    m: float
    n: float

    @property
    def width(self) -> float:
        return self.n - self.m


@dataclass
class IterationTrace:
    """Bound pairs from n=0 with their (heuristic) validity times."""

    k: int
    pairs: list[BoundPair]
    settle_times: list[float]
    converged: bool
    residual: float

    @property
    def iterations(self) -> int:
        return len(self.pairs) - 1

    @property
    def last(self) -> BoundPair:
        return self.pairs[-1]


# ----------------------------------------------------------------------------
# argument checks
# ----------------------------------------------------------------------------


def _check_order(k: int) -> None:
    if k not in ORDERS:
        raise DomainError(f"bound order k must be 1 or 2 (got {k})")


def _bound_constants(params: Params) -> DerivedConstants:
    """Validate params for the bound machinery (sigma <= mu < 0)."""
    validate(params)
    if params.sigma > params.mu:
        raise DomainError(
            f"bound iteration requires sigma <= mu < 0 (mu={params.mu}, sigma={params.sigma})"
        )
    return derived_constants(params)


def _check_domain(v: float, x: float, y: float, consts: DerivedConstants) -> None:
    m0, n0 = consts.m0, consts.n0
    eps = 1e-12 * (1.0 + abs(m0) + n0)
    minimum_case = (
        y - eps <= v <= eps and -eps <= x <= n0 + eps and m0 - eps <= y <= eps
    )
    maximum_case = (
        -eps <= v <= y + eps and m0 - eps <= x <= eps and -eps <= y <= n0 + eps
    )
    if not (minimum_case or maximum_case):
        raise DomainError(
            f"(v={v}, x={x}, y={y}) outside the evaluation domain for "
            f"M0={m0}, N0={n0}"
        )


def _sign(value: float) -> int:
    # sign(0) = 0 exactly
    return (value > 0) - (value < 0)


# ----------------------------------------------------------------------------
# profiles and functionals
# ----------------------------------------------------------------------------


def slope_bound(x: float, y: float, params: Params) -> float:
    """Bound D(x, y) on |d/dtheta u(theta + t - a - c*u(theta + t))|."""
    rate = abs(params.mu) + abs(params.sigma)
    amplitude = max(abs(x), abs(y))
    return rate * (1.0 + rate * amplitude * params.c) * amplitude


def ramp_breakpoint(v: float, x: float, y: float, p: Params) -> tuple[int, float, float]:
    """(sign(y-x), theta*, D) for the k=2 ramp; theta* = 0 when the sign vanishes."""
    s = _sign(y - x)
    if s == 0:
        return 0, 0.0, 0.0
    d = slope_bound(x, y, p)
    return s, s * (x + p.mu * v / p.sigma) / d, d


def _profile(k: int, v: float, x: float, y: float, theta: float, p: Params) -> float:
    """H(k) on theta < 0; the ramp is extended continuously to theta = 0."""
    if k == 1:
        return x
    s, theta_star, d = ramp_breakpoint(v, x, y, p)
    if s == 0 or theta_star >= 0.0 or theta <= theta_star:
        return x
    return -p.mu / p.sigma * v + s * d * theta


def h_profile(k: int, v: float, x: float, y: float, theta: float, params: Params) -> float:
    _check_order(k)
    lag = params.a + params.c * v
    if not -lag <= theta <= 0.0:
        raise DomainError(f"theta={theta} outside [-(a+c*v), 0] = [{-lag}, 0]")
    if theta == 0.0:
        # extremum condition u(t - a - c*v) = -(mu/sigma)*v
        return -params.mu / params.sigma * v
    return _profile(k, v, x, y, theta, params)


def _q1(v: float, x: float, p: Params) -> float:
    mu, sigma = p.mu, p.sigma
    ramp = math.expm1(mu * (p.a + p.c * v))
    return (1.0 + mu / sigma * (1.0 + ramp)) * v - sigma / mu * x * ramp


def _q2(v: float, x: float, y: float, p: Params) -> float:
    s, theta_star, d = ramp_breakpoint(v, x, y, p)
    if s == 0 or theta_star >= 0.0:
        # no ramp inside [-(a+c*v), 0): H(2) = H(1) almost everywhere
        return _q1(v, x, p)
    mu, sigma = p.mu, p.sigma
    lag = p.a + p.c * v
    e = math.exp(mu * lag)
    if -theta_star < lag:
        ramp = math.expm1(-mu * theta_star)
        return mu / sigma * v * e - sigma / mu * (s * d / mu * ramp + x * e)
    return v * e * (1.0 + mu / sigma) - s * sigma / mu * d * (math.expm1(mu * lag) / mu - lag * e)


def _q(k: int, v: float, x: float, y: float, p: Params) -> float:
    return _q1(v, x, p) if k == 1 else _q2(v, x, y, p)


def _dq1(v: float, x: float, p: Params) -> float:
    mu, sigma, c = p.mu, p.sigma, p.c
    e = math.exp(mu * (p.a + c * v))
    return 1.0 + mu / sigma * (1.0 + mu * c * v - sigma * sigma * c * x / mu) * e


def _dq2(v: float, x: float, y: float, p: Params) -> float:
    s, theta_star, d = ramp_breakpoint(v, x, y, p)
    if s == 0 or theta_star >= 0.0:
        return _dq1(v, x, p)
    mu, sigma, c = p.mu, p.sigma, p.c
    lag = p.a + c * v
    e = math.exp(mu * lag)
    if -theta_star < lag:
        return mu / sigma * (1.0 + mu * c * v - sigma * sigma * c * x / mu) * e + math.exp(
            -mu * theta_star
        )
    return ((1.0 + mu * c * v) * (1.0 + mu / sigma) + s * sigma * c * d * lag) * e


def _dq(k: int, v: float, x: float, y: float, p: Params) -> float:
    return _dq1(v, x, p) if k == 1 else _dq2(v, x, y, p)


def q_closed(k: int, v: float, x: float, y: float, params: Params) -> float:
    """Closed form of the extremum functional Q(k)(v, x, y)."""
    _check_order(k)
    _check_domain(v, x, y, _bound_constants(params))
    return _q(k, v, x, y, params)


def q_quadrature(
    k: int,
    v: float,
    x: float,
    y: float,
    params: Params,
    panels: int = 4,
    tol: float = DEFAULT_QUADRATURE_TOL,
) -> float:
    """Q(k) from its defining integral; the independent check on q_closed.

    The interval [-(a+c*v), 0] is cut into equal panels plus the k=2 breakpoint,
    and each piece is integrated adaptively.
    """
    _check_order(k)
    if panels < 2:
        raise DomainError(f"panels must be >= 2 (got {panels})")
    _check_domain(v, x, y, _bound_constants(params))

    mu, sigma = params.mu, params.sigma
    lag = params.a + params.c * v
    edges = list(np.linspace(-lag, 0.0, panels + 1))
    if k == 2:
        s, theta_star, _ = ramp_breakpoint(v, x, y, params)
        if s != 0 and -lag < theta_star < 0.0:
            edges = sorted(edges + [theta_star])

    def integrand(theta: float) -> float:
        return math.exp(-mu * theta) * _profile(k, v, x, y, theta, params)

    integral = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            integral += quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=200)[0]
    return v + mu / sigma * v * math.exp(mu * lag) - sigma * integral


def dq_dv(k: int, v: float, x: float, y: float, params: Params) -> float:
    """Closed form of dQ(k)/dv; continuous across the k=2 branch switch."""
    _check_order(k)
    _check_domain(v, x, y, _bound_constants(params))
    return _dq(k, v, x, y, params)


# ----------------------------------------------------------------------------
# Lambert W and the derivative's critical point
# ----------------------------------------------------------------------------


def lambert_w_restricted(z: float) -> float:
    """Branch of w*exp(w) = z with w <= -1, for z in [-1/e, 0)."""
    if not (-INV_E * (1.0 + _RTOL) <= z < 0.0):
        raise DomainError(f"restricted Lambert W needs z in [-1/e, 0) (got {z})")
    if z <= -INV_E:
        return -1.0

    w = float(lambertw(z, -1).real)
    if not math.isfinite(w):
        w = math.log(-z) - math.log(-math.log(-z))
    # Halley refinement
    for _ in range(20):
        ew = math.exp(w)
        f = w * ew - z
        if abs(f) <= 1e-17 or w >= -1.0:
            break
        w1 = w + 1.0
        dw = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w -= dw
        if abs(dw) < 1e-16 * (2.0 + abs(w)):
            break
    return min(w, -1.0)


def critical_point_v_star(k: int, x: float, y: float, params: Params) -> Optional[float]:
    """Candidate sign change of dQ(k)/dv in the maximum case, or None.

    Solving dQ(k)/dv = 0 for w = 1 + mu*c*v - sigma^2*c*x/mu reduces to
    (1+g)*w*exp((1+g)*w) = zeta, g = s*mu/(sigma*c*D) (g = 0 for k=1), whose
    relevant solution lies on the branch W <= -1.
    """
    _check_order(k)
    consts = _bound_constants(params)
    a, c, mu, sigma = params.a, params.c, params.mu, params.sigma
    if not (consts.m0 <= x <= 0.0 and 0.0 < y <= consts.n0 * (1.0 + 1e-12)):
        raise DomainError(f"(x={x}, y={y}) outside the maximum-case domain")

    gamma, shift = 0.0, 0.0
    s, d = 0, 0.0
    if k == 2:
        s = _sign(y - x)
        d = slope_bound(x, y, params)
        if s != 0 and d > 0.0:
            gamma = s * mu / (sigma * c * d)
            shift = -mu * s * x / d
    scale = 1.0 + gamma
    exponent = -mu * a + shift + scale * (1.0 - sigma * sigma * c * x / mu)
    if exponent > 700.0:
        return None
    zeta = -scale * sigma / mu * math.exp(exponent)
    if not -INV_E <= zeta < 0.0:
        return None

    w = lambert_w_restricted(zeta) / scale
    v_star = (w - 1.0 + sigma * sigma * c * x / mu) / (mu * c)
    if k == 2:
        lag = a + c * v_star
        _, theta_star, _ = ramp_breakpoint(v_star, x, y, params)
        # the Lambert form only describes the flat-then-ramp branch
        if s == 0 or lag <= 0.0 or theta_star >= 0.0 or -theta_star >= lag:
            return None
    return v_star


# ----------------------------------------------------------------------------
# bound maps
# ----------------------------------------------------------------------------


def _solve_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    root_tol: float,
    slope: Optional[Callable[[float], float]] = None,
) -> float:
    """Root of f on [lo, hi] with f(lo) <= 0 <= f(hi)."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo > 0.0 or f_hi < 0.0:
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: Q(lo)={f_lo}, Q(hi)={f_hi}"
        )
    # relative tolerance for tiny brackets near the steady state
    xtol = max(root_tol * min(1.0, hi - lo), _TINY)
    root = brentq(f, lo, hi, xtol=xtol, rtol=_RTOL)
    if slope is not None:
        for _ in range(3):
            value, gradient = f(root), slope(root)
            if value == 0.0 or gradient <= 0.0:
                break
            candidate = root - value / gradient
            if not lo <= candidate <= hi or abs(f(candidate)) >= abs(value):
                break
            root = candidate
    return root


def _root_m(
    k: int, x: float, y: float, p: Params, m0: float, root_tol: float, polish: bool
) -> float:
    if x == 0.0:
        return 0.0
    lo = max(m0, -p.sigma * x / p.mu)
    slope = (lambda v: _dq(k, v, x, y, p)) if polish else None
    return _solve_root(lambda v: _q(k, v, x, y, p), lo, 0.0, root_tol, slope)


def _root_n(k: int, x: float, y: float, p: Params, root_tol: float, polish: bool) -> float:
    if x == 0.0:
        return 0.0
    hi = -p.sigma * x / p.mu
    slope = (lambda v: _dq(k, v, x, y, p)) if polish else None
    return _solve_root(lambda v: _q(k, v, x, y, p), 0.0, hi, root_tol, slope)


def bound_root_m(
    k: int,
    x: float,
    y: float,
    params: Params,
    tol: float = DEFAULT_ROOT_TOL,
    polish: bool = False,
) -> float:
    """New lower bound M(k)(x, y) from upper bound x >= 0 and lower bound y <= 0."""
    _check_order(k)
    consts = _bound_constants(params)
    eps = 1e-12 * (1.0 + consts.n0)
    if not (-eps <= x <= consts.n0 + eps and consts.m0 - eps <= y <= 0.0):
        raise DomainError(f"bound_root_m needs x in [0, N0] and y in [M0, 0] (x={x}, y={y})")
    return _root_m(k, max(x, 0.0), y, params, consts.m0, tol, polish)


def bound_root_n(
    k: int,
    x: float,
    y: float,
    params: Params,
    tol: float = DEFAULT_ROOT_TOL,
    polish: bool = False,
) -> float:
    """New upper bound N(k)(x, y) from lower bound x <= 0 and upper bound y >= 0."""
    _check_order(k)
    consts = _bound_constants(params)
    eps = 1e-12 * (1.0 + consts.n0)
    if not (consts.m0 - eps <= x <= 0.0 and 0.0 <= y <= consts.n0 + eps):
        raise DomainError(f"bound_root_n needs x in [M0, 0] and y in [0, N0] (x={x}, y={y})")
    return _root_n(k, max(x, consts.m0), y, params, tol, polish)


# ----------------------------------------------------------------------------
# iteration and limits
# ----------------------------------------------------------------------------


def _residual(k: int, pair: BoundPair, p: Params) -> float:
    return max(abs(_q(k, pair.n, pair.m, pair.n, p)), abs(_q(k, pair.m, pair.n, pair.m, p)))


def fixed_point_residual(k: int, pair: BoundPair, params: Params) -> float:
    """max(|Q(k)(N, M, N)|, |Q(k)(M, N, M)|) at a bound pair."""
    _check_order(k)
    consts = _bound_constants(params)
    _check_domain(pair.n, pair.m, pair.n, consts)
    return _residual(k, pair, params)


def _settled(pair: BoundPair, step: float, prev_step: Optional[float], tol: float) -> bool:
    if pair.width <= tol:
        return True
    if step > tol:
        return False
    if step == 0.0:
        return True
    if not prev_step:
        return False
    # distance to the limit of a linearly convergent sequence
    rho = step / prev_step
    return rho < 1.0 and step * rho / (1.0 - rho) <= tol


def iterate_bounds(
    k: int,
    params: Params,
    max_n: int = DEFAULT_MAX_N,
    tol: float = DEFAULT_TOL,
    root_tol: float = DEFAULT_ROOT_TOL,
    polish: bool = False,
) -> IterationTrace:
    """Shrink [M0, N0] with M <- M(k)(N, M), N <- N(k)(M, N) until it settles.

    Settle times start from a burn-in of BURN_IN_FACTOR*tau0 and grow by
    (k+1)*(a + c*N) per step. They are a reporting estimate; the bounds only
    guarantee that such times exist.
    """
    _check_order(k)
    consts = _bound_constants(params)
    a, c = params.a, params.c

    pair = BoundPair(consts.m0, consts.n0)
    pairs = [pair]
    settle = BURN_IN_FACTOR * consts.tau0
    settle_times = [settle]
    residual = _residual(k, pair, params)
    converged = False
    prev_step: Optional[float] = None

    logger.log(
        f"Bound iteration k={k} for a={a}, c={c}, mu={params.mu}, sigma={params.sigma} "
        f"from [{consts.m0}, {consts.n0}]"
    )
    for _ in range(max_n):
        m_next = _root_m(k, pair.n, pair.m, params, consts.m0, root_tol, polish)
        n_next = _root_n(k, pair.m, pair.n, params, root_tol, polish)
        # intersect with the previous interval; both bounds hold
        m_next = max(m_next, pair.m)
        n_next = min(n_next, pair.n)

        settle += (k + 1) * (a + c * pair.n)
        step = abs(m_next - pair.m) + abs(n_next - pair.n)
        pair = BoundPair(m_next, n_next)
        pairs.append(pair)
        settle_times.append(settle)

        residual = _residual(k, pair, params)
        if residual <= tol and _settled(pair, step, prev_step, tol):
            converged = True
            break
        prev_step = step

    level = "info" if converged else "warning"
    logger.log(
        f"Bound iteration k={k} {'converged' if converged else 'stopped'} after "
        f"{len(pairs) - 1} steps at [{pair.m}, {pair.n}], residual={residual:.3e}",
        level=level,
    )
    return IterationTrace(
        k=k, pairs=pairs, settle_times=settle_times, converged=converged, residual=residual
    )


def limit_bounds(
    k: int,
    params: Params,
    tol: float = DEFAULT_TOL,
    max_n: int = DEFAULT_MAX_N,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> tuple[BoundPair, float]:
    """Outermost fixed point [M(k,inf), N(k,inf)] and its residual.

    Raises:
        ConvergenceError: if the iteration has not settled within max_n steps.
    """
    trace = iterate_bounds(k, params, max_n=max_n, tol=tol, root_tol=root_tol)
    if not trace.converged:
        raise ConvergenceError(
            f"bound iteration k={k} did not settle after {trace.iterations} steps "
            f"(residual={trace.residual:.3e}, pair=[{trace.last.m}, {trace.last.n}])"
        )
    return trace.last, trace.residual


def is_cone(params: Params) -> bool:
    return abs(params.sigma) < -params.mu


def is_gas(
    params: Params,
    k: int = 2,
    tol: float = DEFAULT_TOL,
    max_n: int = DEFAULT_MAX_N,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> GasVerdict:
    """Certify global asymptotic stability by the cone test or a (0, 0) limit."""
    _check_order(k)
    validate(params)
    if is_cone(params):
        return GasVerdict.GAS_CONE
    if params.sigma <= params.mu:
        pair, _ = limit_bounds(k, params, tol=tol, max_n=max_n, root_tol=root_tol)
        if max(abs(pair.m), pair.n) <= tol:
            return GasVerdict.GAS_FIXED_POINT
    return GasVerdict.NOT_CERTIFIED
