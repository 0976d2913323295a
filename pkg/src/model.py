"""Model parameters, derived constants and the analytic stability region.

The model is the scalar state-dependent delay equation

    u'(t) = mu*u(t) + sigma*u(t - a - c*u(t)),   u(t) = phi(t) for t <= 0.
"""

import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from scipy.optimize import brentq

BOUNDARY_EPS = 1e-9
# keeps the bracket for s*cot(a*s) = mu away from the poles at 0 and pi/a
_S_MARGIN = 1e-12


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    a: float
    c: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class DerivedConstants:
    m0: float
    n0: float
    tau0: float
    tau: float


class RegionLabel(str, Enum):
    CONE = "Cone"
    WEDGE = "Wedge"
    CUSP = "Cusp"
    BOUNDARY_LINE = "BoundaryLine"
    BOUNDARY_CURVE = "BoundaryCurve"
    OUTSIDE = "Outside"


def validate(params: Params) -> Params:
    """Return params unchanged if a > 0, c > 0, mu < 0 and mu + sigma < 0.

    Raises:
        DomainError: naming the first violated constraint.
    """
    values = (params.a, params.c, params.mu, params.sigma)
    if not all(math.isfinite(v) for v in values):
        raise DomainError(f"parameters must be finite, got {params}")
    if params.a <= 0:
        raise DomainError(f"a <= 0: delay offset must be positive (a={params.a})")
    if params.c <= 0:
        raise DomainError(f"c <= 0: state dependence must be positive (c={params.c})")
    if params.mu >= 0:
        raise DomainError(f"mu >= 0: instantaneous feedback must be negative (mu={params.mu})")
    if params.mu + params.sigma >= 0:
        raise DomainError(
            f"mu+sigma >= 0: deviating argument may become an advance "
            f"(mu={params.mu}, sigma={params.sigma})"
        )
    return params


def derived_constants(params: Params, n_override: Optional[float] = None) -> DerivedConstants:
    """Solution bounds M0, N0 and the delay ceilings tau0, tau.

    For sigma > 0 the upper solution bound depends on the initial data, so the
    caller must supply it through n_override.
    """
    if n_override is not None and n_override < 0:
        raise DomainError(f"upper bound override must be >= 0 (got {n_override})")
    if params.sigma > 0 and n_override is None:
        raise DomainError(
            f"sigma > 0 requires an explicit upper solution bound N (sigma={params.sigma})"
        )
    a, c = params.a, params.c
    m0 = -a / c
    n0 = a * params.sigma / (c * params.mu)
    upper = n0 if n_override is None else max(n0, n_override)
    return DerivedConstants(m0=m0, n0=n0, tau0=a + c * n0, tau=a + c * upper)


def stability_boundary_point(s: float, a: float) -> tuple[float, float]:
    """Point (mu(s), sigma(s)) = (s*cot(a*s), -s*csc(a*s)) on the curve g*."""
    if not 0.0 < s < math.pi / a:
        raise DomainError(f"curve parameter s={s} outside (0, pi/a={math.pi / a})")
    return s / math.tan(a * s), -s / math.sin(a * s)


def boundary_sigma(mu: float, a: float) -> Optional[float]:
    """Sigma on g* at the given mu, or None when mu >= 1/a (g* ends there).

    s*cot(a*s) decreases monotonically from 1/a to -inf on (0, pi/a).
    """
    if mu >= 1.0 / a:
        return None
    lo, hi = _S_MARGIN, math.pi / a - _S_MARGIN

    def offset(s: float) -> float:
        return s / math.tan(a * s) - mu

    if offset(lo) <= 0.0:
        # mu within rounding of 1/a: the curve meets the end of l*
        s = lo
    else:
        s = brentq(offset, lo, hi, xtol=1e-15, rtol=4 * sys.float_info.epsilon)
    return -s / math.sin(a * s)


def classify_region(params: Params, boundary_eps: float = BOUNDARY_EPS) -> RegionLabel:
    """Locate (mu, sigma) relative to the analytic stability region.

    Accepts mu >= 0 so diagnostic sweeps can label the cusp; only a > 0 is required.
    """
    if params.a <= 0:
        raise DomainError(f"a <= 0: delay offset must be positive (a={params.a})")
    a, mu, sigma = params.a, params.mu, params.sigma

    if abs(sigma) < -mu:
        return RegionLabel.CONE

    # the line l* is sigma = -mu for mu <= 1/a, endpoint included
    if mu <= 1.0 / a + boundary_eps and abs(sigma + mu) <= boundary_eps:
        return RegionLabel.BOUNDARY_LINE

    sigma_b = boundary_sigma(mu, a)
    if sigma_b is None:
        return RegionLabel.OUTSIDE
    if abs(sigma - sigma_b) <= boundary_eps:
        return RegionLabel.BOUNDARY_CURVE
    if sigma_b < sigma < -mu:
        return RegionLabel.WEDGE if mu < 0 else RegionLabel.CUSP
    return RegionLabel.OUTSIDE
