"""Oracle suites: every closed form is checked against an independent computation."""

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from src.logger import logger
from src.model import Params, derived_constants
from src.razumikhin import (
    INV_E,
    bound_root_m,
    bound_root_n,
    dq_dv,
    iterate_bounds,
    lambert_w_restricted,
    q_closed,
    q_quadrature,
    ramp_breakpoint,
)
from src.sdde import ExtremumKind, HistoryFunction, check_extremum_inequalities, integrate

# moving point of the k=2 branch switch is excluded from finite differences
SWITCH_GAP = 1e-4
FD_STEP = 1e-6


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    worst: float
    samples: int

    def as_record(self) -> dict:
        return {
            "suite": self.name,
            "passed": str(self.passed).lower(),
            "worst": repr(self.worst),
            "samples": str(self.samples),
        }


@dataclass(frozen=True)
class DomainSample:
    k: int
    v: float
    x: float
    y: float
    params: Params


def sample_params(rng: np.random.Generator) -> Params:
    """a = c = 1 and sigma <= mu < 0."""
    mu = float(rng.uniform(-3.0, -0.05))
    sigma = float(rng.uniform(mu - 3.0, mu))
    return Params(a=1.0, c=1.0, mu=mu, sigma=sigma)


def sample_tuples(rng: np.random.Generator, count: int, k: int) -> list[DomainSample]:
    """Random (v, x, y) from both the minimum and maximum cases of the domain."""
    samples = []
    for _ in range(count):
        params = sample_params(rng)
        consts = derived_constants(params)
        if rng.random() < 0.5:
            y = float(rng.uniform(consts.m0, 0.0))
            v = float(rng.uniform(y, 0.0))
            x = float(rng.uniform(0.0, consts.n0))
        else:
            x = float(rng.uniform(consts.m0, 0.0))
            y = float(rng.uniform(0.0, consts.n0))
            v = float(rng.uniform(0.0, y))
        samples.append(DomainSample(k=k, v=v, x=x, y=y, params=params))
    return samples


def _switch_offset(v: float, x: float, y: float, params: Params) -> float:
    """-theta*(v) - (a + c*v); zero on the k=2 branch switch."""
    s, theta_star, _ = ramp_breakpoint(v, x, y, params)
    if s == 0:
        return math.inf
    return -theta_star - (params.a + params.c * v)


def q_oracle_suite(rng: np.random.Generator, samples: int, perturb: float = 0.0) -> SuiteResult:
    worst = 0.0
    count = 0
    for k in (1, 2):
        for p in sample_tuples(rng, samples, k):
            closed = q_closed(k, p.v, p.x, p.y, p.params) + perturb
            oracle = q_quadrature(k, p.v, p.x, p.y, p.params)
            worst = max(worst, abs(closed - oracle) / (1.0 + abs(closed)))
            count += 1
    return SuiteResult("q_oracle", worst <= 1e-8, worst, count)


def dq_dv_fd_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    count = 0
    for k in (1, 2):
        for p in sample_tuples(rng, samples, k):
            lo, hi = (p.y, 0.0) if p.y <= 0.0 else (0.0, p.y)
            if hi - lo < 4 * SWITCH_GAP:
                continue
            v = min(max(p.v, lo + SWITCH_GAP), hi - SWITCH_GAP)
            if k == 2 and any(
                abs(_switch_offset(v + dv, p.x, p.y, p.params)) < SWITCH_GAP
                for dv in (-FD_STEP, 0.0, FD_STEP)
            ):
                continue
            closed = dq_dv(k, v, p.x, p.y, p.params)
            fd = (
                q_closed(k, v + FD_STEP, p.x, p.y, p.params)
                - q_closed(k, v - FD_STEP, p.x, p.y, p.params)
            ) / (2 * FD_STEP)
            worst = max(worst, abs(closed - fd) / max(1.0, abs(closed)))
            count += 1
    return SuiteResult("dq_dv_fd", worst <= 1e-5, worst, count)


def _switch_points(rng: np.random.Generator, samples: int) -> Iterator[DomainSample]:
    """Maximum-case tuples with v exactly on the k=2 branch switch."""
    for p in sample_tuples(rng, samples, 2):
        if p.y <= 0.0:
            continue
        s, _, d = ramp_breakpoint(0.0, p.x, p.y, p.params)
        params = p.params
        slope = -s * params.mu / (params.sigma * d) - params.c
        if s == 0 or slope == 0.0:
            continue
        v = (params.a + s * p.x / d) / slope
        if 0.0 < v < p.y:
            yield DomainSample(k=2, v=v, x=p.x, y=p.y, params=params)


def branch_continuity_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    worst = 0.0
    count = 0
    for p in _switch_points(rng, samples):
        delta = 1e-13 * (1.0 + abs(p.v))
        for fn in (q_closed, dq_dv):
            left = fn(2, p.v - delta, p.x, p.y, p.params)
            right = fn(2, p.v + delta, p.x, p.y, p.params)
            worst = max(worst, abs(left - right))
        count += 1
    return SuiteResult("branch_continuity", worst <= 1e-10, worst, count)


def lambert_suite(rng: np.random.Generator, samples: int) -> SuiteResult:
    zs = np.concatenate(([-INV_E], -INV_E * rng.uniform(0.0, 1.0, size=samples)))
    worst = 0.0
    branch_ok = True
    for z in zs:
        if z >= 0.0:
            continue
        w = lambert_w_restricted(float(z))
        branch_ok &= w <= -1.0
        worst = max(worst, abs(w * math.exp(w) - z))
    passed = branch_ok and worst <= 1e-12 and lambert_w_restricted(-INV_E) == -1.0
    return SuiteResult("lambert", passed, worst, len(zs))


def _check_root_map(
    root: Callable[[float], float],
    q: Callable[[float, float], float],
    xs: np.ndarray,
    interval: Callable[[float], tuple[float, float]],
    v_range: tuple[float, float],
) -> float:
    """Worst violation of monotonicity, interval membership and sign structure.

    Signs are sampled only where (v, x, y) stays inside the evaluation domain.
    """
    worst = 0.0
    previous = math.inf
    for x in xs:
        x = float(x)
        r = root(x)
        lo, hi = interval(x)
        worst = max(worst, lo - r, r - hi, r - previous)
        previous = r
        # the root may lie outside v_range, where q is undefined
        start, end = max(lo, v_range[0]), min(r, v_range[1])
        if end > start:
            for v in np.linspace(start, end, 52)[:-1]:
                worst = max(worst, q(x, float(v)))
        start, end = max(r, v_range[0]), min(hi, v_range[1])
        if end > start:
            for v in np.linspace(start, end, 52)[1:]:
                worst = max(worst, -q(x, float(v)))
    return worst


def root_map_monotonicity_suite(rng: np.random.Generator, points: int = 4) -> SuiteResult:
    worst = 0.0
    count = 0
    for _ in range(points):
        params = sample_params(rng)
        consts = derived_constants(params)
        ratio = -params.sigma / params.mu
        for k in (1, 2):
            y_min = float(rng.uniform(consts.m0, 0.0))
            xs = np.linspace(0.0, consts.n0, 100)
            worst = max(
                worst,
                _check_root_map(
                    lambda x: bound_root_m(k, x, y_min, params),
                    lambda x, v: q_closed(k, v, x, y_min, params),
                    xs,
                    lambda x: (max(consts.m0, ratio * x), 0.0),
                    (y_min, 0.0),
                ),
            )
            y_max = float(rng.uniform(0.0, consts.n0))
            xs = np.linspace(consts.m0, 0.0, 100)
            worst = max(
                worst,
                _check_root_map(
                    lambda x: bound_root_n(k, x, y_max, params),
                    lambda x, v: q_closed(k, v, x, y_max, params),
                    xs,
                    lambda x: (0.0, ratio * x),
                    (0.0, y_max),
                ),
            )
            count += 200
    return SuiteResult("root_map_monotonicity", worst <= 1e-9, max(worst, 0.0), count)


def k_ordering_suite(rng: np.random.Generator, points: int = 20, max_n: int = 200) -> SuiteResult:
    worst = 0.0
    for _ in range(points):
        params = sample_params(rng)
        first = iterate_bounds(1, params, max_n=max_n).pairs
        second = iterate_bounds(2, params, max_n=max_n).pairs
        for p1, p2 in zip(first, second):
            worst = max(worst, p1.m - p2.m, p2.m, -p2.n, p2.n - p1.n)
    return SuiteResult("k_ordering", worst <= 1e-12, max(worst, 0.0), points)


def extremum_inequalities_suite(t_end: float = 100.0) -> SuiteResult:
    params = Params(a=1.0, c=1.0, mu=-0.25, sigma=-1.75)
    consts = derived_constants(params)
    traj = integrate(params, HistoryFunction.constant(0.99 * consts.n0), t_end)
    worst = 0.0
    count = 0
    for k in (1, 2):
        checks = check_extremum_inequalities(traj, iterate_bounds(k, params), k)
        for check in checks:
            is_max = check.record.kind == ExtremumKind.MAX
            worst = max(worst, check.q if is_max else -check.q)
        count += len(checks)
    return SuiteResult("extremum_inequalities", count > 0 and worst <= 1e-4, worst, count)


def run_suites(seed: int, samples: int, perturb: float = 0.0) -> list[SuiteResult]:
    """All suites from one seeded generator, in a fixed order."""
    rng = np.random.default_rng(seed)
    results = [
        q_oracle_suite(rng, samples, perturb),
        dq_dv_fd_suite(rng, max(1, samples // 2)),
        branch_continuity_suite(rng, samples),
        lambert_suite(rng, 10 * samples),
        root_map_monotonicity_suite(rng),
        k_ordering_suite(rng),
        extremum_inequalities_suite(),
    ]
    for result in results:
        level = "info" if result.passed else "error"
        logger.log(
            f"Suite {result.name}: {'pass' if result.passed else 'FAIL'} "
            f"(worst={result.worst:.3e}, n={result.samples})",
            level=level,
        )
    return results
