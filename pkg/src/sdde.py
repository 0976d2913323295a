"""Fixed-step integration of u'(t) = mu*u(t) + sigma*u(t - a - c*u(t)).

The scheme is the classical four-stage Runge-Kutta method on a uniform grid with
a cubic Hermite interpolant on every accepted step. Delayed values at the stages
are read from the history, from a completed step, or (when the deviated time
falls inside the live step) by extrapolating the last completed interpolant.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from src.file_writer import atomic_write, csv_text, fmt_float
from src.logger import logger
from src.model import DerivedConstants, DomainError, Params, derived_constants, validate
from src.razumikhin import IterationTrace, q_closed

NUM_EPS = 1e-6
NOISE_FLOOR = 1e-8
EXTREMUM_TIME_TOL = 1e-10
BURN_IN_FACTOR = 5.0


class DelayCollapse(RuntimeError):
    pass


class StepTooLarge(ValueError):
    pass


class Behaviour(str, Enum):
    MONOTONE_CONVERGING = "MonotoneConverging"
    OSCILLATORY = "Oscillatory"
    UNDETERMINED = "Undetermined"


class ExtremumKind(str, Enum):
    MAX = "Max"
    MIN = "Min"


@dataclass(frozen=True)
class ExtremumRecord:
    t: float
    v: float
    kind: ExtremumKind


class HistoryFunction:
    """Initial data phi on [-tau, 0]: a constant or a monotone cubic through knots."""

    def __init__(
        self,
        value: Optional[float] = None,
        times: Optional[Sequence[float]] = None,
        values: Optional[Sequence[float]] = None,
    ):
        if (value is None) == (times is None):
            raise DomainError("history needs either a constant value or a knot table")
        self.value = value
        self._interpolant: Optional[PchipInterpolator] = None
        if value is not None:
            if not math.isfinite(value):
                raise DomainError(f"history value must be finite (got {value})")
            self.start = -math.inf
            self.maximum = self.minimum = self.at_zero = float(value)
            return

        t = np.asarray(times, dtype=float)
        u = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != u.shape or t.size < 2:
            raise DomainError("history table needs matching 1-d times and values (>= 2 knots)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(u))):
            raise DomainError("history table must be finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("history knots must be strictly increasing")
        if t[-1] != 0.0:
            raise DomainError(f"history table must end at t=0 (ends at {t[-1]})")
        self._interpolant = PchipInterpolator(t, u, extrapolate=False)
        self.start = float(t[0])
        # pchip does not overshoot the knot data
        self.maximum = float(u.max())
        self.minimum = float(u.min())
        self.at_zero = float(u[-1])

    @classmethod
    def constant(cls, value: float) -> "HistoryFunction":
        return cls(value=value)

    @classmethod
    def table(cls, times: Sequence[float], values: Sequence[float]) -> "HistoryFunction":
        return cls(times=times, values=values)

    @property
    def is_constant(self) -> bool:
        return self._interpolant is None

    def __call__(self, t: float) -> float:
        if self._interpolant is None:
            return self.value
        # below the first knot only through rounding; clamp onto the table
        return float(self._interpolant(min(max(t, self.start), 0.0)))

    def check(self, consts: DerivedConstants) -> None:
        """Require coverage of [-tau, 0] and values >= m0."""
        if self.minimum < consts.m0:
            raise DomainError(
                f"history drops below M0={consts.m0} (min {self.minimum}); "
                f"the delay would collapse"
            )
        if self.start > -consts.tau:
            raise DomainError(
                f"history table starts at {self.start}, needs to cover [-{consts.tau}, 0]"
            )

    def __repr__(self) -> str:
        if self.is_constant:
            return f"HistoryFunction.constant({self.value})"
        return f"HistoryFunction.table([{self.start}, 0], max={self.maximum})"


def _hermite(theta: float, h: float, y0: float, y1: float, m0: float, m1: float) -> float:
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * y0
        + (t3 - 2 * t2 + theta) * h * m0
        + (-2 * t3 + 3 * t2) * y1
        + (t3 - t2) * h * m1
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted nodes with derivatives; the segments are the Hermite cubics between them."""

    params: Params
    history: HistoryFunction
    constants: DerivedConstants
    step: float
    t: np.ndarray
    u: np.ndarray
    udot: np.ndarray
    extrema: list[ExtremumRecord] = field(default_factory=list)

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def value(self, s: float) -> float:
        """Dense output u(s); the history for s <= 0."""
        if s <= 0.0:
            return self.history(s)
        last = len(self.t) - 1
        i = min(int(s / self.step), last - 1)
        h = self.t[i + 1] - self.t[i]
        return _hermite(
            (s - self.t[i]) / h, h, self.u[i], self.u[i + 1], self.udot[i], self.udot[i + 1]
        )

    def rate(self, s: float) -> float:
        """u'(s) evaluated from the equation along the dense output."""
        return rhs(s, self.value(s), self.params, self.value)

    def window_mask(self, t_start: float) -> np.ndarray:
        return self.t >= t_start


def rhs(t: float, u: float, params: Params, lookup: Callable[[float], float]) -> float:
    """mu*u + sigma*u(t - a - c*u) with the delayed value from lookup."""
    lag = params.a + params.c * u
    if lag <= 0.0:
        raise DelayCollapse(
            f"delay a + c*u = {lag} <= 0 at t={t} (u={u} breached M0={-params.a / params.c})"
        )
    return params.mu * u + params.sigma * lookup(t - lag)


def default_step(params: Params) -> float:
    return min(1e-3, params.a / 100.0)


def integrate(
    params: Params,
    history: HistoryFunction,
    t_end: float,
    step: Optional[float] = None,
) -> Trajectory:
    """Integrate on [0, t_end] with classical RK4 and cubic Hermite dense output.

    The grid is uniform with h = t_end / ceil(t_end / step).

    Raises:
        DomainError: for invalid parameters, horizon or history.
        StepTooLarge: if step > a/4.
        DelayCollapse: if a + c*u reaches 0.
    """
    validate(params)
    if step is None:
        step = default_step(params)
    if not step > 0.0:
        raise DomainError(f"step must be positive (got {step})")
    if not t_end > 0.0:
        raise DomainError(f"t_end must be positive (got {t_end})")
    if step > params.a / 4.0:
        raise StepTooLarge(f"step {step} > a/4 = {params.a / 4.0}")

    consts = derived_constants(params, n_override=max(history.maximum, 0.0))
    history.check(consts)

    n_steps = math.ceil(t_end / step - 1e-9)
    h = t_end / n_steps
    mu, sigma = params.mu, params.sigma

    us = [history.at_zero]
    udots: list[float] = []

    def lookup(td: float) -> float:
        if td <= 0.0:
            return history(td)
        last = len(udots) - 1
        i = int(td / h)
        if i < last:
            return _hermite(td / h - i, h, us[i], us[i + 1], udots[i], udots[i + 1])
        if last >= 1:
            # inside the live step: extend the last completed cubic
            j = last - 1
            return _hermite(td / h - j, h, us[j], us[j + 1], udots[j], udots[j + 1])
        return us[0] + udots[0] * td if udots else us[0]

    def f(t: float, u: float) -> float:
        return rhs(t, u, params, lookup)

    logger.log(
        f"Integrating a={params.a}, c={params.c}, mu={mu}, sigma={sigma} "
        f"from {history!r} to t={t_end} with h={h}"
    )
    udots.append(f(0.0, us[0]))
    half = 0.5 * h
    for n in range(n_steps):
        t_n = n * h
        u_n = us[n]
        k1 = udots[n]
        k2 = f(t_n + half, u_n + half * k1)
        k3 = f(t_n + half, u_n + half * k2)
        k4 = f(t_n + h, u_n + h * k3)
        us.append(u_n + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        udots.append(f((n + 1) * h, us[n + 1]))

    t = np.arange(n_steps + 1, dtype=float) * h
    t[-1] = t_end
    traj = Trajectory(
        params=params,
        history=history,
        constants=consts,
        step=h,
        t=t,
        u=np.asarray(us),
        udot=np.asarray(udots),
    )

    lower, upper = boundedness_limits(traj)
    low, high = float(traj.u.min()), float(traj.u.max())
    if low < lower - NUM_EPS or high > upper + NUM_EPS:
        logger.log(
            f"Solution left [{lower}, {upper}]: range [{low}, {high}]", level="warning"
        )
    extrema = find_extrema(traj, 0.0)
    logger.log(f"Integrated {n_steps} steps, range [{low}, {high}], {len(extrema)} extrema")
    return replace(traj, extrema=extrema)


def boundedness_limits(traj: Trajectory) -> tuple[float, float]:
    """[M0, N] from the existence theorem; N = max(N0, phi(0)), or max phi when sigma > 0."""
    consts = traj.constants
    if traj.params.sigma > 0:
        return consts.m0, traj.history.maximum
    return consts.m0, max(consts.n0, traj.history.at_zero)


def find_extrema(traj: Trajectory, t_start: float) -> list[ExtremumRecord]:
    """Sign changes of u' after t_start, refined by bisection on the equation's rate."""
    if t_start >= traj.t_end:
        return []
    start = int(np.searchsorted(traj.t, t_start, side="left"))
    signs = np.sign(traj.udot[start:])
    nonzero = np.flatnonzero(signs) + start
    if nonzero.size < 2:
        return []
    s = np.sign(traj.udot[nonzero])
    changes = np.flatnonzero(s[1:] != s[:-1])

    records = []
    for j in changes:
        i0, i1 = int(nonzero[j]), int(nonzero[j + 1])
        lo, hi = float(traj.t[i0]), float(traj.t[i1])
        left_sign = s[j]
        while hi - lo > EXTREMUM_TIME_TOL:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if np.sign(traj.rate(mid)) == left_sign:
                lo = mid
            else:
                hi = mid
        t_star = 0.5 * (lo + hi)
        kind = ExtremumKind.MAX if left_sign > 0 else ExtremumKind.MIN
        records.append(ExtremumRecord(t=t_star, v=traj.value(t_star), kind=kind))
    return records


def classify_behaviour(
    traj: Trajectory, window: float, noise_floor: float = NOISE_FLOOR
) -> Behaviour:
    """Decide between monotone convergence and persistent oscillation in the final window.

    Extrema of magnitude below noise_floor are rounding noise around the steady
    state and are ignored.
    """
    if traj.t_end < 2.0 * window:
        raise DomainError(f"t_end={traj.t_end} shorter than two windows of {window}")
    t0 = traj.t_end - window
    recent = [e for e in traj.extrema if e.t >= t0 and abs(e.v) > noise_floor]
    if _alternating_run(recent) >= 4:
        return Behaviour.OSCILLATORY
    if not recent:
        u_end = abs(float(traj.u[-1]))
        u_prev = abs(traj.value(t0))
        if u_end < u_prev or max(u_end, u_prev) <= noise_floor:
            return Behaviour.MONOTONE_CONVERGING
    return Behaviour.UNDETERMINED


def _alternating_run(records: list[ExtremumRecord]) -> int:
    best = run = 0
    previous = None
    for record in records:
        run = run + 1 if previous is not None and record.kind != previous else 1
        best = max(best, run)
        previous = record.kind
    return best


def tail_amplitude(traj: Trajectory, window: float) -> tuple[float, float]:
    """(min, max) of u over [t_end - window, t_end]."""
    if traj.t_end < window:
        raise DomainError(f"t_end={traj.t_end} shorter than the window {window}")
    t0 = traj.t_end - window
    values = [float(v) for v in traj.u[traj.window_mask(t0)]]
    values.append(traj.value(t0))
    values.extend(e.v for e in traj.extrema if e.t >= t0)
    return min(values), max(values)


def oscillation_witnesses(traj: Trajectory, t_start: float) -> list[bool]:
    """For consecutive windows of length tau after t_start, whether u*u' < 0 somewhere."""
    tau = traj.constants.tau
    product = traj.u * traj.udot
    witnesses = []
    lo = t_start
    while lo + tau <= traj.t_end:
        mask = (traj.t >= lo) & (traj.t <= lo + tau)
        witnesses.append(bool(np.any(product[mask] < 0.0)))
        lo += tau
    return witnesses


@dataclass(frozen=True)
class ExtremumCheck:
    record: ExtremumRecord
    pair_index: int
    q: float
    satisfied: bool


def check_extremum_inequalities(
    traj: Trajectory,
    trace: IterationTrace,
    k: int,
    burn_in: Optional[float] = None,
    eps: float = 1e-4,
) -> list[ExtremumCheck]:
    """Evaluate Q(k) at each positive maximum and negative minimum after burn-in.

    Each extremum at t is tested against the tightest pair [M_n, N_n] that the
    trajectory respects on [t - (k+1)*(a + c*N_n), t]. A maximum must give
    Q(k)(v, M, N) <= eps and a minimum Q(k)(v, N, M) >= -eps.
    """
    params = traj.params
    if burn_in is None:
        burn_in = BURN_IN_FACTOR * traj.constants.tau0
    checks = []
    for record in traj.extrema:
        if record.t < burn_in:
            continue
        is_max = record.kind == ExtremumKind.MAX
        if (is_max and record.v <= 0.0) or (not is_max and record.v >= 0.0):
            continue
        for index in range(len(trace.pairs) - 1, -1, -1):
            pair = trace.pairs[index]
            lookback = (k + 1) * (params.a + params.c * pair.n)
            t0 = record.t - lookback
            if t0 < 0.0:
                continue
            segment = traj.u[(traj.t >= t0) & (traj.t <= record.t)]
            low = min(float(segment.min()) if segment.size else record.v, record.v)
            high = max(float(segment.max()) if segment.size else record.v, record.v)
            if low < pair.m or high > pair.n:
                continue
            if is_max:
                q = q_closed(k, record.v, pair.m, pair.n, params)
                ok = q <= eps
            else:
                q = q_closed(k, record.v, pair.n, pair.m, params)
                ok = q >= -eps
            checks.append(ExtremumCheck(record=record, pair_index=index, q=q, satisfied=ok))
            break
    failed = sum(not c.satisfied for c in checks)
    if failed:
        logger.log(f"{failed} of {len(checks)} extrema violate the Q inequalities", level="warning")
    return checks


def export_csv(traj: Trajectory, path: str | Path) -> str:
    """Write t,u,udot per accepted node."""
    rows = (
        (fmt_float(t), fmt_float(u), fmt_float(d))
        for t, u, d in zip(traj.t, traj.u, traj.udot)
    )
    return atomic_write(path, csv_text(("t", "u", "udot"), rows))
