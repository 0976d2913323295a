import math

import numpy as np
import pytest

from src.model import DomainError, Params, derived_constants, stability_boundary_point
from src.razumikhin import GasVerdict, is_gas, iterate_bounds, limit_bounds
from src.sdde import (
    Behaviour,
    DelayCollapse,
    ExtremumKind,
    HistoryFunction,
    StepTooLarge,
    boundedness_limits,
    check_extremum_inequalities,
    classify_behaviour,
    export_csv,
    find_extrema,
    integrate,
    oscillation_witnesses,
    rhs,
    tail_amplitude,
)

ORBIT_POINT = Params(a=1.0, c=1.0, mu=-0.25, sigma=-1.75)
WEDGE_POINT = Params(a=1.0, c=1.0, mu=-2.0, sigma=-2.8)


def _assert_bounded(traj):
    lower, upper = boundedness_limits(traj)
    assert traj.u.min() >= lower - 1e-6
    assert traj.u.max() <= upper + 1e-6


@pytest.fixture(scope="module")
def orbit_run():
    consts = derived_constants(ORBIT_POINT)
    return integrate(ORBIT_POINT, HistoryFunction.constant(0.99 * consts.n0), 200.0, 1e-3)


# history -------------------------------------------------------------------


def test_constant_history():
    phi = HistoryFunction.constant(0.3)
    assert phi(-5.0) == 0.3
    assert phi.is_constant
    assert phi.maximum == phi.minimum == phi.at_zero == 0.3


def test_table_history_interpolates_knots():
    phi = HistoryFunction.table([-3.0, -1.0, 0.0], [0.1, 0.4, 0.2])
    assert not phi.is_constant
    assert phi(-1.0) == pytest.approx(0.4)
    assert phi(0.0) == pytest.approx(0.2)
    assert phi.maximum == 0.4 and phi.at_zero == 0.2
    # clamped below the first knot
    assert phi(-3.0 - 1e-14) == pytest.approx(0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {},
        {"value": 0.1, "times": [-1.0, 0.0], "values": [0.0, 0.0]},
        {"value": math.inf},
        {"times": [-1.0, -0.5], "values": [0.0, 0.0]},
        {"times": [-1.0, -1.0, 0.0], "values": [0.0, 0.1, 0.0]},
        {"times": [0.0], "values": [0.0]},
        {"times": [-1.0, 0.0], "values": [0.0, math.nan]},
    ],
)
def test_history_rejects(kwargs):
    with pytest.raises(DomainError):
        HistoryFunction(**kwargs)


def test_history_must_cover_delay():
    phi = HistoryFunction.table([-1.0, 0.0], [0.5, 0.5])
    with pytest.raises(DomainError, match="cover"):
        integrate(WEDGE_POINT, phi, 1.0)


def test_history_below_m0_rejected():
    with pytest.raises(DomainError, match="M0"):
        integrate(WEDGE_POINT, HistoryFunction.constant(-1.5), 1.0)


# integrator ----------------------------------------------------------------


def test_zero_history_stays_at_steady_state():
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.0), 20.0, 0.01)
    assert np.all(traj.u == 0.0)
    assert traj.extrema == []
    assert classify_behaviour(traj, 5.0) == Behaviour.MONOTONE_CONVERGING


def test_uniform_grid_ends_at_t_end():
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.5), 1.0, 0.03)
    assert traj.t[0] == 0.0
    assert traj.t_end == 1.0
    assert np.allclose(np.diff(traj.t), traj.step)
    assert traj.step <= 0.03


@pytest.mark.parametrize(
    "t_end,step,error",
    [
        (1.0, 0.3, StepTooLarge),
        (1.0, 0.0, DomainError),
        (0.0, 0.01, DomainError),
    ],
)
def test_integrate_rejects(t_end, step, error):
    with pytest.raises(error):
        integrate(WEDGE_POINT, HistoryFunction.constant(0.5), t_end, step)


def test_integrate_rejects_invalid_params():
    with pytest.raises(DomainError):
        integrate(Params(a=1.0, c=1.0, mu=0.5, sigma=-2.0), HistoryFunction.constant(0.1), 1.0)


def test_rhs_delay_collapse():
    with pytest.raises(DelayCollapse):
        rhs(1.0, -1.0, WEDGE_POINT, lambda t: 0.0)


def test_rhs_reads_deviated_time():
    seen = []

    def lookup(t):
        seen.append(t)
        return 0.5

    value = rhs(2.0, 0.25, WEDGE_POINT, lookup)
    assert seen == [2.0 - 1.25]
    assert value == pytest.approx(-2.0 * 0.25 - 2.8 * 0.5)


def test_step_halving_order():
    # before the first propagated breakpoint the delayed value is phi itself
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=-1.5)
    phi, t_end = 0.5, 0.7
    ratio = -params.sigma / params.mu
    exact = ratio * phi + (phi - ratio * phi) * math.exp(params.mu * t_end)
    errors = [
        abs(integrate(params, HistoryFunction.constant(phi), t_end, h).u[-1] - exact)
        for h in (0.05, 0.025, 0.0125)
    ]
    assert errors[0] < 1e-6
    for coarse, fine in zip(errors, errors[1:]):
        assert math.log2(coarse / fine) >= 3.5


def test_dense_output_matches_nodes():
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(1.0), 5.0, 0.01)
    for i in (0, 17, 250, len(traj.t) - 1):
        assert traj.value(float(traj.t[i])) == pytest.approx(traj.u[i], abs=1e-12)
    assert traj.value(-0.5) == 1.0


def test_cone_point_decays():
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=-1.0)
    traj = integrate(params, HistoryFunction.constant(0.4), 40.0, 0.01)
    assert abs(traj.u[-1]) < 1e-6
    _assert_bounded(traj)


def test_positive_sigma_bounded_by_history():
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=1.5)
    traj = integrate(params, HistoryFunction.constant(0.5), 20.0, 0.01)
    assert boundedness_limits(traj) == (-1.0, 0.5)
    _assert_bounded(traj)


# extrema and classification ------------------------------------------------


def test_extrema_are_stationary_and_alternate():
    consts = derived_constants(ORBIT_POINT)
    traj = integrate(ORBIT_POINT, HistoryFunction.constant(0.99 * consts.n0), 60.0, 1e-3)
    assert len(traj.extrema) >= 4
    for record in traj.extrema:
        assert traj.value(record.t) == record.v
        assert abs(traj.rate(record.t)) <= 1e-6
    kinds = [e.kind for e in traj.extrema]
    assert all(a != b for a, b in zip(kinds, kinds[1:]))
    times = [e.t for e in traj.extrema]
    assert times == sorted(times)


def test_find_extrema_after_end():
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.5), 2.0, 0.01)
    assert find_extrema(traj, 2.0) == []


def test_classify_needs_two_windows():
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.5), 10.0, 0.01)
    with pytest.raises(DomainError):
        classify_behaviour(traj, 6.0)
    with pytest.raises(DomainError):
        tail_amplitude(traj, 11.0)


def test_export_csv(tmp_path):
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.5), 0.5, 0.05)
    path = export_csv(traj, tmp_path / "out" / "traj.csv")
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == "t,u,udot"
    assert len(lines) == len(traj.t) + 1
    t, u, udot = (float(x) for x in lines[5].split(","))
    assert (t, u, udot) == (traj.t[4], traj.u[4], traj.udot[4])
    assert list(tmp_path.joinpath("out").iterdir()) == [tmp_path / "out" / "traj.csv"]


# reproduction runs ---------------------------------------------------------


@pytest.mark.slow
def test_orbit_inside_limit_bounds(orbit_run):
    lag = ORBIT_POINT.a + ORBIT_POINT.c * orbit_run.u
    assert lag.min() > 0.0
    assert lag.max() <= orbit_run.constants.tau + 1e-6
    assert classify_behaviour(orbit_run, 50.0) == Behaviour.OSCILLATORY
    low, high = tail_amplitude(orbit_run, 50.0)
    first, _ = limit_bounds(1, ORBIT_POINT)
    second, _ = limit_bounds(2, ORBIT_POINT)
    assert first.m <= second.m <= low < 0.0 < high <= second.n <= first.n
    _assert_bounded(orbit_run)


@pytest.mark.slow
def test_orbit_oscillates_in_every_window(orbit_run):
    witnesses = oscillation_witnesses(orbit_run, 5 * orbit_run.constants.tau0)
    assert witnesses and all(witnesses)
    records = [e for e in orbit_run.extrema if e.t > 40.0]
    assert all((e.v > 0) == (e.kind == ExtremumKind.MAX) for e in records)


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 2])
def test_orbit_extremum_inequalities(orbit_run, k):
    checks = check_extremum_inequalities(orbit_run, iterate_bounds(k, ORBIT_POINT), k)
    assert checks
    assert all(c.satisfied for c in checks)


@pytest.mark.slow
def test_wedge_point_converges_to_steady_state():
    consts = derived_constants(WEDGE_POINT)
    traj = integrate(WEDGE_POINT, HistoryFunction.constant(0.99 * consts.n0), 500.0, 1e-3)
    low, high = tail_amplitude(traj, 50.0)
    assert max(abs(low), abs(high)) <= 1e-4
    # late extrema sit below the noise floor
    assert classify_behaviour(traj, 50.0) == Behaviour.MONOTONE_CONVERGING
    pair, _ = limit_bounds(2, WEDGE_POINT)
    assert pair.n >= 1e-3
    _assert_bounded(traj)


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [1.5, -1.5])
def test_cone_theorem(sigma):
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=sigma)
    traj = integrate(params, HistoryFunction.constant(0.5), 500.0, 1e-2)
    assert abs(traj.u[-1]) <= 1e-6
    assert is_gas(params) == GasVerdict.GAS_CONE
    _assert_bounded(traj)


def _peak(traj, lo, hi):
    mask = (traj.t >= lo) & (traj.t <= hi)
    return float(np.abs(traj.u[mask]).max())


@pytest.mark.slow
def test_linear_boundary_cross_check():
    mu, sigma = stability_boundary_point(2.0, 1.0)
    inside = integrate(
        Params(a=1.0, c=1.0, mu=mu, sigma=sigma + 0.05), HistoryFunction.constant(0.01), 400.0, 2e-3
    )
    outside = integrate(
        Params(a=1.0, c=1.0, mu=mu, sigma=sigma - 0.05), HistoryFunction.constant(0.01), 400.0, 2e-3
    )
    assert _peak(inside, 350.0, 400.0) < _peak(inside, 50.0, 100.0)
    assert _peak(outside, 350.0, 400.0) >= _peak(outside, 50.0, 100.0)
