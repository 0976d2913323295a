import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.model import (
    DomainError,
    Params,
    RegionLabel,
    boundary_sigma,
    classify_region,
    derived_constants,
    stability_boundary_point,
    validate,
)


@pytest.mark.parametrize(
    "params,message",
    [
        (Params(a=0.0, c=1.0, mu=-2.0, sigma=-2.8), "a <= 0"),
        (Params(a=1.0, c=-1.0, mu=-2.0, sigma=-2.8), "c <= 0"),
        (Params(a=1.0, c=1.0, mu=0.0, sigma=-2.8), "mu >= 0"),
        (Params(a=1.0, c=1.0, mu=-1.0, sigma=1.0), re.escape("mu+sigma >= 0")),
        (Params(a=1.0, c=1.0, mu=-1.0, sigma=math.nan), "finite"),
        # first violated constraint wins
        (Params(a=-1.0, c=-1.0, mu=1.0, sigma=1.0), "a <= 0"),
    ],
)
def test_validate_rejects(params, message):
    with pytest.raises(DomainError, match=message):
        validate(params)


def test_validate_returns_params():
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=-2.8)
    assert validate(params) is params


@pytest.mark.parametrize(
    "mu,sigma,m0,n0,tau0",
    [
        (-2.0, -2.8, -1.0, 1.4, 2.4),
        (-0.25, -1.75, -1.0, 7.0, 8.0),
        (-2.0, -1.0, -1.0, 0.5, 1.5),
    ],
)
def test_derived_constants(mu, sigma, m0, n0, tau0):
    consts = derived_constants(Params(a=1.0, c=1.0, mu=mu, sigma=sigma))
    assert consts.m0 == pytest.approx(m0)
    assert consts.n0 == pytest.approx(n0)
    assert consts.tau0 == pytest.approx(tau0)
    assert consts.tau == pytest.approx(tau0)


def test_derived_constants_scaling():
    consts = derived_constants(Params(a=2.0, c=0.5, mu=-1.0, sigma=-3.0))
    assert consts.m0 == pytest.approx(-4.0)
    assert consts.n0 == pytest.approx(12.0)
    assert consts.tau0 == pytest.approx(8.0)


def test_positive_sigma_needs_upper_bound():
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=1.5)
    with pytest.raises(DomainError, match="sigma > 0"):
        derived_constants(params)
    consts = derived_constants(params, n_override=0.5)
    assert consts.tau == pytest.approx(1.5)


def test_override_only_widens_tau():
    params = Params(a=1.0, c=1.0, mu=-2.0, sigma=-2.8)
    assert derived_constants(params, n_override=0.1).tau == pytest.approx(2.4)
    assert derived_constants(params, n_override=3.0).tau == pytest.approx(4.0)
    with pytest.raises(DomainError):
        derived_constants(params, n_override=-1.0)


def test_stability_boundary_point_s2():
    mu, sigma = stability_boundary_point(2.0, 1.0)
    assert mu == pytest.approx(-0.91531, abs=1e-5)
    assert sigma == pytest.approx(-2.19950, abs=1e-5)


@pytest.mark.parametrize("s", [0.0, -1.0, math.pi, 4.0])
def test_stability_boundary_point_range(s):
    with pytest.raises(DomainError):
        stability_boundary_point(s, 1.0)


@settings(max_examples=100, deadline=None)
@given(
    s=st.floats(min_value=0.05, max_value=3.0),
    a=st.sampled_from([0.5, 1.0, 2.0]),
)
def test_boundary_sigma_inverts_curve(s, a):
    mu, sigma = stability_boundary_point(s / a, a)
    assert boundary_sigma(mu, a) == pytest.approx(sigma, rel=1e-9, abs=1e-9)


def test_boundary_sigma_ends_at_one_over_a():
    assert boundary_sigma(1.0, 1.0) is None
    assert boundary_sigma(2.0, 1.0) is None
    # close to 1/a the curve approaches the corner (1/a, -1/a)
    assert boundary_sigma(1.0 - 1e-12, 1.0) == pytest.approx(-1.0, abs=1e-5)


def test_deep_wedge_boundary():
    sigma_b = boundary_sigma(-5.0, 1.0)
    assert -6.0 < sigma_b < -5.3


@pytest.mark.parametrize(
    "mu,sigma,expected",
    [
        (-2.0, -1.0, RegionLabel.CONE),
        (-2.0, 1.5, RegionLabel.CONE),
        (-2.0, -2.8, RegionLabel.WEDGE),
        (-5.0, -5.3, RegionLabel.WEDGE),
        (-0.05, -1.5, RegionLabel.WEDGE),
        (0.5, -0.8, RegionLabel.CUSP),
        (-0.25, -1.75, RegionLabel.OUTSIDE),
        (0.5, -2.0, RegionLabel.OUTSIDE),
        (2.0, -3.0, RegionLabel.OUTSIDE),
        (-1.0, 1.0, RegionLabel.BOUNDARY_LINE),
        (-2.0, -2.0, RegionLabel.BOUNDARY_LINE),
        (1.0, -1.0, RegionLabel.BOUNDARY_LINE),
    ],
)
def test_classify_region(mu, sigma, expected):
    assert classify_region(Params(a=1.0, c=1.0, mu=mu, sigma=sigma)) == expected


def test_classify_region_on_curve():
    mu, sigma = stability_boundary_point(2.0, 1.0)
    params = Params(a=1.0, c=1.0, mu=mu, sigma=sigma)
    assert classify_region(params) == RegionLabel.BOUNDARY_CURVE
    inside = Params(a=1.0, c=1.0, mu=mu, sigma=sigma + 0.05)
    outside = Params(a=1.0, c=1.0, mu=mu, sigma=sigma - 0.05)
    assert classify_region(inside) == RegionLabel.WEDGE
    assert classify_region(outside) == RegionLabel.OUTSIDE


def test_classify_region_needs_positive_a():
    with pytest.raises(DomainError):
        classify_region(Params(a=0.0, c=1.0, mu=-1.0, sigma=-1.5))
