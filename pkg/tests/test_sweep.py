import pytest

from src.model import DomainError, Params, RegionLabel, derived_constants
from src.razumikhin import limit_bounds
from src.sweep import (
    CSV_HEADER,
    GridSpec,
    RowStatus,
    SweepRow,
    compare_bounds_vs_orbit,
    emit_csv,
    emit_heatmap_svg,
    gas_boundary,
    parse_csv,
    sweep_limit_bounds,
    sweep_point,
    worker_count,
)


@pytest.fixture(scope="module")
def small_rows():
    return sweep_limit_bounds(GridSpec((-2.5, -0.5, 3), (-3.0, 1.0, 3)), workers=1)


# grid ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mu_range": (-1.0, -2.0, 3), "sigma_range": (-3.0, -1.0, 3)},
        {"mu_range": (-2.0, -1.0, 1), "sigma_range": (-3.0, -1.0, 3)},
        {"mu_range": (-2.0, -1.0, 2.5), "sigma_range": (-3.0, -1.0, 3)},
        {"mu_range": (-2.0, -1.0, 3), "sigma_range": (-3.0, -1.0, 3), "a": 0.0},
        {"mu_range": (-2.0, -1.0, 3), "sigma_range": (-3.0, -1.0, 3), "k": 3},
    ],
)
def test_grid_spec_rejects(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


def test_grid_points_row_major():
    spec = GridSpec((-2.0, -1.0, 2), (-3.0, -2.0, 3))
    assert spec.points() == [
        (-2.0, -3.0),
        (-2.0, -2.5),
        (-2.0, -2.0),
        (-1.0, -3.0),
        (-1.0, -2.5),
        (-1.0, -2.0),
    ]


# single points -------------------------------------------------------------


def test_sweep_point_skips_invalid():
    row = sweep_point(0.5, -0.8, 1.0, 1.0, 2)
    assert row.status == RowStatus.SKIPPED
    assert row.region == RegionLabel.CUSP
    assert row.m_inf is None and row.gas is None


def test_sweep_point_cone():
    row = sweep_point(-2.0, -1.0, 1.0, 1.0, 2)
    assert row.status == RowStatus.OK
    assert (row.m_inf, row.n_inf, row.iters, row.residual, row.gas) == (0.0, 0.0, 0, 0.0, True)


def test_sweep_point_above_diagonal_is_cone():
    row = sweep_point(-2.0, -1.9, 1.0, 1.0, 1)
    assert row.status == RowStatus.OK
    assert row.gas is True
    assert row.region == RegionLabel.CONE


def test_sweep_outside_cone_labels_every_row():
    rows = sweep_limit_bounds(GridSpec((-2.0, -1.0, 2), (-2.8, -2.0, 2)), workers=1)
    assert [r.region for r in rows] == [
        RegionLabel.WEDGE,
        RegionLabel.WEDGE,
        RegionLabel.OUTSIDE,
        RegionLabel.WEDGE,
    ]


def test_sweep_point_nontrivial():
    row = sweep_point(-2.0, -2.8, 1.0, 1.0, 2)
    pair, residual = limit_bounds(2, Params(a=1.0, c=1.0, mu=-2.0, sigma=-2.8))
    assert row.status == RowStatus.OK
    assert (row.m_inf, row.n_inf, row.residual) == (pair.m, pair.n, residual)
    assert row.gas is False
    assert row.region == RegionLabel.WEDGE


def test_sweep_point_unsettled_keeps_last_pair():
    row = sweep_point(-0.25, -1.75, 1.0, 1.0, 1, max_n=2)
    assert row.status == RowStatus.FAILED
    assert row.iters == 2
    assert row.m_inf is not None and row.n_inf < 7.0


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("3", 3),
        ("0", 1),
    ],
)
def test_worker_count_from_env(monkeypatch, raw, expected):
    monkeypatch.setenv("RAZ_THREADS", raw)
    assert worker_count() == expected


def test_worker_count_ignores_garbage(monkeypatch):
    monkeypatch.setenv("RAZ_THREADS", "many")
    assert worker_count() >= 1


# grids and artifacts -------------------------------------------------------


def test_sweep_rows_follow_grid(small_rows):
    spec = GridSpec((-2.5, -0.5, 3), (-3.0, 1.0, 3))
    assert [(r.mu, r.sigma) for r in small_rows] == spec.points()
    by_point = {(r.mu, r.sigma): r for r in small_rows}
    # mu + sigma >= 0
    assert by_point[(-0.5, 1.0)].status == RowStatus.SKIPPED
    assert by_point[(-1.5, -1.0)].gas is True
    for row in small_rows:
        if row.status == RowStatus.OK:
            params = Params(a=1.0, c=1.0, mu=row.mu, sigma=row.sigma)
            consts = derived_constants(params, n_override=1.0 if row.sigma > 0 else None)
            assert consts.m0 <= row.m_inf <= 0.0 <= row.n_inf


def test_sweep_is_independent_of_workers(small_rows):
    parallel = sweep_limit_bounds(GridSpec((-2.5, -0.5, 3), (-3.0, 1.0, 3)), workers=2)
    assert parallel == small_rows


def test_csv_round_trip(small_rows, tmp_path):
    path = emit_csv(small_rows, tmp_path / "sweep.csv")
    text = open(path, encoding="utf-8").read()
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == len(small_rows) + 1
    skipped = [line for line in lines[1:] if line.endswith(",Skipped")]
    assert skipped and all(",,,,," in line for line in skipped)
    assert parse_csv(path) == small_rows


def test_csv_is_reproducible(small_rows, tmp_path):
    first = open(emit_csv(small_rows, tmp_path / "a.csv"), "rb").read()
    second = open(emit_csv(small_rows, tmp_path / "b.csv"), "rb").read()
    assert first == second


def test_parse_csv_rejects_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("mu,sigma\n-1,-2\n", encoding="utf-8")
    with pytest.raises(DomainError):
        parse_csv(path)


def test_emit_rejects_empty(tmp_path):
    with pytest.raises(DomainError):
        emit_csv([], tmp_path / "empty.csv")
    with pytest.raises(DomainError):
        emit_heatmap_svg([], "n_ratio", tmp_path / "empty.svg")


@pytest.mark.parametrize("field", ["m_inf", "n_ratio"])
def test_heatmap_is_deterministic(small_rows, tmp_path, field):
    first = open(emit_heatmap_svg(small_rows, field, tmp_path / "a.svg"), "rb").read()
    second = open(emit_heatmap_svg(small_rows, field, tmp_path / "b.svg"), "rb").read()
    assert first == second
    text = first.decode("utf-8")
    assert f"<!-- heatmap of {field}: colormap viridis" in text
    assert text.rstrip().endswith("</svg>")


def test_heatmap_rejects_field(small_rows, tmp_path):
    with pytest.raises(DomainError):
        emit_heatmap_svg(small_rows, "residual", tmp_path / "x.svg")


def test_heatmap_blank_cells(tmp_path):
    rows = [
        SweepRow(-1.0, -2.0, None, None, None, None, None, RegionLabel.OUTSIDE, RowStatus.FAILED),
        SweepRow(-2.0, -2.0, None, None, None, None, None, RegionLabel.OUTSIDE, RowStatus.FAILED),
    ]
    # no finite value falls back to a unit colour range
    assert emit_heatmap_svg(rows, "m_inf", tmp_path / "blank.svg").endswith("blank.svg")


# certification boundary ----------------------------------------------------


def test_gas_boundary_rejects_nonnegative_mu():
    with pytest.raises(DomainError):
        gas_boundary([-1.0, 0.0], k=2)


@pytest.mark.slow
def test_gas_boundary_nests_by_order():
    mus = [-2.0, -1.0]
    first = dict(gas_boundary(mus, k=1, sigma_tol=1e-3))
    second = dict(gas_boundary(mus, k=2, sigma_tol=1e-3))
    for mu in mus:
        assert second[mu] is not None
        assert -2.8 < second[mu] < mu
        if first[mu] is not None:
            # the k=2 certified region contains the k=1 region
            assert second[mu] <= first[mu] + 1e-3


@pytest.mark.slow
def test_certified_points_have_zero_limits():
    mu = -2.0
    [(_, sigma_star)] = gas_boundary([mu], k=2, sigma_tol=1e-3)
    row = sweep_point(mu, sigma_star + 0.01, 1.0, 1.0, 2)
    assert row.gas is True
    row = sweep_point(mu, -2.8, 1.0, 1.0, 2)
    assert row.gas is False


# wide-range checks --------------------------------------------------------


@pytest.mark.slow
def test_wedge_corner_bounds():
    row = sweep_point(-0.05, -1.5, 1.0, 1.0, 2)
    consts = derived_constants(Params(a=1.0, c=1.0, mu=-0.05, sigma=-1.5))
    assert row.status == RowStatus.OK
    assert 0.9 <= row.m_inf / consts.m0 <= 1.0
    assert 0.5 <= row.n_inf / consts.n0 <= 0.7


@pytest.mark.slow
def test_deep_wedge_bounds_are_tight():
    row = sweep_point(-5.0, -5.3, 1.0, 1.0, 2)
    consts = derived_constants(Params(a=1.0, c=1.0, mu=-5.0, sigma=-5.3))
    assert row.status == RowStatus.OK
    assert abs(row.n_inf - row.m_inf) < 0.6 * (consts.n0 - consts.m0)


@pytest.mark.slow
def test_grid_residuals():
    rows = sweep_limit_bounds(GridSpec((-3.0, -0.05, 100), (-3.2, -0.05, 100)))
    ok = [row for row in rows if row.status == RowStatus.OK]
    assert len(ok) > 0.9 * sum(row.status != RowStatus.SKIPPED for row in rows)
    assert all(row.residual <= 1e-9 for row in ok)


@pytest.mark.slow
def test_bounds_enclose_simulated_orbit():
    rows = compare_bounds_vs_orbit(-0.25, [-1.75], t_end=200.0, step=1e-3)
    [row] = rows
    assert row.status == RowStatus.OK
    assert row.m1 <= row.m2 <= row.sim_min < 0.0 < row.sim_max <= row.n2 <= row.n1


@pytest.mark.slow
def test_gas_sets_nest_by_order():
    spec_1 = GridSpec((-3.0, -0.5, 6), (-3.5, -0.5, 7), k=1)
    spec_2 = GridSpec((-3.0, -0.5, 6), (-3.5, -0.5, 7), k=2)
    first = {(r.mu, r.sigma) for r in sweep_limit_bounds(spec_1) if r.gas}
    second = {(r.mu, r.sigma) for r in sweep_limit_bounds(spec_2) if r.gas}
    assert first <= second
