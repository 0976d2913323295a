"""Parameter-plane runs: limit-bound grids, GAS boundary tracing, bound vs orbit tables."""

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.file_writer import atomic_write, csv_text, fmt_float
from src.logger import logger
from src.model import (
    DomainError,
    Params,
    RegionLabel,
    boundary_sigma,
    classify_region,
    validate,
)
from src.razumikhin import (
    DEFAULT_MAX_N,
    DEFAULT_ROOT_TOL,
    DEFAULT_TOL,
    BracketError,
    ConvergenceError,
    GasVerdict,
    is_cone,
    is_gas,
    iterate_bounds,
)

CSV_HEADER = ("mu", "sigma", "m_inf", "n_inf", "iters", "residual", "gas", "region", "status")
COMPARE_HEADER = ("sigma", "m1", "n1", "m2", "n2", "sim_min", "sim_max", "status")
HEATMAP_FIELDS = ("m_inf", "n_inf", "m_ratio", "n_ratio")
HEATMAP_CMAP = "viridis"
BOUNDARY_SIGMA_TOL = 1e-6


class RowStatus(str, Enum):
    OK = "Ok"
    SKIPPED = "Skipped"
    FAILED = "Failed"


@dataclass(frozen=True)
class GridSpec:
    mu_range: tuple[float, float, int]
    sigma_range: tuple[float, float, int]
    a: float = 1.0
    c: float = 1.0
    k: int = 2

    def __post_init__(self):
        for name, (lo, hi, count) in (("mu", self.mu_range), ("sigma", self.sigma_range)):
            if not lo < hi:
                raise DomainError(f"{name} range needs lo < hi (got {lo}, {hi})")
            if int(count) != count or count < 2:
                raise DomainError(f"{name} range needs an integer count >= 2 (got {count})")
        if self.a <= 0 or self.c <= 0:
            raise DomainError(f"grid needs a > 0 and c > 0 (a={self.a}, c={self.c})")
        if self.k not in (1, 2):
            raise DomainError(f"bound order k must be 1 or 2 (got {self.k})")

    @property
    def mus(self) -> np.ndarray:
        lo, hi, count = self.mu_range
        return np.linspace(lo, hi, int(count))

    @property
    def sigmas(self) -> np.ndarray:
        lo, hi, count = self.sigma_range
        return np.linspace(lo, hi, int(count))

    def points(self) -> list[tuple[float, float]]:
        """Row-major by mu, then sigma."""
        return [(float(mu), float(sigma)) for mu in self.mus for sigma in self.sigmas]


@dataclass(frozen=True)
class SweepRow:
    mu: float
    sigma: float
    m_inf: Optional[float]
    n_inf: Optional[float]
    iters: Optional[int]
    residual: Optional[float]
    gas: Optional[bool]
    region: RegionLabel
    status: RowStatus


@dataclass(frozen=True)
class CompareRow:
    sigma: float
    m1: Optional[float] = None
    n1: Optional[float] = None
    m2: Optional[float] = None
    n2: Optional[float] = None
    sim_min: Optional[float] = None
    sim_max: Optional[float] = None
    status: RowStatus = RowStatus.OK


def sweep_point(
    mu: float,
    sigma: float,
    a: float,
    c: float,
    k: int,
    tol: float = DEFAULT_TOL,
    max_n: int = DEFAULT_MAX_N,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> SweepRow:
    """One grid point; failures become row statuses, never exceptions."""
    params = Params(a=a, c=c, mu=mu, sigma=sigma)
    region = classify_region(params)
    try:
        validate(params)
    except DomainError:
        return SweepRow(mu, sigma, None, None, None, None, None, region, RowStatus.SKIPPED)

    if is_cone(params):
        return SweepRow(mu, sigma, 0.0, 0.0, 0, 0.0, True, region, RowStatus.OK)

    try:
        trace = iterate_bounds(k, params, max_n=max_n, tol=tol, root_tol=root_tol)
    except BracketError as e:
        logger.log(f"Sweep point mu={mu}, sigma={sigma} failed: {e}", level="error")
        return SweepRow(mu, sigma, None, None, None, None, None, region, RowStatus.FAILED)

    last = trace.last
    if not trace.converged:
        logger.log(
            f"Sweep point mu={mu}, sigma={sigma} did not settle "
            f"(residual={trace.residual:.3e})",
            level="warning",
        )
        return SweepRow(
            mu, sigma, last.m, last.n, trace.iterations, trace.residual, False, region,
            RowStatus.FAILED,
        )
    gas = max(abs(last.m), last.n) <= tol
    return SweepRow(
        mu, sigma, last.m, last.n, trace.iterations, trace.residual, gas, region, RowStatus.OK
    )


def _sweep_task(task: tuple) -> SweepRow:
    return sweep_point(*task)


def worker_count() -> int:
    """Worker processes for sweeps, capped by RAZ_THREADS."""
    available = os.cpu_count() or 1
    raw = os.getenv("RAZ_THREADS")
    if not raw:
        return available
    try:
        return max(1, int(raw))
    except ValueError:
        logger.log(f"Ignoring non-integer RAZ_THREADS={raw!r}", level="warning")
        return available


def sweep_limit_bounds(
    spec: GridSpec,
    tol: float = DEFAULT_TOL,
    max_n: int = DEFAULT_MAX_N,
    root_tol: float = DEFAULT_ROOT_TOL,
    workers: Optional[int] = None,
) -> list[SweepRow]:
    """Limit bounds at every grid point, in row-major order whatever the worker count."""
    tasks = [
        (mu, sigma, spec.a, spec.c, spec.k, tol, max_n, root_tol) for mu, sigma in spec.points()
    ]
    workers = workers or worker_count()
    logger.log(f"Sweeping {len(tasks)} points with k={spec.k} on {workers} worker(s)")
    if workers <= 1:
        rows = [_sweep_task(task) for task in tasks]
    else:
        chunksize = max(1, len(tasks) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, tasks, chunksize=chunksize))

    counts = {status: sum(r.status == status for r in rows) for status in RowStatus}
    logger.log(
        "Sweep finished: "
        + ", ".join(f"{status.value}={count}" for status, count in counts.items())
    )
    return rows


def _certified(params: Params, k: int, tol: float, max_n: int) -> bool:
    try:
        return is_gas(params, k=k, tol=tol, max_n=max_n) != GasVerdict.NOT_CERTIFIED
    except (ConvergenceError, BracketError):
        return False


def gas_boundary(
    mu_values: Iterable[float],
    k: int,
    tol: float = DEFAULT_TOL,
    a: float = 1.0,
    c: float = 1.0,
    sigma_tol: float = BOUNDARY_SIGMA_TOL,
    max_n: int = DEFAULT_MAX_N,
) -> list[tuple[float, Optional[float]]]:
    """Certified/uncertified transition in sigma on [sigma_b(mu), mu] for each mu.

    The returned sigma is the certified end of the final bracket. It is None
    when both ends of the search interval have the same status.
    """
    boundary = []
    for mu in mu_values:
        if mu >= 0:
            raise DomainError(f"gas_boundary needs mu < 0 (got {mu})")
        lo, hi = boundary_sigma(mu, a), mu
        lo_ok = _certified(Params(a, c, mu, lo), k, tol, max_n)
        hi_ok = _certified(Params(a, c, mu, hi), k, tol, max_n)
        if lo_ok == hi_ok:
            logger.log(f"No certification transition at mu={mu} (k={k})")
            boundary.append((mu, None))
            continue
        while hi - lo > sigma_tol:
            mid = 0.5 * (lo + hi)
            if _certified(Params(a, c, mu, mid), k, tol, max_n) == hi_ok:
                hi = mid
            else:
                lo = mid
        boundary.append((mu, hi if hi_ok else lo))
    return boundary


def compare_bounds_vs_orbit(
    mu: float,
    sigma_values: Sequence[float],
    a: float = 1.0,
    c: float = 1.0,
    orders: Sequence[int] = (1, 2),
    t_end: float = 200.0,
    window: float = 50.0,
    step: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_n: int = DEFAULT_MAX_N,
) -> list[CompareRow]:
    """Limit bounds for each k next to the simulated tail range, one row per sigma."""
    # imported here: the point graph pulls in langgraph, which sweep workers never need
    from src.pipeline import analyse_point

    rows = []
    for sigma in sigma_values:
        try:
            result = analyse_point(
                a=a, c=c, mu=mu, sigma=sigma, orders=list(orders), tol=tol, max_n=max_n,
                t_end=t_end, step=step, window=window,
            )
        except Exception as e:
            logger.log(f"Comparison at mu={mu}, sigma={sigma} failed: {e}", level="error")
            rows.append(CompareRow(sigma=sigma, status=RowStatus.FAILED))
            continue
        limits = result.get("limits", {})
        simulation = result["simulation"]
        bounds = {}
        for k in (1, 2):
            if k in limits:
                pair, _ = limits[k]
                bounds[f"m{k}"], bounds[f"n{k}"] = pair.m, pair.n
        rows.append(
            CompareRow(
                sigma=sigma,
                sim_min=simulation["tail_min"],
                sim_max=simulation["tail_max"],
                **bounds,
            )
        )
    return rows


# ----------------------------------------------------------------------------
# artifacts
# ----------------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, int):
        return str(value)
    return fmt_float(value)


def emit_csv(rows: Sequence[SweepRow], path: str | Path) -> str:
    if not rows:
        raise DomainError("no sweep rows to write")
    lines = (
        [_cell(getattr(row, name)) for name in CSV_HEADER]
        for row in rows
    )
    return atomic_write(path, csv_text(CSV_HEADER, lines))


def emit_compare_csv(rows: Sequence[CompareRow], path: str | Path) -> str:
    if not rows:
        raise DomainError("no comparison rows to write")
    lines = ([_cell(getattr(row, name)) for name in COMPARE_HEADER] for row in rows)
    return atomic_write(path, csv_text(COMPARE_HEADER, lines))


def parse_csv(path: str | Path) -> list[SweepRow]:
    """Read rows written by emit_csv."""

    def number(text: str) -> Optional[float]:
        return float(text) if text else None

    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise DomainError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            SweepRow(
                mu=float(rec["mu"]),
                sigma=float(rec["sigma"]),
                m_inf=number(rec["m_inf"]),
                n_inf=number(rec["n_inf"]),
                iters=int(rec["iters"]) if rec["iters"] else None,
                residual=number(rec["residual"]),
                gas=None if not rec["gas"] else rec["gas"] == "true",
                region=RegionLabel(rec["region"]),
                status=RowStatus(rec["status"]),
            )
            for rec in reader
        ]


def _field_value(row: SweepRow, field: str, m0: float, n0_scale: float) -> float:
    if row.status != RowStatus.OK:
        return math.nan
    if field == "m_inf":
        return row.m_inf
    if field == "n_inf":
        return row.n_inf
    if field == "m_ratio":
        return row.m_inf / m0
    # n0 = a*sigma/(c*mu) varies over the plane
    n0 = n0_scale * row.sigma / row.mu
    return row.n_inf / n0 if n0 > 0 else math.nan


def emit_heatmap_svg(
    rows: Sequence[SweepRow],
    field: str,
    path: str | Path,
    a: float = 1.0,
    c: float = 1.0,
) -> str:
    """Static SVG heatmap of one sweep field over the (mu, sigma) grid.

    Ratios m_inf/M0 and n_inf/N0 use a linear scale on [0, 1]; raw bounds use
    the data range. Cells without an Ok row are left blank.
    """
    if not rows:
        raise DomainError("no sweep rows to draw")
    if field not in HEATMAP_FIELDS:
        raise DomainError(f"unknown heatmap field {field!r}; expected one of {HEATMAP_FIELDS}")

    mus = sorted({row.mu for row in rows})
    sigmas = sorted({row.sigma for row in rows})
    mu_index = {mu: i for i, mu in enumerate(mus)}
    sigma_index = {sigma: j for j, sigma in enumerate(sigmas)}
    grid = np.full((len(sigmas), len(mus)), np.nan)
    m0 = -a / c
    for row in rows:
        grid[sigma_index[row.sigma], mu_index[row.mu]] = _field_value(row, field, m0, a / c)

    if field.endswith("_ratio"):
        vmin, vmax = 0.0, 1.0
    else:
        finite = grid[np.isfinite(grid)]
        vmin, vmax = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
        if vmin == vmax:
            vmax = vmin + 1.0

    buffer = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "razumikhin", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 5.0))
        mesh = ax.pcolormesh(
            mus, sigmas, grid, cmap=HEATMAP_CMAP, vmin=vmin, vmax=vmax, shading="nearest",
            rasterized=True,
        )
        fig.colorbar(mesh, ax=ax, label=field)
        ax.set_xlabel("mu")
        ax.set_ylabel("sigma")
        ax.set_title(f"{field} (a={a:g}, c={c:g})")
        fig.savefig(buffer, format="svg", metadata={"Date": None}, dpi=100)
        plt.close(fig)

    svg = buffer.getvalue().decode("utf-8")
    note = (
        f"<!-- heatmap of {field}: colormap {HEATMAP_CMAP}, linear from {vmin!r} "
        f"to {vmax!r}; blank cells are Skipped or Failed points -->\n"
    )
    head, sep, tail = svg.partition("?>\n")
    svg = head + sep + note + tail if sep else note + svg
    return atomic_write(path, svg)
