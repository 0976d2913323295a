from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from langgraph.graph import END, START, StateGraph

from src.config_loader import RazConfig
from src.file_writer import atomic_write
from src.logger import logger
from src.model import DomainError, Params, classify_region, derived_constants, validate
from src.razumikhin import (
    DEFAULT_MAX_N,
    DEFAULT_TOL,
    ORDERS,
    BoundPair,
    ConvergenceError,
    GasVerdict,
    is_cone,
    iterate_bounds,
)
from src.sdde import HistoryFunction, classify_behaviour, integrate, tail_amplitude
from src.state import PointState

config = RazConfig()

# initial value used when sigma > 0, where N0 gives no history scale
POSITIVE_SIGMA_HISTORY = 0.5


def validation_node(state: PointState) -> dict:
    params = validate(
        Params(a=state["a"], c=state["c"], mu=state["mu"], sigma=state["sigma"])
    )
    orders = state.get("orders") or [2]
    bad = [k for k in orders if k not in ORDERS]
    if bad:
        raise DomainError(f"bound order k must be 1 or 2 (got {bad})")
    return {"params": params, "orders": sorted(set(orders))}


def constants_node(state: PointState) -> dict:
    params = state["params"]
    n_override = None
    if params.sigma > 0:
        # the upper solution bound comes from the initial data
        n_override = POSITIVE_SIGMA_HISTORY if state.get("t_end") else params.a / params.c
    return {
        "constants": derived_constants(params, n_override=n_override),
        "region": classify_region(params, config.boundary_eps),
    }


def certification_route(state: PointState) -> Literal["cone_node", "bounds_node"]:
    params = state["params"]
    if is_cone(params):
        logger.log(f"mu={params.mu}, sigma={params.sigma} lies in the cone", level="info")
        return "cone_node"
    logger.log(f"mu={params.mu}, sigma={params.sigma}: iterating bounds", level="info")
    return "bounds_node"


def cone_node(state: PointState) -> dict:
    orders = state["orders"]
    return {
        "traces": {},
        "limits": {k: (BoundPair(0.0, 0.0), 0.0) for k in orders},
        "verdicts": {k: GasVerdict.GAS_CONE for k in orders},
    }


def bounds_node(state: PointState) -> dict:
    params = state["params"]
    tol = state.get("tol") or DEFAULT_TOL
    max_n = state.get("max_n") or DEFAULT_MAX_N
    traces, limits, verdicts = {}, {}, {}
    for k in state["orders"]:
        trace = iterate_bounds(
            k, params, max_n=max_n, tol=tol, root_tol=config.root_tol
        )
        if not trace.converged:
            raise ConvergenceError(
                f"bound iteration k={k} did not settle after {trace.iterations} steps "
                f"(residual={trace.residual:.3e})"
            )
        pair = trace.last
        traces[k] = trace
        limits[k] = (pair, trace.residual)
        certified = max(abs(pair.m), pair.n) <= tol
        verdicts[k] = GasVerdict.GAS_FIXED_POINT if certified else GasVerdict.NOT_CERTIFIED
    return {"traces": traces, "limits": limits, "verdicts": verdicts}


def simulation_route(state: PointState) -> Literal["simulation_node", "__end__"]:
    if state.get("t_end"):
        return "simulation_node"
    return END


def simulation_node(state: PointState) -> dict:
    params = state["params"]
    t_end = state["t_end"]
    window = state.get("window") or min(config.tail_window, t_end / 2.0)
    if params.sigma > 0:
        value = POSITIVE_SIGMA_HISTORY
    else:
        value = config.history_fraction * state["constants"].n0
    traj = integrate(params, HistoryFunction.constant(value), t_end, state.get("step"))
    low, high = tail_amplitude(traj, window)
    return {
        "simulation": {
            "history": value,
            "behaviour": classify_behaviour(traj, window, config.noise_floor),
            "tail_min": low,
            "tail_max": high,
            "extrema": len(traj.extrema),
            "trajectory": traj,
        }
    }


@lru_cache(maxsize=1)
def build_point_graph() -> Any:
    """Compile the point-analysis workflow."""
    workflow = StateGraph(PointState)

    workflow.add_node("validation_node", validation_node)
    workflow.add_node("constants_node", constants_node)
    workflow.add_node("cone_node", cone_node)
    workflow.add_node("bounds_node", bounds_node)
    workflow.add_node("simulation_node", simulation_node)

    workflow.add_edge(START, "validation_node")
    workflow.add_edge("validation_node", "constants_node")
    workflow.add_conditional_edges("constants_node", certification_route)
    route = {"simulation_node": "simulation_node", END: END}
    workflow.add_conditional_edges("cone_node", simulation_route, route)
    workflow.add_conditional_edges("bounds_node", simulation_route, route)
    workflow.add_edge("simulation_node", END)

    return workflow.compile()


def analyse_point(**inputs: Any) -> PointState:
    """Run validation, bounds and the optional simulation for one (mu, sigma)."""
    return build_point_graph().invoke(inputs)


def draw_graph(app: Any, output_path: str = "point_graph.mmd") -> str:
    """Write the compiled graph as Mermaid text."""
    return atomic_write(Path(output_path), app.get_graph().draw_mermaid())
