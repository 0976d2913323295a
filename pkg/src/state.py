from typing import Any, Dict, List, Optional, Tuple, TypedDict

from src.model import DerivedConstants, Params, RegionLabel
from src.razumikhin import BoundPair, GasVerdict, IterationTrace


class PointState(TypedDict, total=False):
    """State dictionary for the single-point analysis workflow."""

    # inputs
    a: float
    c: float
    mu: float
    sigma: float
    orders: List[int]
    tol: float
    max_n: int
    t_end: Optional[float]
    step: Optional[float]
    window: Optional[float]

    # outputs
    params: Params
    constants: DerivedConstants
    region: RegionLabel
    traces: Dict[int, IterationTrace]
    limits: Dict[int, Tuple[BoundPair, float]]
    verdicts: Dict[int, GasVerdict]
    simulation: Dict[str, Any]
