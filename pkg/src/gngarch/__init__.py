"""Generalised network GARCH: covariance dynamics driven by a graph of assets."""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    CovState,
    GlobalParams,
    OrderSpec,
    ThresholdParams,
    covariance_update,
    filter_trace,
    make_pd,
    stationarity_check,
    step,
    variance_update,
)
from .network import (  # noqa: E402
    NetworkTopology,
    connection_weights,
    from_edges,
    read_adjacency_csv,
    read_edge_csv,
    simulation_topology,
    stage_masks,
    stage_neighborhoods,
)
from .panel import ReturnPanel, read_panel_csv, write_panel_csv  # noqa: E402
from .simulate import SimulationConfig, SimulationResult, simulate  # noqa: E402
from .estimation import FitConfig, FitReport, fit, replicate_fit  # noqa: E402
from .forecast import forecast  # noqa: E402
from .losses import LossKind, loss_mse, loss_nll, loss_qlike  # noqa: E402

__all__ = [
    "__version__",
    "CovState",
    "GlobalParams",
    "OrderSpec",
    "ThresholdParams",
    "covariance_update",
    "filter_trace",
    "make_pd",
    "stationarity_check",
    "step",
    "variance_update",
    "NetworkTopology",
    "connection_weights",
    "from_edges",
    "read_adjacency_csv",
    "read_edge_csv",
    "simulation_topology",
    "stage_masks",
    "stage_neighborhoods",
    "ReturnPanel",
    "read_panel_csv",
    "write_panel_csv",
    "SimulationConfig",
    "SimulationResult",
    "simulate",
    "FitConfig",
    "FitReport",
    "fit",
    "replicate_fit",
    "forecast",
    "LossKind",
    "loss_mse",
    "loss_nll",
    "loss_qlike",
]
