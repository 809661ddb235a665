"""Gaussian simulation of GNGARCH and GTN-GARCH panels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import simulate_kernel
from .model import PD_EPS, GlobalParams, OrderSpec, ThresholdParams, kernel_arrays, model_masks
from .network import NetworkTopology
from .panel import ReturnPanel

__all__ = ["SimulationConfig", "SimulationResult", "simulate", "DIVERGENCE_THRESHOLD"]

DIVERGENCE_THRESHOLD = 1e8


@dataclass(frozen=True)
class SimulationConfig:
    """Length, burn-in, seed and initial state of one simulated path.

    ``x0`` and ``sigma0`` default to zero returns and ``alpha0 * I``.
    """

    T_total: int = 2000
    burn_frac: float = 0.20
    seed: int = 0
    x0: np.ndarray | None = None
    sigma0: np.ndarray | None = None
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if self.T_total < 1:
            raise ValueError("T_total must be >= 1")
        if not 0.0 <= self.burn_frac < 1.0:
            raise ValueError("burn_frac must lie in [0, 1)")
        if self.sigma0 is not None:
            S = np.asarray(self.sigma0, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T, rtol=0, atol=0):
                raise ValueError("sigma0 must be a symmetric square matrix")
            if np.linalg.eigvalsh(S)[0] <= 0:
                raise ValueError("sigma0 must be positive definite")

    @property
    def burn(self) -> int:
        return int(np.floor(self.burn_frac * self.T_total))


@dataclass
class SimulationResult:
    """Post-burn-in tail of a simulated path (time-major arrays).

    After a divergence the arrays hold the retained samples strictly before
    ``divergence_step`` and may be empty.
    """

    returns: np.ndarray
    h: np.ndarray
    sigma: np.ndarray
    repaired: np.ndarray
    times: np.ndarray
    labels: tuple
    burn: int
    diverged: bool = False
    divergence_step: int | None = None
    max_abs_return: float = field(default=0.0)

    def panel(self) -> ReturnPanel:
        return ReturnPanel(self.returns.T, self.labels, self.times)

    def variance_panel(self) -> ReturnPanel:
        return ReturnPanel(self.h.T, self.labels, self.times)

    @property
    def n_repairs(self) -> int:
        return int(self.repaired.sum())


def simulate(params, orders: OrderSpec, topology: NetworkTopology, config: SimulationConfig = SimulationConfig()):
    """Simulate ``X_t = Sigma_t^{1/2} Z_t`` with Gaussian ``Z_t``.

    ``Sigma_t^{1/2}`` is the lower Cholesky factor of the PD-repaired
    covariance. The run is fully determined by ``config.seed``.
    """
    if not isinstance(params, (GlobalParams, ThresholdParams)):
        raise TypeError("params must be GlobalParams or ThresholdParams")
    params.check_orders(orders)
    params.validate()
    d = topology.d
    masks = model_masks(topology, orders)
    x0 = np.zeros(d) if config.x0 is None else np.asarray(config.x0, dtype=float)
    S0 = params.alpha0 * np.eye(d) if config.sigma0 is None else np.asarray(config.sigma0, dtype=float)
    if x0.shape != (d,) or S0.shape != (d, d):
        raise ValueError("initial state does not match the network size")
    Z = np.random.default_rng(config.seed).standard_normal((config.T_total, d))
    args = kernel_arrays(params, orders, masks.shape[0])
    X, S, rep, div = simulate_kernel(
        config.T_total, x0, np.ascontiguousarray(S0), *args, masks, Z, PD_EPS, config.divergence_threshold
    )
    burn = config.burn
    stop = config.T_total + 1 if div < 0 else div
    lo = burn + 1
    sl = slice(lo, max(lo, stop))
    valid = X[1:stop]
    return SimulationResult(
        returns=X[sl].copy(),
        h=np.diagonal(S[sl], axis1=1, axis2=2).copy(),
        sigma=S[sl].copy(),
        repaired=rep[sl].copy(),
        times=np.arange(lo, max(lo, stop)),
        labels=topology.labels,
        burn=burn,
        diverged=div >= 0,
        divergence_step=None if div < 0 else int(div),
        max_abs_return=float(np.max(np.abs(valid))) if valid.size else 0.0,
    )
