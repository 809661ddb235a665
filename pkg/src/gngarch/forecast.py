"""Multi-step covariance forecasts from an observed return history."""
from __future__ import annotations

import numpy as np

from .model import CovState, GlobalParams, OrderSpec, filter_trace, model_masks, step_from_outers
from .network import NetworkTopology
from .panel import ReturnPanel

__all__ = ["forecast"]


def forecast(params: GlobalParams, orders: OrderSpec, topology: NetworkTopology, history, horizon: int) -> list[CovState]:
    """Forecast ``Sigma_{T+1} .. Sigma_{T+horizon}`` given returns up to ``T``.

    The first step uses observed returns only. Beyond it, unobserved outer
    products ``X X^T`` are replaced by their conditional expectation, the
    forecast covariance of that step. Every returned state carries a
    PD-repaired copy in ``sigma_pd``.

    Parameters
    ----------
    history : ReturnPanel or ndarray of shape (T, d)
    horizon : int
        Number of steps, at least 1.
    """
    if not isinstance(params, GlobalParams):
        raise TypeError("forecasting is defined for plain GNGARCH parameters")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    params.check_orders(orders)
    params.validate()
    X = history.X if isinstance(history, ReturnPanel) else np.asarray(history, dtype=float)
    if X.ndim != 2 or X.shape[1] != topology.d:
        raise ValueError("history does not match the network size")
    T = X.shape[0]
    if T < orders.max_lag:
        raise ValueError(f"history of length {T} is shorter than max(p, q) = {orders.max_lag}")
    masks = model_masks(topology, orders)
    _, fitted = filter_trace(params, orders, masks, X)

    # time-indexed stores: S[tau] for tau = 1..T from the filter, outer[tau] for observed tau
    cov = {tau: fitted[tau - 1] for tau in range(max(1, T - orders.max_lag), T + 1)}
    pre = params.alpha0 * np.eye(topology.d)
    outer = {tau: np.outer(X[tau], X[tau]) for tau in range(max(0, T - orders.max_lag), T)}

    def lag_cov(tau):
        return cov.get(tau, pre) if tau >= 1 else pre

    def lag_outer(tau):
        if tau < 0:
            return np.zeros((topology.d, topology.d))
        if tau in outer:
            return outer[tau]
        return cov[tau]  # E[X X^T | past] = Sigma, for tau beyond the data

    out: list[CovState] = [CovState(cov[T], np.diag(cov[T]).copy()).repair()]
    for tau in range(T + 1, T + horizon):
        outs = [lag_outer(tau - k) for k in range(1, orders.q + 1)]
        past = [lag_cov(tau - l) for l in range(1, orders.p + 1)]
        state = step_from_outers(params, orders, outs, past, masks)
        cov[tau] = state.sigma
        out.append(state.repair())
    return out
