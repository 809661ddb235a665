"""Covariance forecast losses against the squared-return proxy ``X_t X_t^T``.

The trace argument holds the forecasts for ``t = 1 .. T-1`` of a panel with
columns ``t = 0 .. T-1``; ``trace[t - 1]`` is compared with column ``t``.
"""
from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import PD_EPS, CovState, make_pd
from .panel import ReturnPanel

__all__ = ["LossKind", "loss_mse", "loss_qlike", "loss_nll", "evaluate_loss", "LOG_2PI"]

LOG_2PI = float(np.log(2.0 * np.pi))


class LossKind(str, Enum):
    MSE = "mse"
    QLIKE = "qlike"
    NLL = "nll"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown loss {value!r}; choose from mse, qlike, nll") from None


def _aligned(panel, trace, repaired: bool):
    X = panel.X if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=float)
    if X.ndim != 2:
        raise ValueError("panel must be two-dimensional")
    if len(trace) and isinstance(trace[0], CovState):
        mats = np.array([s.pd if repaired else s.sigma for s in trace])
    else:
        mats = np.asarray(trace, dtype=float)
    T, d = X.shape
    if T < 2:
        raise ValueError("need at least two time points")
    if mats.shape != (T - 1, d, d):
        raise ValueError(f"trace of shape {mats.shape} is not aligned with a {d} x {T} panel (expected {T - 1} steps)")
    return X[1:], mats


def loss_mse(panel, sigma_trace) -> float:
    """Mean over time of ``d^-2 * ||X_t X_t^T - Sigma_t||_F^2``."""
    X, S = _aligned(panel, sigma_trace, repaired=False)
    d = X.shape[1]
    proxy = X[:, :, None] * X[:, None, :]
    return float(np.mean(np.sum((proxy - S) ** 2, axis=(1, 2))) / d**2)


def _qlike_terms(X, S, eps):
    total, n_rep = 0.0, 0
    for x, Sig in zip(X, S):
        Sig, flag = make_pd(Sig, eps)
        n_rep += flag
        try:
            c = cho_factor(Sig, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("covariance forecast is not positive definite after repair") from None
        logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
        total += logdet + x @ cho_solve(c, x)
    return total / len(X), n_rep


def loss_qlike(panel, sigma_trace, eps: float = PD_EPS, return_repairs: bool = False):
    """Mean over time of ``log|Sigma_t| + X_t^T Sigma_t^{-1} X_t``.

    Forecasts failing the eigenvalue floor are repaired first;
    ``return_repairs=True`` also returns how many were.
    """
    X, S = _aligned(panel, sigma_trace, repaired=True)
    value, n_rep = _qlike_terms(X, S, eps)
    return (value, n_rep) if return_repairs else value


def loss_nll(panel, sigma_trace, eps: float = PD_EPS, return_repairs: bool = False):
    """Average Gaussian negative log-likelihood, ``QLIKE / 2 + (d / 2) log 2 pi``."""
    X, S = _aligned(panel, sigma_trace, repaired=True)
    value, n_rep = _qlike_terms(X, S, eps)
    nll = 0.5 * value + 0.5 * X.shape[1] * LOG_2PI
    return (nll, n_rep) if return_repairs else nll


def evaluate_loss(kind, panel, sigma_trace) -> float:
    kind = LossKind.parse(kind)
    if kind is LossKind.MSE:
        return loss_mse(panel, sigma_trace)
    if kind is LossKind.QLIKE:
        return loss_qlike(panel, sigma_trace)
    return loss_nll(panel, sigma_trace)
