"""Stylised-fact statistics, network volatility autocorrelation and pre-model tests."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import norm

from .network import NetworkTopology, connection_weights, stage_masks, stage_neighborhoods
from .panel import ReturnPanel

__all__ = [
    "AcfResult",
    "sample_acf",
    "moment_stats",
    "QQData",
    "aggregate_returns",
    "LeverageSummary",
    "leverage_split",
    "autocovariance_bound",
    "nvacf",
    "CorbitGrid",
    "corbit_grid",
    "ADF_CRITICAL",
    "AdfResult",
    "schwert_lags",
    "adf_test",
    "durbin_watson",
    "spurious_scan",
]


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    values: np.ndarray
    band: float
    T: int

    def inside_band(self) -> np.ndarray:
        return np.abs(self.values) <= self.band

    def above_band(self) -> np.ndarray:
        return self.values > self.band


def sample_acf(series, max_lag: int, include_zero: bool = False) -> AcfResult:
    """Sample autocorrelations with the full-sample (biased) denominator.

    ``rho_k = sum_{t>k} (x_t - m)(x_{t-k} - m) / sum_t (x_t - m)^2``; the
    band is ``1.96 / sqrt(T)``.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    if max_lag < 0 or T <= max_lag:
        raise ValueError(f"need 0 <= max_lag < T, got max_lag={max_lag}, T={T}")
    c = x - x.mean()
    denom = c @ c
    if denom == 0:
        raise ValueError("constant series has no autocorrelation")
    start = 0 if include_zero else 1
    lags = np.arange(start, max_lag + 1)
    vals = np.array([1.0 if k == 0 else (c[k:] @ c[:-k]) / denom for k in lags])
    return AcfResult(lags, vals, 1.96 / np.sqrt(T), T)


def moment_stats(series) -> tuple[float, float]:
    """Pearson kurtosis ``m4 / m2^2`` and skewness ``m3 / m2^1.5`` (central sample moments)."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 4:
        raise ValueError("need at least four observations")
    c = x - x.mean()
    m2 = np.mean(c**2)
    if m2 == 0:
        raise ValueError("zero variance")
    return float(np.mean(c**4) / m2**2), float(np.mean(c**3) / m2**1.5)


@dataclass(frozen=True)
class QQData:
    window: int
    sample: np.ndarray  # sorted standardised aggregates
    theoretical: np.ndarray  # standard-normal quantiles at (k - 0.5) / n

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.sample - self.theoretical)))


def aggregate_returns(series, window: int) -> QQData:
    """Non-overlapping ``window``-sums, studentised and paired with normal quantiles.

    A trailing incomplete window is dropped.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float).ravel()
    n = x.size // window
    if n < 2:
        raise ValueError(f"window {window} leaves fewer than two aggregates")
    agg = x[: n * window].reshape(n, window).sum(axis=1)
    sd = agg.std(ddof=1)
    if sd == 0:
        raise ValueError("aggregated series is constant")
    z = np.sort((agg - agg.mean()) / sd)
    q = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return QQData(window, z, q)


@dataclass(frozen=True)
class LeverageSummary:
    node: str
    positive: tuple  # (q1, median, q3) of sd after a non-negative return
    negative: tuple  # same after a negative return
    n_positive: int
    n_negative: int

    @property
    def median_gap(self) -> float:
        return self.negative[1] - self.positive[1]


def leverage_split(panel, sd_trace) -> list[LeverageSummary]:
    """Quartiles of ``sd_t`` split by the sign of ``X_{t-1}``, per node.

    A zero previous return counts as non-negative.

    Parameters
    ----------
    panel : ReturnPanel or array (d, T)
    sd_trace : array (d, T)
        Conditional standard deviations aligned with the panel columns.
    """
    r = panel.values if isinstance(panel, ReturnPanel) else np.atleast_2d(np.asarray(panel, dtype=float))
    labels = panel.labels if isinstance(panel, ReturnPanel) else tuple(str(i) for i in range(r.shape[0]))
    sd = np.atleast_2d(np.asarray(sd_trace, dtype=float))
    if sd.shape != r.shape:
        raise ValueError(f"sd trace {sd.shape} not aligned with returns {r.shape}")
    out = []
    for i in range(r.shape[0]):
        prev, after = r[i, :-1], sd[i, 1:]
        pos, neg = after[prev >= 0], after[prev < 0]
        if pos.size == 0 or neg.size == 0:
            raise ValueError(f"node {labels[i]}: one sign class is empty")
        out.append(
            LeverageSummary(
                labels[i],
                tuple(np.quantile(pos, [0.25, 0.5, 0.75]).tolist()),
                tuple(np.quantile(neg, [0.25, 0.5, 0.75]).tolist()),
                int(pos.size),
                int(neg.size),
            )
        )
    return out


def autocovariance_bound(topology: NetworkTopology) -> float:
    """``sqrt(max_j sum_i W_ij^2)`` over the full connection-weight matrix."""
    if not topology.edges:
        return 0.0
    W = connection_weights(stage_neighborhoods(topology))
    return float(np.sqrt(np.max(np.sum(W * W, axis=0))))


def _as_dT(h_panel) -> np.ndarray:
    if isinstance(h_panel, ReturnPanel):
        return h_panel.values
    return np.atleast_2d(np.asarray(h_panel, dtype=float))


def _nvacf(C, M, lam, h):
    num = np.einsum("ti,ij,tj->", C[:, h:].T, M, C[:, :-h].T) if h else np.einsum("ti,ij,tj->", C.T, M, C.T)
    den = (1.0 + lam) * np.sum(C * C)
    if den == 0:
        raise ValueError("constant variance trace")
    return float(num / den)


def nvacf(h_panel, topology: NetworkTopology, h: int, r: int) -> float:
    """Network volatility autocorrelation at lag ``h`` and stage ``r``.

    Numerator weight ``W * S_r + I`` on lagged, node-demeaned variance
    vectors; denominator ``(1 + lambda) * sum_t ||c_t||^2``.

    Parameters
    ----------
    h_panel : array (d, T) or ReturnPanel
        Conditional variances.
    """
    V = _as_dT(h_panel)
    d, T = V.shape
    if d != topology.d:
        raise ValueError("variance panel does not match the network")
    if not 0 <= h < T:
        raise ValueError(f"lag {h} needs 0 <= h < T = {T}")
    if r < 1:
        raise ValueError("stage must be >= 1")
    C = V - V.mean(axis=1, keepdims=True)
    M = stage_masks(topology, r)[r - 1] + np.eye(d)
    return _nvacf(C, M, autocovariance_bound(topology), h)


@dataclass(frozen=True)
class CorbitGrid:
    values: np.ndarray  # (h_max, r_max); values[h - 1, r - 1] = nvacf(h, r)
    lam: float

    @property
    def h_max(self) -> int:
        return self.values.shape[0]

    @property
    def r_max(self) -> int:
        return self.values.shape[1]

    def value(self, h: int, r: int) -> float:
        return float(self.values[h - 1, r - 1])

    def rows(self):
        for h in range(1, self.h_max + 1):
            for r in range(1, self.r_max + 1):
                yield h, r, self.value(h, r)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "stage", "nvacf"])
            for h, r, v in self.rows():
                w.writerow([h, r, repr(v)])


def corbit_grid(h_panel, topology: NetworkTopology, h_max: int = 20, r_max: int = 3) -> CorbitGrid:
    """nvacf over lags ``1 .. h_max`` (angle) and stages ``1 .. r_max`` (ring)."""
    V = _as_dT(h_panel)
    d, T = V.shape
    if d != topology.d:
        raise ValueError("variance panel does not match the network")
    if h_max < 1 or r_max < 1 or h_max >= T:
        raise ValueError("need 1 <= h_max < T and r_max >= 1")
    C = V - V.mean(axis=1, keepdims=True)
    masks = stage_masks(topology, r_max)
    lam = autocovariance_bound(topology)
    vals = np.empty((h_max, r_max))
    for r in range(1, r_max + 1):
        M = masks[r - 1] + np.eye(d)
        for h in range(1, h_max + 1):
            vals[h - 1, r - 1] = _nvacf(C, M, lam, h)
    return CorbitGrid(vals, lam)


# --- unit-root and spurious-regression checks -------------------------------------

ADF_CRITICAL = {"1%": -3.43, "5%": -2.86, "10%": -2.57}


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags: int
    nobs: int
    reject_5pct: bool
    critical: dict


def schwert_lags(T: int) -> int:
    return int(np.floor(12 * (T / 100) ** 0.25))


def adf_test(series, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    Regresses ``dx_t`` on ``x_{t-1}``, ``dx_{t-1} .. dx_{t-L}`` and a constant
    over the common sample, ``L`` from the Schwert rule unless given. The
    statistic is the OLS t-ratio on ``x_{t-1}``; rejection is at the fixed
    5% critical value.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    L = schwert_lags(T) if max_lag is None else int(max_lag)
    if L < 0:
        raise ValueError("lag order must be >= 0")
    nobs = T - 1 - L
    if nobs < L + 4:
        raise ValueError(f"series of length {T} too short for {L} lags")
    dx = np.diff(x)
    y = dx[L:]
    cols = [x[L:-1]]
    cols += [dx[L - k : T - 1 - k] for k in range(1, L + 1)]
    cols.append(np.ones(nobs))
    Z = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    dof = nobs - Z.shape[1]
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.inv(Z.T @ Z)
    stat = float(coef[0] / np.sqrt(cov[0, 0]))
    return AdfResult(stat, L, nobs, stat < ADF_CRITICAL["5%"], dict(ADF_CRITICAL))


def durbin_watson(resid) -> float:
    e = np.asarray(resid, dtype=float).ravel()
    ss = e @ e
    if ss == 0:
        raise ValueError("all residuals are zero")
    return float(np.sum(np.diff(e) ** 2) / ss)


def _ols_r2_dw(y, x):
    if np.ptp(x) == 0:
        raise ValueError("constant regressor")
    Z = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    e = y - Z @ coef
    c = y - y.mean()
    r2 = 1.0 - (e @ e) / (c @ c) if c @ c > 0 else 0.0
    return float(r2), durbin_watson(e)


def spurious_scan(panel) -> list[dict]:
    """Regress each node on every later node (with intercept); flag ``R^2 > DW``.

    Returns one record per unordered pair with keys ``i, j, r2, dw, flagged``.
    """
    r = panel.values if isinstance(panel, ReturnPanel) else np.atleast_2d(np.asarray(panel, dtype=float))
    labels = panel.labels if isinstance(panel, ReturnPanel) else tuple(str(i) for i in range(r.shape[0]))
    if r.shape[0] < 2:
        raise ValueError("need at least two series")
    out = []
    for i, j in combinations(range(r.shape[0]), 2):
        r2, dw = _ols_r2_dw(r[i], r[j])
        out.append({"i": labels[i], "j": labels[j], "r2": r2, "dw": dw, "flagged": r2 > dw})
    return out
