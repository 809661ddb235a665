"""Price ingestion, returns, and correlation-of-correlation networks."""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .network import NetworkTopology
from .panel import ReturnPanel

__all__ = ["PricePanel", "read_price_csv", "log_returns", "simple_returns", "coc_network", "monthly_correlations"]


@dataclass(frozen=True)
class PricePanel:
    """Strictly positive prices, ``d x (T + 1)``, on strictly increasing dates."""

    prices: np.ndarray
    tickers: tuple
    dates: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.array(self.prices, dtype=float, copy=True))
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        if dates.shape != (P.shape[1],):
            raise ValueError("date index length does not match the price panel")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(P)):
            raise ValueError("prices must be finite")
        tickers = tuple(str(t) for t in self.tickers) or tuple(str(i) for i in range(P.shape[0]))
        if len(tickers) != P.shape[0]:
            raise ValueError("ticker count does not match the price panel")
        P.setflags(write=False)
        object.__setattr__(self, "prices", P)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "dates", dates)


def _parse_date(text: str, path, line: int) -> np.datetime64:
    try:
        return np.datetime64(dt.date.fromisoformat(text.strip()), "D")
    except ValueError:
        raise ValueError(f"{path}:{line}: {text!r} is not an ISO-8601 date (YYYY-MM-DD)") from None


def read_price_csv(path) -> PricePanel:
    """Price CSV: first column ``date`` (ISO-8601), remaining columns tickers."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip().lower() != "date" or len(rows[0]) < 2:
        raise ValueError(f"{path}: first header column must be 'date' followed by tickers")
    dates = [_parse_date(r[0], path, k + 2) for k, r in enumerate(rows[1:])]
    try:
        P = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric price ({exc})") from None
    return PricePanel(P.T, tuple(h.strip() for h in rows[0][1:]), np.array(dates))


def _returns(prices: PricePanel, fn) -> ReturnPanel:
    P = prices.prices
    if P.shape[1] < 2:
        raise ValueError("need at least two price observations")
    if np.any(P <= 0):
        raise ValueError("prices must be strictly positive")
    return ReturnPanel(fn(P), prices.tickers, prices.dates[1:])


def log_returns(prices: PricePanel) -> ReturnPanel:
    """``log P_t - log P_{t-1}``, indexed by the later date."""
    return _returns(prices, lambda P: np.diff(np.log(P), axis=1))


def simple_returns(prices: PricePanel) -> ReturnPanel:
    """``(P_t - P_{t-1}) / P_{t-1}``, indexed by the later date."""
    return _returns(prices, lambda P: P[:, 1:] / P[:, :-1] - 1.0)


def monthly_correlations(panel: ReturnPanel, dates=None):
    """Per-calendar-month correlation matrices.

    Yields ``(month, R, valid)`` where ``valid[i, j]`` is false whenever stock
    ``i`` or ``j`` has zero variance within the month.
    """
    dates = panel.times if dates is None else dates
    months = np.asarray(dates, dtype="datetime64[D]").astype("datetime64[M]")
    if months.shape != (panel.T,):
        raise ValueError("dates do not align with the panel")
    for m in np.unique(months):
        block = panel.values[:, months == m]
        if block.shape[1] < 3:
            raise ValueError(f"month {m} has {block.shape[1]} observations; at least 3 are needed")
        c = block - block.mean(axis=1, keepdims=True)
        sd = np.sqrt(np.sum(c * c, axis=1))
        ok = sd > 0
        safe = np.where(ok, sd, 1.0)
        R = (c @ c.T) / np.outer(safe, safe)
        np.fill_diagonal(R, 1.0)
        valid = np.outer(ok, ok)
        np.fill_diagonal(valid, True)
        yield m, np.clip(R, -1.0, 1.0), valid


def coc_network(panel: ReturnPanel, dates=None, threshold_quantile: float = 0.70):
    """Threshold the month-averaged absolute correlations into a graph.

    Returns ``(topology, R)`` with ``R`` the integrated correlation matrix and
    an edge wherever ``R_ij`` strictly exceeds the ``threshold_quantile``
    quantile of the upper off-diagonal entries of ``R``. Pair-months with an
    undefined correlation are skipped and do not count towards that pair's
    average.
    """
    if not 0.0 < threshold_quantile < 1.0:
        raise ValueError("threshold_quantile must lie in (0, 1)")
    d = panel.d
    total = np.zeros((d, d))
    count = np.zeros((d, d))
    n_months = 0
    for _, R, valid in monthly_correlations(panel, dates):
        total += np.where(valid, np.abs(R), 0.0)
        count += valid
        n_months += 1
    if n_months == 0:
        raise ValueError("no complete month in the sample")
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.where(count > 0, total / np.maximum(count, 1), 0.0)
    np.fill_diagonal(R, 1.0)
    iu = np.triu_indices(d, 1)
    if iu[0].size == 0:
        return NetworkTopology(d, frozenset(), panel.labels), R
    lam = np.quantile(R[iu], threshold_quantile)
    A = (R > lam).astype(int)
    np.fill_diagonal(A, 0)
    return NetworkTopology.from_adjacency(A, panel.labels), R
