"""Return panels and their CSV/long-format file representations."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ReturnPanel",
    "read_panel_csv",
    "write_panel_csv",
    "write_cov_trace",
    "read_cov_trace",
]


@dataclass(frozen=True)
class ReturnPanel:
    """A ``d x T`` matrix of returns with node labels and a time index.

    ``values[i, t]`` is the return of node ``i`` at time ``t``. Most numerical
    code works time-major; :attr:`X` gives the ``(T, d)`` view.
    """

    values: np.ndarray
    labels: tuple = ()
    times: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError("panel must be a d x T matrix with T >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("panel has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(v.shape[0]))
        if len(labels) != v.shape[0]:
            raise ValueError(f"expected {v.shape[0]} labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)
        times = np.arange(v.shape[1]) if self.times is None else np.asarray(self.times)
        if times.shape != (v.shape[1],):
            raise ValueError("time index length does not match the panel")
        object.__setattr__(self, "times", times)

    @classmethod
    def from_time_major(cls, X, labels=(), times=None) -> "ReturnPanel":
        return cls(np.asarray(X, dtype=float).T, labels, times)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def X(self) -> np.ndarray:
        """Time-major ``(T, d)`` contiguous copy."""
        return np.ascontiguousarray(self.values.T)

    def slice(self, start: int | None = None, stop: int | None = None) -> "ReturnPanel":
        return ReturnPanel(self.values[:, start:stop], self.labels, self.times[start:stop])

    def node(self, label) -> np.ndarray:
        return self.values[self.labels.index(str(label))]


def _coerce_times(raw: list[str]) -> np.ndarray:
    try:
        return np.array([int(x) for x in raw])
    except ValueError:
        return np.array(raw, dtype=object)


def read_panel_csv(path) -> ReturnPanel:
    """Read a panel CSV: first column time, remaining columns node labels."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValueError(f"{path}: need a header and at least one data row with one node column")
    header = rows[0]
    try:
        data = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from None
    if data.shape[1] != len(header) - 1:
        raise ValueError(f"{path}: ragged rows")
    times = _coerce_times([r[0] for r in rows[1:]])
    return ReturnPanel(data.T, tuple(h.strip() for h in header[1:]), times)


def write_panel_csv(path, panel: ReturnPanel, time_name: str = "time") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([time_name, *panel.labels])
        for t in range(panel.T):
            w.writerow([panel.times[t], *(repr(float(v)) for v in panel.values[:, t])])


def write_cov_trace(path, sigma, times=None, upper_only: bool = True) -> None:
    """Long-format covariance trace with columns ``t, i, j, value``.

    Only ``i <= j`` entries are written unless ``upper_only`` is false.
    """
    sigma = np.asarray(sigma)
    T, d, _ = sigma.shape
    times = np.arange(T) if times is None else np.asarray(times)
    iu = np.triu_indices(d) if upper_only else np.indices((d, d)).reshape(2, -1)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "value"])
        for k in range(T):
            S = sigma[k]
            for i, j in zip(*iu):
                w.writerow([times[k], int(i), int(j), repr(float(S[i, j]))])


def read_cov_trace(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_cov_trace`; returns ``(times, sigma)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "i", "j", "value"]:
            raise ValueError(f"{path}: expected header t,i,j,value")
        rows = [(r["t"], int(r["i"]), int(r["j"]), float(r["value"])) for r in reader]
    order: dict[str, int] = {}
    for t, *_ in rows:
        order.setdefault(t, len(order))
    d = max(max(i, j) for _, i, j, _ in rows) + 1
    sigma = np.zeros((len(order), d, d))
    for t, i, j, v in rows:
        sigma[order[t], i, j] = sigma[order[t], j, i] = v
    return _coerce_times(list(order)), sigma
