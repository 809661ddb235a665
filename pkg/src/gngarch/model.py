"""GNGARCH and threshold (GTN) conditional variance/covariance recursions.

Lag lists are passed most-recent-first: ``past_returns[k - 1]`` is
``X_{t-k}`` and ``past_h[l - 1]`` is ``h_{t-l}``. The stage masks are the
stack returned by :func:`gngarch.network.stage_masks`, with
``masks[r - 1] = W * S_r``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import NetworkTopology, stage_masks

__all__ = [
    "OrderSpec",
    "GlobalParams",
    "ThresholdParams",
    "CovState",
    "PD_EPS",
    "model_masks",
    "variance_update",
    "covariance_update",
    "assemble_sigma",
    "make_pd",
    "stationarity_check",
    "gtn_coefficient_matrices",
    "gtn_variance_update",
    "gtn_covariance_update",
    "filter_trace",
    "step",
    "step_from_outers",
    "kernel_arrays",
]

PD_EPS = 1e-10


@dataclass(frozen=True)
class OrderSpec:
    """Model orders ``GNGARCH(p, q, [s_1..s_q], [r_1..r_p])``.

    ``s[k - 1]`` is the number of neighbour stages on the lag-``k`` squared
    return term; ``rp[l - 1]`` the number on the lag-``l`` variance term.
    """

    p: int = 1
    q: int = 1
    s: tuple = (1,)
    rp: tuple = (1,)

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "rp", tuple(int(v) for v in self.rp))
        if self.p < 0:
            raise ValueError("GARCH order p must be >= 0")
        if self.q < 1:
            raise ValueError("ARCH order q must be >= 1")
        if len(self.s) != self.q:
            raise ValueError(f"need one clustering stage bound per ARCH lag: len(s)={len(self.s)}, q={self.q}")
        if len(self.rp) != self.p:
            raise ValueError(f"need one persistence stage bound per GARCH lag: len(rp)={len(self.rp)}, p={self.p}")
        if any(v < 0 for v in self.s + self.rp):
            raise ValueError("stage bounds must be >= 0")

    @property
    def max_stage(self) -> int:
        return max(self.s + self.rp, default=0)

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q)

    @property
    def n_params(self) -> int:
        return 1 + self.q + self.p + sum(self.s) + sum(self.rp)

    def param_names(self) -> list[str]:
        names = ["alpha0"]
        names += [f"alpha{k}" for k in range(1, self.q + 1)]
        names += [f"gamma{l}" for l in range(1, self.p + 1)]
        names += [f"beta{k}{r}" for k in range(1, self.q + 1) for r in range(1, self.s[k - 1] + 1)]
        names += [f"delta{l}{r}" for l in range(1, self.p + 1) for r in range(1, self.rp[l - 1] + 1)]
        return names

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "s": list(self.s), "rp": list(self.rp)}

    @classmethod
    def from_dict(cls, doc: dict) -> "OrderSpec":
        return cls(p=int(doc["p"]), q=int(doc["q"]), s=tuple(doc["s"]), rp=tuple(doc["rp"]))


def _ragged(values) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in values)


@dataclass(frozen=True)
class GlobalParams:
    """Global parameter bundle ``(alpha0, alpha, gamma, beta, delta)``.

    ``beta[k - 1][r - 1]`` multiplies the stage-``r`` neighbour average of
    lag-``k`` squared returns; ``delta[l - 1][r - 1]`` the stage-``r``
    neighbour average of lag-``l`` variances.
    """

    alpha0: float
    alpha: tuple
    gamma: tuple
    beta: tuple
    delta: tuple

    def __post_init__(self):
        object.__setattr__(self, "alpha0", float(self.alpha0))
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        object.__setattr__(self, "gamma", tuple(float(x) for x in self.gamma))
        object.__setattr__(self, "beta", _ragged(self.beta))
        object.__setattr__(self, "delta", _ragged(self.delta))

    @classmethod
    def gngarch11(cls, alpha0, alpha1, gamma1, beta11, delta11) -> "GlobalParams":
        """Parameters of the GNGARCH(1, 1, [1], [1]) specification."""
        return cls(alpha0, (alpha1,), (gamma1,), ((beta11,),), ((delta11,),))

    def orders(self) -> OrderSpec:
        return OrderSpec(
            p=len(self.gamma), q=len(self.alpha), s=tuple(len(b) for b in self.beta), rp=tuple(len(d) for d in self.delta)
        )

    def conforms(self, orders: OrderSpec) -> bool:
        return self.orders() == orders

    def check_orders(self, orders: OrderSpec) -> None:
        if not self.conforms(orders):
            raise ValueError(f"parameters have shape {self.orders()} but orders are {orders}")

    def feasible(self) -> bool:
        v = self.to_vector()
        return bool(v[0] > 0 and np.all(v[1:] >= 0) and np.all(np.isfinite(v)))

    def validate(self) -> None:
        """Raise ``ValueError`` unless ``alpha0 > 0`` and every other entry is >= 0."""
        if not self.feasible():
            raise ValueError(f"parameters violate positivity constraints: {self.to_vector().tolist()}")

    def to_vector(self) -> np.ndarray:
        flat = [self.alpha0, *self.alpha, *self.gamma]
        for row in self.beta:
            flat.extend(row)
        for row in self.delta:
            flat.extend(row)
        return np.asarray(flat, dtype=float)

    @classmethod
    def from_vector(cls, theta, orders: OrderSpec) -> "GlobalParams":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != orders.n_params:
            raise ValueError(f"expected {orders.n_params} parameters, got {theta.size}")
        pos = 1 + orders.q + orders.p
        alpha = theta[1 : 1 + orders.q]
        gamma = theta[1 + orders.q : pos]
        beta = []
        for sk in orders.s:
            beta.append(theta[pos : pos + sk])
            pos += sk
        delta = []
        for rl in orders.rp:
            delta.append(theta[pos : pos + rl])
            pos += rl
        return cls(theta[0], alpha, gamma, beta, delta)

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "alpha": list(self.alpha),
            "gamma": list(self.gamma),
            "beta": [list(r) for r in self.beta],
            "delta": [list(r) for r in self.delta],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GlobalParams":
        return cls(doc["alpha0"], doc["alpha"], doc["gamma"], doc["beta"], doc["delta"])

    def persistence(self) -> float:
        return float(np.abs(self.to_vector()[1:]).sum())


@dataclass(frozen=True)
class ThresholdParams:
    """GTN-GARCH parameters: each ``alpha_k`` split by sign regime.

    ``alpha_pos`` applies to non-negative own returns (and jointly
    non-negative pairs), ``alpha_neg`` to negative ones, ``alpha_inter`` to
    mixed-sign pairs in the covariance recursion.
    """

    alpha0: float
    alpha_pos: tuple
    alpha_neg: tuple
    alpha_inter: tuple
    gamma: tuple
    beta: tuple
    delta: tuple

    def __post_init__(self):
        for name in ("alpha_pos", "alpha_neg", "alpha_inter", "gamma"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        object.__setattr__(self, "alpha0", float(self.alpha0))
        object.__setattr__(self, "beta", _ragged(self.beta))
        object.__setattr__(self, "delta", _ragged(self.delta))
        if not len(self.alpha_pos) == len(self.alpha_neg) == len(self.alpha_inter):
            raise ValueError("threshold coefficient lists must share the ARCH order")

    @classmethod
    def from_global(cls, params: GlobalParams) -> "ThresholdParams":
        a = params.alpha
        return cls(params.alpha0, a, a, a, params.gamma, params.beta, params.delta)

    def orders(self) -> OrderSpec:
        return OrderSpec(
            p=len(self.gamma),
            q=len(self.alpha_pos),
            s=tuple(len(b) for b in self.beta),
            rp=tuple(len(d) for d in self.delta),
        )

    def check_orders(self, orders: OrderSpec) -> None:
        if self.orders() != orders:
            raise ValueError(f"parameters have shape {self.orders()} but orders are {orders}")

    def feasible(self) -> bool:
        rest = [*self.alpha_pos, *self.alpha_neg, *self.alpha_inter, *self.gamma]
        rest += [x for row in self.beta for x in row] + [x for row in self.delta for x in row]
        return bool(self.alpha0 > 0 and all(x >= 0 for x in rest))

    def validate(self) -> None:
        if not self.feasible():
            raise ValueError("threshold parameters violate positivity constraints")

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "alpha_pos": list(self.alpha_pos),
            "alpha_neg": list(self.alpha_neg),
            "alpha_inter": list(self.alpha_inter),
            "gamma": list(self.gamma),
            "beta": [list(r) for r in self.beta],
            "delta": [list(r) for r in self.delta],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdParams":
        return cls(
            doc["alpha0"], doc["alpha_pos"], doc["alpha_neg"], doc["alpha_inter"], doc["gamma"], doc["beta"], doc["delta"]
        )


@dataclass(frozen=True)
class CovState:
    """Conditional covariance at one time step.

    ``sigma`` is the assembled recursion state (off-diagonals from the
    covariance recursion, diagonal equal to ``h``). When a PD repair was
    needed, ``repaired`` is set and ``sigma_pd`` holds the repaired matrix;
    the recursion itself always continues from ``sigma``.
    """

    sigma: np.ndarray
    h: np.ndarray
    repaired: bool = False
    sigma_pd: np.ndarray | None = field(default=None, repr=False)

    @property
    def pd(self) -> np.ndarray:
        """Matrix to sample from or evaluate a likelihood against."""
        return self.sigma if self.sigma_pd is None else self.sigma_pd

    def repair(self, eps: float = PD_EPS) -> "CovState":
        fixed, flag = make_pd(self.sigma, eps)
        return CovState(self.sigma, self.h, flag, fixed)


def model_masks(topology: NetworkTopology, orders: OrderSpec) -> np.ndarray:
    return stage_masks(topology, orders.max_stage)


def _check_history(orders: OrderSpec, past_returns, past_other):
    if len(past_returns) < orders.q:
        raise ValueError(f"need {orders.q} lagged return vectors, got {len(past_returns)}")
    if len(past_other) < orders.p:
        raise ValueError(f"need {orders.p} lagged variance/covariance terms, got {len(past_other)}")


def _check_masks(orders: OrderSpec, masks: np.ndarray, d: int) -> None:
    if masks.shape[0] < orders.max_stage:
        raise ValueError(f"orders reference stage {orders.max_stage} but only {masks.shape[0]} masks supplied")
    if masks.ndim != 3 or masks.shape[1:] != (d, d):
        raise ValueError(f"mask stack has shape {masks.shape}, expected (R, {d}, {d})")


def _stage_matrix(coefs: Sequence[float], masks: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((d, d))
    for r, c in enumerate(coefs):
        if c != 0.0:
            out += c * masks[r]
    return out


def _sym_half(M: np.ndarray, A: np.ndarray) -> np.ndarray:
    MA = M @ A
    return 0.5 * (MA + MA.T)


def _variance_core(alpha0, own, beta, gamma, delta, squares, past_h, masks):
    # own[k] is a length-d vector of own-return coefficients for lag k + 1;
    # squares[k] is X_{t-k-1} * X_{t-k-1} (or its conditional expectation)
    d = np.asarray(squares[0]).shape[0]
    h = np.full(d, alpha0)
    for k, (a, b) in enumerate(zip(own, beta)):
        x2 = np.asarray(squares[k], dtype=float)
        if x2.shape != (d,):
            raise ValueError("dimension mismatch in lagged returns")
        h += a * x2 + _stage_matrix(b, masks, d) @ x2
    for l, (g, dl) in enumerate(zip(gamma, delta)):
        hl = np.asarray(past_h[l], dtype=float)
        if hl.shape != (d,):
            raise ValueError("dimension mismatch in lagged variances")
        h += g * hl + _stage_matrix(dl, masks, d) @ hl
    return h


def _covariance_core(alpha0, own, beta, gamma, delta, outers, past_cov, masks):
    # own[k] is a d x d matrix applied entrywise to outers[k] = X X^T at lag k + 1
    d = np.asarray(outers[0]).shape[0]
    out = np.full((d, d), alpha0)
    for k, (a, b) in enumerate(zip(own, beta)):
        xx = np.asarray(outers[k], dtype=float)
        if xx.shape != (d, d):
            raise ValueError("dimension mismatch in lagged returns")
        out += a * xx
        B = xx - np.diag(np.diag(xx))
        for r, c in enumerate(b):
            if c != 0.0:
                out += c * _sym_half(masks[r], B)
    for l, (g, dl) in enumerate(zip(gamma, delta)):
        S = np.asarray(past_cov[l], dtype=float)
        if S.shape != (d, d):
            raise ValueError("dimension mismatch in lagged covariances")
        out += g * S
        D = S - np.diag(np.diag(S))
        for r, c in enumerate(dl):
            if c != 0.0:
                out += c * _sym_half(masks[r], D)
    return out


def _squares(past_returns, q):
    out = []
    for k in range(q):
        x = np.asarray(past_returns[k], dtype=float)
        if x.ndim != 1:
            raise ValueError("lagged returns must be vectors")
        out.append(x * x)
    return out


def _outers(past_returns, q):
    out = []
    for k in range(q):
        x = np.asarray(past_returns[k], dtype=float)
        if x.ndim != 1:
            raise ValueError("lagged returns must be vectors")
        out.append(np.outer(x, x))
    return out


def variance_update(params: GlobalParams, orders: OrderSpec, past_returns, past_h, masks) -> np.ndarray:
    """Conditional variances ``h_t`` from lagged returns and variances."""
    params.check_orders(orders)
    _check_history(orders, past_returns, past_h)
    masks = np.asarray(masks, dtype=float)
    d = np.asarray(past_returns[0]).shape[0]
    _check_masks(orders, masks, d)
    sq = _squares(past_returns, orders.q)
    return _variance_core(params.alpha0, params.alpha, params.beta, params.gamma, params.delta, sq, past_h, masks)


def covariance_update(params: GlobalParams, orders: OrderSpec, past_returns, past_cov, masks) -> np.ndarray:
    """Full-matrix covariance recursion; only the off-diagonal is meaningful.

    ``past_cov[l - 1]`` is the assembled ``Sigma_{t-l}``. The result is
    symmetric by construction.
    """
    params.check_orders(orders)
    _check_history(orders, past_returns, past_cov)
    masks = np.asarray(masks, dtype=float)
    d = np.asarray(past_returns[0]).shape[0]
    _check_masks(orders, masks, d)
    own = [np.full((d, d), a) for a in params.alpha]
    xx = _outers(past_returns, orders.q)
    return _covariance_core(params.alpha0, own, params.beta, params.gamma, params.delta, xx, past_cov, masks)


def assemble_sigma(h, offdiag) -> CovState:
    """Covariance matrix with off-diagonals from ``offdiag`` and diagonal ``h``."""
    h = np.asarray(h, dtype=float)
    sigma = np.array(offdiag, dtype=float, copy=True)
    if sigma.shape != (h.size, h.size):
        raise ValueError(f"offdiag shape {sigma.shape} does not match {h.size} variances")
    np.fill_diagonal(sigma, h)
    return CovState(sigma=sigma, h=h.copy(), repaired=False)


def make_pd(sigma, eps: float = PD_EPS) -> tuple[np.ndarray, bool]:
    """Clip eigenvalues below ``eps`` up to ``eps``.

    Returns the input unchanged (and ``False``) when its smallest eigenvalue
    is already at least ``eps``.
    """
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(S)
    if vals[0] >= eps:
        return S, False
    vals = np.maximum(vals, eps)
    fixed = (vecs * vals) @ vecs.T
    fixed = 0.5 * (fixed + fixed.T)
    # reconstruction roundoff can leave the smallest eigenvalue a hair below eps
    ev = np.linalg.eigvalsh(fixed)
    if ev[0] < eps:
        slack = 16.0 * np.finfo(float).eps * max(abs(ev[0]), abs(ev[-1]))
        fixed += (eps - ev[0] + slack) * np.eye(S.shape[0])
    return fixed, True


def stationarity_check(params: GlobalParams, orders: OrderSpec | None = None) -> tuple[bool, float]:
    """Sufficient stationarity condition: coefficient sum strictly below 1.

    Returns ``(holds, margin)`` with ``margin = 1 - sum``.
    """
    if orders is not None:
        params.check_orders(orders)
    total = params.persistence()
    margin = 1.0 - total
    return bool(margin > 0), float(margin)


def gtn_coefficient_matrices(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sign-regime indicators ``(R, P, Q)`` for one lagged return vector.

    ``R = diag(x >= 0)``; ``P[i, j] = 1`` when both returns are >= 0 and
    ``Q[i, j] = 1`` when both are < 0, off the diagonal only.
    """
    x = np.asarray(x, dtype=float)
    nonneg = x >= 0
    R = np.diag(nonneg.astype(float))
    P = np.logical_and.outer(nonneg, nonneg).astype(float)
    Q = np.logical_and.outer(~nonneg, ~nonneg).astype(float)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(Q, 0.0)
    return R, P, Q


def _gtn_own_variance(tparams: ThresholdParams, past_returns) -> list[np.ndarray]:
    own = []
    for k in range(len(tparams.alpha_pos)):
        nonneg = np.asarray(past_returns[k]) >= 0
        own.append(np.where(nonneg, tparams.alpha_pos[k], tparams.alpha_neg[k]))
    return own


def _gtn_own_covariance(tparams: ThresholdParams, past_returns) -> list[np.ndarray]:
    own = []
    for k in range(len(tparams.alpha_pos)):
        _, P, Q = gtn_coefficient_matrices(past_returns[k])
        d = P.shape[0]
        # mixed-sign pairs: every off-diagonal entry in neither P nor Q
        mixed = np.ones((d, d)) - np.eye(d) - P - Q
        A = tparams.alpha_pos[k] * P + tparams.alpha_inter[k] * mixed + tparams.alpha_neg[k] * Q
        # the diagonal mirrors the variance regime so the unassembled matrix stays
        # consistent with the variance recursion
        nonneg = np.asarray(past_returns[k]) >= 0
        np.fill_diagonal(A, np.where(nonneg, tparams.alpha_pos[k], tparams.alpha_neg[k]))
        own.append(A)
    return own


def gtn_variance_update(tparams: ThresholdParams, orders: OrderSpec, past_returns, past_h, masks) -> np.ndarray:
    tparams.check_orders(orders)
    _check_history(orders, past_returns, past_h)
    masks = np.asarray(masks, dtype=float)
    _check_masks(orders, masks, np.asarray(past_returns[0]).shape[0])
    own = _gtn_own_variance(tparams, past_returns)
    sq = _squares(past_returns, orders.q)
    return _variance_core(tparams.alpha0, own, tparams.beta, tparams.gamma, tparams.delta, sq, past_h, masks)


def gtn_covariance_update(tparams: ThresholdParams, orders: OrderSpec, past_returns, past_cov, masks) -> np.ndarray:
    tparams.check_orders(orders)
    _check_history(orders, past_returns, past_cov)
    masks = np.asarray(masks, dtype=float)
    _check_masks(orders, masks, np.asarray(past_returns[0]).shape[0])
    own = _gtn_own_covariance(tparams, past_returns)
    xx = _outers(past_returns, orders.q)
    return _covariance_core(tparams.alpha0, own, tparams.beta, tparams.gamma, tparams.delta, xx, past_cov, masks)


def step(params, orders: OrderSpec, past_returns, past_cov, masks) -> CovState:
    """One full update: variances, covariances and assembly.

    ``past_cov`` holds assembled matrices, most recent first; lagged
    variances are read off their diagonals.
    """
    past_h = [np.diag(S) for S in past_cov]
    if isinstance(params, ThresholdParams):
        h = gtn_variance_update(params, orders, past_returns, past_h, masks)
        off = gtn_covariance_update(params, orders, past_returns, past_cov, masks)
    else:
        h = variance_update(params, orders, past_returns, past_h, masks)
        off = covariance_update(params, orders, past_returns, past_cov, masks)
    return assemble_sigma(h, off)


def step_from_outers(params: GlobalParams, orders: OrderSpec, outers, past_cov, masks) -> CovState:
    """One update driven by lagged outer products instead of return vectors.

    ``outers[k - 1]`` stands in for ``X_{t-k} X_{t-k}^T``; forecasting passes
    conditional expectations here once observed returns run out.
    """
    params.check_orders(orders)
    _check_history(orders, outers, past_cov)
    masks = np.asarray(masks, dtype=float)
    d = np.asarray(outers[0]).shape[0]
    _check_masks(orders, masks, d)
    squares = [np.diag(np.asarray(O, dtype=float)) for O in outers[: orders.q]]
    past_h = [np.diag(np.asarray(S, dtype=float)) for S in past_cov[: orders.p]]
    h = _variance_core(params.alpha0, params.alpha, params.beta, params.gamma, params.delta, squares, past_h, masks)
    own = [np.full((d, d), a) for a in params.alpha]
    off = _covariance_core(params.alpha0, own, params.beta, params.gamma, params.delta, outers, past_cov, masks)
    return assemble_sigma(h, off)


def kernel_arrays(params, orders: OrderSpec, n_stages: int):
    """Dense arrays consumed by the compiled kernels.

    Ragged stage coefficients are zero-padded to ``n_stages`` columns.
    """
    params.check_orders(orders)
    if orders.max_stage > n_stages:
        raise ValueError(f"orders reference stage {orders.max_stage} but only {n_stages} masks supplied")
    beta = np.zeros((orders.q, n_stages))
    delta = np.zeros((orders.p, n_stages))
    for k, row in enumerate(params.beta):
        beta[k, : len(row)] = row
    for l, row in enumerate(params.delta):
        delta[l, : len(row)] = row
    if isinstance(params, ThresholdParams):
        apos = np.array(params.alpha_pos, dtype=float)
        aneg = np.array(params.alpha_neg, dtype=float)
        ainter = np.array(params.alpha_inter, dtype=float)
    else:
        apos = np.array(params.alpha, dtype=float)
        aneg = apos.copy()
        ainter = apos.copy()
    gamma = np.array(params.gamma, dtype=float)
    return float(params.alpha0), apos, aneg, ainter, gamma, beta, delta


def presample_sigma(params, d: int) -> np.ndarray:
    return params.alpha0 * np.eye(d)


def filter_trace(params, orders: OrderSpec, masks, X, backend: str = "numba") -> tuple[np.ndarray, np.ndarray]:
    """Run the recursion over observed returns.

    Parameters
    ----------
    params : GlobalParams or ThresholdParams
    orders : OrderSpec
    masks : ndarray, shape (R, d, d)
    X : ndarray, shape (T, d)
        Observed returns ``X_0 .. X_{T-1}`` (time-major).

    Returns
    -------
    h : ndarray, shape (T, d)
    sigma : ndarray, shape (T, d, d)
        ``sigma[t - 1]`` is the assembled ``Sigma_t`` for ``t = 1 .. T``,
        built from information up to ``t - 1``; the last entry is the
        one-step-ahead forecast. Pre-sample returns are 0 and pre-sample
        covariances ``alpha0 * I``.

    Notes
    -----
    ``backend="python"`` runs the literal per-step updates and is kept as a
    slow reference for the compiled path.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("returns must be a non-empty (T, d) array")
    T, d = X.shape
    masks = np.asarray(masks, dtype=float)
    _check_masks(orders, masks, d)
    if backend == "numba":
        from ._kernels import filter_kernel

        args = kernel_arrays(params, orders, masks.shape[0])
        sig = filter_kernel(np.ascontiguousarray(X), presample_sigma(params, d), *args, np.ascontiguousarray(masks))
        return np.diagonal(sig, axis1=1, axis2=2).copy(), sig
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    zero = np.zeros(d)
    pre = presample_sigma(params, d)
    sig = np.empty((T, d, d))
    for t in range(1, T + 1):
        past_x = [X[t - k] if t - k >= 0 else zero for k in range(1, orders.q + 1)]
        past_s = [sig[t - l - 1] if t - l >= 1 else pre for l in range(1, orders.p + 1)]
        sig[t - 1] = step(params, orders, past_x, past_s, masks).sigma
    h = np.diagonal(sig, axis1=1, axis2=2).copy()
    return h, sig
