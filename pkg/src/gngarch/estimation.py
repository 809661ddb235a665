"""Quasi-likelihood and MSE fitting of GNGARCH parameters, plus baselines.

The fitted conditional covariances for a panel ``X_0 .. X_{T-1}`` are the
one-step forecasts ``Sigma_1 .. Sigma_{T-1}``, started from zero pre-sample
returns and a pre-sample covariance of ``alpha0 * I``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels as K
from .losses import LossKind, evaluate_loss
from .model import PD_EPS, GlobalParams, OrderSpec, filter_trace, kernel_arrays, model_masks, stationarity_check
from .network import NetworkTopology
from .panel import ReturnPanel
from .simulate import SimulationConfig, simulate

__all__ = [
    "FitConfig",
    "FitReport",
    "FitError",
    "DEFAULT_INIT",
    "default_init",
    "fitted_trace",
    "loss_value",
    "loss_gradient",
    "reference_loss",
    "fd_gradient",
    "fit",
    "ReplicationSummary",
    "replicate_fit",
    "rescale_variance",
    "riskmetrics",
    "fit_univariate_garch",
    "univariate_variance",
]

log = logging.getLogger(__name__)

DEFAULT_INIT = (0.05, 0.10, 0.50, 0.01, 0.01)


class FitError(ArithmeticError):
    """Loss or gradient left the finite range during fitting."""


@dataclass(frozen=True)
class FitConfig:
    """Optimiser settings.

    ``gradient="analytic"`` uses the forward-mode recursion; ``"fd"`` uses
    central differences with step ``grad_step * max(1, |theta_i|)``.
    """

    loss: LossKind = LossKind.NLL
    epochs: int = 500
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_step: float = 1e-5
    param_floor: float = 1e-6
    gradient: str = "analytic"
    tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.gradient not in ("analytic", "fd"):
            raise ValueError("gradient must be 'analytic' or 'fd'")
        if not self.param_floor > 0:
            raise ValueError("param_floor must be > 0")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss.value,
            "epochs": self.epochs,
            "lr": self.lr,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "grad_step": self.grad_step,
            "param_floor": self.param_floor,
            "gradient": self.gradient,
            "tol": self.tol,
        }


@dataclass
class FitReport:
    theta_hat: GlobalParams
    orders: OrderSpec
    loss_kind: LossKind
    loss_curve: np.ndarray
    grad_norms: np.ndarray
    converged: bool
    final_loss: float
    final_grad_norm: float
    best_loss: float
    n_repairs: int = 0
    warnings: list = field(default_factory=list)
    initial_loss: float = float("nan")

    def to_dict(self) -> dict:
        holds, margin = stationarity_check(self.theta_hat)
        return {
            "loss": self.loss_kind.value,
            "orders": self.orders.to_dict(),
            "params": self.theta_hat.to_dict(),
            "param_names": self.orders.param_names(),
            "theta": self.theta_hat.to_vector().tolist(),
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "best_loss": self.best_loss,
            "converged": self.converged,
            "final_grad_norm": self.final_grad_norm,
            "n_repairs": self.n_repairs,
            "stationary": holds,
            "stationarity_margin": margin,
            "warnings": list(self.warnings),
            "loss_curve": self.loss_curve.tolist(),
            "grad_norms": self.grad_norms.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FitReport":
        orders = OrderSpec.from_dict(doc["orders"])
        return cls(
            theta_hat=GlobalParams.from_dict(doc["params"]),
            orders=orders,
            loss_kind=LossKind.parse(doc["loss"]),
            loss_curve=np.asarray(doc["loss_curve"], dtype=float),
            grad_norms=np.asarray(doc.get("grad_norms", []), dtype=float),
            converged=bool(doc["converged"]),
            final_loss=float(doc["final_loss"]),
            final_grad_norm=float(doc["final_grad_norm"]),
            best_loss=float(doc["best_loss"]),
            n_repairs=int(doc.get("n_repairs", 0)),
            warnings=list(doc.get("warnings", [])),
            initial_loss=float(doc.get("initial_loss", "nan")),
        )


def default_init(orders: OrderSpec) -> GlobalParams:
    """Starting point: 0.05 for alpha0, 0.10 / 0.50 for the own ARCH / GARCH
    coefficients (split evenly over lags) and 0.01 for every network term."""
    a = DEFAULT_INIT[1] / orders.q
    g = DEFAULT_INIT[2] / orders.p if orders.p else 0.0
    return GlobalParams(
        DEFAULT_INIT[0],
        [a] * orders.q,
        [g] * orders.p,
        [[DEFAULT_INIT[3]] * s for s in orders.s],
        [[DEFAULT_INIT[4]] * r for r in orders.rp],
    )


def _as_X(panel) -> np.ndarray:
    X = panel.X if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=float)
    if X.ndim != 2:
        raise ValueError("panel must be two-dimensional")
    return np.ascontiguousarray(X)


def _param_codes(orders: OrderSpec):
    kinds, lags, stages = [K.K_ALPHA0], [0], [0]
    for k in range(orders.q):
        kinds.append(K.K_ALPHA), lags.append(k), stages.append(0)
    for l in range(orders.p):
        kinds.append(K.K_GAMMA), lags.append(l), stages.append(0)
    for k, s in enumerate(orders.s):
        for r in range(s):
            kinds.append(K.K_BETA), lags.append(k), stages.append(r)
    for l, s in enumerate(orders.rp):
        for r in range(s):
            kinds.append(K.K_DELTA), lags.append(l), stages.append(r)
    as_arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return as_arr(kinds), as_arr(lags), as_arr(stages)


_LOSS_CODE = {LossKind.MSE: K.MSE, LossKind.QLIKE: K.QLIKE, LossKind.NLL: K.NLL}


class _Objective:
    """Loss and analytic gradient over the flat parameter vector."""

    def __init__(self, X, orders: OrderSpec, masks, loss: LossKind):
        if X.shape[0] < max(2, orders.max_lag + 1):
            raise ValueError(f"panel length {X.shape[0]} too short for orders with max lag {orders.max_lag}")
        self.X = X
        self.orders = orders
        self.masks = np.ascontiguousarray(masks, dtype=float)
        self.loss = loss
        self.codes = _param_codes(orders)

    def __call__(self, theta, want_grad: bool = True):
        params = GlobalParams.from_vector(theta, self.orders)
        a0, apos, _, _, gamma, beta, delta = kernel_arrays(params, self.orders, self.masks.shape[0])
        value, grad, n_rep = K.loss_grad_kernel(
            self.X, a0, apos, gamma, beta, delta, self.masks, *self.codes, _LOSS_CODE[self.loss], want_grad, PD_EPS
        )
        return float(value), grad.copy(), int(n_rep)


def fitted_trace(params: GlobalParams, orders: OrderSpec, topology: NetworkTopology, panel, backend="numba") -> np.ndarray:
    """Assembled one-step forecasts aligned with ``panel`` columns ``1 .. T-1``."""
    X = _as_X(panel)
    _, sig = filter_trace(params, orders, model_masks(topology, orders), X, backend=backend)
    return sig[:-1]


def loss_value(params: GlobalParams, orders: OrderSpec, topology: NetworkTopology, panel, loss) -> float:
    obj = _Objective(_as_X(panel), orders, model_masks(topology, orders), LossKind.parse(loss))
    return obj(params.to_vector(), want_grad=False)[0]


def reference_loss(params: GlobalParams, orders: OrderSpec, topology: NetworkTopology, panel, loss) -> float:
    """Same quantity as :func:`loss_value` through the step-by-step numpy path."""
    trace = fitted_trace(params, orders, topology, panel, backend="python")
    return evaluate_loss(loss, _as_X(panel), trace)


def loss_gradient(params: GlobalParams, orders: OrderSpec, topology: NetworkTopology, panel, loss) -> np.ndarray:
    """Gradient of the chosen loss over the flat parameter vector.

    The ordering is ``orders.param_names()``. Raises :class:`FitError` if
    the loss is not finite at ``params``.
    """
    obj = _Objective(_as_X(panel), orders, model_masks(topology, orders), LossKind.parse(loss))
    value, grad, _ = obj(params.to_vector())
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise FitError(f"loss is not finite at {params.to_vector().tolist()}")
    return grad


def fd_gradient(fun, theta, rel_step: float = 1e-5) -> np.ndarray:
    """Central finite differences with step ``rel_step * max(1, |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (fun(up) - fun(dn)) / (2 * h)
    return g


def _project(theta, floor):
    out = np.maximum(theta, 0.0)
    out[0] = max(out[0], floor)
    return out


def _projected_norm(theta, grad, floor) -> float:
    # components pushing against an active bound do not count
    g = grad.copy()
    lower = np.zeros_like(theta)
    lower[0] = floor
    g[(theta <= lower) & (g > 0)] = 0.0
    return float(np.linalg.norm(g))


def fit(panel, orders: OrderSpec, topology: NetworkTopology, config: FitConfig = FitConfig(), init: GlobalParams | None = None) -> FitReport:
    """Adam on the chosen loss with projection onto the feasible set after each step.

    ``loss_curve[e]`` is the loss after epoch ``e + 1``; ``theta_hat`` is the
    final iterate. ``converged`` records whether the final loss is within
    ``config.tol`` of the best loss seen.
    """
    init = default_init(orders) if init is None else init
    init.check_orders(orders)
    init.validate()
    X = _as_X(panel)
    if X.shape[1] != topology.d:
        raise ValueError(f"panel has {X.shape[1]} nodes but the network has {topology.d}")
    obj = _Objective(X, orders, model_masks(topology, orders), config.loss)

    if config.gradient == "fd":
        def evaluate(th):
            value, _, n_rep = obj(th, want_grad=False)
            g = fd_gradient(lambda z: obj(z, want_grad=False)[0], th, config.grad_step)
            return value, g, n_rep
    else:
        evaluate = obj

    theta = _project(init.to_vector(), config.param_floor)
    value, grad, n_rep = evaluate(theta)
    _check_finite(value, grad, theta, 0)
    initial = value
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = config.adam_beta1, config.adam_beta2
    curve = np.empty(config.epochs)
    norms = np.empty(config.epochs)
    for e in range(1, config.epochs + 1):
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1**e)
        vhat = v / (1 - b2**e)
        theta = _project(theta - config.lr * mhat / (np.sqrt(vhat) + config.adam_eps), config.param_floor)
        value, grad, n_rep = evaluate(theta)
        _check_finite(value, grad, theta, e)
        curve[e - 1] = value
        norms[e - 1] = _projected_norm(theta, grad, config.param_floor)
        if log.isEnabledFor(logging.DEBUG) and (e % 50 == 0 or e == 1):
            log.debug("epoch %d loss %.8g theta %s", e, value, np.round(theta, 5).tolist())

    best = float(min(curve.min(), initial))
    theta_hat = GlobalParams.from_vector(theta, orders)
    warnings = []
    holds, margin = stationarity_check(theta_hat)
    if not holds:
        warnings.append(f"fitted coefficient sum {1 - margin:.4f} >= 1: stationarity condition not met")
    return FitReport(
        theta_hat=theta_hat,
        orders=orders,
        loss_kind=config.loss,
        loss_curve=curve,
        grad_norms=norms,
        converged=bool(curve[-1] - best <= config.tol),
        final_loss=float(curve[-1]),
        final_grad_norm=float(norms[-1]),
        best_loss=best,
        n_repairs=n_rep,
        warnings=warnings,
        initial_loss=float(initial),
    )


def _check_finite(value, grad, theta, epoch):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise FitError(f"non-finite loss at epoch {epoch}, theta = {np.asarray(theta).tolist()}")


# --- replication --------------------------------------------------------------


@dataclass
class ReplicationSummary:
    """Per-seed estimates and their mean / sample sd, per loss."""

    names: list
    truth: np.ndarray
    seeds: list
    estimates: dict  # loss value -> (n_ok, n_params) array
    ok_seeds: dict  # loss value -> list of seeds that fitted
    failures: dict  # loss value -> {seed: message}

    def mean(self, loss) -> np.ndarray:
        return self.estimates[LossKind.parse(loss).value].mean(axis=0)

    def sd(self, loss) -> np.ndarray:
        return self.estimates[LossKind.parse(loss).value].std(axis=0, ddof=1)

    def to_rows(self) -> list[dict]:
        rows = []
        for k, name in enumerate(self.names):
            row = {"parameter": name, "true": float(self.truth[k])}
            for loss, est in self.estimates.items():
                row[f"{loss}_mean"] = float(est[:, k].mean()) if len(est) else float("nan")
                row[f"{loss}_sd"] = float(est[:, k].std(ddof=1)) if len(est) > 1 else float("nan")
            rows.append(row)
        return rows

    def write_csv(self, path) -> None:
        import csv

        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def replicate_fit(
    orders: OrderSpec,
    topology: NetworkTopology,
    true_params: GlobalParams,
    seeds: Sequence[int],
    config: FitConfig | Sequence[FitConfig] = FitConfig(),
    sim: SimulationConfig = SimulationConfig(),
    init: GlobalParams | None = None,
) -> ReplicationSummary:
    """Simulate with each seed, fit every requested loss, summarise the estimates.

    A failure on one seed (divergent simulation or fit) is recorded under
    ``failures`` and the seed dropped from that loss's summary.
    """
    if len(seeds) < 2:
        raise ValueError("replication needs at least two seeds")
    configs = [config] if isinstance(config, FitConfig) else list(config)
    est = {c.loss.value: [] for c in configs}
    ok = {c.loss.value: [] for c in configs}
    fails = {c.loss.value: {} for c in configs}
    for seed in seeds:
        res = simulate(true_params, orders, topology, replace(sim, seed=int(seed)))
        for c in configs:
            if res.diverged:
                fails[c.loss.value][int(seed)] = f"simulation diverged at step {res.divergence_step}"
                continue
            try:
                rep = fit(res.panel(), orders, topology, c, init)
            except (FitError, ValueError) as exc:
                fails[c.loss.value][int(seed)] = str(exc)
                continue
            est[c.loss.value].append(rep.theta_hat.to_vector())
            ok[c.loss.value].append(int(seed))
    n = orders.n_params
    return ReplicationSummary(
        names=orders.param_names(),
        truth=true_params.to_vector(),
        seeds=[int(s) for s in seeds],
        estimates={k: np.array(v).reshape(-1, n) for k, v in est.items()},
        ok_seeds=ok,
        failures=fails,
    )


# --- baselines and rescaling ---------------------------------------------------


def rescale_variance(fitted_diag, panel, window: int = 252) -> np.ndarray:
    """Scale fitted variances to the level of squared returns in a rolling window.

    For ``t`` (0-based) at or past ``window - 1`` the ratio uses the trailing
    ``window`` observations ending at ``t``; earlier times reuse the ratio of
    the first window.

    Parameters
    ----------
    fitted_diag : array (d, T)
    panel : ReturnPanel or array (d, T)
    window : int
    """
    sig = np.asarray(fitted_diag, dtype=float)
    r = panel.values if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=float)
    if sig.ndim == 1:
        sig, r = sig[None, :], np.atleast_2d(r)
    if sig.shape != r.shape:
        raise ValueError(f"fitted variances {sig.shape} and returns {r.shape} differ in shape")
    if window < 1:
        raise ValueError("window must be >= 1")
    d, T = sig.shape
    if window > T:
        raise ValueError(f"window {window} exceeds the series length {T}")
    zeros = np.zeros((d, 1))
    cr = np.concatenate([zeros, np.cumsum(r * r, axis=1)], axis=1)
    cs = np.concatenate([zeros, np.cumsum(sig, axis=1)], axis=1)
    num = (cr[:, window:] - cr[:, :-window]) / window  # window ending at t = window-1 .. T-1
    den = (cs[:, window:] - cs[:, :-window]) / window
    if np.any(den <= 0):
        raise ValueError("rolling mean of fitted variances is not positive (degenerate fit)")
    c = np.empty((d, T))
    c[:, window - 1 :] = num / den
    c[:, : window - 1] = c[:, [window - 1]]
    return c * sig


def riskmetrics(panel, lam: float = 0.94, window: int = 252, initial=None) -> np.ndarray:
    """Exponentially weighted variance recursion.

    ``s2[t] = lam * s2[t-1] + (1 - lam) * r[t-1]^2`` with ``s2[0]`` the sample
    variance of the first ``window`` returns (or ``initial``).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    r = panel.values if isinstance(panel, ReturnPanel) else np.atleast_2d(np.asarray(panel, dtype=float))
    d, T = r.shape
    if initial is None:
        w = min(window, T)
        if w < 2:
            raise ValueError("need at least two returns to initialise the variance")
        s0 = np.var(r[:, :w], axis=1, ddof=1)
    else:
        s0 = np.broadcast_to(np.asarray(initial, dtype=float), (d,))
    out = np.empty((d, T))
    out[:, 0] = s0
    for t in range(1, T):
        out[:, t] = lam * out[:, t - 1] + (1 - lam) * r[:, t - 1] ** 2
    return out


_GARCH11 = OrderSpec(p=1, q=1, s=(0,), rp=(0,))


def fit_univariate_garch(series, config: FitConfig = FitConfig(), init: GlobalParams | None = None) -> FitReport:
    """GARCH(1, 1) fit of one series: the one-node, network-free case of :func:`fit`."""
    x = np.asarray(series, dtype=float).ravel()
    if init is None:
        init = GlobalParams(DEFAULT_INIT[0], (DEFAULT_INIT[1],), (DEFAULT_INIT[2],), ((),), ((),))
    return fit(x[:, None], _GARCH11, NetworkTopology.edgeless(1), config, init)


def univariate_variance(params: GlobalParams, series) -> np.ndarray:
    """In-sample conditional variances ``sigma^2_1 .. sigma^2_T`` of a GARCH(1, 1) fit."""
    x = np.asarray(series, dtype=float).ravel()
    h, _ = filter_trace(params, _GARCH11, np.zeros((0, 1, 1)), x[:, None])
    return h[:, 0]
