import numpy as np
import pytest

from conftest import random_graph
from gngarch import _kernels as K
from gngarch.estimation import (
    FitConfig,
    FitError,
    FitReport,
    fd_gradient,
    fit,
    fit_univariate_garch,
    fitted_trace,
    loss_gradient,
    loss_value,
    reference_loss,
    replicate_fit,
    rescale_variance,
    riskmetrics,
    univariate_variance,
)
from gngarch.losses import LossKind, loss_nll
from gngarch.model import GlobalParams, OrderSpec
from gngarch.network import NetworkTopology, from_edges, simulation_topology
from gngarch.simulate import SimulationConfig, simulate

TRUE = GlobalParams.gngarch11(0.05, 0.20, 0.60, 0.05, 0.05)
O11 = OrderSpec()
UNI = OrderSpec(1, 1, (0,), (0,))


def _agrees(g, fd, rel=1e-4):
    return np.all(np.abs(g - fd) <= rel * np.abs(fd) + 1e-12)


# --- gradients -----------------------------------------------------------------------


def test_kernel_loss_matches_reference_path():
    rng = np.random.default_rng(0)
    top = random_graph(rng, 4, 0.6)
    X = rng.standard_normal((40, 4))
    for loss in ("mse", "qlike", "nll"):
        assert loss_value(TRUE, O11, top, X, loss) == pytest.approx(reference_loss(TRUE, O11, top, X, loss), rel=1e-12)


@pytest.mark.parametrize("loss", ["mse", "qlike", "nll"])
def test_gradient_matches_finite_differences(loss):
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 10:
        d = int(rng.integers(2, 6))
        top = random_graph(rng, d, 0.5)
        o = O11
        th = np.r_[rng.uniform(0.01, 0.1), rng.uniform(0.1, 0.3), rng.uniform(0.3, 0.6), rng.uniform(0, 0.1, 2)]
        X = rng.standard_normal((int(rng.integers(30, 80)), d))
        p = GlobalParams.from_vector(th, o)
        if loss != "mse" and loss_nll(X, fitted_trace(p, o, top, X), return_repairs=True)[1]:
            continue  # repaired steps are covered separately below
        g = loss_gradient(p, o, top, X, loss)
        fd = fd_gradient(lambda t: reference_loss(GlobalParams.from_vector(t, o), o, top, X, loss), th)
        assert _agrees(g, fd), (g, fd)
        checked += 1


def test_gradient_higher_orders():
    rng = np.random.default_rng(18)
    top = from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    o = OrderSpec(p=2, q=2, s=(2, 1), rp=(1, 2))
    p = GlobalParams(0.05, (0.15, 0.05), (0.4, 0.1), ((0.03, 0.02), (0.01,)), ((0.02,), (0.01, 0.01)))
    X = rng.standard_normal((60, 5))
    for loss in ("mse", "nll"):
        g = loss_gradient(p, o, top, X, loss)
        fd = fd_gradient(lambda t: reference_loss(GlobalParams.from_vector(t, o), o, top, X, loss), p.to_vector())
        assert _agrees(g, fd)


def test_clip_pullback_matches_finite_differences():
    rng = np.random.default_rng(19)
    eps = 0.05
    for _ in range(20):
        d = int(rng.integers(2, 6))
        A = rng.standard_normal((d, d))
        A = (A + A.T) / 2
        G = rng.standard_normal((d, d))
        G = (G + G.T) / 2
        E = rng.standard_normal((d, d))
        E = (E + E.T) / 2

        def f(t):
            lam, V = np.linalg.eigh(A + t * E)
            return float(np.sum(G * ((V * np.maximum(lam, eps)) @ V.T)))

        h = 1e-6
        fd = (f(h) - f(-h)) / (2 * h)
        an = float(np.sum(K._clip_pullback(A, G, eps) * E))
        assert an == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_mse_alpha0_gradient_closed_form():
    # zero slopes: every forecast equals alpha0, so dL/dalpha0 = -2 mean(x_t^2 - alpha0)
    rng = np.random.default_rng(20)
    x = rng.standard_normal(50)
    a0 = 0.7
    p = GlobalParams(a0, (0.0,), (0.0,), ((),), ((),))
    g = loss_gradient(p, UNI, NetworkTopology.edgeless(1), x[:, None], "mse")
    assert g[0] == pytest.approx(-2 * np.mean(x[1:] ** 2 - a0), rel=1e-12)


def test_gradient_vanishes_at_least_squares_minimum():
    # ARCH(1) forecasts are linear in (alpha0, alpha1), so the MSE minimiser is an OLS fit
    rng = np.random.default_rng(21)
    x = rng.standard_normal(200) * np.sqrt(1 + 0.5 * rng.random(200))
    o = OrderSpec(p=0, q=1, s=(0,), rp=())
    y = x[1:] ** 2
    Z = np.column_stack([np.ones(199), x[:-1] ** 2])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    assert np.all(coef > 0)
    p = GlobalParams(coef[0], (coef[1],), (), ((),), ())
    g = loss_gradient(p, o, NetworkTopology.edgeless(1), x[:, None], "mse")
    assert np.linalg.norm(g) < 1e-6


def test_gradient_raises_on_non_finite():
    x = np.array([[0.0], [1e200], [1e200]])
    p = GlobalParams(0.05, (0.2,), (0.6,), ((),), ((),))
    with pytest.raises(FitError):
        loss_gradient(p, UNI, NetworkTopology.edgeless(1), x, "mse")


# --- fitting -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def short_sim():
    res = simulate(TRUE, O11, simulation_topology(), SimulationConfig(T_total=500, seed=3))
    return res.panel()


def test_fit_is_deterministic_and_feasible(short_sim):
    cfg = FitConfig(loss="mse", epochs=40)
    a = fit(short_sim, O11, simulation_topology(), cfg)
    b = fit(short_sim, O11, simulation_topology(), cfg)
    assert a.to_dict() == b.to_dict()
    assert np.all(np.isfinite(a.loss_curve)) and a.loss_curve.size == 40
    th = a.theta_hat.to_vector()
    assert th[0] >= cfg.param_floor and np.all(th >= 0)


def test_fit_lowers_loss(short_sim):
    rep = fit(short_sim, O11, simulation_topology(), FitConfig(loss="nll", epochs=60))
    assert rep.final_loss < rep.initial_loss
    assert rep.best_loss <= rep.final_loss


def test_fit_report_roundtrip(short_sim):
    rep = fit(short_sim, O11, simulation_topology(), FitConfig(loss="mse", epochs=5))
    back = FitReport.from_dict(rep.to_dict())
    assert back.theta_hat == rep.theta_hat
    np.testing.assert_array_equal(back.loss_curve, rep.loss_curve)
    assert back.converged == rep.converged


def test_fd_and_analytic_fits_agree(short_sim):
    a = fit(short_sim, O11, simulation_topology(), FitConfig(loss="mse", epochs=20))
    b = fit(short_sim, O11, simulation_topology(), FitConfig(loss="mse", epochs=20, gradient="fd"))
    np.testing.assert_allclose(a.theta_hat.to_vector(), b.theta_hat.to_vector(), atol=1e-6)


def test_qlike_and_nll_fits_coincide():
    rng = np.random.default_rng(22)
    top = from_edges(3, [(0, 1), (1, 2)])
    X = rng.standard_normal((150, 3)) * 0.8
    a = fit(X, O11, top, FitConfig(loss="qlike", epochs=50))
    b = fit(X, O11, top, FitConfig(loss="nll", epochs=50))
    np.testing.assert_allclose(a.theta_hat.to_vector(), b.theta_hat.to_vector(), atol=1e-6)


def test_edgeless_network_terms_stay_small():
    p = GlobalParams.gngarch11(0.05, 0.2, 0.6, 0.0, 0.0)
    top = NetworkTopology.edgeless(3)
    res = simulate(p, O11, top, SimulationConfig(T_total=800, seed=1))
    rep = fit(res.panel(), O11, top, FitConfig(loss="nll", epochs=150))
    th = rep.theta_hat.to_vector()
    assert th[3] <= 0.05 and th[4] <= 0.05


def test_stationarity_warning():
    rng = np.random.default_rng(23)
    x = rng.standard_normal((120, 1))
    init = GlobalParams(0.01, (0.5,), (0.6,), ((),), ((),))
    rep = fit(x, UNI, NetworkTopology.edgeless(1), FitConfig(loss="mse", epochs=1, lr=1e-9), init)
    assert any("stationarity" in w for w in rep.warnings)


def test_fit_rejects_mismatched_panel():
    with pytest.raises(ValueError):
        fit(np.zeros((10, 3)), O11, simulation_topology(), FitConfig(epochs=1))


def test_replicate_single_seed_reproduces_fit():
    sim = SimulationConfig(T_total=300)
    cfg = FitConfig(loss="mse", epochs=15)
    summary = replicate_fit(O11, simulation_topology(), TRUE, [0, 1], cfg, sim)
    direct = fit(simulate(TRUE, O11, simulation_topology(), sim).panel(), O11, simulation_topology(), cfg)
    np.testing.assert_array_equal(summary.estimates["mse"][0], direct.theta_hat.to_vector())
    rows = summary.to_rows()
    assert [r["parameter"] for r in rows] == O11.param_names()
    assert set(rows[0]) == {"parameter", "true", "mse_mean", "mse_sd"}


def test_replicate_records_failures():
    bad = GlobalParams.gngarch11(0.06, 0.40, 0.55, 0.10, 0.10)
    summary = replicate_fit(O11, simulation_topology(), bad, [0, 1], FitConfig(loss="mse", epochs=2))
    assert len(summary.failures["mse"]) == 2


# --- univariate baseline -------------------------------------------------------------


def test_univariate_garch_recovery():
    p = GlobalParams(0.05, (0.2,), (0.6,), ((),), ((),))
    res = simulate(p, UNI, NetworkTopology.edgeless(1), SimulationConfig(seed=0))
    rep = fit_univariate_garch(res.returns[:, 0])
    np.testing.assert_allclose(rep.theta_hat.to_vector(), [0.05, 0.2, 0.6], atol=0.1)


def test_univariate_is_one_node_fit():
    rng = np.random.default_rng(24)
    x = rng.standard_normal(200)
    cfg = FitConfig(epochs=30)
    a = fit_univariate_garch(x, cfg)
    init = GlobalParams(0.05, (0.10,), (0.50,), ((),), ((),))
    b = fit(x[:, None], UNI, NetworkTopology.edgeless(1), cfg, init)
    assert a.to_dict() == b.to_dict()
    h = univariate_variance(a.theta_hat, x)
    np.testing.assert_array_equal(h[:-1], fitted_trace(a.theta_hat, UNI, NetworkTopology.edgeless(1), x[:, None])[:, 0, 0])


def test_constant_series_fits_the_level():
    # the MSE minimiser is not unique here: any alpha0 + (alpha1 + gamma1) c^2 = c^2 fits
    c = 1.3
    x = np.full(300, c)
    rep = fit_univariate_garch(x, FitConfig(loss="mse", epochs=2000))
    a0, a1, g1 = rep.theta_hat.to_vector()
    assert a0 + (a1 + g1) * c**2 == pytest.approx(c**2, rel=1e-2)
    h = univariate_variance(rep.theta_hat, x)
    np.testing.assert_allclose(h[50:-1], c**2, rtol=1e-2)


# --- rescaling and RiskMetrics -------------------------------------------------------


def _rescale_loop(sig, r, window):
    d, T = sig.shape
    out = np.empty_like(sig)
    for i in range(d):
        first = np.mean(r[i, :window] ** 2) / np.mean(sig[i, :window])
        for t in range(T):
            if t >= window - 1:
                c = np.mean(r[i, t - window + 1 : t + 1] ** 2) / np.mean(sig[i, t - window + 1 : t + 1])
            else:
                c = first
            out[i, t] = c * sig[i, t]
    return out


def test_rescale_identity_and_half():
    rng = np.random.default_rng(25)
    r = rng.standard_normal((2, 100))
    np.testing.assert_allclose(rescale_variance(r**2, r, 20), r**2, rtol=1e-12)
    np.testing.assert_allclose(rescale_variance(2 * r**2, r, 20), r**2, rtol=1e-12)


def test_rescale_matches_loop():
    rng = np.random.default_rng(26)
    for _ in range(10):
        d, T = int(rng.integers(1, 4)), int(rng.integers(5, 80))
        w = int(rng.integers(1, T + 1))
        sig = rng.uniform(0.1, 2, (d, T))
        r = rng.standard_normal((d, T))
        np.testing.assert_allclose(rescale_variance(sig, r, w), _rescale_loop(sig, r, w), rtol=1e-10)


def test_rescale_degenerate():
    with pytest.raises(ValueError):
        rescale_variance(np.zeros((1, 10)), np.ones((1, 10)), 5)


def test_riskmetrics_examples():
    out = riskmetrics(np.array([[0.0, 1.0, 2.0]]), 0.94, initial=1.0)
    assert out[0, 1] == pytest.approx(0.94)
    c = 0.3
    out = riskmetrics(np.full((1, 2000), c), 0.94, initial=5.0)
    assert out[0, -1] == pytest.approx(c**2, rel=1e-10)
    rng = np.random.default_rng(27)
    r = rng.standard_normal((1, 50))
    out = riskmetrics(r, 1 - 1e-12, window=50)
    np.testing.assert_allclose(out[0], np.var(r[0], ddof=1), rtol=1e-9)


def test_riskmetrics_matches_loop():
    rng = np.random.default_rng(28)
    r = rng.standard_normal((3, 40))
    out = riskmetrics(r, 0.9, window=10)
    for i in range(3):
        s = np.var(r[i, :10], ddof=1)
        assert out[i, 0] == pytest.approx(s)
        for t in range(1, 40):
            s = 0.9 * s + 0.1 * r[i, t - 1] ** 2
            assert out[i, t] == pytest.approx(s, rel=1e-12)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(epochs=0)
    with pytest.raises(ValueError):
        FitConfig(lr=0)
    assert FitConfig(loss="MSE").loss is LossKind.MSE
