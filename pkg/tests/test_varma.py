import numpy as np
import pytest
from scipy import sparse

from conftest import EXAMPLE_EDGES, random_graph
from gngarch.model import GlobalParams, OrderSpec, model_masks
from gngarch.network import NetworkTopology, connection_weights, from_edges, stage_neighborhoods
from gngarch.simulate import SimulationConfig, simulate
from gngarch.varma import (
    TransferMatrices,
    build_T,
    build_T_all,
    build_transfer,
    pair_index,
    tau,
    tau_inverse,
    vechl,
    verify_varma_identity,
    write_transfer_csv,
)

TRUE = GlobalParams.gngarch11(0.05, 0.20, 0.60, 0.05, 0.05)
O11 = OrderSpec()


def test_vechl_small():
    assert vechl(np.array([[1.0, 2.0], [3.0, 4.0]])).tolist() == [3.0]
    with pytest.raises(ValueError):
        vechl(np.zeros((2, 3)))


def test_vechl_ordering_of_outer_product():
    x = np.array([2.0, 3.0, 5.0, 7.0])
    v = vechl(np.outer(x, x))
    X1, X2, X3, X4 = x
    np.testing.assert_array_equal(v, [X2 * X1, X3 * X1, X4 * X1, X3 * X2, X4 * X2, X4 * X3])


def test_vechl_is_linear():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(2, 9))
        A, B = rng.standard_normal((2, d, d))
        np.testing.assert_allclose(vechl(A + B), vechl(A) + vechl(B), rtol=0, atol=1e-15)


def test_tau_examples():
    assert tau(4, 2, 1) == 1
    assert tau(4, 3, 2) == 4
    assert tau(4, 4, 3) == 6
    for d in range(2, 10):
        assert tau(d, 2, 1) == 1
    with pytest.raises(ValueError):
        tau(4, 2, 2)
    with pytest.raises(ValueError):
        tau(4, 5, 1)


@pytest.mark.parametrize("d", range(2, 51))
def test_tau_is_a_bijection(d):
    D = d * (d - 1) // 2
    values = [tau(d, m, n) for n in range(1, d) for m in range(n + 1, d + 1)]
    assert sorted(values) == list(range(1, D + 1))
    # column-major enumeration order is the identity
    assert values == list(range(1, D + 1))
    for k in range(1, D + 1):
        m, n = tau_inverse(d, k)
        assert tau(d, m, n) == k


def test_pair_index_matches_vechl_positions():
    d = 6
    M = np.arange(d * d, dtype=float).reshape(d, d)
    v = vechl(M)
    for i in range(d):
        for j in range(d):
            if i != j:
                assert v[pair_index(d, i, j)] == M[max(i, j), min(i, j)]


def test_T1_golden(example_graph):
    W = connection_weights(stage_neighborhoods(example_graph, 1))
    w = lambda i, j: W[i - 1, j - 1]  # noqa: E731  (1-based as printed)
    expected = np.array(
        [
            [0, 0, w(2, 4), w(1, 3), w(1, 4), 0],
            [0, 0, w(3, 4), w(1, 2), 0, w(1, 4)],
            [w(4, 2), w(4, 3), 0, 0, w(1, 2), w(1, 3)],
            [w(3, 1), w(2, 1), 0, 0, w(3, 4), w(2, 4)],
            [w(4, 1), 0, w(2, 1), w(4, 3), 0, 0],
            [0, w(4, 1), w(3, 1), w(4, 2), 0, 0],
        ]
    )
    T1 = build_T(example_graph, W, 1)
    assert sparse.issparse(T1)
    np.testing.assert_array_equal(T1.toarray(), expected)


def test_T_edgeless_is_zero():
    top = NetworkTopology.edgeless(5)
    W = connection_weights(stage_neighborhoods(top, 2))
    assert build_T(top, W, 1).nnz == 0


def _brute_pair_sum(top, W, r, x, nb):
    d = top.d
    out = np.zeros(d * (d - 1) // 2)
    for j in range(d):
        for i in range(j + 1, d):
            s = sum(W[i, u] * x[u] * x[j] for u in nb.stage(r)[i] if u != j)
            s += sum(W[j, v] * x[i] * x[v] for v in nb.stage(r)[j] if v != i)
            out[pair_index(d, i, j)] = s
    return out


def test_T_matches_direct_sums():
    rng = np.random.default_rng(1)
    for _ in range(40):
        d = int(rng.integers(2, 7))
        top = random_graph(rng, d, 0.5)
        r_max = 3
        nb = stage_neighborhoods(top, r_max)
        W = connection_weights(nb)
        x = rng.standard_normal(d)
        vX = vechl(np.outer(x, x))
        for r in range(1, r_max + 1):
            T = build_T(top, W, r)
            assert np.max(np.diff(T.indptr)) <= 2 * (d - 1)
            np.testing.assert_allclose(T @ vX, _brute_pair_sum(top, W, r, x, nb), rtol=1e-14, atol=1e-15)


def test_transfer_single_lag_and_zero_network(example_graph):
    masks = model_masks(example_graph, O11)
    W = connection_weights(stage_neighborhoods(example_graph, 1))
    Tr = build_T_all(example_graph, W, 1)
    tm = build_transfer(TRUE, O11, masks, Tr)
    np.testing.assert_allclose(tm.Psi[0], tm.Phi[0] + tm.Theta[0])
    np.testing.assert_allclose(tm.Omega[0].toarray(), (tm.Pi[0] + tm.Lambda[0]).toarray())
    np.testing.assert_allclose(tm.Phi[0], 0.20 * np.eye(4) + 0.05 * masks[0], rtol=0, atol=1e-16)
    tm0 = build_transfer(GlobalParams.gngarch11(0.05, 0.2, 0.6, 0.0, 0.0), O11, masks, Tr)
    np.testing.assert_array_equal(tm0.Phi[0], 0.2 * np.eye(4))
    np.testing.assert_array_equal(tm0.Pi[0].toarray(), 0.2 * np.eye(6))


def test_transfer_lag_rule():
    top = from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    o = OrderSpec(p=1, q=3, s=(1, 0, 2), rp=(1,))
    p = GlobalParams(0.05, (0.1, 0.05, 0.03), (0.5,), ((0.02,), (), (0.01, 0.01)), ((0.02,),))
    masks = model_masks(top, o)
    Tr = build_T_all(top, connection_weights(stage_neighborhoods(top, 2)), 2)
    tm = build_transfer(p, o, masks, Tr)
    assert len(tm.Psi) == 3
    np.testing.assert_allclose(tm.Psi[0], tm.Phi[0] + tm.Theta[0])
    np.testing.assert_array_equal(tm.Psi[1], tm.Phi[1])
    np.testing.assert_array_equal(tm.Psi[2], tm.Phi[2])
    o2 = OrderSpec(p=3, q=1, s=(1,), rp=(1, 0, 1))
    p2 = GlobalParams(0.05, (0.1,), (0.3, 0.1, 0.1), ((0.02,),), ((0.02,), (), (0.01,)))
    tm2 = build_transfer(p2, o2, model_masks(top, o2), Tr)
    np.testing.assert_array_equal(tm2.Psi[2], tm2.Theta[2])
    np.testing.assert_array_equal(tm2.Omega[1].toarray(), tm2.Lambda[1].toarray())


def _sim_transfer(params, orders, top, seed=0, T_total=600):
    res = simulate(params, orders, top, SimulationConfig(T_total=T_total, seed=seed))
    assert not res.diverged
    W = connection_weights(stage_neighborhoods(top, max(orders.max_stage, 1)))
    tm = build_transfer(params, orders, model_masks(top, orders), build_T_all(top, W, orders.max_stage))
    return res, tm


@pytest.mark.parametrize(
    "orders,params",
    [
        (O11, TRUE),
        (OrderSpec(p=2, q=2, s=(2, 1), rp=(1, 2)), GlobalParams(0.05, (0.1, 0.05), (0.4, 0.2), ((0.03, 0.02), (0.01,)), ((0.02,), (0.01, 0.01)))),
        (OrderSpec(p=0, q=2, s=(1, 1), rp=()), GlobalParams(0.1, (0.3, 0.2), (), ((0.05,), (0.05,)), ())),
    ],
)
def test_varma_identities_hold_on_simulated_paths(orders, params):
    top = from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)])
    res, tm = _sim_transfer(params, orders, top)
    rv, rc = verify_varma_identity(res.returns, res.h, res.sigma, tm)
    assert rv < 1e-8 and rc < 1e-8


def test_constant_only_model_identity():
    top = from_edges(3, [(0, 1), (1, 2)])
    p = GlobalParams.gngarch11(0.3, 0.0, 0.0, 0.0, 0.0)
    res, tm = _sim_transfer(p, O11, top, T_total=200)
    eta = res.returns**2 - res.h
    np.testing.assert_allclose(res.returns**2, 0.3 + eta, rtol=0, atol=1e-15)
    rv, rc = verify_varma_identity(res.returns, res.h, res.sigma, tm)
    assert rv < 1e-12 and rc < 1e-12


def test_perturbed_transfer_is_detected():
    top = from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)])
    res, tm = _sim_transfer(TRUE, O11, top)
    Psi = [tm.Psi[0].copy()]
    Psi[0][0, 0] += 0.01
    bad = TransferMatrices(tm.Phi, tm.Theta, Psi, tm.Pi, tm.Lambda, tm.Omega, tm.Tr, tm.alpha0)
    rv, _ = verify_varma_identity(res.returns, res.h, res.sigma, bad)
    expected = 0.01 * np.max(res.returns[:-1, 0] ** 2)
    assert rv == pytest.approx(expected, rel=1e-6)


def test_identity_shape_mismatch():
    top = from_edges(3, [(0, 1), (1, 2)])
    res, tm = _sim_transfer(TRUE, O11, top, T_total=100)
    with pytest.raises(ValueError):
        verify_varma_identity(res.returns, res.h[:-1], res.sigma, tm)


def test_transfer_csv_export(tmp_path, example_graph):
    W = connection_weights(stage_neighborhoods(example_graph, 1))
    tm = build_transfer(TRUE, O11, model_masks(example_graph, O11), build_T_all(example_graph, W, 1))
    files = write_transfer_csv(tmp_path, tm)
    names = {f.name for f in files}
    assert {"Phi_1.csv", "Psi_1.csv", "T_1.csv", "Omega_1.csv"} <= names
