import numpy as np
import pytest

from gngarch.market import PricePanel, coc_network, log_returns, monthly_correlations, read_price_csv, simple_returns
from gngarch.panel import ReturnPanel, read_cov_trace, read_panel_csv, write_cov_trace, write_panel_csv


def _dates(n, start="2021-01-01"):
    return np.arange(np.datetime64(start), np.datetime64(start) + n)


def test_log_and_simple_returns():
    p = PricePanel(np.array([[100.0, 110.0]]), ("A",), _dates(2))
    assert log_returns(p).values[0, 0] == pytest.approx(np.log(1.1))
    assert simple_returns(p).values[0, 0] == pytest.approx(0.10)
    flat = PricePanel(np.full((2, 5), 7.0), ("A", "B"), _dates(5))
    assert np.all(log_returns(flat).values == 0) and np.all(simple_returns(flat).values == 0)


def test_returns_invert_to_prices():
    rng = np.random.default_rng(0)
    P = 50 * np.exp(np.cumsum(0.02 * rng.standard_normal((3, 30)), axis=1))
    r = log_returns(PricePanel(P, (), _dates(30)))
    np.testing.assert_allclose(P[:, [0]] * np.exp(np.cumsum(r.values, axis=1)), P[:, 1:], rtol=1e-12)
    assert np.array_equal(r.times, _dates(30)[1:])


def test_log_simple_first_order_agreement():
    rng = np.random.default_rng(1)
    P = 100 * np.exp(np.cumsum(rng.uniform(-9e-4, 9e-4, (2, 50)), axis=1))
    p = PricePanel(P, (), _dates(50))
    assert np.max(np.abs(log_returns(p).values - simple_returns(p).values)) < 1e-6


def test_price_validation():
    with pytest.raises(ValueError):
        log_returns(PricePanel(np.array([[1.0, 0.0]]), (), _dates(2)))
    with pytest.raises(ValueError):
        PricePanel(np.ones((1, 2)), (), np.array(["2021-01-02", "2021-01-01"], dtype="datetime64[D]"))


def test_price_csv(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("date,AAA,BBB\n2021-01-04,10,20\n2021-01-05,11,19\n")
    p = read_price_csv(path)
    assert p.tickers == ("AAA", "BBB") and p.prices.shape == (2, 2)
    bad = tmp_path / "bad.csv"
    bad.write_text("date,AAA\n01/04/2021,10\n")
    with pytest.raises(ValueError):
        read_price_csv(bad)


def _block_panel(seed, d=10, n_days=365, rho=0.8):
    rng = np.random.default_rng(seed)
    blocks = np.r_[np.zeros(d // 2, int), np.ones(d - d // 2, int)]
    f = rng.standard_normal((2, n_days))
    X = np.sqrt(rho) * f[blocks] + np.sqrt(1 - rho) * rng.standard_normal((d, n_days))
    return ReturnPanel(X, (), _dates(n_days)), blocks


def test_coc_two_blocks():
    for seed in range(5):
        panel, blocks = _block_panel(seed)
        top, R = coc_network(panel, threshold_quantile=0.70)
        assert len(top.edges) > 0
        intra = sum(blocks[i] == blocks[j] for i, j in top.edges)
        assert intra / len(top.edges) >= 0.95
        np.testing.assert_array_equal(R, R.T)
        assert np.all(np.diag(R) == 1.0)


def test_coc_perfect_pair():
    rng = np.random.default_rng(2)
    n = 120
    a = rng.standard_normal(n)
    X = np.vstack([a, 2 * a, rng.standard_normal(n)])
    top, _ = coc_network(ReturnPanel(X, ("x", "y", "z"), _dates(n)), threshold_quantile=0.70)
    assert top.edges == frozenset({(0, 1)})


def test_coc_edge_count_and_limit():
    panel, _ = _block_panel(3, d=12)
    top, _ = coc_network(panel, threshold_quantile=0.70)
    assert abs(len(top.edges) - 0.3 * 66) <= 1
    counts = [len(coc_network(panel, threshold_quantile=q)[0].edges) for q in (0.5, 0.9, 0.99, 0.999999)]
    assert counts == sorted(counts, reverse=True)
    # above the second-largest order statistic only the unique maximum can clear the strict threshold
    assert counts[-1] <= 1
    with pytest.raises(ValueError):
        coc_network(panel, threshold_quantile=1.0)


def test_coc_skips_constant_stock_months():
    rng = np.random.default_rng(4)
    n = 59  # January and February 2021
    X = rng.standard_normal((3, n))
    X[2, :31] = 0.0  # constant during January
    months = list(monthly_correlations(ReturnPanel(X, (), _dates(n))))
    assert not months[0][2][0, 2] and months[1][2][0, 2]
    _, R = coc_network(ReturnPanel(X, (), _dates(n)))
    assert R[0, 2] == pytest.approx(abs(months[1][1][0, 2]))


def test_short_month_is_an_error():
    X = np.random.default_rng(5).standard_normal((2, 33))
    with pytest.raises(ValueError):
        coc_network(ReturnPanel(X, (), _dates(33)))  # two days of February


def test_panel_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    p = ReturnPanel(rng.standard_normal((3, 7)), ("a", "b", "c"), np.arange(1, 8))
    path = tmp_path / "panel.csv"
    write_panel_csv(path, p)
    back = read_panel_csv(path)
    np.testing.assert_array_equal(back.values, p.values)
    assert back.labels == p.labels


def test_panel_validation():
    with pytest.raises(ValueError):
        ReturnPanel(np.array([[1.0, np.nan]]))
    p = ReturnPanel(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        p.values[0, 0] = 1.0


def test_cov_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    A = rng.standard_normal((4, 3, 3))
    S = A @ A.transpose(0, 2, 1)
    path = tmp_path / "cov.csv"
    write_cov_trace(path, S, np.arange(10, 14))
    times, back = read_cov_trace(path)
    np.testing.assert_array_equal(back, S)
    assert list(times) == [10, 11, 12, 13]
