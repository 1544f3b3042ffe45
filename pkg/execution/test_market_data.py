import io

import numpy as np
import pytest

from errors import OrderingError, ParseError, PreconditionError, StructuralError
from market_data import (
    ReturnsPanel,
    WindowSpec,
    horizon_returns,
    load_returns,
    portfolio_return_series,
    write_returns,
)

CSV = b"date,AAA,BBB\n2020-01-03,0.01,0.02\n2020-01-10,-0.01,0.00\n2020-01-17,0.03,0.04\n"


def test_load_well_formed_file():
    panel = load_returns(CSV)
    assert panel.periods == 3
    assert panel.n_assets == 2
    assert panel.tickers == ("AAA", "BBB")
    assert panel.dates[0] == "2020-01-03"
    assert panel.returns[2, 1] == 0.04


def test_load_skips_provenance_header():
    panel = load_returns(b"# command=simulate config_sha256=abc seed=0\n" + CSV)
    assert panel.periods == 3


def test_non_numeric_cell_names_row_and_column():
    bad = CSV.replace(b"-0.01", b"abc")
    with pytest.raises(ParseError) as info:
        load_returns(bad)
    assert info.value.row == 3
    assert info.value.column == "AAA"


def test_missing_cell_is_structural():
    bad = CSV.replace(b",0.00\n", b",\n")
    with pytest.raises(StructuralError, match="BBB"):
        load_returns(bad)


def test_dates_must_increase():
    bad = b"date,AAA\n2020-01-10,0.01\n2020-01-03,0.02\n"
    with pytest.raises(OrderingError):
        load_returns(bad)


def test_written_panel_reads_back_identically():
    panel = load_returns(CSV)
    buf = io.StringIO()
    write_returns(panel, buf, header="# command=simulate config_sha256=x seed=0")
    again = load_returns(buf.getvalue().encode("utf-8"))
    assert again.dates == panel.dates
    assert again.tickers == panel.tickers
    assert np.array_equal(again.returns, panel.returns)


def test_horizon_returns_arithmetic():
    assert np.allclose(horizon_returns([0.01, 0.02, 0.03], 2), [0.03, 0.05])
    series = np.arange(10.0)
    assert np.array_equal(horizon_returns(series, 1), series)


def test_horizon_returns_length():
    assert horizon_returns(np.zeros(312), 4).shape == (309,)
    assert horizon_returns(np.zeros((312, 3)), 4).shape == (309, 3)
    with pytest.raises(PreconditionError):
        horizon_returns(np.zeros(3), 4)


def test_portfolio_return_series_matches_row_loop():
    rng = np.random.default_rng(3)
    panel = ReturnsPanel(
        dates=tuple(f"2020-01-{d:02d}" for d in range(1, 21)),
        tickers=tuple("ABCDE"),
        returns=rng.normal(size=(20, 5)),
    )
    w = rng.dirichlet(np.ones(5))
    window = WindowSpec(origin_index=14, length=10, horizon=2)
    series = portfolio_return_series(panel, w, window)
    expected = [sum(panel.returns[t, j] * w[j] for j in range(5)) for t in range(5, 15)]
    assert np.allclose(series, expected, atol=1e-14)


def test_equal_weights_average_returns():
    panel = ReturnsPanel(dates=("2020-01-01", "2020-01-02"), tickers=("A", "B"), returns=[[0.02, 0.04], [0.0, 0.0]])
    series = portfolio_return_series(panel, [0.5, 0.5], WindowSpec(1, 2, 1))
    assert series[0] == pytest.approx(0.03)


def test_window_rows_and_out_of_sample():
    panel = ReturnsPanel(
        dates=tuple(f"2020-01-{d:02d}" for d in range(1, 11)), tickers=("A",), returns=np.arange(10.0)[:, None]
    )
    window = WindowSpec(origin_index=5, length=4, horizon=2)
    assert window.start == 2
    assert window.rows(panel)[:, 0].tolist() == [2.0, 3.0, 4.0, 5.0]
    assert window.out_of_sample_rows(panel)[:, 0].tolist() == [6.0, 7.0]
    with pytest.raises(PreconditionError):
        WindowSpec(origin_index=8, length=4, horizon=2).out_of_sample_rows(panel)
    with pytest.raises(PreconditionError):
        WindowSpec(origin_index=1, length=4, horizon=2)
