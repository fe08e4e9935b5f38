import math

import pytest
from hypothesis import given, strategies as st

from twostage.market import (DEMAND, SUPPLY, BlockCurve, CurveError, DsoForecast,
                             ImbalancePriceModel, TimeGrid, build_curve, imbalance_prices,
                             read_curves, read_forecast, write_curves)

blocks = st.lists(st.tuples(st.floats(-100, 300), st.floats(0, 50)), min_size=1, max_size=12)


@given(blocks)
def test_supply_merit_order(raw):
    if all(q == 0 for _, q in raw):
        with pytest.raises(CurveError):
            build_curve(SUPPLY, 0, raw)
        return
    c = build_curve(SUPPLY, 0, raw)
    assert c.prices == sorted(c.prices)
    assert all(q > 0 for q in c.quantities)
    assert c.total_quantity == pytest.approx(sum(q for _, q in raw))
    assert [b.index for b in c.blocks] == list(range(len(c)))


@given(blocks)
def test_demand_merit_order(raw):
    if all(q == 0 for _, q in raw):
        return
    c = build_curve(DEMAND, 3, raw)
    assert c.prices == sorted(c.prices, reverse=True)
    assert c.hour == 3


def test_ties_keep_input_order():
    c = build_curve(SUPPLY, 0, [(10.0, 1.0), (5.0, 2.0), (10.0, 3.0)])
    assert c.raw() == [(5.0, 2.0), (10.0, 1.0), (10.0, 3.0)]


@pytest.mark.parametrize("raw", [[(math.nan, 1.0)], [(1.0, -1.0)], [(math.inf, 1.0)],
                                 [(1.0, math.nan)], []])
def test_bad_blocks_rejected(raw):
    with pytest.raises(CurveError):
        build_curve(SUPPLY, 0, raw)


def test_unknown_side():
    with pytest.raises(CurveError):
        build_curve("bid", 0, [(1.0, 1.0)])


def test_imbalance_prices_unfloored():
    m = ImbalancePriceModel()
    up, down = imbalance_prices(m, 50.0)
    assert up == pytest.approx(0.7 * 35.0)
    assert down == pytest.approx(1.7 * 70.0)
    assert imbalance_prices(m, 10.0)[0] < 0
    with pytest.raises(ValueError):
        ImbalancePriceModel(a1=-0.1)


@given(st.floats(0, 300))
def test_surplus_price_below_shortage_price(lam):
    up, down = imbalance_prices(ImbalancePriceModel(), lam)
    assert up < down


def test_time_grid():
    g = TimeGrid(24, 3600.0, 5.0)
    assert g.aligned and g.steps_per_slot == 720
    assert not TimeGrid(24, 3600.0, 7.0).aligned
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(24, 3600.0, 0.0)


def test_forecast_checks():
    f = DsoForecast((0.5, 1.0), (0.2, 0.3), 1.0, 2.0)
    assert f.T == 2 and f.net(1) == pytest.approx(0.7)
    assert f.hours([1]).generation == (1.0,)
    with pytest.raises(ValueError):
        DsoForecast((1.5,), (0.0,), 1.0, 1.0)
    with pytest.raises(ValueError):
        DsoForecast((0.5,), (-0.1,), 1.0, 1.0)
    with pytest.raises(ValueError):
        DsoForecast((0.5,), (0.1, 0.2), 1.0, 1.0)


def test_curve_csv_round_trip(tmp_path):
    curves = {h: (build_curve(SUPPLY, h, [(10.0 + h, 3.0), (1.0 / 3.0, 2.0)]),
                  build_curve(DEMAND, h, [(80.0, 4.0), (40.0 + 0.1 * h, 1.5)]))
              for h in range(3)}
    path = tmp_path / "curves.csv"
    write_curves(path, curves)
    assert read_curves(path) == curves


def test_curve_csv_missing_side(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("hour,side,price_eur_mwh,quantity_mwh\n0,supply,10,1\n")
    with pytest.raises(CurveError, match="hour 0"):
        read_curves(path)
    path.write_text("hour,price\n0,1\n")
    with pytest.raises(CurveError):
        read_curves(path)


def test_forecast_csv(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("hour,generation_mwh,load_mwh\n1,0.4,0.1\n0,0.2,0.3\n")
    f = read_forecast(path, 1.0, 1.0)
    assert f.generation == (0.2, 0.4)
    path.write_text("hour,generation_mwh,load_mwh\n0,0.2,0.3\n2,0.4,0.1\n")
    with pytest.raises(ValueError, match="gaps"):
        read_forecast(path, 1.0, 1.0)


@pytest.mark.parametrize("lam, model, expect", [
    (50.0, ImbalancePriceModel(), (24.5, 119.0)),
    (15.0, ImbalancePriceModel(), (0.0, 59.5)),
    (0.0, ImbalancePriceModel(1.0, 1.0, 0.0, 0.0), (0.0, 0.0)),
])
def test_imbalance_price_examples(lam, model, expect):
    assert imbalance_prices(model, lam) == pytest.approx(expect)


@given(st.floats(0, 1), st.floats(1, 3), st.floats(0, 40), st.floats(0, 40), st.floats(0, 500))
def test_balancing_prices_bracket_da_price(a1, a2, p1, p2, extra):
    lam = p1 + extra
    up, down = imbalance_prices(ImbalancePriceModel(a1, a2, p1, p2), lam)
    assert up <= lam + 1e-9 and lam <= down + 1e-9


def test_curve_examples():
    assert build_curve(SUPPLY, 0, [(20, 50), (10, 50)]).prices == [10, 20]
    assert build_curve(DEMAND, 0, [(40, 60), (25, 60)]).prices == [40, 25]
    assert build_curve(SUPPLY, 0, [(10, 0), (30, 50)]).raw() == [(30, 50)]


@given(blocks, st.sampled_from([SUPPLY, DEMAND]))
def test_build_curve_is_idempotent(raw, side):
    if all(q == 0 for _, q in raw):
        return
    c = build_curve(side, 1, raw)
    assert build_curve(side, 1, c.raw()) == c
