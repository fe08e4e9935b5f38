import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from twostage.bilevel import build_milp, hour_data, solve_hour
from twostage.dro import (ZERO_AMBIGUITY, AmbiguitySet, EmptySamples, HourAmbiguity,
                          HourPolicy, LdrPolicy, closed_form_worst_case, estimate_ambiguity,
                          estimate_hour, ldr_violation, maximize_affine, read_policy,
                          sample_support_oracle, solve_da_dro, solve_hour_dro,
                          worst_case_expectation, write_policy)
from twostage.market import ImbalancePriceModel, read_curves, read_forecast
from twostage.validate import data_file

PRICES = ImbalancePriceModel()
coef = st.floats(-20, 20)


@st.composite
def ambiguity(draw):
    lo = -draw(st.floats(0.0, 3.0))
    hi = draw(st.floats(0.0, 3.0))
    r = max(hi, -lo)
    z1 = draw(st.floats(0.0, 1.0)) * r
    z2 = draw(st.floats(0.0, 1.0)) * r * r
    return HourAmbiguity(z1, z2, lo, hi)


def brute_max(a, amb, n=2001):
    d = np.linspace(amb.delta_min, amb.delta_max, n)
    best = -np.inf
    for u1 in (np.abs(d), np.full_like(d, amb.u1_max)):
        for u2 in (d * d, np.full_like(d, amb.u2_max)):
            best = max(best, float(np.max(a[0] + a[1] * d + a[2] * u1 + a[3] * u2)))
    return best


@given(coef, coef, coef, coef, ambiguity())
def test_maximize_affine_matches_grid(a0, a1, a2, a3, amb):
    val, pt = maximize_affine(a0, a1, a2, a3, amb)
    assert amb.contains(pt)
    assert val == pytest.approx(a0 + a1 * pt[0] + a2 * pt[1] + a3 * pt[2], abs=1e-9)
    assert val >= brute_max((a0, a1, a2, a3), amb) - 1e-9


@given(coef, coef, coef, coef, ambiguity())
def test_worst_case_matches_closed_form(c0, c1, c2, c3, amb):
    f = (c0, c1, c2, c3)
    wc = worst_case_expectation(f, amb)
    assert wc == pytest.approx(closed_form_worst_case(f, amb), abs=1e-6)
    assert sample_support_oracle(f, amb, amb.corners()) <= wc + 1e-6


def test_samples_never_beat_worst_case():
    rng = np.random.default_rng(3)
    x = rng.normal(0, 0.5, 300)
    amb = estimate_hour(x)
    xc = x - x.mean()
    for _ in range(30):
        f = tuple(rng.normal(0, 5, 4))
        assert sample_support_oracle(f, amb, xc) <= worst_case_expectation(f, amb) + 1e-6


def test_estimate_hour_centers_samples():
    amb = estimate_hour([1.0, 2.0, 3.0])
    assert (amb.delta_min, amb.delta_max) == (-1.0, 1.0)
    assert amb.zeta1 == pytest.approx(2.0 / 3.0)
    assert amb.zeta2 == pytest.approx(2.0 / 3.0)
    const = estimate_hour([0.4, 0.4])
    assert const == HourAmbiguity(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(EmptySamples):
        estimate_hour([1.0])
    with pytest.raises(EmptySamples):
        estimate_ambiguity([])


def test_ambiguity_validation():
    with pytest.raises(ValueError):
        HourAmbiguity(0.1, 0.1, 0.1, 1.0)
    with pytest.raises(ValueError):
        HourAmbiguity(2.0, 0.1, -1.0, 1.0)
    with pytest.raises(ValueError):
        HourAmbiguity(0.1, 2.0, -1.0, 1.0)
    a = HourAmbiguity(0.2, 0.1, -1.0, 0.5)
    assert a.scaled(2.0) == HourAmbiguity(0.4, 0.2, -2.0, 1.0)
    assert AmbiguitySet.zero(3)[2] == ZERO_AMBIGUITY
    assert all(a.contains(p) for p in a.corners())
    with pytest.raises(ValueError):
        sample_support_oracle((0, 0, 0, 0), a, [5.0])


def test_policy_round_trip(tmp_path):
    pol = LdrPolicy([HourPolicy((0.1, 1.0, 0.2, 1 / 3), (0.0, 0.0, 0.2, 1 / 3)),
                     HourPolicy((1.0, 0.5, 0.0, 0.0), (0.5, -0.5, 0.0, 0.0))])
    path = tmp_path / "policy.csv"
    write_policy(path, pol)
    assert read_policy(path).hours == pol.hours
    path.write_text("hour,k0\n0,1\n")
    with pytest.raises(ValueError):
        read_policy(path)


@pytest.fixture(scope="module")
def desk_data():
    curves = read_curves(data_file("desk_curves.csv"))
    forecast = read_forecast(data_file("desk_forecast.csv"), 15.0, 5.0)
    return curves, forecast, hour_data(curves, forecast, PRICES)[0]


def test_zero_ambiguity_is_deterministic(desk_data):
    curves, forecast, data = desk_data
    det, _ = solve_hour(build_milp(curves, forecast, PRICES).hours[0])
    res = solve_hour_dro(data, ZERO_AMBIGUITY)
    assert res.decision.objective == pytest.approx(det.objective, abs=1e-6)


def test_robust_policy_is_feasible(desk_data):
    _, forecast, data = desk_data
    amb = HourAmbiguity(0.4, 0.3, -1.5, 1.2)
    res = solve_hour_dro(data, amb)
    dec = res.decision
    assert ldr_violation(res.policy, dec.net_sale, forecast.net(0), amb) <= 1e-6
    # the reported objective prices the recourse at its exact worst case
    assert res.worst_case == pytest.approx(closed_form_worst_case(
        tuple(data.pr_minus * l - data.pr_plus * k
              for k, l in zip(res.policy.k, res.policy.l)), amb), abs=1e-6)


def test_objective_grows_with_ambiguity(desk_data):
    data = desk_data[2]
    base = HourAmbiguity(0.3, 0.2, -1.0, 1.0)
    objs = [solve_hour_dro(data, base.scaled(s)).decision.objective for s in (0.0, 1.0, 2.0)]
    assert objs[0] <= objs[1] + 1e-6 <= objs[2] + 2e-6


def test_day_solve_checks_lengths(desk_data):
    curves, forecast, _ = desk_data
    dec, pol = solve_da_dro(curves, forecast, PRICES, AmbiguitySet.zero(1))
    assert len(dec) == len(pol) == 1
    with pytest.raises(Exception):
        solve_da_dro(curves, forecast, PRICES, AmbiguitySet.zero(2))


def test_worst_case_examples():
    amb = HourAmbiguity(0.3, 0.5, -1.0, 1.0)
    assert worst_case_expectation((2.5, 0, 0, 0), amb) == pytest.approx(2.5, abs=1e-7)
    assert worst_case_expectation((0, 7.0, 0, 0), amb) == pytest.approx(0.0, abs=1e-7)
    assert worst_case_expectation((0, 0, 1.0, 0), amb) == pytest.approx(0.3, abs=1e-7)
    assert sample_support_oracle((0, 0, 1.0, 0), amb, [-1.0, 0.0, 1.0]) == pytest.approx(0.3)
    assert sample_support_oracle((1.5, 2, 3, 4), amb, [0.0]) == pytest.approx(1.5)


def test_estimate_example():
    amb = estimate_hour([-0.5, 0.0, 0.5])
    assert (amb.zeta1, amb.zeta2) == pytest.approx((1 / 3, 1 / 6))
    assert (amb.delta_min, amb.delta_max, amb.u1_max, amb.u2_max) == pytest.approx(
        (-0.5, 0.5, 0.5, 0.25))
    zero = estimate_hour([0.0, 0.0, 0.0])
    assert (zero.zeta1, zero.zeta2, zero.delta_min, zero.delta_max) == (0, 0, 0, 0)


@given(st.floats(0, 3), st.floats(0.5, 2))
def test_constant_surplus_rule(c, spread):
    """All surplus, no shortage: E+ = c + delta is feasible once c covers the
    deepest negative error."""
    amb = HourAmbiguity(0.1, 0.05, -spread, spread)
    pol = HourPolicy((c, 1.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0))
    viol = ldr_violation(pol, net_sale=1.0 - c, net_forecast=1.0, amb=amb)
    if c >= spread:
        assert viol <= 1e-12
    else:
        assert viol == pytest.approx(spread - c)
    broken = HourPolicy((c, 0.5, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0))
    assert ldr_violation(broken, 1.0 - c, 1.0, amb) >= 0.5


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(0, 5), ambiguity(),
       st.floats(1.0, 3.0))
def test_worst_case_monotone_in_ambiguity(c0, c1, c2, c3, amb, factor):
    f = (c0, c1, c2, c3)
    assert worst_case_expectation(f, amb.scaled(factor)) >= worst_case_expectation(f, amb) - 1e-6


def test_robust_premium_and_sampled_balance(desk_data):
    curves, forecast, data = desk_data
    det, _ = solve_hour(build_milp(curves, forecast, PRICES).hours[0])
    samples = np.random.default_rng(8).normal(0, 0.8, 400)
    samples -= samples.mean()
    amb = estimate_hour(samples)
    res = solve_hour_dro(data, amb)
    assert res.decision.objective >= det.objective - 1e-6
    pol, dec = res.policy, res.decision
    for d in samples:
        plus, minus = pol.plus(d, abs(d), d * d), pol.minus(d, abs(d), d * d)
        assert plus >= -1e-9 and minus >= -1e-9
        assert dec.net_sale + plus - minus == pytest.approx(forecast.net(0) + d, abs=1e-9)
