import math

import numpy as np
import pytest
from scipy import stats

from bspinn.baselines import (ExerciseBoundary, PriceSurface, binomial_put,
                              binomial_put_value, closed_form_call,
                              closed_form_call_jet, european_put, extract_boundary,
                              fdm_put, mc_european_call, norm_cdf, surface_from_fn)
from bspinn.conditions import OptionSpec, OptionStyle, payoff


@pytest.fixture
def call():
    return OptionSpec(OptionStyle.EUROPEAN_CALL, strike=40.0, rate=0.05,
                      sigma=0.2, maturity=1.0)


@pytest.fixture
def put():
    return OptionSpec(OptionStyle.AMERICAN_PUT, strike=40.0, rate=0.05,
                      sigma=0.2, maturity=1.0)


# ---------------------------------------------------------------------------
# normal CDF and closed form
# ---------------------------------------------------------------------------

def test_norm_cdf_high_accuracy():
    # reference values from an arbitrary-precision evaluation of the
    # normal CDF (mpmath.ncdf at 50 digits)
    refs = {
        -3.0: 0.0013498980316300945266518147675949773778293681583806,
        -1.0: 0.1586552539314570514147674543679620775220870332734,
        0.0: 0.5,
        0.5: 0.69146246127401310363770461060833773988360217555458,
        2.345: 0.99048646020045308277093913702903015129859833263251,
    }
    for x, ref in refs.items():
        assert abs(float(norm_cdf(x)) - ref) < 1e-12


def test_closed_form_terminal_and_asymptotics(call):
    assert closed_form_call(call, 60.0, 1.0) == pytest.approx(20.0)
    assert closed_form_call(call, 0.0, 0.3) == 0.0
    assert closed_form_call(call, 1e-12, 0.3) == pytest.approx(0.0, abs=1e-9)
    big = 1e6
    t = 0.25
    parity = big - call.strike * math.exp(-call.rate * (call.maturity - t))
    assert closed_form_call(call, big, t) == pytest.approx(parity, abs=1e-3)
    with pytest.raises(ValueError):
        closed_form_call(call, -1.0, 0.0)


def test_closed_form_matches_monte_carlo(call):
    exact = closed_form_call(call, 40.0, 0.0)
    est, se = mc_european_call(call, 40.0, 10**7, seed=101)
    assert abs(est - exact) < 3.0 * se
    assert se < 0.01


def test_mc_degenerate_volatility():
    spec = OptionSpec(OptionStyle.EUROPEAN_CALL, strike=40.0, rate=0.05,
                      sigma=1e-12, maturity=1.0)
    est, _ = mc_european_call(spec, 50.0, 1000, seed=3)
    expected = math.exp(-0.05) * (50.0 * math.exp(0.05) - 40.0)
    assert est == pytest.approx(expected, rel=1e-9)


def test_mc_zero_strike_recovers_forward(call):
    # a zero-strike call pays S_T; its discounted mean is the spot
    spec = OptionSpec(OptionStyle.EUROPEAN_CALL, strike=1e-12, rate=0.05,
                      sigma=0.2, maturity=1.0, s_min=0.0, s_max=160.0)
    est, se = mc_european_call(spec, 40.0, 10**6, seed=7)
    assert abs(est - 40.0) < 3.0 * se


def test_closed_form_jet_satisfies_greek_identities(call):
    S = np.array([25.0, 40.0, 70.0])
    t = np.array([0.1, 0.5, 0.9])
    jet = closed_form_call_jet(call, S, t)
    h = 1e-4
    up = closed_form_call(call, S + h, t)
    dn = closed_form_call(call, S - h, t)
    mid = closed_form_call(call, S, t)
    np.testing.assert_allclose(jet.d_dS, (up - dn) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(jet.d2_dS2, (up - 2 * mid + dn) / h**2,
                               rtol=1e-4, atol=1e-8)
    ht = 1e-6
    np.testing.assert_allclose(
        jet.d_dt,
        (closed_form_call(call, S, t + ht) - closed_form_call(call, S, t - ht)) / (2 * ht),
        rtol=1e-5)


# ---------------------------------------------------------------------------
# binomial tree
# ---------------------------------------------------------------------------

def test_binomial_two_step_tree_matches_enumeration(put):
    # n = 2: enumerate the tree by hand with the same CRR factors
    n = 2
    K, r, sigma, T = 40.0, 0.05, 0.2, 1.0
    dt = T / n
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(r * dt) - d) / (u - d)
    disc = math.exp(-r * dt)
    S0 = 40.0
    # terminal payoffs
    leaves = [max(K - S0 * u**j * d**(n - j), 0.0) for j in range(n + 1)]
    # step 1 with early exercise
    v_up = max(disc * (p * leaves[2] + (1 - p) * leaves[1]), max(K - S0 * u, 0.0))
    v_dn = max(disc * (p * leaves[1] + (1 - p) * leaves[0]), max(K - S0 * d, 0.0))
    expected = max(disc * (p * v_up + (1 - p) * v_dn), max(K - S0, 0.0))
    assert binomial_put_value(put, S0, n) == pytest.approx(expected, rel=1e-12)


def test_binomial_deterministic_limit_exercises_immediately():
    spec = OptionSpec(OptionStyle.AMERICAN_PUT, strike=40.0, rate=0.0,
                      sigma=1e-9, maturity=1.0)
    assert binomial_put_value(spec, 20.0, 64) == pytest.approx(20.0, abs=1e-6)


def test_binomial_rejects_invalid_probability():
    # sigma so small relative to the drift that p leaves (0, 1)
    spec = OptionSpec(OptionStyle.AMERICAN_PUT, strike=40.0, rate=0.05,
                      sigma=1e-9, maturity=1.0)
    with pytest.raises(ValueError):
        binomial_put_value(spec, 20.0, 16)


def test_binomial_deep_out_of_the_money(put):
    assert binomial_put_value(put, 160.0, 500) < 1e-6


def test_binomial_convergence_at_the_money(put):
    v1 = binomial_put_value(put, 40.0, 1000)
    v2 = binomial_put_value(put, 40.0, 2000)
    assert abs(v1 - v2) < 0.01


def test_binomial_surface_dominates_european_put(put):
    s_grid = np.linspace(4.0, 156.0, 25)
    t_grid = np.linspace(0.0, 1.0, 21)
    surf = binomial_put(put, 5000, s_grid, t_grid)
    SS, TT = np.meshgrid(s_grid, t_grid, indexing="ij")
    euro = european_put(put, SS.ravel(), TT.ravel()).reshape(SS.shape)
    assert np.all(surf.values >= euro - 1e-9)


def test_binomial_surface_stays_above_payoff(put):
    surf = binomial_put(put, 500)
    pay = payoff(put, surf.S_grid)[:, None]
    assert np.all(surf.values >= pay - 1e-9)
    assert np.all(surf.values >= 0.0)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def test_fdm_terminal_slice_is_payoff(put):
    surf = fdm_put(put, 101, 101)
    np.testing.assert_allclose(surf.values[:, -1], payoff(put, surf.S_grid))


def test_fdm_lower_edge_is_strike(put):
    surf = fdm_put(put, 101, 101)
    np.testing.assert_allclose(surf.values[0, :], put.strike)
    np.testing.assert_allclose(surf.values[-1, :], 0.0)


def test_fdm_agrees_with_binomial(put):
    surf = fdm_put(put, 400, 400)
    ref = binomial_put_value(put, 36.0, 2000)
    got = surf.value_at(36.0, 0.0)
    assert abs(got - ref) / ref < 0.005


def test_fdm_refinement_shrinks_error(put):
    ref = binomial_put_value(put, 40.0, 2000)
    err = [abs(fdm_put(put, n, n).value_at(40.0, 0.0) - ref) for n in (50, 100)]
    assert err[1] <= 0.6 * err[0]


def test_fdm_rejects_tiny_grids(put):
    with pytest.raises(ValueError):
        fdm_put(put, 2, 100)


# ---------------------------------------------------------------------------
# exercise boundary
# ---------------------------------------------------------------------------

def test_boundary_of_pure_payoff_surface(put):
    S = np.linspace(0.0, 160.0, 81)
    t = np.linspace(0.0, 1.0, 11)
    vals = np.tile(payoff(put, S)[:, None], (1, 11))
    b = extract_boundary(PriceSurface(S, t, vals), put.strike)
    assert np.all(b.S_f == pytest.approx(40.0))


def test_boundary_of_shifted_surface_is_empty(put):
    S = np.linspace(0.0, 160.0, 81)
    t = np.linspace(0.0, 1.0, 11)
    vals = np.tile(payoff(put, S)[:, None] + 1.0, (1, 11))
    b = extract_boundary(PriceSurface(S, t, vals), put.strike)
    assert np.all(b.S_f == 0.0)


def test_binomial_boundary_shape(put, binomial_fine_surface):
    b = extract_boundary(binomial_fine_surface, put.strike)
    assert np.all(np.diff(b.S_f) >= 0.0)          # non-decreasing in t
    cell = binomial_fine_surface.S_grid[1] - binomial_fine_surface.S_grid[0]
    assert abs(b.S_f[-1] - put.strike) <= cell    # ends at the strike
    assert np.all((b.S_f >= 0.0) & (b.S_f <= put.strike))


# ---------------------------------------------------------------------------
# surfaces
# ---------------------------------------------------------------------------

def test_surface_csv_roundtrip(tmp_path, put):
    surf = binomial_put(put, 100, np.linspace(0.0, 160.0, 9),
                        np.linspace(0.0, 1.0, 7))
    path = tmp_path / "surf.csv"
    surf.to_csv(path)
    back = PriceSurface.from_csv(path)
    assert np.array_equal(back.S_grid, surf.S_grid)
    assert np.array_equal(back.t_grid, surf.t_grid)
    assert np.array_equal(back.values, surf.values)


def test_surface_bilinear_interpolation():
    surf = PriceSurface(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                        np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert surf.value_at(0.5, 0.5) == pytest.approx(1.5)
    assert surf.value_at(0.0, 0.25) == pytest.approx(0.25)
    assert surf.value_at(1.0, 1.0) == pytest.approx(3.0)


def test_surface_validation():
    with pytest.raises(ValueError):
        PriceSurface(np.array([1.0, 0.5]), np.array([0.0]), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        PriceSurface(np.array([0.0, 1.0]), np.array([0.0]), np.zeros((3, 1)))


def test_surface_from_fn_tabulates(call):
    surf = surface_from_fn(lambda S, t: closed_form_call(call, S, t),
                           np.linspace(1.0, 159.0, 12), np.linspace(0.0, 0.9, 8))
    assert surf.values.shape == (12, 8)
    assert surf.value_at(40.0, 0.0) == pytest.approx(
        closed_form_call(call, 40.0, 0.0), rel=1e-2)
