import numpy as np
import pytest

from src.errors import OutOfBoundsPriceError, ValidationError
from src.numerics import (
    GAUSS_HERMITE,
    GAUSS_LEGENDRE,
    BlackInputs,
    black_price,
    black_total,
    gaussian_moment,
    implied_vol,
    legendre_panels,
    make_quadrature,
)


def test_gaussian_moments():
    assert gaussian_moment(0, 0.3) == 1.0
    assert gaussian_moment(3, 0.3) == 0.0
    assert gaussian_moment(4, 2.0) == pytest.approx(48.0)
    assert gaussian_moment(10, 1.0) == pytest.approx(945.0)
    np.testing.assert_allclose(gaussian_moment(2, np.array([1.0, 2.0])), [1.0, 4.0])
    with pytest.raises(ValidationError):
        gaussian_moment(-1, 1.0)


def test_hermite_rule_is_probabilist():
    rule = make_quadrature(GAUSS_HERMITE, 20)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert rule.integrate(lambda x: x**2) == pytest.approx(1.0, rel=1e-12)
    assert rule.integrate(lambda x: x**10) == pytest.approx(945.0, rel=1e-10)


def test_hermite_rule_drops_underflowed_weights():
    rule = make_quadrature(GAUSS_HERMITE, 400)
    assert len(rule.nodes) <= 400
    assert np.all(rule.weights > 0.0)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-13)
    assert rule.integrate(lambda x: x**4) == pytest.approx(3.0, rel=1e-10)


@pytest.mark.parametrize("n", [400, 1000])
def test_large_hermite_rules_stay_finite(n):
    rule = make_quadrature(GAUSS_HERMITE, n)
    assert np.all(np.isfinite(rule.nodes)) and np.all(np.isfinite(rule.weights))
    assert len(rule.nodes) > n // 2
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-13)
    assert rule.integrate(lambda x: x**4) == pytest.approx(3.0, abs=1e-12)
    assert rule.integrate(lambda x: x**3) == pytest.approx(0.0, abs=1e-12)


def test_legendre_rule_on_interval():
    rule = make_quadrature(GAUSS_LEGENDRE, 8, 0.0, 2.0)
    assert rule.integrate(lambda x: x**3) == pytest.approx(4.0, rel=1e-13)
    with pytest.raises(ValidationError):
        make_quadrature(GAUSS_LEGENDRE, 8, 1.0, 1.0)
    with pytest.raises(ValidationError):
        make_quadrature("simpson", 8, 0.0, 1.0)


def test_legendre_panels_cover_interval():
    nodes, weights = legendre_panels(0.0, 3.0, 16, max_width=0.5)
    assert len(nodes) == 6 * 16
    assert weights.sum() == pytest.approx(3.0, rel=1e-13)
    assert np.dot(weights, np.exp(-nodes)) == pytest.approx(1.0 - np.exp(-3.0), rel=1e-12)


def test_black_put_call_parity_and_intrinsic():
    F, T, vol = 100.0, 0.5, 0.25
    for K in (80.0, 100.0, 120.0):
        c = black_total(F, K, vol * np.sqrt(T), "call")
        p = black_total(F, K, vol * np.sqrt(T), "put")
        assert c - p == pytest.approx(F - K, abs=1e-10)
    assert black_total(100.0, 90.0, 0.0, "call") == 10.0
    assert black_total(100.0, 90.0, 0.0, "put") == 0.0


def test_black_inputs_validate():
    assert black_price(BlackInputs(100.0, 100.0, 1.0, 0.2, "c")) == pytest.approx(7.965567455405804, rel=1e-12)
    with pytest.raises(ValidationError):
        BlackInputs(100.0, 100.0, 1.0, -0.2)
    with pytest.raises(ValidationError):
        BlackInputs(100.0, 100.0, 1.0, 0.2, "straddle")


@pytest.mark.parametrize("flag", ["call", "put"])
@pytest.mark.parametrize("strike", [60.0, 90.0, 100.0, 110.0, 160.0])
def test_implied_vol_recovers_vol(flag, strike):
    F, T, vol = 100.0, 0.5, 0.2
    price = black_total(F, strike, vol * np.sqrt(T), flag)
    assert implied_vol(price, F, strike, T, flag) == pytest.approx(vol, abs=1e-8)


def test_implied_vol_widens_bracket_above_five():
    price = black_total(100.0, 100.0, 8.0, "call")
    assert implied_vol(price, 100.0, 100.0, 1.0, "call") == pytest.approx(8.0, rel=1e-6)


def test_implied_vol_rejects_prices_outside_bounds():
    with pytest.raises(OutOfBoundsPriceError):
        implied_vol(100.0, 100.0, 90.0, 1.0, "call")
    with pytest.raises(OutOfBoundsPriceError):
        implied_vol(10.0, 100.0, 90.0, 1.0, "call")
    with pytest.raises(OutOfBoundsPriceError):
        implied_vol(0.0, 100.0, 110.0, 1.0, "call")
