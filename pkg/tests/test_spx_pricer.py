import dataclasses

import numpy as np
import pytest
from scipy import stats

from src.errors import ValidationError
from src.numerics import black_total
from src.ou_process import ConstantH, OuSpec
from src.quintic_model import ModelParams
from src.spx_pricer import (
    McConfig,
    martingale_check,
    mixed_call_price,
    naive_price,
    price_from_records,
    simulate_for,
    smile_from_records,
    spx_smile,
)


def test_mc_config_validation():
    with pytest.raises(ValidationError):
        McConfig(n_paths=1001)
    with pytest.raises(ValidationError):
        McConfig(n_paths=1024, steps_per_year=12)
    with pytest.raises(ValidationError):
        McConfig(n_paths=1024, block_size=3)
    cfg = McConfig.from_settings(n_paths=2048, seed=4)
    assert cfg.n_paths == 2048 and cfg.seed == 4 and cfg.steps_per_year == 312


@pytest.mark.parametrize("T", [1.0 / 12.0, 0.5, 1.0])
def test_black_scholes_degeneracy(flat_params, flat_curve, T):
    cfg = McConfig(n_paths=32768, steps_per_year=52, seed=1, block_size=8192)
    records = simulate_for(flat_params, flat_curve, T, cfg)
    np.testing.assert_allclose(records.integrated_total_var, 0.04 * T, rtol=1e-12)
    for moneyness in (0.8, 0.9, 1.0, 1.1, 1.2):
        K = 100.0 * moneyness
        flag = "call" if K >= 100.0 else "put"
        price = mixed_call_price(flat_params, flat_curve, T, K, cfg, flag)
        exact = black_total(100.0, K, 0.2 * np.sqrt(T), flag)
        assert abs(price.value - exact) <= 4.0 * price.std_error + 1e-12


def test_black_scholes_smile_is_flat(flat_params, flat_curve):
    cfg = McConfig(n_paths=32768, steps_per_year=52, seed=2, block_size=8192)
    points = spx_smile(flat_params, flat_curve, 0.5, [80.0, 90.0, 100.0, 110.0, 120.0], cfg)
    for p in points:
        assert p.implied_vol == pytest.approx(0.2, abs=1e-3)
        assert p.iv_low <= p.implied_vol <= p.iv_high


def test_thread_count_does_not_change_prices(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=4096, steps_per_year=104, seed=9, block_size=512)
    one = mixed_call_price(oct2017_params, flat_curve, 0.1, 100.0, cfg)
    many = mixed_call_price(oct2017_params, flat_curve, 0.1, 100.0, dataclasses.replace(cfg, threads=4))
    assert one == many


def test_turbocharged_beats_naive(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=16384, steps_per_year=312, seed=5, block_size=4096)
    turbo = mixed_call_price(oct2017_params, flat_curve, 0.25, 100.0, cfg)
    naive = naive_price(oct2017_params, flat_curve, 0.25, 100.0, cfg)
    assert turbo.std_error < naive.std_error
    assert abs(turbo.value - naive.value) < 4.0 * np.hypot(turbo.std_error, naive.std_error)


def test_control_variate_keeps_estimate(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=16384, steps_per_year=104, seed=6, block_size=4096)
    with_cv = mixed_call_price(oct2017_params, flat_curve, 0.25, 95.0, cfg, "put")
    without = mixed_call_price(oct2017_params, flat_curve, 0.25, 95.0, dataclasses.replace(cfg, control_variate=False), "put")
    assert abs(with_cv.value - without.value) < 4.0 * without.std_error


def test_negative_rho_gives_negative_skew(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=32768, steps_per_year=312, seed=8, block_size=8192)
    records = simulate_for(oct2017_params, flat_curve, 0.25, cfg)
    low, high = smile_from_records(records, oct2017_params.rho, 100.0, [98.0, 102.0])
    se = 0.5 * (high.iv_high - high.iv_low) + 0.5 * (low.iv_high - low.iv_low)
    assert high.implied_vol - low.implied_vol < -3.0 * se


def test_alpha0_zero_keeps_martingale(flat_curve):
    # g(0) = 0: the first step must not look at X after the first draw
    params = ModelParams(alpha=(0.0, 1.0, 0.0, 0.1), rho=-0.7, ou=OuSpec(1.0 / 52.0, ConstantH(-0.1)))
    cfg = McConfig(n_paths=65536, steps_per_year=312, seed=3, block_size=16384)
    est = martingale_check(params, flat_curve, 0.25, cfg)
    assert abs(est.value - 1.0) < 3.0 * est.std_error
    price = mixed_call_price(params, flat_curve, 0.1, 100.0, McConfig(n_paths=2048, steps_per_year=104, seed=3, block_size=1024))
    assert np.isfinite(price.value) and price.value > 0.0


def test_martingale_check(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=65536, steps_per_year=104, seed=12, block_size=16384)
    est = martingale_check(oct2017_params, flat_curve, 1.0, cfg)
    assert abs(est.value - 1.0) < 4.0 * est.std_error


@pytest.mark.slow
def test_martingale_check_million_paths(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=1 << 20, steps_per_year=312, seed=13, block_size=1 << 14, threads=4)
    est = martingale_check(oct2017_params, flat_curve, 1.0, cfg)
    assert abs(est.value - 1.0) < 3.0 * est.std_error


@pytest.mark.slow
def test_black_scholes_degeneracy_full_paths(flat_params, flat_curve):
    cfg = McConfig.from_settings(seed=21, threads=4)
    for T in (1.0 / 12.0, 0.5, 1.0):
        points = spx_smile(flat_params, flat_curve, T, [80.0, 90.0, 100.0, 110.0, 120.0], cfg)
        for p in points:
            exact = black_total(100.0, p.strike, 0.2 * np.sqrt(T), p.flag)
            assert abs(p.price - exact) <= 4.0 * p.std_error + 1e-12
            assert p.implied_vol == pytest.approx(0.2, abs=1e-3)


def test_log_sw_is_gaussian_under_constant_vol(flat_params, flat_curve):
    T = 0.5
    rho = flat_params.rho
    cfg = McConfig(n_paths=32768, steps_per_year=52, seed=21, block_size=8192)
    log_s = simulate_for(flat_params, flat_curve, T, cfg).log_s_w
    mean, var = -0.5 * rho * rho * 0.04 * T, rho * rho * 0.04 * T
    # antithetic pairs sit symmetrically around the exact mean
    assert log_s.mean() == pytest.approx(mean, abs=1e-12)
    assert log_s[0::2].var(ddof=1) == pytest.approx(var, rel=0.05)
    assert stats.kstest((log_s[0::2] - mean) / np.sqrt(var), "norm").pvalue > 1e-3


def test_swapping_antithetic_partners_changes_nothing(oct2017_params, flat_curve):
    cfg = McConfig(n_paths=4096, steps_per_year=104, seed=14, block_size=1024)
    records = simulate_for(oct2017_params, flat_curve, 0.1, cfg)
    order = np.arange(cfg.n_paths).reshape(-1, 2)[:, ::-1].ravel()
    flipped = dataclasses.replace(
        records,
        log_s_w=records.log_s_w[order],
        integrated_rho2_var=records.integrated_rho2_var[order],
        integrated_total_var=records.integrated_total_var[order],
    )
    for strike, flag in ((95.0, "put"), (100.0, "call"), (105.0, "call")):
        a = price_from_records(records, oct2017_params.rho, 100.0, strike, flag)
        b = price_from_records(flipped, oct2017_params.rho, 100.0, strike, flag)
        assert a == b


@pytest.mark.slow
def test_time_step_refinement(oct2017_params, flat_curve):
    coarse = McConfig(n_paths=1 << 17, steps_per_year=156, seed=31, block_size=1 << 14)
    fine = dataclasses.replace(coarse, steps_per_year=312)
    a = mixed_call_price(oct2017_params, flat_curve, 0.25, 100.0, coarse)
    b = mixed_call_price(oct2017_params, flat_curve, 0.25, 100.0, fine)
    # the two grids draw independent samples
    assert abs(a.value - b.value) < 3.0 * np.hypot(a.std_error, b.std_error)
