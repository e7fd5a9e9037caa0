import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chiral_decoherence.oracles import FilmSpec, phase_oracle_integrand, richardson
from chiral_decoherence.response import (ResponseConfig, _phi_energy_integrand, delta_a,
                                         delta_map, delta_point, delta_s, kernel_bundle,
                                         kernel_grid, lateral_kernel_A, phase_phi, sigma_n,
                                         spectral_positivity, spectral_weight, spread_kernel_S)

from conftest import load_golden


def test_delta_against_golden(cfg):
    _, rows, meta = load_golden("golden_delta")
    assert meta["meta"]["beta"] == cfg.beta and meta["meta"]["L_nm"] == cfg.geometry.L
    for x, y, z, ds, da in rows:
        p = delta_point(x, y, z, cfg)
        assert abs(p.delta_s - ds) <= 1e-6 * abs(ds)
        assert abs(p.delta_a - da) <= 1e-6 * abs(da)


def test_delta_is_linear_in_L(cfg):
    a = delta_point(0.0, 3.0, -12.0, cfg)
    b = delta_point(0.0, 3.0, -12.0, cfg.with_L(7000.0))
    assert b.delta_s == pytest.approx(7 * a.delta_s, rel=1e-13)
    assert b.delta_a == pytest.approx(7 * a.delta_a, rel=1e-13)


def test_delta_complex_off_axis(cfg):
    p = delta_point(4.0, 3.0, -12.0, cfg)
    assert isinstance(p.delta_s, complex) and p.delta_s.imag != 0
    assert delta_s(-4.0, 3.0, -12.0, cfg) == pytest.approx(np.conj(p.delta_s), rel=1e-12)


def test_delta_map_matches_points(cfg):
    y = np.array([-6.0, 0.0, 5.0])
    z = np.array([-20.0, -8.0])
    ds, da, _ = delta_map(0.0, y, z, cfg)
    for i, yy in enumerate(y):
        for j, zz in enumerate(z):
            assert ds[i, j] == pytest.approx(delta_s(0.0, yy, zz, cfg), rel=1e-12)
            assert da[i, j] == pytest.approx(delta_a(0.0, yy, zz, cfg), rel=1e-12, abs=1e-300)


def test_rejects_points_at_the_film(cfg):
    with pytest.raises(ValueError):
        delta_s(0.0, 1.0, 0.0, cfg)
    with pytest.raises(ValueError):
        delta_s(0.0, 1.0, 2.0, cfg)


@pytest.mark.parametrize("Z", [-5.0, -11.0, -24.0])
def test_kernels_match_finite_differences(cfg, Z):
    hc, beta = cfg.constants.hbar_c, cfg.beta
    zt = 2 * Z
    g = kernel_grid(cfg, abs(zt) / 2, 1.0, 1.0, 2 * abs(zt))
    fA = hc * richardson(lambda y: delta_a(0, y, zt, cfg, g), 0.0, 0.2, 1)
    fS = -hc**2 * richardson(lambda y: delta_s(0, y, zt, cfg, g), 0.0, 0.2, 2)
    f1 = -1j * hc * beta * richardson(lambda x: complex(delta_s(x, 0, zt, cfg, g)), 0.0, 0.2, 1)
    f2 = -(hc * beta) ** 2 * richardson(lambda x: complex(delta_s(x, 0, zt, cfg, g)), 0.0, 0.2, 2)
    assert lateral_kernel_A(Z, cfg) == pytest.approx(fA.real, rel=1e-4)
    assert spread_kernel_S(Z, cfg) == pytest.approx(fS.real, rel=1e-4)
    assert sigma_n(Z, 1, cfg) == pytest.approx(f1.real, rel=1e-4)
    assert sigma_n(Z, 2, cfg) == pytest.approx(f2.real, rel=1e-4)


def test_kernel_signs(cfg):
    Z = np.array([-5.0, -10.0, -20.0])
    b = kernel_bundle(Z, cfg)
    assert np.all(b["sigma1"] < 0)
    assert np.all(b["sigma2"] > 0)
    assert np.all(b["S"] >= 0)
    assert np.all(b["delta0"] > 0)
    # sigma2 >= sigma1^2 / delta0 (Cauchy-Schwarz on the positive loss weight)
    assert np.all(b["sigma2"] * b["delta0"] >= b["sigma1"] ** 2)


def test_bundle_matches_single_kernels(cfg):
    b = kernel_bundle([-7.0], cfg)
    assert b["A"][0] == pytest.approx(lateral_kernel_A(-7.0, cfg), rel=1e-10)
    assert b["sigma1"][0] == pytest.approx(sigma_n(-7.0, 1, cfg), rel=1e-10)
    assert b["delta0"][0] == pytest.approx(delta_s(0, 0, -14.0, cfg), rel=1e-10)


def test_sigma_n_order(cfg):
    with pytest.raises(ValueError):
        sigma_n(-5.0, 3, cfg)


def test_achiral_kernels_vanish(cfg):
    ach = ResponseConfig(cfg.material.achiral(), cfg.geometry, cfg.beta)
    assert lateral_kernel_A(-6.0, ach) == 0.0
    assert delta_a(0.0, 4.0, -9.0, ach) == 0.0


def test_spectral_weight_integrates_to_delta(cfg):
    E = np.linspace(0.0, cfg.E_max, 4001)
    w = spectral_weight(E, -9.0, cfg)
    assert np.all(w >= 0)
    assert np.trapezoid(w, E) == pytest.approx(delta_s(0, 0, -18.0, cfg), rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.floats(-15, 15), st.floats(-30, -3))
def test_parity_in_y(cfg, y, z):
    assert delta_s(0.0, y, z, cfg) == pytest.approx(delta_s(0.0, -y, z, cfg), abs=1e-10)
    assert delta_a(0.0, y, z, cfg) == pytest.approx(-delta_a(0.0, -y, z, cfg), abs=1e-10)


@pytest.mark.parametrize("E", [1.0, 3.54, 8.0])
def test_phase_integrand_matches_oracle(cfg, E):
    spec = FilmSpec.from_objects(cfg.material, cfg.geometry)
    main = _phi_energy_integrand(E, -10.0, cfg, 1e-8)[0]
    ref = phase_oracle_integrand(E, -10.0, spec, cfg.beta, cfg.numerics.ky_cutoff_factor)
    assert main == pytest.approx(ref, rel=1e-5)


def test_phase_against_golden(cfg):
    _, rows, _ = load_golden("golden_phase")
    Z, ref = rows[0]
    res = phase_phi(Z, cfg)
    assert res.converged
    assert res.value == pytest.approx(ref, rel=1e-3)


def test_loss_weight_positive_for_passive_film(cfg):
    rep = spectral_positivity(cfg)
    assert rep.positive
    assert rep.max_weight > 0


def test_loss_weight_negative_for_active_film(cfg, caplog):
    from chiral_decoherence.materials import MaterialModel, Oscillator
    gain = ResponseConfig(MaterialModel(2.0, (Oscillator(3.0, -0.5, 0.3),)), cfg.geometry, cfg.beta)
    rep = spectral_positivity(gain)
    assert not rep.positive
    assert "negative" in caplog.text


def test_persisted_grid_round_trip(cfg, tmp_path):
    from chiral_decoherence import response
    response.clear_cache()
    response.set_cache_dir(str(tmp_path))
    try:
        built = kernel_grid(cfg, 6.0, 3.0)
        response.clear_cache()
        loaded = kernel_grid(cfg, 6.0, 3.0)
        assert loaded is not built
        assert np.array_equal(loaded.im_sym, built.im_sym)
        assert loaded.delta(0.0, 2.5, -9.0) == built.delta(0.0, 2.5, -9.0)
        # a changed material gets its own table instead of the stale one
        other = ResponseConfig(cfg.material.achiral(), cfg.geometry, cfg.beta)
        kernel_grid(other, 6.0, 3.0)
        assert len(list(tmp_path.iterdir())) == 2
        # unreadable files are ignored and rebuilt
        for f in tmp_path.iterdir():
            f.write_bytes(b"junk")
        response.clear_cache()
        again = kernel_grid(cfg, 6.0, 3.0)
        assert np.array_equal(again.im_sym, built.im_sym)
    finally:
        response.set_cache_dir(None)
        response.clear_cache()


def test_guided_mode_crossing_fails_cleanly(cfg):
    from chiral_decoherence.materials import ChiralOscillator, MaterialModel, Oscillator
    from chiral_decoherence.response import ConvergenceError, clear_cache
    dense = MaterialModel(2.5, (Oscillator(3.54, 1.2, 0.35),), (ChiralOscillator(3.54, 1e-4, 0.35),))
    fast = ResponseConfig(dense, cfg.geometry, 0.7)
    with pytest.raises(ConvergenceError, match="guided mode"):
        kernel_grid(fast, 8.0, z_abs_max=64.0)
    clear_cache()
