import numpy as np
import pytest
from hypothesis import given, strategies as st

from chiral_decoherence.materials import (ChiralOscillator, MaterialModel, Oscillator,
                                          default_material, passivity_report, pasteur,
                                          permittivity)

from conftest import load_golden


def test_permittivity_limits(material):
    assert permittivity(material, 1e9) == pytest.approx(2.0, abs=1e-12)
    static = permittivity(material, 1e-9)
    assert static.real == pytest.approx(2.0 + 1.2 / 3.54**2, rel=1e-9)
    assert abs(static.imag) < 1e-9


def test_on_resonance_value(material):
    # at E0 the Lorentz term is purely imaginary: f / (-i G E0)
    assert permittivity(material, 3.54) == pytest.approx(2.0 + 1j * 1.2 / (0.35 * 3.54), rel=1e-14)
    assert pasteur(material, 3.54) == pytest.approx(1j * 1e-4 * 3.54 / 0.35, rel=1e-14)


def test_against_golden(material):
    _, rows, meta = load_golden("golden_kernels")
    ids = meta["meta"]["ids"]
    got = {"permittivity(3.54)": permittivity(material, 3.54),
           "pasteur(3.54)": pasteur(material, 3.54)}
    for key, val in got.items():
        ref = complex(*rows[ids.index(key), 1:])
        assert abs(val - ref) <= 1e-10 * abs(ref)


def test_pasteur_vanishes_at_zero_frequency(material):
    assert abs(pasteur(material, 1e-12)) < 1e-15


def test_enantiomer_flips_kappa_only(material):
    E = np.linspace(0.1, 12, 50)
    mirror = material.enantiomer()
    np.testing.assert_array_equal(pasteur(mirror, E), -pasteur(material, E))
    np.testing.assert_array_equal(permittivity(mirror, E), permittivity(material, E))
    assert np.all(pasteur(material.achiral(), E) == 0)


def test_default_magnitudes(material):
    E = np.linspace(0.01, 200.0, 200001)
    eps = permittivity(material, E)
    assert 1.5 <= eps.real.min() and np.abs(eps).max() <= 4.0
    assert np.abs(pasteur(material, E)).max() == pytest.approx(1e-3, rel=0.05)
    # the fastest shipped electron stays below the film's high-energy light speed,
    # so the electron line never meets an undamped guided mode
    assert 0.7 * np.sqrt(material.eps_background) < 1


def test_passive_default():
    rep = passivity_report(default_material(), np.linspace(0.05, 20, 2000))
    assert rep.passive
    assert rep.min_imag_eps > 0


def test_lossless_model_is_borderline():
    rep = passivity_report(MaterialModel(2.0), np.linspace(0.5, 5, 10))
    assert not rep.passive
    assert rep.borderline


@given(st.floats(0.5, 8), st.floats(0.01, 5), st.floats(0.01, 2), st.floats(0.01, 30))
def test_lorentz_term_is_passive(E0, f, G, E):
    m = MaterialModel(1.5, (Oscillator(E0, f, G),))
    assert permittivity(m, E).imag > 0


@pytest.mark.parametrize("bad", [lambda: Oscillator(0.0, 1.0, 0.1), lambda: Oscillator(1.0, 1.0, 0.0),
                                 lambda: ChiralOscillator(1.0, 1e-3, -0.1),
                                 lambda: permittivity(default_material(), 0.0),
                                 lambda: MaterialModel(2.0, mu=1.1)])
def test_rejects_invalid(bad):
    with pytest.raises(ValueError):
        bad()
