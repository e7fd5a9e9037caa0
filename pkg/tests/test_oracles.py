import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chiral_decoherence.oracles import (compare, distribution_moments, finite_difference,
                                        richardson, simpson_weights)


@pytest.mark.parametrize("n", [2, 8, 64])
def test_simpson_exact_on_cubics(n):
    x = np.linspace(0.0, 2.0, n + 1)
    assert np.sum(simpson_weights(n, 2.0) * (x**3 - x)) == pytest.approx(2.0, rel=1e-14)


def test_simpson_fourth_order():
    errs = []
    for n in (16, 32):
        x = np.linspace(0.0, 1.0, n + 1)
        errs.append(abs(np.sum(simpson_weights(n) * np.exp(x)) - (math.e - 1)))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.02)


def test_simpson_odd_rejected():
    with pytest.raises(ValueError):
        simpson_weights(7)


def test_finite_differences():
    assert finite_difference(np.sin, 0.3, 1e-4, 1) == pytest.approx(math.cos(0.3), rel=1e-8)
    assert finite_difference(np.sin, 0.3, 1e-3, 2) == pytest.approx(-math.sin(0.3), rel=1e-6)
    assert richardson(np.exp, 0.0, 0.1, 2) == pytest.approx(1.0, rel=1e-7)
    with pytest.raises(ValueError):
        finite_difference(np.sin, 0.0, 0.1, 3)


@given(st.floats(0.3, 5.0), st.floats(-3.0, 3.0))
def test_gaussian_moments(s, m):
    x = np.linspace(m - 14 * s, m + 14 * s, 4001)
    p = np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    assert distribution_moments(x, p, 0) == pytest.approx(1.0, rel=1e-10)
    assert distribution_moments(x, p, 1) == pytest.approx(m, abs=1e-9)
    mean = distribution_moments(x, p, 1)
    assert distribution_moments(x, p, 2) - mean**2 == pytest.approx(s * s, rel=1e-8)


def test_point_mass():
    assert distribution_moments([0.0, 1.0], [0.0, 0.0], 1, 0.5, 2.0) == 1.0


def test_compare_report():
    r = compare("x", 1.0 + 1e-9, 1.0, 1e-6)
    assert r.passed
    assert "x" in r.line() and "PASS" in r.line()
    assert not compare("y", 2.0, 1.0, 1e-6).passed
