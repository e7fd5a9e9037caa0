"""Reflected xx Green kernel of the stack and its vacuum Weyl integral."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .materials import MaterialModel
from .quadrature import QuadratureResult, integrate_adaptive
from .slab import Geometry, _reflection_from_wavenumbers, wavenumbers
from .units import DEFAULT_CONSTANTS, PhysicalConstants


@dataclass
class UpsilonValue:
    symmetric_part: np.ndarray
    antisymmetric_part: np.ndarray

    @property
    def total(self):
        return self.symmetric_part + self.antisymmetric_part


def upsilon(E, kx, ky, mats: MaterialModel, geom: Geometry,
            constants: PhysicalConstants = DEFAULT_CONSTANTS) -> UpsilonValue:
    """Reflected kernel split into its ky-even and ky-odd parts."""
    E = np.asarray(E, dtype=float)
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    kp2 = kx * kx + ky * ky
    if np.any(kp2 == 0):
        raise ValueError("upsilon is direction dependent at k_par = 0")
    w = wavenumbers(E, np.sqrt(kp2), mats, geom, constants)
    R = _reflection_from_wavenumbers(w, geom.d, geom.env)
    k2 = (E / constants.hbar_c) ** 2
    # k1z^2 / (k^2 eps1), formed without the square root
    p_ratio = (k2 * geom.env.eps1 - kp2) / (k2 * geom.env.eps1)
    sym = R.R_SS * (ky * ky / kp2) + R.R_PP * p_ratio * (kx * kx / kp2)
    asym = -R.n_chiral * (R.R_SP * p_ratio + R.R_PS) * (kx * ky / kp2)
    return UpsilonValue(sym, asym)


def electron_line_kernel(E, ky, beta: float, mats: MaterialModel, geom: Geometry,
                         constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Im of both parts of the kernel at kx = -k_omega / beta."""
    E = np.asarray(E, dtype=float)
    kx = -(E / constants.hbar_c) / beta
    ups = upsilon(E, kx, ky, mats, geom, constants)
    return ups.symmetric_part.imag, ups.antisymmetric_part.imag


def _vacuum_im_gxx(dx, dy, dz, k1, eps1):
    """Closed form of Im G0_xx = (1 + d_x^2 / k1^2) sin(k1 R) / (4 pi R)."""
    R = math.sqrt(dx * dx + dy * dy + dz * dz)
    if R * k1 < 1e-3:
        # series of sin(kR)/R and its radial derivatives about R = 0
        x2 = (k1 * R) ** 2
        f = k1 * (1 - x2 / 6 + x2 * x2 / 120)
        fpp_over = -k1**3 / 3 * (1 - x2 / 10)      # f''(R) limit and f'(R)/R limit coincide
        d2x = fpp_over + (dx * dx) * k1**5 / 15 * (1 - x2 / 14)
        return (f + d2x / k1**2) / (4 * math.pi)
    s, c = math.sin(k1 * R), math.cos(k1 * R)
    f = s / R
    fp = (k1 * c) / R - s / R**2
    fpp = -k1 * k1 * s / R - 2 * k1 * c / R**2 + 2 * s / R**3
    d2x = fpp * dx * dx / R**2 + fp * (1 / R - dx * dx / R**3)
    return (f + d2x / (k1 * k1)) / (4 * math.pi)


def im_gxx(r, r_prime, E, mats: MaterialModel, geom: Geometry, part: str = "full",
           tol: float = 1e-9, n_phi: int = 256,
           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> QuadratureResult:
    """Im G_xx between two vacuum points from the Weyl (plane-wave) integral.

    ``part`` selects ``"full"``, ``"free"``, ``"reflected"``, ``"symmetric"``
    or ``"antisymmetric"`` (the last two are reflected-kernel parts).  The
    in-plane integral is done in polar coordinates: radially adaptive with
    the 1/k1z edge removed by sin/cosh maps, azimuthally by the periodic
    trapezoid rule.  Validation grade, not used on the hot path.
    """
    if part not in ("full", "free", "reflected", "symmetric", "antisymmetric"):
        raise ValueError(f"unknown part {part!r}")
    x, y, z = map(float, r)
    xp, yp, zp = map(float, r_prime)
    if not (z < 0 and zp < 0):
        raise ValueError("both points must lie in the vacuum half-space z < 0")
    dx, dy = x - xp, y - yp
    zsum, zdiff = z + zp, abs(z - zp)
    eps1 = geom.env.eps1
    k = E / constants.hbar_c
    k1 = k * math.sqrt(eps1)
    phi = (np.arange(n_phi) + 0.5) * (2 * math.pi / n_phi)
    cphi, sphi = np.cos(phi), np.sin(phi)
    want_free = part in ("full", "free")
    want_refl = part != "free"

    def angular(kpar, k1z):
        # integrand summed over phi, for arrays kpar, k1z of shape (m,)
        kxg = kpar[:, None] * cphi[None, :]
        kyg = kpar[:, None] * sphi[None, :]
        phase = np.cos(kxg * dx + kyg * dy)
        total = np.zeros(kxg.shape)
        kz = k1z[:, None]
        if want_free:
            total += (np.exp(1j * kz * zdiff) * (1 - kxg**2 / (k * k * eps1)) / kz).real
        if want_refl:
            ups = upsilon(np.full(kxg.shape, E), kxg, kyg, mats, geom, constants)
            if part == "symmetric":
                U = ups.symmetric_part
            elif part == "antisymmetric":
                U = ups.antisymmetric_part
            else:
                U = ups.total
            total += (np.exp(-1j * kz * zsum) * U / kz).real
        return (phase * total).sum(axis=1) * (2 * math.pi / n_phi)

    # propagating disc: kpar = k1 sin(th), evanescent ring: kpar = k1 cosh(t);
    # the Jacobian kpar dkpar cancels the 1/k1z edge singularity
    def f_prop(th):
        kpar = k1 * np.sin(th)
        return angular(kpar, (k1 * np.cos(th)).astype(complex)) * kpar * k1 * np.cos(th)

    def f_evan(t):
        kpar = k1 * np.cosh(t)
        return angular(kpar, 1j * k1 * np.sinh(t)) * kpar * k1 * np.sinh(t)

    res = integrate_adaptive(f_prop, 0.0, math.pi / 2, tol=tol, rel_tol=tol)
    value, err = res.value, res.error_estimate
    panels, conv = res.panels_used, res.converged
    if want_refl:
        # the free part vanishes under Re[] for evanescent k1z
        t_max = math.asinh(max(60.0 / (k1 * abs(zsum)), 1.0))
        ev = integrate_adaptive(f_evan, 0.0, t_max, tol=tol, rel_tol=tol)
        value += ev.value
        err += ev.error_estimate
        panels += ev.panels_used
        conv = conv and ev.converged
    pre = 1.0 / (8 * math.pi**2)
    return QuadratureResult(pre * value, pre * err, panels, conv)


def vacuum_im_gxx(r, r_prime, E, eps1: float = 1.0,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Closed-form free-space Im G_xx in a medium of permittivity eps1."""
    k1 = E / constants.hbar_c * math.sqrt(eps1)
    d = [float(a) - float(b) for a, b in zip(r, r_prime)]
    return _vacuum_im_gxx(d[0], d[1], d[2], k1, eps1)
