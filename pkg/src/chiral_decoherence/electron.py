"""Incident electron profile, the decoherence factor and the mirror-asymmetry degree.

Positions are ``(X, Y, Z)`` in nm with the film surface at ``Z = 0`` and
the electron in ``Z < 0``.  The Gaussian transverse profile is centred at
``Z0 = -impact_b``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .response import ResponseConfig, kernel_grid, phase_phi
from .units import DEFAULT_CONSTANTS, PhysicalConstants


class AloofWarning(UserWarning):
    """The Gaussian profile reaches too close to the film surface."""


@dataclass(frozen=True)
class ElectronParams:
    beta: float
    sigma_y: float = 3.0      # nm
    sigma_z: float = 3.0      # nm
    impact_b: float = 18.0    # nm, centre height above the film
    E_i: Optional[float] = None  # eV; None means the kinetic energy

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        for name in ("sigma_y", "sigma_z", "impact_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.E_i is not None and not self.E_i > 0:
            raise ValueError("E_i must be > 0")
        if not 3.0 * self.sigma_z < self.impact_b:
            warnings.warn(f"3 sigma_z = {3 * self.sigma_z} nm is not below the impact parameter "
                          f"{self.impact_b} nm; the profile tail reaches the film",
                          AloofWarning, stacklevel=2)

    @property
    def z0(self) -> float:
        return -self.impact_b

    def initial_energy(self, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
        if self.E_i is not None:
            return self.E_i
        gamma = constants.lorentz_factor(self.beta)
        return constants.electron_rest_energy * (gamma - 1.0)


def phi_i(Y, Z, params: ElectronParams):
    """L2-normalized elliptical Gaussian transverse profile (nm^-1)."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    sy, sz = params.sigma_y, params.sigma_z
    norm = math.sqrt(2.0 / (math.pi * sy * sz))
    return norm * np.exp(-(Y / sy) ** 2 - ((Z - params.z0) / sz) ** 2)


def autoconvolution(y_t, z_t, params: ElectronParams):
    """Integral over Y of phi_i(Y, z_t/2) phi_i(Y - y_t, z_t/2), in closed form."""
    y_t = np.asarray(y_t, dtype=float)
    z_t = np.asarray(z_t, dtype=float)
    sy, sz = params.sigma_y, params.sigma_z
    return (math.sqrt(2.0 / math.pi) / sz * np.exp(-y_t**2 / (2 * sy * sy))
            * np.exp(-2.0 * (0.5 * z_t - params.z0) ** 2 / (sz * sz)))


@dataclass
class ZQuadrature:
    """Gauss-Hermite nodes of the |phi_i|^2 marginal in Z."""
    Z: np.ndarray
    weights: np.ndarray
    dropped_weight: float


def z_quadrature(params: ElectronParams, n_nodes: int = 32, z_floor: float = 0.1,
                 weight_floor: float = 1e-14) -> ZQuadrature:
    """Nodes Z_k and weights W_k with sum_k W_k f(Z_k) ~ integral of |phi_i|^2 f.

    Nodes with 2 Z_k above -z_floor (too close to or inside the film) and
    nodes with relative weight below ``weight_floor`` are dropped; their
    total weight is reported.
    """
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    Z = params.z0 + params.sigma_z * x / math.sqrt(2.0)
    W = w / math.sqrt(math.pi)
    keep = (2.0 * Z < -z_floor) & (W > weight_floor * W.max())
    return ZQuadrature(Z[keep], W[keep], float(math.fsum(W[~keep])))


@dataclass
class GammaValue:
    value: complex
    modulus_log: float
    phase: float
    error: float


def _shared_deltas(R, R_prime, cfg: ResponseConfig):
    X, Y, Z = map(float, R)
    Xp, Yp, Zp = map(float, R_prime)
    x_t, y_t, z_t = X - Xp, Y - Yp, Z + Zp
    floor = cfg.numerics.z_floor
    if not (2 * Z < -floor and 2 * Zp < -floor):
        raise ValueError(f"both points need 2Z below -{floor} nm")
    g = kernel_grid(cfg, min(abs(z_t), 2 * abs(Z), 2 * abs(Zp)), abs(y_t), abs(x_t),
                    max(abs(z_t), 2 * abs(Z), 2 * abs(Zp)))
    p = cfg.prefactor
    ds, da, err = g.delta(x_t, y_t, z_t)
    d1, _, e1 = g.delta(0.0, 0.0, 2 * Z)
    d2, _, e2 = g.delta(0.0, 0.0, 2 * Zp)
    return p * complex(ds), p * complex(da), p * d1.real, p * d2.real, p * (err + e1 + e2), Z, Zp


def gamma(R, R_prime, cfg: ResponseConfig, skip_phi: bool = True) -> GammaValue:
    """Decoherence factor between two transverse positions.

    All three interaction integrals come from one kernel table, so the
    factor is exactly 1 at coincident points.  The elastic phase is
    included only when ``skip_phi`` is False.
    """
    ds, da, d1, d2, err, Z, Zp = _shared_deltas(R, R_prime, cfg)
    expo = ds - 0.5 * (d1 + d2) + 1j * da
    phase = expo.imag
    if not skip_phi and Z != Zp:
        phase += phase_phi(Z, cfg).value - phase_phi(Zp, cfg).value
    mod = expo.real
    value = math.exp(mod) * complex(math.cos(phase), math.sin(phase))
    return GammaValue(value, mod, phase, err)


def asym_gamma(R, R_prime, cfg: ResponseConfig) -> complex:
    """Mirror-asymmetry degree 2 (g - g_M) / (g + g_M) in closed form, 2i tan(Delta_A)."""
    _, da, _, _, _, _, _ = _shared_deltas(R, R_prime, cfg)
    t = np.tan(complex(da))
    return complex(2j * t)


def mirrored(R):
    """Reflection through the symmetry plane y = 0."""
    X, Y, Z = map(float, R)
    return (X, -Y, Z)
