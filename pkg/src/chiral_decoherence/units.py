"""Physical constants and the (eV, nm) working-unit convention.

Photon energies are carried in eV and lengths in nm, so the vacuum
wavenumber is ``k = E / hbar_c`` in nm^-1.  Momenta are reported as
``P c`` in eV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhysicalConstants:
    hbar_c: float = 197.3269804          # eV nm
    electron_rest_energy: float = 510998.95  # eV
    fine_structure: float = 7.2973525693e-3
    speed_of_light: float = 299792458.0  # m/s, informational only

    def __post_init__(self):
        for name in ("hbar_c", "electron_rest_energy", "fine_structure", "speed_of_light"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be strictly positive")
        if abs(self.fine_structure * 137.0 - 1.0) > 0.01:
            raise ValueError("fine_structure must lie within 1% of 1/137")

    def wavenumber(self, energy):
        """Vacuum wavenumber (nm^-1) of a photon of the given energy (eV)."""
        return np.asarray(energy) / self.hbar_c

    def lorentz_factor(self, beta: float) -> float:
        return 1.0 / math.sqrt(1.0 - beta * beta)

    def reference_momentum(self, beta: float) -> float:
        """P0 c = m c^2 beta gamma, in eV."""
        return self.electron_rest_energy * beta * self.lorentz_factor(beta)

    def reference_energy(self, beta: float) -> float:
        """E0 = V P0 = m c^2 beta^2 gamma, in eV."""
        return self.reference_momentum(beta) * beta


DEFAULT_CONSTANTS = PhysicalConstants()


def sqrt_upper(z):
    """Square root on the branch with non-negative imaginary part.

    On the cut (Im w = 0) the root with non-negative real part is returned,
    so positive reals map to positive reals and negative reals to +i|z|^1/2.
    Works elementwise on arrays.
    """
    w = np.sqrt(np.asarray(z, dtype=complex))
    # principal sqrt has Re >= 0; flip to the upper half plane where needed
    flip = (w.imag < 0) | ((w.imag == 0) & (w.real < 0))
    w = np.where(flip, -w, w)
    if w.ndim == 0:
        return complex(w)
    return w
