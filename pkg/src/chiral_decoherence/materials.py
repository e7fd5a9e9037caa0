"""Dispersive film response: Lorentz permittivity and Condon-form Pasteur parameter."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Oscillator:
    """Lorentz term f / (E0^2 - E^2 - i G E) of the permittivity."""
    resonance_energy: float  # eV
    strength: float          # eV^2
    damping: float           # eV

    def __post_init__(self):
        if not self.resonance_energy > 0:
            raise ValueError("oscillator resonance energy must be > 0")
        if not self.damping > 0:
            raise ValueError("oscillator damping must be > 0")


@dataclass(frozen=True)
class ChiralOscillator:
    """Condon term kA E0 E / (E0^2 - E^2 - i G E) of the Pasteur parameter."""
    resonance_energy: float  # eV
    amplitude: float         # dimensionless
    damping: float           # eV

    def __post_init__(self):
        if not self.resonance_energy > 0:
            raise ValueError("chiral resonance energy must be > 0")
        if not self.damping > 0:
            raise ValueError("chiral damping must be > 0")


@dataclass(frozen=True)
class MaterialModel:
    eps_background: float
    oscillators: tuple[Oscillator, ...] = ()
    chiral_oscillators: tuple[ChiralOscillator, ...] = ()
    mu: float = 1.0

    def __post_init__(self):
        if self.mu != 1.0:
            raise ValueError("only non-magnetic films (mu = 1) are supported")
        object.__setattr__(self, "oscillators", tuple(self.oscillators))
        object.__setattr__(self, "chiral_oscillators", tuple(self.chiral_oscillators))

    @property
    def resonances(self) -> list[float]:
        return [o.resonance_energy for o in self.oscillators + self.chiral_oscillators]

    def enantiomer(self) -> "MaterialModel":
        """Mirror-image film: every chiral amplitude negated."""
        flipped = tuple(replace(c, amplitude=-c.amplitude) for c in self.chiral_oscillators)
        return replace(self, chiral_oscillators=flipped)

    def achiral(self) -> "MaterialModel":
        return replace(self, chiral_oscillators=())


@dataclass(frozen=True)
class Environment:
    eps1: float = 1.0   # half-space holding the electron
    eps2: float = 1.48  # substrate

    def __post_init__(self):
        if self.eps1 < 1 or self.eps2 < 1:
            raise ValueError("environment permittivities must be >= 1")


def _check_energy(energy):
    e = np.asarray(energy, dtype=float)
    if np.any(~(e > 0)):
        raise ValueError("photon energy must be strictly positive")
    return e


def permittivity(model: MaterialModel, energy):
    """Film permittivity at photon energy ``energy`` (eV)."""
    e = _check_energy(energy)
    eps = np.full(e.shape, model.eps_background, dtype=complex)
    for osc in model.oscillators:
        eps += osc.strength / (osc.resonance_energy**2 - e * e - 1j * osc.damping * e)
    return eps[()] if eps.ndim == 0 else eps


def pasteur(model: MaterialModel, energy):
    """Pasteur (chirality) parameter; vanishes at zero frequency."""
    e = _check_energy(energy)
    kappa = np.zeros(e.shape, dtype=complex)
    for osc in model.chiral_oscillators:
        e0 = osc.resonance_energy
        kappa += osc.amplitude * e0 * e / (e0 * e0 - e * e - 1j * osc.damping * e)
    return kappa[()] if kappa.ndim == 0 else kappa


@dataclass
class PassivityReport:
    min_imag_eps: float
    argmin_energy: float
    violations: list[float] = field(default_factory=list)
    borderline: bool = False

    @property
    def passive(self) -> bool:
        return not self.violations


def passivity_report(model: MaterialModel, energy_grid: Sequence[float],
                     borderline_tol: float = 1e-9) -> PassivityReport:
    """Scan Im eps over a grid and flag the energies where it is not positive."""
    grid = np.asarray(energy_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("energy grid must be positive and strictly increasing")
    im = np.imag(permittivity(model, grid))
    i = int(np.argmin(im))
    bad = [float(x) for x in grid[im <= 0]]
    scale = max(1.0, float(np.max(np.abs(permittivity(model, grid)))))
    return PassivityReport(
        min_imag_eps=float(im[i]),
        argmin_energy=float(grid[i]),
        violations=bad,
        borderline=bool(im[i] <= borderline_tol * scale),
    )


def default_material() -> MaterialModel:
    """Chiral molecular film with a single 3.54 eV band in a dielectric matrix."""
    return MaterialModel(
        eps_background=2.0,
        oscillators=(Oscillator(3.54, 1.2, 0.35),),
        chiral_oscillators=(ChiralOscillator(3.54, 1.0e-4, 0.35),),
    )
