"""Lateral-momentum and energy-loss statistics of the scattered electron.

Momenta are ``P c`` and energies are in eV.  Both distributions are
averages over the Z marginal of |phi_i|^2 of compound-Poisson laws: for a
node Z_k the interaction exponent is the Fourier transform of a measure
``nu_k`` (over lateral momentum transfer or over energy loss), so the
distribution is ``exp(-|nu_k|) * (delta + nu_k + nu_k*nu_k/2 + ...)``,
evaluated with one FFT per node on a uniform lattice.  Moments come from
the analytic derivative kernels instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .electron import ElectronParams, z_quadrature
from .response import ResponseConfig, kernel_bundle, kernel_grid


class WeakCouplingWarning(UserWarning):
    """The first-order loss probability is used outside its range of validity."""


@dataclass
class Distribution1D:
    axis: np.ndarray
    density: np.ndarray
    normalization_defect: float
    zero_loss_weight: float = 0.0      # weight of the delta at zero loss (energy only)
    negative_ringing: float = 0.0      # most negative density relative to the peak
    meta: dict = field(default_factory=dict)


@dataclass
class MomentReport:
    mean: float
    variance: float
    peak_factor: Optional[float] = None
    initial_variance: Optional[float] = None
    dropped_weight: float = 0.0


def _trapezoid(y, x):
    return float(np.trapezoid(y, x))


def _uniform_step(grid, name):
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 3:
        raise ValueError(f"{name} needs at least 3 points")
    d = np.diff(g)
    h = float(np.mean(d))
    if not h > 0 or np.max(np.abs(d - h)) > 1e-9 * max(1.0, abs(h)):
        raise ValueError(f"{name} must be uniform and increasing")
    return g, h


def _nodes(params: ElectronParams, cfg: ResponseConfig):
    zq = z_quadrature(params, cfg.numerics.gh_nodes, cfg.numerics.z_floor)
    if zq.Z.size == 0:
        raise ValueError("no quadrature node lies in the vacuum half-space")
    return zq


def _check_beta(params: ElectronParams, cfg: ResponseConfig):
    if params.beta != cfg.beta:
        raise ValueError(f"electron beta {params.beta} differs from response beta {cfg.beta}")


# -- lateral momentum ----------------------------------------------------------

def lateral_momentum_moments(params: ElectronParams, cfg: ResponseConfig) -> MomentReport:
    """Mean and variance of P_y c (eV, eV^2) from the A and S kernels."""
    _check_beta(params, cfg)
    zq = _nodes(params, cfg)
    b = kernel_bundle(zq.Z, cfg)
    W = zq.weights
    mean = math.fsum(W * b["A"])
    initial = (cfg.constants.hbar_c / params.sigma_y) ** 2
    spread = math.fsum(W * b["S"])
    var = initial + spread + (math.fsum(W * b["A"] ** 2) - mean * mean)
    return MomentReport(mean, var, mean / math.sqrt(var), initial, zq.dropped_weight)


def default_momentum_grid(params: ElectronParams, cfg: ResponseConfig) -> np.ndarray:
    """Symmetric uniform P_y c grid resolving the initial Gaussian and the interaction tail."""
    hc = cfg.constants.hbar_c
    sig = hc / params.sigma_y
    z_eff = max(2.0 * (params.impact_b - 2.0 * params.sigma_z), 2.0)
    tail = hc / z_eff
    extent = max(8.0 * sig, 25.0 * tail)
    h = min(sig / 10.0, tail / 8.0)
    m = int(math.ceil(extent / h))
    return h * np.arange(-m, m + 1)


def lateral_momentum_distribution(P_grid, params: ElectronParams, cfg: ResponseConfig,
                                  parts: bool = False) -> Distribution1D:
    """Probability density of P_y c (per eV) on a uniform grid symmetric about 0.

    With ``parts=True`` the even and odd parts in P_y are stored in
    ``meta["even"]`` and ``meta["odd"]``.
    """
    _check_beta(params, cfg)
    P, h = _uniform_step(P_grid, "P_grid")
    m = (P.size - 1) // 2
    if P.size % 2 == 0 or np.max(np.abs(P + P[::-1])) > 1e-9 * h:
        raise ValueError("P_grid must be symmetric about 0 with an odd number of points")
    hc = cfg.constants.hbar_c
    sig = hc / params.sigma_y
    if P[-1] < 6.0 * sig:
        raise ValueError(f"P_grid must reach 6 initial widths ({6 * sig:.4g} eV)")
    zq = _nodes(params, cfg)
    z_t = 2.0 * zq.Z
    g = kernel_grid(cfg, float(np.min(np.abs(z_t))), z_abs_max=float(np.max(np.abs(z_t))))
    # half lattice of ky >= 0, padded for aperiodic convolution
    n = 1 << int(math.ceil(math.log2(4 * (2 * m + 1))))
    ky = (h / hc) * np.arange(m + 1)
    even, odd = g.ky_weights(ky, z_t)
    pref = cfg.prefactor
    # measure on the momentum lattice: nu(+-P) = pref / 2 (even +- odd) dky
    w = 0.5 * pref * (h / hc)
    nu = np.zeros((z_t.size, n))
    nu[:, :m + 1] = w * (even + odd)
    nu[:, n - m:] = (w * (even - odd))[:, 1:][:, ::-1]
    nu[:, 0] = w * even[:, 0]
    # Gaussian of the initial profile, sampled on the dual lattice
    yj = np.fft.fftfreq(n, d=h / hc) * 2 * math.pi      # conjugate lateral distance, nm
    gauss_hat = np.exp(-0.5 * (yj / params.sigma_y) ** 2)
    total = np.zeros(n)
    for k in range(z_t.size):
        F = np.fft.fft(nu[k])
        mass = math.fsum(nu[k])
        spec = np.fft.ifft(gauss_hat * np.exp(F - mass)).real
        total += zq.weights[k] * spec
    # ifft of the dual-lattice samples returns lattice masses of the density
    total = np.concatenate([total[n - m:], total[:m + 1]]) / h
    density = total
    norm = _trapezoid(density, P)
    out = Distribution1D(P, density, 1.0 - norm,
                         negative_ringing=float(min(0.0, density.min()) / density.max()),
                         meta={"dropped_weight": zq.dropped_weight, "nodes": int(z_t.size)})
    if parts:
        out.meta["even"] = 0.5 * (density + density[::-1])
        out.meta["odd"] = 0.5 * (density - density[::-1])
    return out


# -- energy loss -------------------------------------------------------------

def energy_moments(params: ElectronParams, cfg: ResponseConfig) -> MomentReport:
    """Mean energy change <E> - E_i (eV, negative for a loss) and energy variance (eV^2)."""
    _check_beta(params, cfg)
    zq = _nodes(params, cfg)
    b = kernel_bundle(zq.Z, cfg)
    W = zq.weights
    mean = math.fsum(W * b["sigma1"])
    var = math.fsum(W * b["sigma2"]) + (math.fsum(W * b["sigma1"] ** 2) - mean * mean)
    return MomentReport(mean, var, dropped_weight=zq.dropped_weight)


def default_loss_step(cfg: ResponseConfig) -> float:
    return 0.005


def default_energy_grid(params: ElectronParams, cfg: ResponseConfig,
                        loss_max: Optional[float] = None, step: Optional[float] = None) -> np.ndarray:
    """Uniform ascending E grid on the loss lattice E_i - j h, covering losses up to ``loss_max``."""
    h = step or default_loss_step(cfg)
    top = loss_max if loss_max is not None else 1.2 * cfg.E_max
    m = int(math.ceil(top / h))
    E_i = params.initial_energy(cfg.constants)
    return E_i - h * np.arange(m, -3, -1)


def _loss_weights(losses, params, cfg, zq):
    z_t = 2.0 * zq.Z
    g = kernel_grid(cfg, float(np.min(np.abs(z_t))), z_abs_max=float(np.max(np.abs(z_t))))
    return cfg.prefactor * g.spectral_weights(losses, z_t)


def energy_spectrum(E_grid, params: ElectronParams, cfg: ResponseConfig) -> Distribution1D:
    """Probability density of the final energy (per eV) on a uniform grid.

    The grid must be aligned with E_i (E_i - E a multiple of the step).  The
    no-loss part is a delta at E_i and is returned as ``zero_loss_weight``
    rather than folded into the density.
    """
    _check_beta(params, cfg)
    E, h = _uniform_step(E_grid, "E_grid")
    E_i = params.initial_energy(cfg.constants)
    j = (E_i - E) / h
    ji = np.rint(j)
    if np.max(np.abs(j - ji)) > 1e-6:
        raise ValueError("E_grid must contain E_i on its lattice (E_i - E a multiple of the step)")
    ji = ji.astype(int)
    zq = _nodes(params, cfg)
    j_top = int(max(ji.max(), math.ceil(cfg.E_max / h)))
    losses = h * np.arange(j_top + 1)
    gw = _loss_weights(losses, params, cfg, zq)
    nu = gw * h
    nu[:, 0] = 0.0
    last = losses <= cfg.E_max
    edge = np.flatnonzero(last)[-1]
    if abs(losses[edge] - cfg.E_max) < 1e-9 * h:
        nu[:, edge] *= 0.5
    n = 1 << int(math.ceil(math.log2(4 * (j_top + 1))))
    total = np.zeros(n)
    zero = 0.0
    for k in range(zq.Z.size):
        buf = np.zeros(n)
        buf[:j_top + 1] = nu[k]
        mass = math.fsum(nu[k])
        F = np.fft.fft(buf)
        spec = np.fft.ifft(np.expm1(F)).real
        spec[0] = 0.0
        total += zq.weights[k] * math.exp(-mass) * spec
        zero += zq.weights[k] * math.exp(-mass)
    dens_lattice = total[:j_top + 1] / h
    density = np.zeros(E.size)
    inside = (ji >= 0) & (ji <= j_top)
    density[inside] = dens_lattice[ji[inside]]
    density[ji == 0] = 0.0
    norm = _trapezoid(density, E) + zero
    peak = float(np.max(np.abs(density))) or 1.0
    return Distribution1D(E, density, 1.0 - norm, zero_loss_weight=zero,
                          negative_ringing=float(min(0.0, density.min()) / peak),
                          meta={"E_i": E_i, "dropped_weight": zq.dropped_weight,
                                "nodes": int(zq.Z.size), "gain_side_max": float(
                                    np.max(np.abs(density[ji < 0]), initial=0.0) / peak)})


def eels_weak_coupling(E_loss_grid, params: ElectronParams, cfg: ResponseConfig,
                       gate: float = 0.1) -> Distribution1D:
    """First-order loss probability per eV, the Z-average of the spectral weight."""
    _check_beta(params, cfg)
    loss = np.asarray(E_loss_grid, dtype=float)
    zq = _nodes(params, cfg)
    b = kernel_bundle(zq.Z, cfg)
    biggest = float(np.max(np.abs(b["delta0"])))
    if biggest >= gate:
        warnings.warn(f"max |Delta| = {biggest:.3g} is not below {gate}; weak coupling violated",
                      WeakCouplingWarning, stacklevel=2)
    gw = _loss_weights(loss, params, cfg, zq)
    density = zq.weights @ gw
    expected = math.fsum(zq.weights * b["delta0"])
    integral = _trapezoid(density, loss)
    return Distribution1D(loss, density, 1.0 - integral / expected if expected else 0.0,
                          meta={"sum_rule": expected, "max_delta": biggest,
                                "gate_ok": biggest < gate, "dropped_weight": zq.dropped_weight})


def default_loss_grid(cfg: ResponseConfig, step: Optional[float] = None) -> np.ndarray:
    h = step or default_loss_step(cfg)
    m = int(math.ceil(cfg.E_max / h))
    return np.linspace(0.0, cfg.E_max, m + 1)
