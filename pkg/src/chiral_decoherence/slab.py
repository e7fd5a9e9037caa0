"""Planar optics of the vacuum / chiral film / substrate stack.

All routines broadcast over arrays of photon energy ``E`` (eV) and
in-plane wavenumber ``k_par`` (nm^-1).  The mixing coefficients
``R_SP`` and ``R_PS`` are returned with the chiral index ``n`` stripped,
so the physical reflection matrix is ``[[R_SS, n R_SP], [n R_PS, R_PP]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .materials import Environment, MaterialModel, pasteur, permittivity
from .units import DEFAULT_CONSTANTS, PhysicalConstants, sqrt_upper

SERIES_THRESHOLD = 1e-4
DET_GUARD = 1e-300


class SingularStackError(ArithmeticError):
    """Raised when M1 + M2 cannot be inverted."""


@dataclass(frozen=True)
class Geometry:
    d: float = 50.0      # film thickness, nm
    L: float = 1000.0    # interaction length, nm
    env: Environment = field(default_factory=Environment)

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError("film thickness d must be >= 0")
        if not self.L > 0:
            raise ValueError("interaction length L must be > 0")


@dataclass
class Wavenumbers:
    k_omega: np.ndarray
    k1z: np.ndarray
    k2z: np.ndarray
    Kz_plus: np.ndarray
    Kz_minus: np.ndarray
    n_chiral: np.ndarray
    eps: np.ndarray
    kappa: np.ndarray


@dataclass
class LayerMatrices:
    M1: np.ndarray       # shape (..., 2, 2)
    M2: np.ndarray
    log_scale: np.ndarray  # true matrices are exp(log_scale) * stored ones
    series_used: np.ndarray


@dataclass
class ReflectionMatrix:
    R_SS: np.ndarray
    R_PP: np.ndarray
    R_SP: np.ndarray
    R_PS: np.ndarray
    n_chiral: np.ndarray


def chiral_index(eps, kappa):
    """n = sqrt(eps kappa^2) / kappa on the upper branch; sqrt(eps) when kappa = 0."""
    eps = np.asarray(eps, dtype=complex)
    kappa = np.asarray(kappa, dtype=complex)
    zero = kappa == 0
    safe = np.where(zero, 1.0, kappa)
    n = np.where(zero, sqrt_upper(eps), sqrt_upper(eps * safe * safe) / safe)
    return n


def wavenumbers(E, k_par, mats: MaterialModel, geom: Geometry,
                constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Wavenumbers:
    E = np.asarray(E, dtype=float)
    if np.any(~(E > 0)):
        raise ValueError("photon energy must be strictly positive")
    kp2 = np.asarray(k_par, dtype=float) ** 2
    k = E / constants.hbar_c
    eps = permittivity(mats, E)
    kappa = pasteur(mats, E)
    n = chiral_index(eps, kappa)
    k2 = k * k
    return Wavenumbers(
        k_omega=np.broadcast_to(k, np.broadcast(k, kp2).shape),
        k1z=sqrt_upper(k2 * geom.env.eps1 - kp2),
        k2z=sqrt_upper(k2 * geom.env.eps2 - kp2),
        Kz_plus=sqrt_upper(k2 * (n + kappa) ** 2 - kp2),
        Kz_minus=sqrt_upper(k2 * (n - kappa) ** 2 - kp2),
        n_chiral=np.asarray(n),
        eps=np.asarray(eps),
        kappa=np.asarray(kappa),
    )


def _scaled_trig(K, d, m):
    """exp(-m) cos(K d) and exp(-m) sin(K d) / K, the latter by series for small K d."""
    x = K * d
    ep = np.exp(1j * x - m)
    em = np.exp(-1j * x - m)
    cos_s = 0.5 * (ep + em)
    small = np.abs(x) < SERIES_THRESHOLD
    K_safe = np.where(small, 1.0, K)
    sinc_direct = (ep - em) / (2j * K_safe)
    x2 = x * x
    sinc_series = d * np.exp(-m) * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    return cos_s, np.where(small, sinc_series, sinc_direct), small


def _pieces(w: Wavenumbers, d: float):
    """Wavenumber nudges and the trig combinations shared by every matrix entry."""
    k, n, kap = w.k_omega, w.n_chiral, w.kappa
    Kp, Km = w.Kz_plus, w.Kz_minus
    # exactly on a light line the entries carry 1/0 factors that cancel in R;
    # nudge the root off zero so the ratios stay finite
    k1z = np.where(w.k1z == 0, 1e-150j * k, w.k1z)
    k2z = np.where(w.k2z == 0, 1e-150j * k, w.k2z)
    m = np.maximum(np.abs((Kp * d).imag), np.abs((Km * d).imag))
    cp, sp, small_p = _scaled_trig(Kp, d, m)
    cm, sm, small_m = _scaled_trig(Km, d, m)
    # K sin(K d), needed by S^(2)
    ksin_p = sp * (Kp * Kp)
    ksin_m = sm * (Km * Km)
    a_p = k * (n + kap) / n
    a_m = k * (n - kap) / n
    return dict(k=k, k1z=k1z, k2z=k2z, m=m, small=small_p | small_m,
                C_plus=0.5 * (cp + cm), C_minus=0.5 * (cp - cm),
                S1_plus=0.5 * (a_p * sp + a_m * sm), S1_minus=0.5 * (a_p * sp - a_m * sm),
                S2_plus=0.5 * (ksin_p / a_p + ksin_m / a_m),
                S2_minus=0.5 * (ksin_p / a_p - ksin_m / a_m))


def _blocks(w: Wavenumbers, d: float, env: Environment):
    """Scaled M1/M2 entries with the n factor of the off-diagonals kept apart."""
    P = _pieces(w, d)
    k, k1z, k2z, eps = P["k"], P["k1z"], P["k2z"], w.eps
    Cp, Cm = P["C_plus"], P["C_minus"]
    S1p, S1m, S2p, S2m = P["S1_plus"], P["S1_minus"], P["S2_plus"], P["S2_minus"]
    u = k2z / (1j * k)
    v = k * env.eps2 / (1j * k2z * eps)
    g1 = 1j * k1z / (k * env.eps1)
    h1 = k / (1j * k1z)
    w2 = 1j * k2z / k
    M1 = (Cp + u * S1p,
          v * Cm - S1m,
          g1 * (Cm + u * S1m),
          eps * g1 * (v * Cp - S1p))
    M2 = (h1 * (w2 * Cp + S2p),
          h1 * (Cm + v * S2m),
          (w2 * Cm + S2m) / eps,
          Cp + v * S2p)
    return M1, M2, P["m"], P["small"]


def _balanced_blocks(w: Wavenumbers, d: float, env: Environment):
    """M1/M2 entries with the P column multiplied by eps1 k2z.

    A common right scaling of a column leaves (M1 - M2)(M1 + M2)^-1
    unchanged.  This one removes the 1/k2z factor and, at d = 0, reduces
    the P entries to eps2 k1z and eps1 k2z, so R_PP keeps full relative
    accuracy next to its Brewster zero.
    """
    P = _pieces(w, d)
    k, k1z, k2z, eps = P["k"], P["k1z"], P["k2z"], w.eps
    e1, e2 = env.eps1, env.eps2
    Cp, Cm = P["C_plus"], P["C_minus"]
    S1p, S1m, S2p, S2m = P["S1_plus"], P["S1_minus"], P["S2_plus"], P["S2_minus"]
    u = k2z / (1j * k)
    g1 = 1j * k1z / (k * e1)
    h1 = k / (1j * k1z)
    w2 = 1j * k2z / k
    ve = k * e2 / (1j * eps)          # v k2z
    M1 = (Cp + u * S1p,
          e1 * ve * Cm - e1 * k2z * S1m,
          g1 * (Cm + u * S1m),
          k1z * e2 * Cp - (1j * eps * k1z * k2z / k) * S1p)
    M2 = (h1 * (w2 * Cp + S2p),
          h1 * e1 * k2z * Cm + h1 * e1 * ve * S2m,
          (w2 * Cm + S2m) / eps,
          e1 * k2z * Cp + e1 * ve * S2p)
    return M1, M2, P["m"], P["small"]


def _assemble(entries, n):
    a, b, c, dd = entries
    out = np.empty(np.broadcast(a, b, c, dd, n).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 0, 1] = n * b
    out[..., 1, 0] = n * c
    out[..., 1, 1] = dd
    return out


def layer_matrices(E, k_par, mats: MaterialModel, geom: Geometry,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> LayerMatrices:
    """M1 and M2 of the film, stored with a common factor exp(-log_scale) removed.

    The factor guards against cosh overflow for strongly evanescent film
    waves; it cancels in the reflection matrix.
    """
    w = wavenumbers(E, k_par, mats, geom, constants)
    M1, M2, m, small = _blocks(w, geom.d, geom.env)
    return LayerMatrices(_assemble(M1, w.n_chiral), _assemble(M2, w.n_chiral),
                         np.asarray(m), np.asarray(small))


def _reflection_from_wavenumbers(w: Wavenumbers, d: float, env: Environment) -> ReflectionMatrix:
    M1, M2, _, _ = _balanced_blocks(w, d, env)
    n = w.n_chiral
    n2 = n * n
    p00, p01, p10, p11 = (x - y for x, y in zip(M1, M2))
    q00, q01, q10, q11 = (x + y for x, y in zip(M1, M2))
    det = q00 * q11 - n2 * q01 * q10
    scale = np.maximum.reduce([np.abs(q00), np.abs(q11), np.abs(n * q01), np.abs(n * q10)])
    bad = ~(np.abs(det) > DET_GUARD * scale * scale)
    if np.any(bad):
        worst = float(np.max(np.where(bad, scale * scale / np.maximum(np.abs(det), 1e-320), 0)))
        raise SingularStackError(f"M1 + M2 is singular (condition estimate {worst:.3e})")
    R_SS = (p00 * q11 - n2 * p01 * q10) / det
    R_SP = (p01 * q00 - p00 * q01) / det
    R_PS = -(p10 * q11 - p11 * q10) / det
    R_PP = -(p11 * q00 - n2 * p10 * q01) / det
    return ReflectionMatrix(R_SS, R_PP, R_SP, R_PS, n)


def reflection_matrix(E, k_par, mats: MaterialModel, geom: Geometry,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> ReflectionMatrix:
    """diag(1, -1) (M1 - M2) (M1 + M2)^-1 with n stripped from the mixing entries."""
    w = wavenumbers(E, k_par, mats, geom, constants)
    return _reflection_from_wavenumbers(w, geom.d, geom.env)


def fresnel_two_media(E, k_par, eps1: float, eps2: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> ReflectionMatrix:
    """Single-interface Fresnel matrix in the same sign convention (P row flipped)."""
    E = np.asarray(E, dtype=float)
    kp2 = np.asarray(k_par, dtype=float) ** 2
    k2 = (E / constants.hbar_c) ** 2
    k1z = sqrt_upper(k2 * eps1 - kp2)
    k2z = sqrt_upper(k2 * eps2 - kp2)
    R_SS = (k1z - k2z) / (k1z + k2z)
    R_PP = -(eps2 * k1z - eps1 * k2z) / (eps2 * k1z + eps1 * k2z)
    zero = np.zeros(np.shape(R_SS), dtype=complex)
    return ReflectionMatrix(R_SS, R_PP, zero, zero.copy(), np.full(np.shape(R_SS), np.nan + 0j))
