"""Independent brute-force routes used to certify the main code path.

Nothing here imports from the material, slab, Green-kernel, quadrature or
response modules; only the constants and the branch square root are
shared.  The film optics are transcribed again from the layer-matrix
formulas and the reflection matrix is obtained with a general 2x2 solve.
Integrals use composite Simpson rules on fixed grids, with one Richardson
step where a grid pair is available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .units import DEFAULT_CONSTANTS, PhysicalConstants, sqrt_upper


@dataclass
class OracleReport:
    quantity_name: str
    main_value: complex
    oracle_value: complex
    relative_error: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.relative_error <= self.bound

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.quantity_name}: main={self.main_value:.12g} "
                f"oracle={self.oracle_value:.12g} rel={self.relative_error:.2e} (bound {self.bound:.0e})")


def compare(name: str, main, oracle, bound: float, scale: Optional[float] = None) -> OracleReport:
    den = abs(oracle) if scale is None else scale
    rel = abs(main - oracle) / den if den else abs(main - oracle)
    return OracleReport(name, main, oracle, float(rel), bound)


# -- film optics, transcribed independently ----------------------------------------

@dataclass(frozen=True)
class FilmSpec:
    """Plain-number description of the stack, decoupled from the main data types."""
    eps_inf: float
    lorentz: tuple          # ((E0, f, damping), ...)
    condon: tuple           # ((E0, kappa_A, damping), ...)
    d: float
    eps1: float
    eps2: float

    @classmethod
    def from_objects(cls, material, geometry):
        return cls(float(material.eps_background),
                   tuple((o.resonance_energy, o.strength, o.damping) for o in material.oscillators),
                   tuple((o.resonance_energy, o.amplitude, o.damping)
                         for o in material.chiral_oscillators),
                   float(geometry.d), float(geometry.env.eps1), float(geometry.env.eps2))

    @property
    def top_resonance(self) -> float:
        return max([r[0] for r in self.lorentz + self.condon] or [1.0])


def film_eps(spec: FilmSpec, E):
    E = np.asarray(E, dtype=complex)
    out = spec.eps_inf + 0j * E
    for E0, f, g in spec.lorentz:
        out = out + f / (E0 * E0 - E * E - 1j * g * E)
    return out


def film_kappa(spec: FilmSpec, E):
    E = np.asarray(E, dtype=complex)
    out = 0j * E
    for E0, kA, g in spec.condon:
        out = out + kA * E0 * E / (E0 * E0 - E * E - 1j * g * E)
    return out


def stack_matrices(spec: FilmSpec, E, kpar, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Full M1, M2 (shape (..., 2, 2)) and the chiral index, straight from the formulas."""
    E = np.asarray(E, dtype=float)
    kpar = np.asarray(kpar, dtype=float)
    k = E / constants.hbar_c
    eps = film_eps(spec, E)
    kap = film_kappa(spec, E)
    n = np.where(kap == 0, sqrt_upper(eps), sqrt_upper(eps * kap * kap) / np.where(kap == 0, 1, kap))
    k1z = sqrt_upper(k * k * spec.eps1 - kpar * kpar)
    k2z = sqrt_upper(k * k * spec.eps2 - kpar * kpar)
    # exactly on a light line the 1/kz factors cancel in R; keep them finite
    k1z = np.where(k1z == 0, 1e-150j * k, k1z)
    k2z = np.where(k2z == 0, 1e-150j * k, k2z)
    Kp = sqrt_upper(k * k * (n + kap) ** 2 - kpar * kpar)
    Km = sqrt_upper(k * k * (n - kap) ** 2 - kpar * kpar)
    d = spec.d
    Cp = 0.5 * (np.cos(Kp * d) + np.cos(Km * d))
    Cm = 0.5 * (np.cos(Kp * d) - np.cos(Km * d))

    def sinc_over(K):
        # sin(K d) / K with the K -> 0 limit d
        safe = np.where(K == 0, 1.0, K)
        return np.where(K == 0, d, np.sin(K * d) / safe)

    sp, sm = sinc_over(Kp), sinc_over(Km)
    S1p = 0.5 * (k * (n + kap) / n * sp + k * (n - kap) / n * sm)
    S1m = 0.5 * (k * (n + kap) / n * sp - k * (n - kap) / n * sm)
    S2p = 0.5 * (Kp * Kp * n / (k * (n + kap)) * sp + Km * Km * n / (k * (n - kap)) * sm)
    S2m = 0.5 * (Kp * Kp * n / (k * (n + kap)) * sp - Km * Km * n / (k * (n - kap)) * sm)
    A = k * spec.eps2 / (1j * k2z * eps)
    shape = np.broadcast(E, kpar).shape
    M1 = np.empty(shape + (2, 2), dtype=complex)
    M2 = np.empty(shape + (2, 2), dtype=complex)
    M1[..., 0, 0] = Cp + k2z / (1j * k) * S1p
    M1[..., 0, 1] = n * (A * Cm - S1m)
    M1[..., 1, 0] = n * 1j * k1z / (k * spec.eps1) * (Cm + k2z / (1j * k) * S1m)
    M1[..., 1, 1] = eps * 1j * k1z / (k * spec.eps1) * (A * Cp - S1p)
    M2[..., 0, 0] = k / (1j * k1z) * (1j * k2z / k * Cp + S2p)
    M2[..., 0, 1] = n * k / (1j * k1z) * (Cm + A * S2m)
    M2[..., 1, 0] = n / eps * (1j * k2z / k * Cm + S2m)
    M2[..., 1, 1] = Cp + A * S2p
    return M1, M2, n, k1z


def stack_reflection(spec: FilmSpec, E, kpar, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Full reflection matrix diag(1, -1) (M1 - M2) (M1 + M2)^-1 and the chiral index."""
    M1, M2, n, k1z = stack_matrices(spec, E, kpar, constants)
    # X (M1 + M2) = M1 - M2  <=>  (M1 + M2)^T X^T = (M1 - M2)^T
    Xt = np.linalg.solve(np.swapaxes(M1 + M2, -1, -2), np.swapaxes(M1 - M2, -1, -2))
    R = np.swapaxes(Xt, -1, -2).copy()
    R[..., 1, :] *= -1.0
    return R, n, k1z


def kernel_parts(spec: FilmSpec, E, kx, ky, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Even and odd (in ky) parts of the reflected xx kernel."""
    E = np.asarray(E, dtype=float)
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    kp2 = kx * kx + ky * ky
    R, n, k1z = stack_reflection(spec, E, np.sqrt(kp2), constants)
    k = E / constants.hbar_c
    ratio = k1z * k1z / (k * k * spec.eps1)
    even = R[..., 0, 0] * ky * ky / kp2 + R[..., 1, 1] * ratio * kx * kx / kp2
    odd = -(R[..., 0, 1] * ratio + R[..., 1, 0]) * kx * ky / kp2
    return even, odd


# -- fixed-grid interaction integrals -----------------------------------------------

def simpson_weights(n: int, length: float = 1.0) -> np.ndarray:
    if n < 2 or n % 2:
        raise ValueError("Simpson needs an even number of intervals >= 2")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (length / n / 3.0)


class FixedGridOracle:
    """Simpson tables of the electron-line kernel on E = E_max u^2, ky = Q0 sinh(s T(E)).

    ``T(E) = asinh(k_cap / Q0)`` with ``k_cap = ky_factor / z_near``.  The
    table is computed once at 2n intervals per axis; the n-interval rule
    reuses every other node and Richardson combines the pair.
    """

    def __init__(self, spec: FilmSpec, beta: float, L: float, E_max: float, z_near: float,
                 n_E: int = 512, n_ky: int = 128, ky_factor: float = 40.0,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS):
        if n_E < 64 or n_ky < 64:
            raise ValueError("fixed grids need at least 64 intervals per axis")
        self.spec, self.beta, self.L, self.c = spec, beta, L, constants
        self.E_max, self.z_near = E_max, z_near
        self.n_E, self.n_ky = 2 * n_E, 2 * n_ky
        u = np.linspace(0.0, 1.0, self.n_E + 1)
        s = np.linspace(0.0, 1.0, self.n_ky + 1)
        E = E_max * u * u
        E[0] = 1.0  # placeholder; the u = 0 row carries zero weight (dE/du = 0)
        hc = constants.hbar_c
        Q0 = E / hc * math.sqrt(1.0 / beta**2 - spec.eps1)
        T = np.arcsinh(ky_factor / z_near / Q0)
        t = s[None, :] * T[:, None]
        self.ky = Q0[:, None] * np.sinh(t)
        self.q = Q0[:, None] * np.cosh(t)
        kx = -(E / hc) / beta
        ev, od = kernel_parts(spec, E[:, None], kx[:, None] * np.ones_like(self.ky), self.ky, constants)
        jac = (2.0 * E_max * u) * T          # dE/du and dt/ds
        self.u, self.E = u, E
        self.jac = jac
        self.Ks = ev.imag
        self.Ka = od.imag
        self.pref = 2.0 * L * constants.fine_structure / (math.pi * hc)

    def _rule(self, stride: int):
        wE = simpson_weights(self.n_E // stride) * self.jac[::stride]
        ws = simpson_weights(self.n_ky // stride)
        return wE, ws

    def _integrate(self, K, y_fun, x_t, z_t, stride):
        wE, ws = self._rule(stride)
        sl = (slice(None, None, stride), slice(None, None, stride))
        F = np.exp(self.q[sl] * z_t) * K[sl] * y_fun(self.ky[sl])
        phase = np.exp(-1j * self.E[::stride] * x_t / (self.c.hbar_c * self.beta))
        phase[0] = 1.0
        return complex(((F @ ws) * phase) @ wE)

    def delta(self, x_t: float, y_t: float, z_t: float, richardson: bool = True):
        """(delta_s, delta_a) as complex numbers."""
        if z_t > -self.z_near * (1 - 1e-12):
            raise ValueError("point closer to the film than the table was built for")
        cos = lambda ky: np.cos(ky * y_t)
        sin = lambda ky: np.sin(ky * y_t)
        out = []
        for K, f in ((self.Ks, cos), (self.Ka, sin)):
            fine = self._integrate(K, f, x_t, z_t, 1)
            if richardson:
                coarse = self._integrate(K, f, x_t, z_t, 2)
                fine = fine + (fine - coarse) / 15.0
            out.append(self.pref * fine)
        return out[0], out[1]


def fixed_grid_delta(x_t: float, y_t: float, z_t: float, n_E: int, n_ky: int, material, geometry,
                     beta: float, E_max: float, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """One-shot fixed-grid Delta_S, Delta_A (plain Simpson, no extrapolation)."""
    spec = FilmSpec.from_objects(material, geometry)
    orc = FixedGridOracle(spec, beta, geometry.L, E_max, abs(z_t), n_E // 2, n_ky // 2,
                          constants=constants)
    return orc.delta(x_t, y_t, z_t, richardson=False)


# -- elastic phase ---------------------------------------------------------------

def _graded_nodes(lo, hi, centers, base: int = 64, levels: int = 40, m: int = 16):
    """Simpson nodes and weights on [lo, hi] with geometric refinement around ``centers``."""
    bps = {lo, hi}
    H = (hi - lo) / base
    bps.update(lo + H * np.arange(1, base))
    for c in centers:
        bps.add(c)
        for j in range(levels):
            d = 4 * H * 2.0 ** -j
            if d < 1e-15 * (hi - lo):
                break
            for p in (c - d, c + d):
                if lo < p < hi:
                    bps.add(p)
    bp = np.array(sorted(bps))
    xs, ws = [], []
    w = simpson_weights(m)
    for a, b in zip(bp[:-1], bp[1:]):
        xs.append(np.linspace(a, b, m + 1))
        ws.append(w * (b - a))
    return np.concatenate(xs), np.concatenate(ws)


def _azimuthal_numeric(b, a, n_phi: int = 4096):
    """Principal-value integrals of sin^2 and cos^2 against 1/(a + b cos phi), by trapezoid.

    Only the bounded sin^2 integrand is sampled.  The cos^2 value follows
    from cos^2 = 1 - sin^2 and the elementary integral of 1/(a + b cos phi),
    2 pi / sqrt(a^2 - b^2) inside the pole circle and 0 outside it.  Outside,
    the pole value of sin^2 is subtracted so the trapezoid sees a regular
    periodic integrand.
    """
    phi = (np.arange(n_phi) + 0.5) * (2 * math.pi / n_phi)
    c = np.cos(phi)[None, :]
    b = np.asarray(b, dtype=float)[:, None]
    above = b[:, 0] >= a
    s0 = np.where(above[:, None], 1.0 - (a / np.maximum(b, a)) ** 2, 0.0)   # sin^2 at the pole
    w_s = ((1.0 - c * c - s0) / (a + b * c)).sum(axis=1) * (2 * math.pi / n_phi)
    bare = np.where(above, 0.0, 2 * math.pi / np.sqrt(np.where(above, 1.0, a * a - b[:, 0] ** 2)))
    return w_s, bare - w_s


def phase_oracle_integrand(E: float, Z: float, spec: FilmSpec, beta: float, ky_factor: float = 40.0,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """k-plane integral of the phase kernel at one photon energy, on fixed graded grids."""
    hc = constants.hbar_c
    zz = 2.0 * Z
    cap = ky_factor / abs(zz)
    k1 = E / hc * math.sqrt(spec.eps1)
    a = E / hc / beta

    def bracket(kpar, ratio):
        R, _, _ = stack_reflection(spec, np.full(kpar.shape, E), kpar, constants)
        ws, wc = _azimuthal_numeric(kpar, a)
        return R[..., 0, 0] * ws + R[..., 1, 1] * ratio * wc

    k2 = E / hc * math.sqrt(spec.eps2)
    # the substrate light line is a square-root edge of R
    th_edge = [math.asin(k2 / k1)] if k2 < k1 else []
    th, wth = _graded_nodes(0.0, 0.5 * math.pi, th_edge, base=32)
    kp = k1 * np.sin(th)
    prop = np.sum(wth * kp * (np.exp(-1j * k1 * np.cos(th) * zz)
                              * bracket(kp, np.cos(th) ** 2)).real)
    u1 = math.acosh(a / k1)

    def gap_f(tau):
        # f(0) is a finite limit (1/r of the azimuthal weight times tau); approach it
        tau = np.maximum(tau, 1e-7)
        uu = u1 * (1 - tau * tau)
        kp = k1 * np.cosh(uu)
        return (kp * np.exp(k1 * np.sinh(uu) * zz)
                * bracket(kp, -np.sinh(uu) ** 2).imag * 2 * u1 * tau)

    # peaks of 1/|det(M1 + M2)| mark the guided modes
    def det_inv(tau):
        uu = u1 * (1 - tau * tau)
        M1, M2, _, _ = stack_matrices(spec, np.full(tau.shape, E), k1 * np.cosh(uu), constants)
        return 1.0 / np.abs(np.linalg.det(M1 + M2))

    centers = _peaks(det_inv, 0.0, 1.0)
    if k1 < k2 < a:
        centers.append(math.sqrt(1.0 - math.acosh(k2 / k1) / u1))
    tg, wg = _graded_nodes(0.0, 1.0, centers, base=64)
    gap = np.sum(wg * gap_f(tg))
    tail = 0.0
    u_max = math.asinh(cap / k1)
    if u_max > u1:
        tu, wtu = _graded_nodes(u1, u_max, [], base=64)
        kp = np.maximum(k1 * np.cosh(tu), a)   # rounding must not cross the pole circle
        tail = np.sum(wtu * kp * np.exp(k1 * np.sinh(tu) * zz)
                      * bracket(kp, -np.sinh(tu) ** 2).imag)
    return float(prop + gap + tail)


def phase_oracle(Z: float, material, geometry, beta: float, E_max: float, n_E: int = 360,
                 ky_factor: float = 40.0, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Phi(Z) by Simpson on a uniform photon-energy grid over polar k-plane integrals.

    The E = 0 node is replaced by its limit, approached at E = 1e-9 E_max.
    """
    if n_E % 2:
        raise ValueError("n_E must be even")
    spec = FilmSpec.from_objects(material, geometry)
    E = np.linspace(0.0, E_max, n_E + 1)
    E[0] = 1e-9 * E_max
    vals = np.array([phase_oracle_integrand(float(e), Z, spec, beta, ky_factor, constants)
                     for e in E])
    pre = geometry.L * constants.fine_structure / (2 * math.pi**2 * constants.hbar_c)
    return float(pre * np.sum(simpson_weights(n_E, E_max) * vals))


def _peaks(f, lo, hi, n_scan: int = 3000, n_zoom: int = 48):
    x = np.linspace(lo, hi, n_scan + 1)[1:-1]
    y = f(x)
    med = np.median(y)
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > 10 * med)) + 1
    out = []
    for i in idx:
        c, w = x[i], x[1] - x[0]
        for _ in range(10):
            loc = np.linspace(max(lo, c - w), min(hi, c + w), n_zoom + 1)
            c = float(loc[int(np.argmax(f(loc)))])
            w = 2 * w / n_zoom
        out.append(c)
    return out


# -- derivatives and moments -----------------------------------------------------

def finite_difference(f: Callable[[float], complex], point: float, step: float, order: int):
    """Central difference of order 1 or 2."""
    if not step > 0:
        raise ValueError("step must be > 0")
    if order == 1:
        return (f(point + step) - f(point - step)) / (2 * step)
    if order == 2:
        return (f(point + step) - 2 * f(point) + f(point - step)) / (step * step)
    raise ValueError("order must be 1 or 2")


def richardson(f: Callable[[float], complex], point: float, step: float, order: int):
    """One Richardson step on the central difference (error O(step^4))."""
    a = finite_difference(f, point, step, order)
    b = finite_difference(f, point, step / 2, order)
    return b + (b - a) / 3.0


def distribution_moments(axis: Sequence[float], density: Sequence[float], n: int,
                         point_mass: float = 0.0, point_at: float = 0.0) -> float:
    """Trapezoidal n-th moment, optionally with a delta of weight ``point_mass``."""
    x = np.asarray(axis, dtype=float)
    y = np.asarray(density, dtype=float)
    v = x ** n * y
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)) + point_mass * point_at ** n)


def convolution_density(axis, density_fn, h: float):
    """Reference autoconvolution by a plain Riemann sum (used for the closed-form check)."""
    x = np.asarray(axis, dtype=float)
    return float(np.sum(density_fn(x)) * h)
