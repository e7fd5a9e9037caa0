"""Reduced two-point interaction integrals and their derivative kernels.

With the electron travelling along x at speed beta c, the photon momentum
is pinned to ``kx = -k / beta`` and the field seen by the electron is
evanescent with decay rate ``q = sqrt(Q0^2 + ky^2)``, ``Q0 = k sqrt(1/beta^2 - eps1)``.
The ky integral is taken in the variable ``t`` with ``ky = Q0 sinh t``,
which turns ``dky / q`` into ``dt`` and removes the 1/q endpoint growth.

Every quantity is linear in the interaction length ``L``.  Spatial
arguments are ``x_t = X - X'``, ``y_t = Y - Y'`` and ``z_t = Z + Z'`` in nm;
``z_t`` must be negative.  Off the ``x_t = 0`` line both Delta_S and
Delta_A acquire an imaginary part from the exp(-i E x_t / (hbar V))
factor, so they are returned as complex numbers.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .greens import electron_line_kernel, upsilon
from .materials import MaterialModel
from .quadrature import (NumericsConfig, QuadratureResult, _fsum, gauss_kronrod_panels,
                         integrate_adaptive)
from .slab import Geometry, reflection_matrix
from .units import DEFAULT_CONSTANTS, PhysicalConstants

log = logging.getLogger(__name__)

MAX_BLOCKS = 20000      # (E, s) panel budget of one kernel table


class ConvergenceError(RuntimeError):
    """A kernel table could not reach the requested tolerance."""


@dataclass(frozen=True)
class ResponseConfig:
    """Everything the Delta integrals depend on."""
    material: MaterialModel
    geometry: Geometry = field(default_factory=Geometry)
    beta: float = 0.5
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    numerics: NumericsConfig = field(default_factory=NumericsConfig)

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.beta * math.sqrt(self.geometry.env.eps1) >= 1:
            raise ValueError("electron faster than light in the vacuum half-space")

    @property
    def E_max(self) -> float:
        return self.numerics.resolved_E_max(self.material.resonances)

    @property
    def prefactor(self) -> float:
        """L alpha / (pi hbar c), times 2 for the even extension of the ky integral."""
        c = self.constants
        return 2.0 * self.geometry.L * c.fine_structure / (math.pi * c.hbar_c)

    def with_L(self, L: float) -> "ResponseConfig":
        from dataclasses import replace
        return replace(self, geometry=replace(self.geometry, L=L))

    def spectral_key(self) -> str:
        """Hash of everything a kernel table depends on (L excluded)."""
        g = self.geometry
        text = repr((self.material, g.d, g.env, self.beta, self.constants, self.numerics))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class DeltaPoint:
    x_tilde: float
    y_tilde: float
    z_tilde: float
    delta_s: complex
    delta_a: complex
    error: float


def _check_z(z_t, floor):
    z = np.asarray(z_t, dtype=float)
    if np.any(~(z < -floor)):
        raise ValueError(f"z_tilde must be below -{floor} nm (electron points in vacuum, off contact)")
    return z


class KernelGrid:
    """Tabulated Im of the kernel parts on a tensor Gauss-Kronrod grid in (E, s).

    ``t = s T(E)`` with ``T(E) = asinh(k_cap / Q0(E))`` and
    ``k_cap = ky_cutoff_factor / z_near``.  Panels in both directions are
    bisected until the embedded Gauss-vs-Kronrod difference of a set of
    probe integrals (the corners of the requested (y, z) box plus the
    derivative and energy-moment weights) is below ``rel_tol``.
    """

    def __init__(self, cfg: ResponseConfig, z_near: float, z_far: Optional[float] = None,
                 y_max: float = 0.0, x_max: float = 0.0, max_rounds: int = 12):
        num = cfg.numerics
        if not z_near >= num.z_floor:
            raise ValueError(f"|z_tilde| = {z_near} nm is below the contact floor {num.z_floor} nm")
        self.cfg = cfg
        self.z_near = float(z_near)
        self.z_far = float(max(z_far if z_far is not None else z_near, z_near))
        self.y_max = float(abs(y_max))
        self.x_max = float(abs(x_max))
        self.E_max = cfg.E_max
        self.k_cap = num.ky_cutoff_factor / self.z_near
        self.chiral = bool(cfg.material.chiral_oscillators)
        self._blocks: dict = {}
        self._build(max_rounds)

    # -- construction -------------------------------------------------

    def _Q0(self, E):
        c = self.cfg.constants
        return E / c.hbar_c * math.sqrt(1.0 / self.cfg.beta**2 - self.cfg.geometry.env.eps1)

    def _initial_E_breakpoints(self):
        E_max = self.E_max
        pts = {0.0, E_max}
        pts.update(E_max * 2.0 ** -j for j in range(1, 16))
        mats = self.cfg.material
        for osc in list(mats.oscillators) + list(mats.chiral_oscillators):
            for m in (-4, -2, -1, -0.5, 0, 0.5, 1, 2, 4):
                e = osc.resonance_energy + m * osc.damping
                if 0 < e < E_max:
                    pts.add(e)
        return np.array(sorted(pts))

    def _tabulate(self, E_bp, s_bp):
        """Kernel on every (E panel, s panel) block, reusing cached blocks."""
        missing = [(a, b) for a in zip(E_bp[:-1], E_bp[1:]) for b in zip(s_bp[:-1], s_bp[1:])
                   if (a, b) not in self._blocks]
        if missing:
            from .quadrature import KRONROD_NODES as X
            Es, Ss = [], []
            for (e0, e1), (s0, s1) in missing:
                Es.append(0.5 * (e0 + e1) + 0.5 * (e1 - e0) * X)
                Ss.append(0.5 * (s0 + s1) + 0.5 * (s1 - s0) * X)
            Es = np.array(Es)[:, :, None] * np.ones((1, 1, 15))
            Ss = np.array(Ss)[:, None, :] * np.ones((1, 15, 1))
            Q0 = self._Q0(Es)
            T = np.arcsinh(self.k_cap / Q0)
            ky = Q0 * np.sinh(Ss * T)
            ks, ka = electron_line_kernel(Es, ky, self.cfg.beta, self.cfg.material,
                                          self.cfg.geometry, self.cfg.constants)
            if not (np.all(np.isfinite(ks)) and np.all(np.isfinite(ka))):
                raise ConvergenceError("non-finite kernel values while tabulating")
            for i, key in enumerate(missing):
                self._blocks[key] = (ks[i], ka[i])
        nE, nS = len(E_bp) - 1, len(s_bp) - 1
        KS = np.empty((nE * 15, nS * 15))
        KA = np.empty((nE * 15, nS * 15))
        for i, a in enumerate(zip(E_bp[:-1], E_bp[1:])):
            for j, b in enumerate(zip(s_bp[:-1], s_bp[1:])):
                ks, ka = self._blocks[(a, b)]
                KS[i * 15:(i + 1) * 15, j * 15:(j + 1) * 15] = ks
                KA[i * 15:(i + 1) * 15, j * 15:(j + 1) * 15] = ka
        return KS, KA

    @classmethod
    def from_tables(cls, cfg: ResponseConfig, box, E_bp, s_bp, im_sym, im_asym, build_error):
        """Rebuild a grid from stored breakpoints and kernel values, skipping refinement."""
        g = cls.__new__(cls)
        z_near, z_far, y_max, x_max = box
        g.cfg, g.z_near, g.z_far, g.y_max, g.x_max = cfg, z_near, z_far, y_max, x_max
        g.E_max = cfg.E_max
        g.k_cap = cfg.numerics.ky_cutoff_factor / z_near
        g.chiral = bool(cfg.material.chiral_oscillators)
        g._blocks = {}
        g._set_grid(E_bp, s_bp, (np.asarray(im_sym), np.asarray(im_asym)))
        g.build_error = float(build_error)
        return g

    def box(self):
        return (self.z_near, self.z_far, self.y_max, self.x_max)

    def _set_grid(self, E_bp, s_bp, tables=None):
        self.E_breakpoints = np.asarray(E_bp)
        self.s_breakpoints = np.asarray(s_bp)
        self.E_nodes, self.wE_k, self.wE_g, self.E_panel = gauss_kronrod_panels(E_bp)
        self.s_nodes, self.ws_k, self.ws_g, self.s_panel = gauss_kronrod_panels(s_bp)
        Q0 = self._Q0(self.E_nodes)
        self.T = np.arcsinh(self.k_cap / Q0)
        st = self.s_nodes[None, :] * self.T[:, None]
        self.ky = Q0[:, None] * np.sinh(st)
        self.q = Q0[:, None] * np.cosh(st)
        if tables is None:
            tables = self._tabulate(E_bp, s_bp)
        if tables[0].shape != self.ky.shape or tables[1].shape != self.ky.shape:
            raise ValueError("stored kernel tables do not match the breakpoints")
        self.im_sym, self.im_asym = tables

    def _probes(self):
        """Integrand tables (E, s) of the functionals that steer refinement."""
        c = self.cfg.constants
        probes = []
        zs = sorted({self.z_near, self.z_far})
        TW = self.T[:, None]
        for z in zs:
            env = np.exp(-self.q * z) * TW
            base = env * self.im_sym
            probes.append(base)
            probes.append(base * self.ky**2)
            probes.append(base * (self.E_nodes**2)[:, None])
            if self.y_max > 0:
                probes.append(base * np.cos(self.ky * self.y_max))
            if self.x_max > 0:
                ph = self.E_nodes * self.x_max / (c.hbar_c * self.cfg.beta)
                probes.append(base * np.cos(ph)[:, None])
                probes.append(base * np.sin(ph)[:, None])
            if self.chiral:
                a = env * self.im_asym
                probes.append(a * self.ky)
                if self.y_max > 0:
                    probes.append(a * np.sin(self.ky * self.y_max))
        return probes

    def _build(self, max_rounds):
        rel = self.cfg.numerics.rel_tol
        E_bp = self._initial_E_breakpoints()
        s_bp = np.linspace(0.0, 1.0, 9)
        for _ in range(max_rounds):
            self._set_grid(E_bp, s_bp)
            nEp, nSp = len(E_bp) - 1, len(s_bp) - 1
            err_s = np.zeros(nSp)
            err_E = np.zeros(nEp)
            ok = True
            for F in self._probes():
                scale = float(np.abs(F) @ self.ws_k @ self.wE_k)
                if scale == 0.0:
                    continue
                ds = (F * (self.ws_k - self.ws_g)[None, :])
                es = np.abs(np.add.reduceat(ds, np.arange(0, ds.shape[1], 15), axis=1))
                es = self.wE_k @ es / scale
                inner = F @ self.ws_k
                ee = np.abs(np.add.reduceat(inner * (self.wE_k - self.wE_g),
                                            np.arange(0, inner.size, 15))) / scale
                err_s = np.maximum(err_s, es)
                err_E = np.maximum(err_E, ee)
                if es.sum() > 0.5 * rel or ee.sum() > 0.5 * rel:
                    ok = False
            self.build_error = float(err_s.sum() + err_E.sum())
            if ok:
                return
            if err_s.sum() > 0.5 * rel:
                split = err_s > 0.25 * rel / nSp
                s_bp = _bisect(s_bp, split)
            if err_E.sum() > 0.5 * rel:
                split = err_E > 0.25 * rel / nEp
                E_bp = _bisect(E_bp, split)
            if (len(E_bp) - 1) * (len(s_bp) - 1) > MAX_BLOCKS:
                raise ConvergenceError(
                    f"kernel grid needs more than {MAX_BLOCKS} panels (estimate "
                    f"{self.build_error:.2e}); the electron line probably meets a weakly "
                    "damped guided mode of the film (beta * film index > 1)")
        raise ConvergenceError(
            f"kernel grid did not reach rel_tol={rel:g} (estimate {self.build_error:.2e})")

    # -- evaluation -----------------------------------------------------

    def covers(self, z_abs_min: float, y_abs_max: float = 0.0, x_abs_max: float = 0.0) -> bool:
        return (z_abs_min >= self.z_near * (1 - 1e-12) and y_abs_max <= self.y_max * (1 + 1e-12)
                and x_abs_max <= self.x_max * (1 + 1e-12))

    def _e_weights(self, x_t):
        ph = self.E_nodes * (x_t / (self.cfg.constants.hbar_c * self.cfg.beta))
        rot = np.exp(-1j * ph) if x_t != 0 else 1.0
        return self.wE_k * rot, self.wE_g * rot

    def _contract(self, F, x_t=0.0, e_power=0):
        """Kronrod value and embedded error of the double integral of F."""
        wk, wg = self._e_weights(x_t)
        if e_power:
            wk = wk * self.E_nodes**e_power
            wg = wg * self.E_nodes**e_power
        inner_k = F @ self.ws_k
        inner_g = F @ self.ws_g
        val = inner_k @ wk
        err = abs(val - inner_k @ wg) + abs(val - inner_g @ wk)
        return val, err

    def delta(self, x_t: float, y_t: float, z_t: float):
        """(delta_s, delta_a, error) at one point; values carry no L prefactor."""
        env = np.exp(self.q * z_t) * self.T[:, None]
        vs, es = self._contract(env * self.im_sym * np.cos(self.ky * y_t), x_t)
        if self.chiral and y_t != 0:
            va, ea = self._contract(env * self.im_asym * np.sin(self.ky * y_t), x_t)
        else:
            va, ea = 0.0, 0.0
        return vs, va, es + ea

    def moment(self, z_t: float, part: str, ky_power: int = 0, e_power: int = 0):
        env = np.exp(self.q * z_t) * self.T[:, None]
        K = self.im_sym if part == "S" else self.im_asym
        F = env * K
        if ky_power:
            F = F * self.ky**ky_power
        return self._contract(F, 0.0, e_power)

    def spectral_weight(self, E, z_t: float):
        """s-integral at arbitrary photon energies: per-eV weight without L prefactor."""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        out = np.zeros(E.shape)
        pos = E > 0
        if not np.any(pos):
            return out
        Ep = E[pos][:, None]
        Q0 = self._Q0(Ep)
        T = np.arcsinh(self.k_cap / Q0)
        st = self.s_nodes[None, :] * T
        ky = Q0 * np.sinh(st)
        q = Q0 * np.cosh(st)
        ks, _ = electron_line_kernel(Ep * np.ones_like(ky), ky, self.cfg.beta, self.cfg.material,
                                     self.cfg.geometry, self.cfg.constants)
        out[pos] = (np.exp(q * z_t) * ks * T) @ self.ws_k
        out[E > self.E_max] = 0.0
        return out


    def spectral_weights(self, E, z_values):
        """Per-eV weights at many z sharing one kernel table; shape (nz, nE), no L prefactor."""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        z = np.atleast_1d(np.asarray(z_values, dtype=float))
        out = np.zeros((z.size, E.size))
        pos = (E > 0) & (E <= self.E_max)
        if not np.any(pos):
            return out
        Ep = E[pos][:, None]
        Q0 = self._Q0(Ep)
        T = np.arcsinh(self.k_cap / Q0)
        st = self.s_nodes[None, :] * T
        ky = Q0 * np.sinh(st)
        q = Q0 * np.cosh(st)
        ks, _ = electron_line_kernel(Ep * np.ones_like(ky), ky, self.cfg.beta, self.cfg.material,
                                     self.cfg.geometry, self.cfg.constants)
        KT = ks * T
        for i, zt in enumerate(z):
            out[i, pos] = (np.exp(q * zt) * KT) @ self.ws_k
        return out

    def ky_weights(self, ky, z_values):
        """E-integrated kernels at fixed ky >= 0: (even, odd) arrays of shape (nz, nky).

        Each is the integral over E of exp(q z) Im U / q, so that the
        even part integrates against cos(ky y) over ky > 0 to Delta_S and
        the odd part against sin(ky y) to Delta_A (up to the prefactor).
        """
        ky = np.atleast_1d(np.asarray(ky, dtype=float))
        z = np.atleast_1d(np.asarray(z_values, dtype=float))
        Q0 = self._Q0(self.E_nodes)[:, None]
        q = np.sqrt(Q0 * Q0 + ky[None, :] ** 2)
        ks, ka = electron_line_kernel(self.E_nodes[:, None] * np.ones((1, ky.size)), ky[None, :],
                                      self.cfg.beta, self.cfg.material, self.cfg.geometry,
                                      self.cfg.constants)
        ks = ks / q
        ka = ka / q if self.chiral else np.zeros_like(ks)
        even = np.empty((z.size, ky.size))
        odd = np.empty((z.size, ky.size))
        for i, zt in enumerate(z):
            env = np.exp(q * zt) * self.wE_k[:, None]
            even[i] = np.sum(env * ks, axis=0)
            odd[i] = np.sum(env * ka, axis=0)
        return even, odd


def _bisect(bp, split):
    out = [bp[0]]
    for i, s in enumerate(split):
        if s:
            out.append(0.5 * (bp[i] + bp[i + 1]))
        out.append(bp[i + 1])
    return np.array(out)


# -- grid cache ---------------------------------------------------------------

_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def kernel_grid(cfg: ResponseConfig, z_abs_min: float, y_abs_max: float = 0.0,
                x_abs_max: float = 0.0, z_abs_max: Optional[float] = None) -> KernelGrid:
    """Cached grid covering |z_t| >= z_abs_min, |y_t| <= y_abs_max, |x_t| <= x_abs_max."""
    key = cfg.spectral_key()
    with _CACHE_LOCK:
        for g in _CACHE.get(key, []):
            if g.covers(z_abs_min, y_abs_max, x_abs_max) and (
                    z_abs_max is None or g.z_far >= z_abs_max or g.z_near == z_abs_min):
                return g
    # round the box outward so nearby requests share a table
    z_near = float(2.0 ** math.floor(math.log2(z_abs_min)))
    z_near = max(z_near, cfg.numerics.z_floor)
    y_max = 0.0 if y_abs_max == 0 else float(2.0 ** math.ceil(math.log2(y_abs_max)))
    x_max = 0.0 if x_abs_max == 0 else float(2.0 ** math.ceil(math.log2(x_abs_max)))
    z_far = max(z_abs_max or 0.0, 4.0 * z_near, 64.0)
    box = (z_near, z_far, y_max, x_max)
    grid = _load_grid(cfg, box)
    if grid is None:
        grid = KernelGrid(cfg, z_near, z_far, y_max, x_max)
        _store_grid(grid)
    with _CACHE_LOCK:
        _CACHE.setdefault(key, []).append(grid)
    return grid


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


# -- on-disk tables ------------------------------------------------------------

_DISK_DIR: Optional[str] = None


def set_cache_dir(path: Optional[str]):
    """Directory for persisted kernel tables; None keeps them in memory only."""
    global _DISK_DIR
    _DISK_DIR = path


def _grid_path(cfg: ResponseConfig, box) -> Optional[str]:
    if _DISK_DIR is None:
        return None
    tag = hashlib.sha256(repr(tuple(float(v) for v in box)).encode()).hexdigest()[:12]
    return os.path.join(_DISK_DIR, f"kernel_{cfg.spectral_key()}_{tag}.npz")


def _load_grid(cfg: ResponseConfig, box) -> Optional[KernelGrid]:
    path = _grid_path(cfg, box)
    if path is None or not os.path.exists(path):
        return None
    try:
        with np.load(path) as f:
            if str(f["key"]) != cfg.spectral_key() or tuple(f["box"]) != tuple(box):
                return None
            return KernelGrid.from_tables(cfg, tuple(float(v) for v in f["box"]), f["E_bp"],
                                          f["s_bp"], f["im_sym"], f["im_asym"],
                                          float(f["build_error"]))
    except (OSError, KeyError, ValueError) as exc:
        log.warning("ignoring unreadable kernel table %s: %s", path, exc)
        return None


def _store_grid(grid: KernelGrid):
    path = _grid_path(grid.cfg, grid.box())
    if path is None:
        return
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp.npz"
    np.savez(tmp, key=grid.cfg.spectral_key(), box=np.array(grid.box()),
             E_bp=grid.E_breakpoints, s_bp=grid.s_breakpoints, im_sym=grid.im_sym,
             im_asym=grid.im_asym, build_error=grid.build_error)
    os.replace(tmp, path)


# -- public operations -------------------------------------------------------

def delta_point(x_t: float, y_t: float, z_t: float, cfg: ResponseConfig,
                grid: Optional[KernelGrid] = None) -> DeltaPoint:
    _check_z(z_t, cfg.numerics.z_floor)
    g = grid or kernel_grid(cfg, abs(z_t), abs(y_t), abs(x_t))
    vs, va, err = g.delta(float(x_t), float(y_t), float(z_t))
    p = cfg.prefactor
    return DeltaPoint(float(x_t), float(y_t), float(z_t), _tidy(p * vs), _tidy(p * va), p * err)


def _tidy(v):
    v = complex(v)
    return v.real if v.imag == 0 else v


def delta_s(x_t: float, y_t: float, z_t: float, cfg: ResponseConfig, grid=None):
    """Mirror-even part of the interaction integral (dimensionless)."""
    return delta_point(x_t, y_t, z_t, cfg, grid).delta_s


def delta_a(x_t: float, y_t: float, z_t: float, cfg: ResponseConfig, grid=None):
    """Mirror-odd part of the interaction integral (dimensionless)."""
    return delta_point(x_t, y_t, z_t, cfg, grid).delta_a


def delta_map(x_t: float, y_values, z_values, cfg: ResponseConfig):
    """Delta_S, Delta_A and error on the (y, z) tensor grid; arrays of shape (ny, nz)."""
    y = np.asarray(y_values, dtype=float)
    z = _check_z(z_values, cfg.numerics.z_floor)
    g = kernel_grid(cfg, float(np.min(np.abs(z))), float(np.max(np.abs(y))), abs(x_t),
                    float(np.max(np.abs(z))))
    ds = np.empty((y.size, z.size), dtype=complex)
    da = np.empty_like(ds)
    er = np.empty(ds.shape)
    for j, zt in enumerate(z):
        for i, yt in enumerate(y):
            ds[i, j], da[i, j], er[i, j] = g.delta(float(x_t), float(yt), float(zt))
    p = cfg.prefactor
    return p * ds, p * da, p * er


@dataclass
class PositivityReport:
    """Sign of the tabulated loss weight Im(symmetric part) on the electron line."""
    min_weight: float
    max_weight: float
    argmin: tuple            # (E eV, ky nm^-1)

    @property
    def positive(self) -> bool:
        return self.min_weight >= 0


def spectral_positivity(cfg: ResponseConfig, z_abs_min: float = 1.0) -> PositivityReport:
    """Scan the loss weight on every node of a kernel table.

    A positive weight makes S >= 0 and sigma1 < 0 for every Z; this is
    checked here rather than assumed, and a negative node is logged.
    """
    g = kernel_grid(cfg, z_abs_min)
    i, j = np.unravel_index(int(np.argmin(g.im_sym)), g.im_sym.shape)
    rep = PositivityReport(float(g.im_sym[i, j]), float(np.max(g.im_sym)),
                           (float(g.E_nodes[i]), float(g.ky[i, j])))
    if not rep.positive:
        log.warning("loss weight is negative (%.3e) at E = %.4g eV, ky = %.4g nm^-1",
                    rep.min_weight, *rep.argmin)
    return rep


def _kernel_at(Z, cfg, part, ky_power=0, e_power=0):
    z_t = 2.0 * float(Z)
    _check_z(z_t, cfg.numerics.z_floor)
    g = kernel_grid(cfg, abs(z_t))
    val, err = g.moment(z_t, part, ky_power, e_power)
    return val.real, err


def lateral_kernel_A(Z: float, cfg: ResponseConfig) -> float:
    """hbar c times the ky-slope of Delta_A at y_t = 0, z_t = 2Z (eV, i.e. momentum times c)."""
    if not cfg.material.chiral_oscillators:
        return 0.0
    val, _ = _kernel_at(Z, cfg, "A", ky_power=1)
    return cfg.prefactor * cfg.constants.hbar_c * val


def spread_kernel_S(Z: float, cfg: ResponseConfig) -> float:
    """-(hbar c)^2 times the ky-curvature of Delta_S at y_t = 0, z_t = 2Z (eV^2)."""
    val, _ = _kernel_at(Z, cfg, "S", ky_power=2)
    return cfg.prefactor * cfg.constants.hbar_c**2 * val


def sigma_n(Z: float, n: int, cfg: ResponseConfig) -> float:
    """Energy-moment kernels: sigma1 = -<E> weight (eV), sigma2 = <E^2> weight (eV^2)."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    val, _ = _kernel_at(Z, cfg, "S", e_power=n)
    return cfg.prefactor * (-1.0) ** n * val


def kernel_bundle(Z_values, cfg: ResponseConfig):
    """Delta_S(0,0,2Z), A, S, sigma1, sigma2 for an array of Z sharing one grid."""
    Z = np.asarray(Z_values, dtype=float)
    z_t = 2.0 * Z
    _check_z(z_t, cfg.numerics.z_floor)
    g = kernel_grid(cfg, float(np.min(np.abs(z_t))), z_abs_max=float(np.max(np.abs(z_t))))
    p = cfg.prefactor
    hc = cfg.constants.hbar_c
    out = {k: np.zeros(Z.size) for k in ("delta0", "A", "S", "sigma1", "sigma2")}
    for i, zt in enumerate(z_t):
        out["delta0"][i] = p * g.moment(zt, "S")[0].real
        if g.chiral:
            out["A"][i] = p * hc * g.moment(zt, "A", ky_power=1)[0].real
        out["S"][i] = p * hc * hc * g.moment(zt, "S", ky_power=2)[0].real
        out["sigma1"][i] = -p * g.moment(zt, "S", e_power=1)[0].real
        out["sigma2"][i] = p * g.moment(zt, "S", e_power=2)[0].real
    return out


def spectral_weight(E, Z: float, cfg: ResponseConfig):
    """Per-eV loss weight g(E; 2Z) of Delta_S(0, 0, 2Z); integrates to Delta_S over E."""
    z_t = 2.0 * float(Z)
    _check_z(z_t, cfg.numerics.z_floor)
    g = kernel_grid(cfg, abs(z_t))
    return cfg.prefactor * g.spectral_weight(E, z_t)


# -- elastic phase -------------------------------------------------------------

def _azimuthal_weights(b, a):
    """Principal-value azimuthal integrals of sin^2 and cos^2 against 1 / (a + b cos phi).

    Below the pole circle (b < a) with r = sqrt(a^2 - b^2):
    sin^2 -> 2 pi / (a + r) and cos^2 -> 2 pi a / (r (a + r)).
    Above it both equal +-2 pi a / b^2, since the bare principal value vanishes.
    """
    b = np.asarray(b, dtype=float)
    below = b < a
    r = np.sqrt(np.where(below, a * a - b * b, 1.0))
    bb = np.where(below, 1.0, b * b)
    w_s = np.where(below, 2 * math.pi / (a + r), 2 * math.pi * a / bb)
    w_c = np.where(below, 2 * math.pi * a / (r * (a + r)), -2 * math.pi * a / bb)
    return w_s, w_c


def _mode_breakpoints(f, lo, hi, n_scan=4000, n_zoom=64):
    """Breakpoints clustering on the sharp peaks of |f| (guided modes of the film).

    Peaks are located on a coarse scan, then each is pinned down by
    repeated local rescans before a geometric cluster is laid around it.
    """
    x = np.linspace(lo, hi, n_scan + 1)[1:-1]
    h = x[1] - x[0]
    y = np.abs(f(x))
    med = np.median(y)
    peak = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > 10 * med)
    pts = []
    for xc in x[1:-1][peak]:
        w = h
        for _ in range(8):
            loc = np.linspace(max(lo, xc - w), min(hi, xc + w), n_zoom + 1)
            yl = np.abs(f(loc))
            xc = float(loc[int(np.argmax(yl))])
            w = 2.0 * w / n_zoom
            if w < 1e-13 * (hi - lo):
                break
        pts.append(xc)
        for j in range(40):
            d = h * 2.0 ** (2 - j)
            if d < 1e-14 * (hi - lo):
                break
            for p in (xc - d, xc + d):
                if lo < p < hi:
                    pts.append(p)
    return sorted(set(pts))


def _phi_energy_integrand(E: float, Z: float, cfg: ResponseConfig, rel_tol: float = 1e-9) -> float:
    """k-plane integral of the phase kernel at one photon energy.

    The azimuthal principal value is done in closed form, leaving a radial
    integral in k_par split at the light cone k1 and at the pole circle
    a = k / beta.  The maps k_par = k1 sin(th) and k1 cosh(u) absorb the
    1/k1z edge; the square-root edge at a is absorbed by u = u1 (1 - tau^2).
    """
    c = cfg.constants
    k = E / c.hbar_c
    k1 = k * math.sqrt(cfg.geometry.env.eps1)
    a = k / cfg.beta
    zz = 2.0 * Z
    cap = cfg.numerics.ky_cutoff_factor / abs(zz)
    mats, geom = cfg.material, cfg.geometry

    def bracket(kpar, p_ratio):
        R = reflection_matrix(np.full(kpar.shape, E), kpar, mats, geom, c)
        w_s, w_c = _azimuthal_weights(kpar, a)
        return R.R_SS * w_s + R.R_PP * p_ratio * w_c

    def f_prop(th):
        kpar = k1 * np.sin(th)
        kz = k1 * np.cos(th)
        return kpar * (np.exp(-1j * kz * zz) * bracket(kpar, np.cos(th) ** 2)).real

    def f_evan(u):
        kpar = k1 * np.cosh(u)
        kap = k1 * np.sinh(u)
        return kpar * np.exp(kap * zz) * bracket(kpar, -np.sinh(u) ** 2).imag

    u1 = math.acosh(a / k1)

    def f_gap(tau):
        return f_evan(u1 * (1 - tau * tau)) * (2 * u1 * tau)

    parts = [integrate_adaptive(f_prop, 0.0, 0.5 * math.pi, tol=0.0, rel_tol=rel_tol)]
    bps = _mode_breakpoints(lambda t: np.abs(f_gap(t)) / np.maximum(t, 1e-300), 0.0, 1.0)
    parts.append(integrate_adaptive(f_gap, 0.0, 1.0, tol=0.0, rel_tol=rel_tol,
                                    breakpoints=bps, max_subdivisions=2000))
    u_max = math.asinh(cap / k1)
    if u_max > u1:
        parts.append(integrate_adaptive(f_evan, u1, u_max, tol=0.0, rel_tol=rel_tol))
    scale = sum(abs(pt.value) for pt in parts)
    value = _fsum(pt.value for pt in parts)
    err = sum(pt.error_estimate for pt in parts)
    return value, err, scale


def phase_phi(Z: float, cfg: ResponseConfig, rel_tol: float = 1e-6) -> QuadratureResult:
    """Elastic phase Phi(Z) in radians; the most expensive operation in the package.

    The free-space constant is dropped.
    """
    _check_z(2.0 * Z, cfg.numerics.z_floor)
    c = cfg.constants
    pre = cfg.geometry.L * c.fine_structure / (2 * math.pi**2 * c.hbar_c)

    def f(E):
        return np.array([_phi_energy_integrand(float(e), Z, cfg, 0.1 * rel_tol)[0] for e in E])

    E_max = cfg.E_max
    mats = cfg.material
    bps = sorted({o.resonance_energy + m * o.damping for o in mats.oscillators
                  for m in (-2, -1, 0, 1, 2) if 0 < o.resonance_energy + m * o.damping < E_max})
    res = integrate_adaptive(f, 0.0, E_max, tol=0.0, rel_tol=rel_tol,
                             max_subdivisions=200, breakpoints=bps)
    return QuadratureResult(pre * res.value, pre * res.error_estimate, res.panels_used, res.converged)
