"""Command-line front end: one subcommand per data product, CSV or JSON out, checksummed manifest.

Every table goes to ``<out>/<name>.csv`` (one header line of unit-bearing
column names) with a ``<name>.meta.json`` sidecar.  ``<subcommand>.manifest.json``
lists each data file once with its SHA-256.  Rows are computed by a pool
of workers but always merged in row order, and kernel tables are built by
the orchestrator before the workers start, so the output does not depend
on ``--threads``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, SimulationConfig, parse_config
from .electron import asym_gamma, gamma
from .materials import passivity_report, pasteur, permittivity
from .observables import (default_loss_grid, eels_weak_coupling, energy_moments,
                          lateral_momentum_moments)
from .response import (ConvergenceError, delta_point, kernel_grid, phase_phi, set_cache_dir,
                       spectral_positivity)
from .slab import SingularStackError, reflection_matrix

log = logging.getLogger("chiral_decoherence")

SUBCOMMANDS = ("materials", "reflection", "delta-map", "gamma-map", "asymmetry-map",
               "observables-sweep", "eels", "oracle")


class PartialResult(RuntimeError):
    """An output was cut short by a numerical failure; completed rows were kept."""


@dataclass
class Table:
    name: str
    columns: list            # [(name, unit), ...]
    rows: list
    meta: dict = field(default_factory=dict)
    partial: Optional[str] = None


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    files: dict = field(default_factory=dict)       # file name -> sha256
    stages: dict = field(default_factory=dict)      # stage -> wall-clock seconds

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "tool_version": self.tool_version,
                           "files": self.files, "stage_seconds": self.stages},
                          indent=2, sort_keys=True)


# -- row-parallel helpers --------------------------------------------------------

def ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    """fn over items, results in item order; the first failure keeps the completed prefix."""
    out = []
    if threads <= 1:
        for it in items:
            try:
                out.append(fn(it))
            except (ConvergenceError, SingularStackError, FloatingPointError) as exc:
                raise _Cut(out, exc) from exc
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, it) for it in items]
        for f in futures:
            try:
                out.append(f.result())
            except (ConvergenceError, SingularStackError, FloatingPointError) as exc:
                for g in futures:
                    g.cancel()
                raise _Cut(out, exc) from exc
    return out


class _Cut(Exception):
    def __init__(self, done, cause):
        super().__init__(str(cause))
        self.done = done
        self.cause = cause


def _rows(name, columns, fn, items, threads, meta=None) -> Table:
    try:
        rows = ordered_map(fn, items, threads)
        return Table(name, columns, rows, meta or {})
    except _Cut as cut:
        return Table(name, columns, cut.done, meta or {}, partial=f"{type(cut.cause).__name__}: {cut.cause}")


def _flat(rows):
    return [r for group in rows for r in group]


# -- subcommands -----------------------------------------------------------------

def _energies(cfg: SimulationConfig):
    g = cfg.grids
    return np.linspace(g.energy_min, g.energy_max, g.n_energy)


def _axes(cfg: SimulationConfig):
    g = cfg.grids
    return np.linspace(g.y_min, g.y_max, g.n_y), np.linspace(g.z_min, g.z_max, g.n_z)


def run_materials(cfg: SimulationConfig, threads: int, skip_phi: bool):
    E = _energies(cfg)
    eps = permittivity(cfg.material, E)
    kap = pasteur(cfg.material, E)
    rep = passivity_report(cfg.material, E)
    cols = [("E_eV", "eV"), ("eps_re", "1"), ("eps_im", "1"), ("kappa_re", "1"), ("kappa_im", "1")]
    rows = [list(r) for r in zip(E, eps.real, eps.imag, kap.real, kap.imag)]
    return [Table("materials", cols, rows, {"passive": rep.passive,
                                            "min_imag_eps": rep.min_imag_eps,
                                            "argmin_energy_eV": rep.argmin_energy})]


def run_reflection(cfg: SimulationConfig, threads: int, skip_phi: bool):
    beta = cfg.beta_list[0]
    E = _energies(cfg)
    kpar = E / cfg.constants.hbar_c / beta
    R = reflection_matrix(E, kpar, cfg.material, cfg.geometry(), cfg.constants)
    cols = [("E_eV", "eV"), ("kpar_invnm", "1/nm")]
    vals = [E, kpar]
    # mixing entries without the chiral-index factor, as stored
    for name, arr in (("Rss", R.R_SS), ("Rpp", R.R_PP), ("Rsp", R.R_SP), ("Rps", R.R_PS)):
        cols += [(f"{name}_re", "1"), (f"{name}_im", "1")]
        vals += [np.real(arr), np.imag(arr)]
    return [Table("reflection", cols, [list(r) for r in zip(*vals)],
                  {"beta": beta, "kpar_rule": "k_omega / beta (electron line)"})]


def run_delta_map(cfg: SimulationConfig, threads: int, skip_phi: bool):
    rc = cfg.response()
    y, z = _axes(cfg)
    x = cfg.grids.x_tilde
    grid = kernel_grid(rc, float(np.min(np.abs(z))), float(np.max(np.abs(y))), abs(x),
                       float(np.max(np.abs(z))))
    cols = [("ytilde_nm", "nm"), ("ztilde_nm", "nm"), ("delta_s", "1"), ("delta_a", "1"), ("err", "1")]
    if x != 0:
        cols += [("delta_s_im", "1"), ("delta_a_im", "1")]

    def column(zt):
        out = []
        for yt in y:
            p = delta_point(x, float(yt), float(zt), rc, grid)
            ds, da = complex(p.delta_s), complex(p.delta_a)
            row = [yt, zt, ds.real, da.real, p.error]
            if x != 0:
                row += [ds.imag, da.imag]
            out.append(row)
        return out

    t = _rows("delta_map", cols, column, list(z), threads,
              {"x_tilde_nm": x, "beta": rc.beta, "L_nm": rc.geometry.L})
    t.rows = _flat(t.rows)
    return [t]


def _pair_grid(cfg: SimulationConfig, rc):
    """Points R = (x_tilde, y, z) of the map against the fixed R' = (0, 0, Z')."""
    y, z = _axes(cfg)
    zp = cfg.grids.z_prime
    x = cfg.grids.x_tilde
    zs = np.concatenate([z + zp, 2 * z, [2 * zp]])
    # one table covering every pair, built before any worker runs
    kernel_grid(rc, float(np.min(np.abs(zs))), float(np.max(np.abs(y))), abs(x),
                float(np.max(np.abs(zs))))
    return x, y, z, zp


def run_gamma_map(cfg: SimulationConfig, threads: int, skip_phi: bool):
    rc = cfg.response()
    x, y, z, zp = _pair_grid(cfg, rc)
    phi = {}
    if not skip_phi:
        Zs = [zp] + [float(v) for v in z if v != zp]
        phi = dict(zip(Zs, ordered_map(lambda Z: phase_phi(Z, rc).value, Zs, threads)))

    def column(zr):
        out = []
        for yr in y:
            g = gamma((x, float(yr), float(zr)), (0.0, 0.0, zp), rc)
            phase = g.phase + (phi[float(zr)] - phi[zp] if phi and zr != zp else 0.0)
            out.append([yr, zr, math.exp(g.modulus_log), g.error, phase])
        return out

    cols = [("y_nm", "nm"), ("z_nm", "nm"), ("abs_gamma", "1"), ("err", "1"), ("phase_rad", "rad")]
    t = _rows("gamma_map", cols, column, list(z), threads,
              {"x_tilde_nm": x, "Z_prime_nm": zp, "elastic_phase": not skip_phi})
    t.rows = _flat(t.rows)
    return [t]


def run_asymmetry_map(cfg: SimulationConfig, threads: int, skip_phi: bool):
    rc = cfg.response()
    x, y, z, zp = _pair_grid(cfg, rc)

    def column(zr):
        out = []
        for yr in y:
            a = asym_gamma((x, float(yr), float(zr)), (0.0, 0.0, zp), rc)
            p = delta_point(x, float(yr), float(zr) + zp, rc)
            # d/dD of 2 tan(D) is 2 / cos^2(D)
            err = 2.0 * p.error / math.cos(abs(complex(p.delta_a))) ** 2
            out.append([yr, zr, abs(a), err, a.imag])
        return out

    cols = [("y_nm", "nm"), ("z_nm", "nm"), ("abs_asym", "1"), ("err", "1"), ("asym_im", "1")]
    t = _rows("asymmetry_map", cols, column, list(z), threads, {"x_tilde_nm": x, "Z_prime_nm": zp})
    t.rows = _flat(t.rows)
    return [t]


def _sweep_group(cfg: SimulationConfig, beta: float):
    """All rows of one beta; L only scales the kernels, so they share one table."""
    rows = []
    g = cfg.grids
    c = cfg.constants
    P0 = c.reference_momentum(beta)
    E0 = c.reference_energy(beta)
    for L in cfg.L_list:
        rc = cfg.response(beta, L)
        el = cfg.electron(beta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lat = lateral_momentum_moments(el, rc)
            en = energy_moments(el, rc)
        probe = delta_point(0.0, g.probe_y, g.probe_z, rc)
        rows.append([L / 1000.0, beta, lat.mean / P0, math.sqrt(lat.variance) / P0,
                     lat.peak_factor, -en.mean / E0, math.sqrt(en.variance) / E0,
                     lat.mean, lat.variance, en.mean, en.variance, complex(probe.delta_a).real])
    return rows


def run_observables_sweep(cfg: SimulationConfig, threads: int, skip_phi: bool):
    cols = [("L_um", "um"), ("beta", "1"), ("meanPy_over_P0", "1"), ("rmsPy_over_P0", "1"),
            ("peak_factor", "1"), ("meanEloss_over_E0", "1"), ("rmsE_over_E0", "1"),
            ("meanPyc_eV", "eV"), ("varPyc_eV2", "eV^2"), ("meanEshift_eV", "eV"),
            ("varE_eV2", "eV^2"), ("delta_a_probe", "1")]
    t = _rows("observables_sweep", cols, lambda b: _sweep_group(cfg, b), list(cfg.beta_list),
              threads, {"electron": {"sigma_y_nm": cfg.sigma_y, "sigma_z_nm": cfg.sigma_z,
                                     "b_nm": cfg.impact_b},
                        "probe_nm": {"ytilde": cfg.grids.probe_y, "ztilde": cfg.grids.probe_z},
                        "P0": "m c beta gamma", "E0": "V P0"})
    # rows ordered L-major to match the (L, beta) product
    t.rows = sorted(_flat(t.rows), key=lambda r: (r[0], r[1]))
    t.meta["loss_weight_min"] = {f"{b:g}": spectral_positivity(cfg.response(b)).min_weight
                                 for b in cfg.beta_list}
    return [t]


def run_eels(cfg: SimulationConfig, threads: int, skip_phi: bool):
    tables = []
    for beta in cfg.beta_list:
        rc = cfg.response(beta)
        el = cfg.electron(beta)
        loss = default_loss_grid(rc)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            d = eels_weak_coupling(loss, el, rc)
        name = f"eels_beta{beta:g}"
        tables.append(Table(name, [("Eloss_eV", "eV"), ("gamma_per_eV", "1/eV")],
                            [list(r) for r in zip(d.axis, d.density)],
                            {"beta": beta, "L_nm": rc.geometry.L, "sum_rule": d.meta["sum_rule"],
                             "max_delta": d.meta["max_delta"], "gate_ok": d.meta["gate_ok"],
                             "normalization_defect": d.normalization_defect,
                             "warnings": [str(w.message) for w in caught]}))
    return tables


GOLDEN_LOSSY = {"eps_inf": 2.5, "lorentz": ((3.0, 2.0, 0.5),), "condon": ((3.0, 0.01, 0.4),),
                "d": 40.0, "eps1": 1.0, "eps2": 1.48}
GOLDEN_LOSSY_POINTS = ((2.7, 0.006), (3.2, 0.03), (4.1, 0.045))   # (E eV, k_par 1/nm)


def _kernel_goldens(rc) -> Table:
    """Closed-form quantities evaluated by the independent transcription."""
    from .oracles import FilmSpec, film_eps, film_kappa, kernel_parts, stack_matrices
    spec = FilmSpec.from_objects(rc.material, rc.geometry)
    hc = rc.constants.hbar_c
    rows, ids = [], []

    def put(name, v):
        ids.append(name)
        rows.append([len(rows), complex(v).real, complex(v).imag])

    put("permittivity(3.54)", film_eps(spec, 3.54))
    put("pasteur(3.54)", film_kappa(spec, 3.54))
    ev, od = kernel_parts(spec, 3.5, -(3.5 / hc) / 0.7, 0.05, rc.constants)
    put("upsilon_sym(E=3.5,beta=0.7,ky=0.05)", ev)
    put("upsilon_asym(E=3.5,beta=0.7,ky=0.05)", od)
    lossy = FilmSpec(**GOLDEN_LOSSY)
    for E, kp in GOLDEN_LOSSY_POINTS:
        M1, M2, _, _ = stack_matrices(lossy, E, kp, rc.constants)
        for tag, M in (("M1", M1), ("M2", M2)):
            for i in range(2):
                for j in range(2):
                    put(f"{tag}[{i}{j}](E={E},kpar={kp})", M[i, j])
    return Table("golden_kernels", [("index", "1"), ("re", "1"), ("im", "1")], rows,
                 {"ids": ids, "lossy_film": GOLDEN_LOSSY,
                  "rule": "closed forms, independent transcription"})


def run_oracle(cfg: SimulationConfig, threads: int, skip_phi: bool):
    """Regenerate the golden tables from the brute-force oracles."""
    from .oracles import FilmSpec, FixedGridOracle, phase_oracle
    rc = cfg.response()
    spec = FilmSpec.from_objects(rc.material, rc.geometry)
    rng = np.random.default_rng(20240601)
    pts = [(0.0, 2.0, -10.0)]
    pts += [(0.0, float(rng.uniform(-15, 15)), float(rng.uniform(-30, -4))) for _ in range(19)]
    n_E, n_ky = 512, 128
    orc = FixedGridOracle(spec, rc.beta, rc.geometry.L, rc.E_max, 4.0, n_E, n_ky,
                          rc.numerics.ky_cutoff_factor, rc.constants)
    rows = []
    for x, y, z in pts:
        ds, da = orc.delta(x, y, z)
        rows.append([x, y, z, ds.real, da.real])
    prov = {"beta": rc.beta, "L_nm": rc.geometry.L, "E_max_eV": rc.E_max,
            "grid": {"n_E": n_E, "n_ky": n_ky, "rule": "Simpson + one Richardson step"}}
    cols = [("xtilde_nm", "nm"), ("ytilde_nm", "nm"), ("ztilde_nm", "nm"), ("delta_s", "1"),
            ("delta_a", "1")]
    tables = [Table("golden_delta", cols, rows, prov), _kernel_goldens(rc)]
    if not skip_phi:
        Z = -10.0
        val = phase_oracle(Z, rc.material, rc.geometry, rc.beta, rc.E_max, n_E=360,
                           ky_factor=rc.numerics.ky_cutoff_factor, constants=rc.constants)
        tables.append(Table("golden_phase", [("Z_nm", "nm"), ("phi", "rad")], [[Z, val]],
                            dict(prov, grid={"n_E": 360, "rule": "Simpson in E, graded Simpson in k_par"})))
    return tables


RUNNERS = {"materials": run_materials, "reflection": run_reflection, "delta-map": run_delta_map,
           "gamma-map": run_gamma_map, "asymmetry-map": run_asymmetry_map,
           "observables-sweep": run_observables_sweep, "eels": run_eels, "oracle": run_oracle}


# -- writing ---------------------------------------------------------------------

def _fmt(v, precision: int) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    v = float(v)
    if v == 0:
        return "0"
    return format(v, f".{precision}g")


def write_table(table: Table, out_dir: str, fmt: str, precision: int, config_hash: str) -> list:
    stem = table.name + (".partial" if table.partial else "")
    names = [c[0] for c in table.columns]
    if fmt == "csv":
        path = os.path.join(out_dir, stem + ".csv")
        lines = [",".join(names)]
        lines += [",".join(_fmt(v, precision) for v in row) for row in table.rows]
        data = "\n".join(lines) + "\n"
    else:
        path = os.path.join(out_dir, stem + ".json")
        data = json.dumps({"columns": names,
                           "rows": [[float(_fmt(v, precision)) for v in row] for row in table.rows]},
                          indent=1) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)
    meta = {"config_hash": config_hash, "tool_version": __version__,
            "units": {n: u for n, u in table.columns}, "rows": len(table.rows),
            "partial": table.partial is not None, "meta": table.meta}
    if table.partial:
        meta["error"] = table.partial
    mpath = os.path.join(out_dir, stem + ".meta.json")
    with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return [path, mpath]


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return repr(v)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run(subcommand: str, cfg: SimulationConfig, out_dir: Optional[str] = None, threads: int = 1,
        skip_phi: bool = False, kernel_cache: bool = True) -> RunManifest:
    """Compute one data product and write it with sidecars and a manifest.

    Kernel tables are persisted under ``<out>/kernel_cache`` keyed by a hash
    of everything they depend on, so a rerun or a sweep over L reloads them.
    """
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out_dir = out_dir or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(cfg.config_hash(), __version__)
    t0 = time.perf_counter()
    set_cache_dir(os.path.join(out_dir, "kernel_cache") if kernel_cache else None)
    try:
        tables = RUNNERS[subcommand](cfg, max(1, int(threads)), skip_phi)
    finally:
        set_cache_dir(None)
    manifest.stages[subcommand] = round(time.perf_counter() - t0, 3)
    t1 = time.perf_counter()
    for t in tables:
        for p in write_table(t, out_dir, cfg.output.format, cfg.output.precision, manifest.config_hash):
            manifest.files[os.path.basename(p)] = sha256_file(p)
    manifest.stages["write"] = round(time.perf_counter() - t1, 3)
    with open(os.path.join(out_dir, f"{subcommand}.manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json() + "\n")
    partial = [t.name for t in tables if t.partial]
    if partial:
        raise PartialResult(f"non-converged output(s) written with partial marker: {', '.join(partial)}")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chiral-decoherence",
                                description="Electron decoherence near a chiral thin film.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", default=None,
                   help="INI configuration (default: $CHIRAL_DECOHERENCE_CONFIG or the shipped file)")
    p.add_argument("--out", default=None, help="output directory (default: output.directory)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for row-parallel stages")
    p.add_argument("--skip-phi", action="store_true", help="leave the elastic phase out")
    p.add_argument("--no-kernel-cache", action="store_true",
                   help="do not read or write kernel tables under <out>/kernel_cache")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(args.subcommand, cfg, args.out, args.threads, args.skip_phi,
                       not args.no_kernel_cache)
    except PartialResult as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, digest in sorted(manifest.files.items()):
        log.info("%s %s", digest[:16], name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
