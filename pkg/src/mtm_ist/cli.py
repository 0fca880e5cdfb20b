"""Command line entry point.

Exit codes: 0 success, 1 I/O or malformed input/config, 2 usage error,
3 obstructed spectrum, 4 tolerance violation, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import direct, lattice, mtmpde, recon, spectra
from .config import ConfigError, RunConfig, load_config
from .errors import InputFormatError, MTMError, ObstructedSpectrumError
from .rhsolve import default_workers
from .tables import table_path, write_table

log = logging.getLogger("mtm_ist")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_OBSTRUCTED, EXIT_TOLERANCE, EXIT_NUMERICAL = 0, 1, 2, 3, 4, 5


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    return obj


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)


def _out(cfg, name):
    return os.path.join(cfg.io.output_dir, name)


def _require_input(cfg):
    if not cfg.io.input:
        raise ConfigError("this command needs an input path (io.input or --input)")
    return cfg.io.input


def _workers(cfg):
    return default_workers(cfg.workers)


def _evolver(cfg, dx):
    return mtmpde.EvolverConfig(dt=cfg.time.dt or dx, splitting=cfg.time.splitting,
                                output_every=cfg.time.output_every)


def cmd_direct(cfg: RunConfig) -> int:
    p = lattice.read_potential(_require_input(cfg))
    tol = cfg.tolerances
    ss = direct.compute_scattering(p, cfg.spectral_grid(), workers=_workers(cfg),
                                   overflow_bound=tol.overflow_bound)
    rep = direct.detect_spectrum_obstructions(ss, tol.a_threshold)
    direct.write_scattering(_out(cfg, "scattering"), ss, rep, cfg.io.format)
    d = ss.diagnostics
    checks = {
        "wronskian_drift": float(np.max(d["wronskian_drift"])),
        "determinant_defect": float(np.max(ss.determinant_defect())),
        "chart_mismatch": float(np.max(d["chart_mismatch"])),
        "symmetry_defect": float(np.max(d["symmetry_defect"])),
        "frame_sup": d["frame_sup"],
        "tail": lattice.tail_report(p),
    }
    _write_json(_out(cfg, "direct_report.json"), {"obstruction": rep.as_dict(), "checks": checks})
    if not rep.ok:
        log.warning("spectrum obstructed: %s", rep)
        return EXIT_OBSTRUCTED
    rs = spectra.reflections_from_scattering(ss, rep)
    spectra.write_reflections(cfg.io.output_dir, rs, cfg.io.format)
    bad = (checks["wronskian_drift"] > tol.wronskian_tol or checks["determinant_defect"] > tol.ode_tol
           or checks["chart_mismatch"] > tol.ode_tol)
    return EXIT_TOLERANCE if bad else EXIT_OK


def cmd_evolve_spectral(cfg: RunConfig) -> int:
    rs = spectra.read_reflections(_require_input(cfg))
    rs = spectra.evolve_reflections(rs, cfg.time.T)
    spectra.write_reflections(cfg.io.output_dir, rs, cfg.io.format)
    return EXIT_OK


def _write_reconstruction(cfg, out, name="recovered"):
    lattice.write_potential(table_path(_out(cfg, name), cfg.io.format), out.p, cfg.io.format)


def cmd_inverse(cfg: RunConfig) -> int:
    rs = spectra.read_reflections(_require_input(cfg))
    tol = cfg.tolerances
    t = cfg.time.T
    out = recon.reconstruct(rs, cfg.xgrid(), t, rh_tol=tol.rh_tol, gauge_tol=tol.gauge_tol,
                            workers=_workers(cfg))
    _write_reconstruction(cfg, out)
    diag = {k: v for k, v in out.diagnostics.items() if not isinstance(v, np.ndarray)}
    _write_json(_out(cfg, "inverse_report.json"), {"t": t, **diag})
    return EXIT_OK


def cmd_roundtrip(cfg: RunConfig, cross_check_pde: bool = False) -> int:
    p0 = lattice.read_potential(_require_input(cfg))
    tol = cfg.tolerances
    T = cfg.time.T
    reference = None
    pde = {}
    if cross_check_pde and T != 0:
        t0 = time.perf_counter()
        reference, trace = mtmpde.evolve(p0, T, _evolver(cfg, p0.grid.dx))
        pde = {"pde_seconds": time.perf_counter() - t0,
               "pde_charge_drift": abs(trace[-1].charge - trace[0].charge) / max(trace[0].charge, 1e-300)}
    res = recon.roundtrip(p0, T, cfg.spectral_grid(), workers=_workers(cfg), rh_tol=tol.rh_tol,
                          a_threshold=tol.a_threshold, gauge_tol=tol.gauge_tol, reference=reference)
    report = dict(res.report, **pde)
    limit = tol.roundtrip_tol if T == 0 else tol.pde_tol
    violations = []
    for key in ("u_rel_error", "v_rel_error"):
        if key in report and report[key] > limit:
            violations.append(key)
    if report["gauge_modulus_defect"] > tol.gauge_tol:
        violations.append("gauge_modulus_defect")
    if report["wronskian_drift"] > tol.wronskian_tol:
        violations.append("wronskian_drift")
    report["violations"] = violations
    _write_reconstruction(cfg, res.output)
    _write_json(_out(cfg, "roundtrip_report.json"), report)
    return EXIT_TOLERANCE if violations else EXIT_OK


def pde_check(p0, cfg: RunConfig):
    """Evolve with the PDE solver, rescatter and compare against the spectral evolution law."""
    T = cfg.time.T
    pT, trace = mtmpde.evolve(p0, T, _evolver(cfg, p0.grid.dx))
    g = cfg.spectral_grid()
    w = _workers(cfg)
    s0 = direct.compute_scattering(p0, g, workers=w)
    s1 = direct.compute_scattering(pT, g, workers=w)
    z = g.nodes
    da = np.abs(s1.a - s0.a)
    expected = spectra.evolution_phase(z, T)
    table = [z, da]
    phase_max = 0.0
    for b0, b1 in ((s0.bp, s1.bp), (s0.bm, s1.bm)):
        ok = (np.abs(b0) >= 1e-4) & (np.abs(b1) >= 1e-4)
        with np.errstate(divide="ignore", invalid="ignore"):
            ph = np.where(ok, np.abs(np.angle(b1 / b0 / expected)), np.nan)
        table.append(ph)
        if ok.any():
            phase_max = max(phase_max, float(np.nanmax(ph)))
    return pT, trace, np.column_stack(table), float(da.max()), phase_max


def cmd_pde_check(cfg: RunConfig) -> int:
    p0 = lattice.read_potential(_require_input(cfg))
    pT, trace, table, da_max, phase_max = pde_check(p0, cfg)
    fmt = cfg.io.format
    write_table(table_path(_out(cfg, "pde_check"), fmt), ["z", "abs_da", "phase_defect_bp", "phase_defect_bm"],
                np.nan_to_num(table, nan=-1.0), fmt)
    mtmpde.write_diagnostics(table_path(_out(cfg, "diagnostics"), fmt), trace, fmt)
    lattice.write_potential(table_path(_out(cfg, "evolved"), fmt), pT, fmt)
    drift = abs(trace[-1].charge - trace[0].charge) / max(trace[0].charge, 1e-300)
    _write_json(_out(cfg, "pde_check.json"), {"T": cfg.time.T, "max_abs_da": da_max,
                                              "max_phase_defect": phase_max, "charge_drift": drift})
    tol = cfg.tolerances.isospectral_tol
    return EXIT_TOLERANCE if (da_max > tol or phase_max > tol) else EXIT_OK


def cmd_norms(cfg: RunConfig) -> int:
    p = lattice.read_potential(_require_input(cfg))
    _write_json(_out(cfg, "norms.json"), {
        "u": lattice.weighted_norms(p.u, p.grid).as_dict(),
        "v": lattice.weighted_norms(p.v, p.grid).as_dict(),
        "charge": p.charge(),
        "tail": lattice.tail_report(p),
    })
    return EXIT_OK


COMMANDS = {
    "direct": cmd_direct,
    "evolve-spectral": cmd_evolve_spectral,
    "inverse": cmd_inverse,
    "roundtrip": cmd_roundtrip,
    "pde-check": cmd_pde_check,
    "norms": cmd_norms,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="mtm-ist", description="Scattering transform toolkit for the massive Thirring model")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration")
        sp.add_argument("--workers", type=int, help="worker processes (default: $MTM_IST_WORKERS or 1)")
        sp.add_argument("--format", choices=["csv", "bin"], help="array output format")
        sp.add_argument("--input", help="input potential file or reflection directory")
        sp.add_argument("--output-dir", help="directory for results")
        sp.add_argument("--T", type=float, help="target time")
        if name == "roundtrip":
            sp.add_argument("--cross-check-pde", action="store_true",
                            help="compare against the split-step PDE solution at time T")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.format:
        cfg.io.format = args.format
    if args.input:
        cfg.io.input = args.input
    if args.output_dir:
        cfg.io.output_dir = args.output_dir
    if args.T is not None:
        cfg.time.T = args.T
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.io.output_dir, exist_ok=True)
        with open(os.path.join(cfg.io.output_dir, "config.json"), "w") as fh:
            fh.write(cfg.to_json())
        if args.command == "roundtrip":
            return cmd_roundtrip(cfg, args.cross_check_pde)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InputFormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ObstructedSpectrumError as exc:
        log.error("%s", exc)
        return EXIT_OBSTRUCTED
    except MTMError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
