"""Reconstruction of (u, v) from the Riemann-Hilbert moments and full round trips."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .direct import compute_scattering, detect_spectrum_obstructions
from .errors import GaugeInconsistentError, ObstructedSpectrumError
from .lattice import Potential, SpectralGrid, XGrid
from .rhsolve import MomentTable, RHPChart, solve_on_grid
from .spectra import ReflectionSet, reflections_from_scattering


@dataclass(frozen=True, eq=False)
class ReconstructionOutput:
    p: Potential
    du: np.ndarray
    dv: np.ndarray
    gauge: np.ndarray          # int_x^inf (|u|^2 + |v|^2)
    diagnostics: dict = field(default_factory=dict)


def _check_modulus(value0, tol, label):
    dev = float(np.max(np.abs(np.abs(value0[:, 0, 0]) - 1.0))) if value0.size else 0.0
    if dev > tol:
        raise GaugeInconsistentError(f"|M(x;0)_11| deviates from 1 by {dev:.3g} ({label})")
    return dev


def recover_v(table: MomentTable, gauge_tol: float = 1e-6):
    """v = Mhat(x;0)_11 conj(mhat_12); returns (v, combo, gauge) with combo = -2i v' + |u|^2 v + u."""
    m0 = table.value0[:, 0, 0]
    _check_modulus(table.value0, gauge_tol, "z-contour")
    v = m0 * np.conj(table.moment1[:, 0, 1])
    combo = table.moment1[:, 1, 0] * m0
    gauge = np.unwrap(2 * np.angle(m0))
    return v, combo, gauge


def recover_u(table: MomentTable, v=None, gauge_tol: float = 1e-6):
    """u = M(x;0)_11 conj(m_12); returns (u, du, gauge).

    du is unpacked from 2i u' + u|v|^2 + v once v is known; otherwise None.
    """
    m0 = table.value0[:, 0, 0]
    _check_modulus(table.value0, gauge_tol, "omega-contour")
    u = m0 * np.conj(table.moment1[:, 0, 1])
    combo = table.moment1[:, 1, 0] * m0
    du = None if v is None else (combo - u * np.abs(v) ** 2 - v) / 2j
    gauge = np.unwrap(-2 * np.angle(m0))
    return u, du, gauge


def tail_charge(p: Potential):
    """int_x^{x_end} (|u|^2 + |v|^2) by the trapezoid rule."""
    return cumulative_trapezoid(p.density()[::-1], dx=p.grid.dx, initial=0.0)[::-1]


def reconstruct(rs: ReflectionSet, xgrid: XGrid, t: float = 0.0, rh_tol: float = 1e-10,
                gauge_tol: float = 1e-6, workers: int = 1) -> ReconstructionOutput:
    """Solve the z-contour problem (for v) and then the omega-contour problem (for u) at every x."""
    xs = xgrid.x
    t0 = time.perf_counter()
    tab2 = solve_on_grid(rs, xs, t, RHPChart.RHP_II, tol=rh_tol, workers=workers)
    tab1 = solve_on_grid(rs, xs, t, RHPChart.RHP_I, tol=rh_tol, workers=workers)
    elapsed = time.perf_counter() - t0
    v, combo_v, g2 = recover_v(tab2, gauge_tol)
    u, du, g1 = recover_u(tab1, v, gauge_tol)
    dv = (combo_v - np.abs(u) ** 2 * v - u) / (-2j)
    p = Potential(xgrid, u, v)
    gauge = 0.5 * (g1 + g2)
    tail = tail_charge(p)
    diag = {
        "gauge_modulus_defect": float(max(np.max(np.abs(np.abs(tab1.value0[:, 0, 0]) - 1)),
                                          np.max(np.abs(np.abs(tab2.value0[:, 0, 0]) - 1)))),
        "gauge_reciprocity_defect": float(np.max(np.abs(tab1.value0[:, 0, 0] * tab2.value0[:, 0, 0] - 1))),
        "gauge_vs_tail_charge": float(np.max(np.abs(gauge - tail))),
        "du_vs_difference": float(np.max(np.abs(du - np.gradient(u, xgrid.dx)))),
        "dv_vs_difference": float(np.max(np.abs(dv - np.gradient(v, xgrid.dx)))),
        # gauge-carrying forms: conj(u) e^{-iG/2} = m_12 and conj(v) e^{iG/2} = mhat_12
        "u_gauge_form_defect": float(np.max(np.abs(np.conj(u) * np.exp(-0.5j * tail) - tab1.moment1[:, 0, 1]))),
        "v_gauge_form_defect": float(np.max(np.abs(np.conj(v) * np.exp(0.5j * tail) - tab2.moment1[:, 0, 1]))),
        "rh_residual": float(max(tab1.residual.max(), tab2.residual.max())),
        "rh_iterations": int(max(tab1.iterations, tab2.iterations)),
        "inverse_seconds": elapsed,
        "value0_11_I": tab1.value0[:, 0, 0],
        "value0_11_II": tab2.value0[:, 0, 0],
    }
    return ReconstructionOutput(p, du, dv, gauge, diag)


def relative_sup_error(a, b):
    scale = np.max(np.abs(b))
    err = np.max(np.abs(a - b))
    return float(err / scale) if scale > 0 else float(err)


@dataclass(frozen=True, eq=False)
class RoundtripResult:
    p_t: Potential
    output: ReconstructionOutput
    reflections: ReflectionSet
    report: dict


def roundtrip(p0: Potential, t: float, grid: SpectralGrid, *, workers: int = 1, rh_tol: float = 1e-10,
              a_threshold: float = 1e-3, gauge_tol: float = 1e-6, xgrid: XGrid | None = None,
              reference: Potential | None = None) -> RoundtripResult:
    """Direct transform, spectral evolution to time t, inverse transform.

    ``xgrid`` selects where the field is reconstructed (default: the grid of
    p0). ``reference`` is compared with the result; at t = 0 it defaults to p0.
    """
    t0 = time.perf_counter()
    ss = compute_scattering(p0, grid, workers=workers)
    report_obs = detect_spectrum_obstructions(ss, a_threshold)
    if not report_obs.ok:
        raise ObstructedSpectrumError("refusing to invert obstructed scattering data", report_obs)
    rs = reflections_from_scattering(ss, report_obs)
    t1 = time.perf_counter()
    xgrid = xgrid or p0.grid
    out = reconstruct(rs, xgrid, t, rh_tol=rh_tol, gauge_tol=gauge_tol, workers=workers)
    t2 = time.perf_counter()
    d = ss.diagnostics
    report = {
        "t": float(t),
        "obstruction": report_obs.as_dict(),
        "a0": [ss.a0.real, ss.a0.imag],
        "limit_mismatch_zero": float(np.abs(ss.a[np.argmin(np.abs(grid.nodes))] - ss.a0)),
        "limit_mismatch_inf": float(np.abs(ss.a[np.argmax(np.abs(grid.nodes))] - ss.ainf)),
        "wronskian_drift": float(np.max(d["wronskian_drift"])),
        "determinant_defect": float(np.max(ss.determinant_defect())),
        "chart_mismatch": float(np.max(d["chart_mismatch"])),
        "ladder": rs.ladder_defects(),
        "runtime": {"direct_seconds": t1 - t0, "inverse_seconds": t2 - t1},
    }
    report.update({k: v for k, v in out.diagnostics.items() if not isinstance(v, np.ndarray)})
    if reference is None and t == 0 and xgrid is p0.grid:
        reference = p0
    if reference is not None:
        report["u_rel_error"] = relative_sup_error(out.p.u, reference.u)
        report["v_rel_error"] = relative_sup_error(out.p.v, reference.v)
    return RoundtripResult(out.p, out, rs, report)
