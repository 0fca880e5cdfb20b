"""Reflection coefficients in the omega- and z-charts and their time evolution."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .direct import ObstructionReport, ScatteringSet, detect_spectrum_obstructions
from .errors import ObstructedSpectrumError
from .lattice import SpectralGrid, reciprocal_of, reciprocal_permutation
from .tables import complex_columns, read_table, table_path, write_table

OMEGA_HEADER = ["omega", "re_rp", "im_rp", "re_rm", "im_rm"]
Z_HEADER = ["z", "re_rhp", "im_rhp", "re_rhm", "im_rhm"]


@dataclass(frozen=True, eq=False)
class ReflectionSet:
    """r+-(omega) on omega_grid and rh+-(z) on z_grid at time t.

    Ladder relations: rp = omega rm, rhp = z rhm, and r+-(omega) = rh-+(1/omega).
    """

    omega_grid: SpectralGrid
    z_grid: SpectralGrid
    rp: np.ndarray
    rm: np.ndarray
    rhp: np.ndarray
    rhm: np.ndarray
    t: float = 0.0

    def scaled(self, factor):
        return replace(self, rp=self.rp * factor, rm=self.rm * factor,
                       rhp=self.rhp * factor, rhm=self.rhm * factor)

    def max_modulus(self):
        return float(max(np.abs(self.rp).max(), np.abs(self.rm).max(),
                         np.abs(self.rhp).max(), np.abs(self.rhm).max()))

    def ladder_defects(self):
        w, z = self.omega_grid.nodes, self.z_grid.nodes
        perm = reciprocal_permutation(self.z_grid)
        return {
            "omega_ladder": float(np.max(np.abs(self.rp - w * self.rm))),
            "z_ladder": float(np.max(np.abs(self.rhp - z * self.rhm))),
            "cross_chart": float(max(np.max(np.abs(self.rp - self.rhm[perm])),
                                     np.max(np.abs(self.rm - self.rhp[perm])))),
            "reciprocal_nodes": float(np.max(np.abs(w * z[perm] - 1))),
        }

    def is_zero(self):
        return not (np.any(self.rp) or np.any(self.rm) or np.any(self.rhp) or np.any(self.rhm))


def from_z_chart(z_grid: SpectralGrid, rhm, t=0.0) -> ReflectionSet:
    """Build the full set from rh- on the z-grid; every other array follows from the ladder."""
    z = z_grid.nodes
    rhm = np.asarray(rhm, dtype=complex)
    rhp = z * rhm
    omega_grid = reciprocal_of(z_grid)
    perm = reciprocal_permutation(z_grid)
    return ReflectionSet(omega_grid, z_grid, rhm[perm], rhp[perm], rhp, rhm, float(t))


def reflections_from_scattering(ss: ScatteringSet, report: ObstructionReport | None = None,
                                threshold: float = 1e-3) -> ReflectionSet:
    """rh+ = b-/a and rh- = b+/a; the omega-chart copies come from r+-(omega) = rh-+(1/omega).

    b- = z b+ holds only to integration accuracy, so rh- is taken from b+ where
    |z| <= 1 and from b-/z where |z| > 1, and rh+ = z rh- exactly.
    """
    report = report or detect_spectrum_obstructions(ss, threshold)
    if not report.ok:
        raise ObstructedSpectrumError(
            f"scattering data obstructed: min|a|={report.min_abs_a:.3g}, winding={report.winding}", report)
    z = ss.grid.nodes
    rhm = np.where(np.abs(z) <= 1, ss.bp / ss.a, ss.bm / (z * ss.a))
    return from_z_chart(ss.grid, rhm)


def evolution_phase(s, dt):
    return np.exp(-0.5j * dt * (s + 1.0 / s))


def evolve_reflections(rs: ReflectionSet, dt: float) -> ReflectionSet:
    if dt == 0:
        return rs
    pw = evolution_phase(rs.omega_grid.nodes, dt)
    pz = evolution_phase(rs.z_grid.nodes, dt)
    return ReflectionSet(rs.omega_grid, rs.z_grid, rs.rp * pw, rs.rm * pw,
                         rs.rhp * pz, rs.rhm * pz, rs.t + dt)


def lambda_reflection(rs: ReflectionSet):
    """r(lambda) on lambda = sqrt(z) (imaginary for z < 0): lambda r(lambda) = rh+(z)."""
    z = rs.z_grid.nodes
    lam = np.sqrt(z.astype(complex))
    return lam, rs.rhp / lam


def c0_bound(rs: ReflectionSet) -> float:
    """sqrt(min over z < 0 of 1 - |rh+ rh-|) = sqrt(min(1 - |r(lambda)|^2)) on the imaginary lambda-axis."""
    neg = rs.z_grid.nodes < 0
    gap = 1.0 - np.abs(rs.rhp[neg] * rs.rhm[neg])
    return float(np.sqrt(max(gap.min(), 0.0)))


@dataclass(frozen=True)
class ReflectionNorms:
    """Discrete weighted norms of one reflection coefficient on its grid."""

    hdot1_outer: float
    hdot11_inner: float
    l21: float
    l2m2: float

    def as_dict(self):
        return {"hdot1_outer": self.hdot1_outer, "hdot11_inner": self.hdot11_inner,
                "l21": self.l21, "l2m2": self.l2m2}


def _branch_integral(s, y):
    """Trapezoid over each sign branch separately (the origin gap is excluded)."""
    neg = s < 0
    return float(np.trapezoid(y[neg], s[neg]) + np.trapezoid(y[~neg], s[~neg]))


def coefficient_norms(f, grid: SpectralGrid) -> ReflectionNorms:
    s = grid.nodes
    f = np.asarray(f)
    neg = s < 0
    df = np.empty_like(f)
    df[neg] = np.gradient(f[neg], s[neg])
    df[~neg] = np.gradient(f[~neg], s[~neg])
    outer = np.abs(s) >= 1
    a2, d2 = np.abs(f) ** 2, np.abs(df) ** 2
    w = 1 + s * s
    return ReflectionNorms(
        hdot1_outer=float(np.sqrt(max(_branch_integral(s, np.where(outer, d2, 0.0)), 0.0))),
        hdot11_inner=float(np.sqrt(max(_branch_integral(s, np.where(outer, 0.0, w * d2)), 0.0))),
        l21=float(np.sqrt(_branch_integral(s, w * a2))),
        l2m2=float(np.sqrt(_branch_integral(s, a2 / (s * s)))),
    )


def reflection_norm_report(rs: ReflectionSet) -> dict:
    return {
        "rp": coefficient_norms(rs.rp, rs.omega_grid),
        "rm": coefficient_norms(rs.rm, rs.omega_grid),
        "rhp": coefficient_norms(rs.rhp, rs.z_grid),
        "rhm": coefficient_norms(rs.rhm, rs.z_grid),
    }


def write_reflections(out_dir, rs: ReflectionSet, fmt="csv"):
    import os
    os.makedirs(out_dir, exist_ok=True)
    write_table(table_path(os.path.join(out_dir, "reflections_omega"), fmt), OMEGA_HEADER,
                complex_columns(rs.omega_grid.nodes, rs.rp, rs.rm), fmt)
    write_table(table_path(os.path.join(out_dir, "reflections_z"), fmt), Z_HEADER,
                complex_columns(rs.z_grid.nodes, rs.rhp, rs.rhm), fmt)
    side = {"t": rs.t, "c0": c0_bound(rs),
            "grid": {"mapping": rs.z_grid.mapping, "step": rs.z_grid.step},
            "norms": {k: v.as_dict() for k, v in reflection_norm_report(rs).items()},
            "ladder": rs.ladder_defects()}
    with open(os.path.join(out_dir, "reflections.json"), "w") as fh:
        json.dump(side, fh, indent=2)


def read_reflections(in_dir) -> ReflectionSet:
    """Load a set written by write_reflections (csv or bin, detected from the files present)."""
    import os
    with open(os.path.join(in_dir, "reflections.json")) as fh:
        side = json.load(fh)
    zpath = os.path.join(in_dir, "reflections_z.csv")
    if not os.path.exists(zpath):
        zpath = os.path.join(in_dir, "reflections_z.bin")
    _, d = read_table(zpath, Z_HEADER)
    g = SpectralGrid(d[:, 0], mapping=side["grid"]["mapping"], step=side["grid"]["step"])
    return from_z_chart(g, d[:, 3] + 1j * d[:, 4], side["t"])
