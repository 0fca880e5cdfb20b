"""Jost solutions of the two gauge-transformed spectral problems and the
scattering coefficients a, b+ and b- on a real spectral grid.

Both charts solve psi' = (Q1 + w Q2 + (i/4)(z - 1/z) sigma3) psi, with w = z
for the small-lambda chart and w = 1/z for the large-lambda chart. One step
of the fixed-step integrator is a fourth-order Magnus exponential built from
the coefficient matrices at the two Gauss points of the cell. The potential
is evaluated at these off-grid points by band-limited (FFT) interpolation.
The exponential of a traceless 2x2 matrix has determinant one, so Wronskians
are conserved to rounding.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import JostOverflowError
from .lattice import (Potential, SpectralGrid, XGrid, spectral_derivative, spectral_shift)
from .tables import complex_columns, read_table, write_table

GAUSS_POINTS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
SCATTERING_HEADER = ["z", "re_a", "im_a", "re_bp", "im_bp", "re_bm", "im_bm"]
DEFAULT_OVERFLOW = 1e8


class Chart(str, Enum):
    SMALL_LAMBDA = "small"
    LARGE_LAMBDA = "large"


class JostKind(str, Enum):
    M_MINUS = "m-"
    M_PLUS = "m+"
    N_MINUS = "n-"
    N_PLUS = "n+"


@dataclass(frozen=True, eq=False)
class CoefficientMatrices:
    """Q1, Q2 on the grid (n, 2, 2) and at the Gauss points of every cell (2, n-1, 2, 2)."""

    grid: XGrid
    chart: Chart
    q1: np.ndarray
    q2: np.ndarray
    q1_stage: np.ndarray
    q2_stage: np.ndarray


def coefficient_family(u, v, ux, vx, chart):
    """Pointwise Q1, Q2 for field samples; returns arrays of shape (..., 2, 2)."""
    u, v = np.asarray(u, complex), np.asarray(v, complex)
    q1 = np.zeros(u.shape + (2, 2), complex)
    q2 = np.zeros_like(q1)
    au, av = np.abs(u) ** 2, np.abs(v) ** 2
    rho = au + av
    if Chart(chart) is Chart.SMALL_LAMBDA:
        uvb = u * np.conj(v)
        q1[..., 0, 0] = -0.25j * rho
        q1[..., 0, 1] = 0.5j * np.conj(u)
        q1[..., 1, 0] = ux - 0.5j * u * av - 0.5j * v
        q1[..., 1, 1] = 0.25j * rho
        q2[..., 0, 0] = 0.5j * uvb
        q2[..., 0, 1] = -0.5j * np.conj(v)
        q2[..., 1, 0] = 0.5j * (u + u * uvb)
        q2[..., 1, 1] = -0.5j * uvb
    else:
        ubv = np.conj(u) * v
        q1[..., 0, 0] = 0.25j * rho
        q1[..., 0, 1] = -0.5j * np.conj(v)
        q1[..., 1, 0] = vx + 0.5j * au * v + 0.5j * u
        q1[..., 1, 1] = -0.25j * rho
        q2[..., 0, 0] = -0.5j * ubv
        q2[..., 0, 1] = 0.5j * np.conj(u)
        q2[..., 1, 0] = -0.5j * (v + v * ubv)
        q2[..., 1, 1] = 0.5j * ubv
    return q1, q2


def assemble_coefficients(p: Potential, chart) -> CoefficientMatrices:
    chart = Chart(chart)
    dx = p.grid.dx
    ux = spectral_derivative(p.u, dx)
    vx = spectral_derivative(p.v, dx)
    q1, q2 = coefficient_family(p.u, p.v, ux, vx, chart)
    s1, s2 = [], []
    for c in GAUSS_POINTS:
        fields = [spectral_shift(f, dx, c * dx)[:-1] for f in (p.u, p.v, ux, vx)]
        a, b = coefficient_family(*fields, chart)
        s1.append(a)
        s2.append(b)
    return CoefficientMatrices(p.grid, chart, q1, q2, np.stack(s1), np.stack(s2))


# -- 2x2 batch algebra -------------------------------------------------------

def matmul2(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def adjugate2(a):
    """Inverse of a unimodular 2x2 batch."""
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out


def expm_traceless(w):
    """exp of traceless 2x2 matrices: cosh(mu) I + sinh(mu)/mu W, mu^2 = -det W."""
    mu2 = w[..., 0, 0] ** 2 + w[..., 0, 1] * w[..., 1, 0]
    mu = np.sqrt(mu2)
    small = np.abs(mu) < 1e-4
    safe = np.where(small, 1.0, mu)
    sinhc = np.where(small, 1 + mu2 / 6 + mu2 * mu2 / 120, np.sinh(safe) / safe)
    out = sinhc[..., None, None] * w
    c = np.cosh(mu)
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out


def _generator(q1, q2, z, chart):
    w = z if chart is Chart.SMALL_LAMBDA else 1.0 / z
    a = q1[:, None] + w[None, :, None, None] * q2[:, None]
    k = 0.25j * (z - 1.0 / z)
    a[..., 0, 0] += k
    a[..., 1, 1] -= k
    return a


def step_propagators(cm: CoefficientMatrices, z, lo=0, hi=None):
    """Cell propagators U_j (psi(x_{j+1}) = U_j psi(x_j)) for j in [lo, hi); shape (hi-lo, N, 2, 2)."""
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    hi = cm.grid.n - 1 if hi is None else hi
    h = cm.grid.dx
    a1 = _generator(cm.q1_stage[0, lo:hi], cm.q2_stage[0, lo:hi], z, cm.chart)
    a2 = _generator(cm.q1_stage[1, lo:hi], cm.q2_stage[1, lo:hi], z, cm.chart)
    omega = 0.5 * h * (a1 + a2) + (math.sqrt(3) / 12) * h * h * (matmul2(a2, a1) - matmul2(a1, a2))
    return expm_traceless(omega)


def ordered_product(u):
    """u[m-1] @ ... @ u[0] by pairwise reduction along axis 0."""
    while u.shape[0] > 1:
        m = u.shape[0]
        paired = matmul2(u[1:m - m % 2:2], u[0:m - m % 2:2])
        u = np.concatenate([paired, u[m - 1:]]) if m % 2 else paired
    return u[0]


def phase_angle(x, z):
    """theta = x (z - 1/z) / 4."""
    return x * (z - 1.0 / z) / 4.0


def wronskian(f, g):
    return f[..., 0] * g[..., 1] - f[..., 1] * g[..., 0]


# -- single-node frames --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JostFrame:
    """Normalized Jost solution (phase removed) traced over the x-grid; values has shape (2, n)."""

    chart: Chart
    kind: JostKind
    znode: float
    values: np.ndarray
    grid: XGrid
    sup_norm: float

    def unnormalized(self, j):
        """psi at grid index j (the phase e^{+-i theta} restored)."""
        th = phase_angle(self.grid.x[j], self.znode)
        sgn = 1 if self.kind in (JostKind.M_MINUS, JostKind.M_PLUS) else -1
        return self.values[:, j] * np.exp(1j * sgn * th)


def integrate_jost(cm: CoefficientMatrices, znode: float, kind, overflow_bound: float = DEFAULT_OVERFLOW) -> JostFrame:
    """Propagate one Jost solution across the whole grid.

    Minus kinds are anchored at the left edge, plus kinds at the right edge;
    m-kinds start from e1 and n-kinds from e2.
    """
    if znode == 0:
        raise ValueError("spectral node must be nonzero")
    kind = JostKind(kind)
    z = float(znode)
    x = cm.grid.x
    n = cm.grid.n
    U = step_propagators(cm, np.array([z]))[:, 0]
    m_type = kind in (JostKind.M_MINUS, JostKind.M_PLUS)
    sgn = 1 if m_type else -1
    e = np.array([1, 0], complex) if m_type else np.array([0, 1], complex)
    psi = np.empty((n, 2), complex)
    if kind in (JostKind.M_MINUS, JostKind.N_MINUS):
        psi[0] = e * np.exp(1j * sgn * phase_angle(x[0], z))
        for j in range(n - 1):
            psi[j + 1] = U[j] @ psi[j]
    else:
        psi[-1] = e * np.exp(1j * sgn * phase_angle(x[-1], z))
        Uinv = adjugate2(U)
        for j in range(n - 2, -1, -1):
            psi[j] = Uinv[j] @ psi[j + 1]
    values = (psi * np.exp(-1j * sgn * phase_angle(x, z))[:, None]).T
    sup = float(np.max(np.linalg.norm(values, axis=0)))
    if not np.isfinite(sup) or sup > overflow_bound:
        raise JostOverflowError(f"Jost frame norm {sup:.3g} exceeds bound {overflow_bound:.3g} at z={z}")
    return JostFrame(cm.chart, kind, z, values, cm.grid, sup)


def default_stations(n: int):
    """Grid indices at one, two and three quarters of the grid (x = -L/2, 0, L/2 for symmetric grids)."""
    return tuple(int(round(k * (n - 1) / 4)) for k in (1, 2, 3))


def _chart_to_z(chart, a, b1, b2):
    # the large chart's b-hat_+ is b_-, and b-hat_- is b_+
    return (a, b1, b2) if Chart(chart) is Chart.SMALL_LAMBDA else (a, b2, b1)


def scattering_from_wronskians(frames, stations=None):
    """(a, b+, b-) from the four frames of one chart at one node.

    Returns the values at the middle station and the largest relative
    deviation of any coefficient across the stations.
    """
    mm, mp = frames[JostKind.M_MINUS], frames[JostKind.M_PLUS]
    nm, np_ = frames[JostKind.N_MINUS], frames[JostKind.N_PLUS]
    stations = stations or default_stations(mm.grid.n)
    vals = []
    for j in stations:
        f_mm, f_mp = mm.unnormalized(j), mp.unnormalized(j)
        f_nm, f_np = nm.unnormalized(j), np_.unnormalized(j)
        a = wronskian(f_mm, f_np)
        b1 = wronskian(f_mp, f_mm)
        b2 = np.conj(wronskian(f_np, f_nm))
        vals.append(_chart_to_z(mm.chart, a, b1, b2))
    vals = np.array(vals)
    ref = vals[len(stations) // 2]
    drift = relative_drift(vals, ref)
    return complex(ref[0]), complex(ref[1]), complex(ref[2]), float(drift)


def relative_drift(vals, ref, floor=1e-6):
    """max |W_k - W_ref| / max(|W_ref|, floor) over stations and coefficients.

    Coefficients below ``floor`` are compared absolutely against it.
    """
    d = np.abs(vals - ref[None]) / np.maximum(np.abs(ref), floor)[None]
    return d.max(axis=(0, 1))


# -- grid sweep ----------------------------------------------------------------

def sweep_chart(cm: CoefficientMatrices, z, stations=None, overflow_bound=DEFAULT_OVERFLOW):
    """Wronskians for all nodes z at the given stations.

    Returns (vals, frame_sup) where vals has shape (n_stations, 3, N) holding
    (a, b+, b-) in z-chart naming, and frame_sup is the largest frame norm seen.
    """
    z = np.asarray(z, dtype=np.float64)
    n = cm.grid.n
    stations = tuple(stations or default_stations(n))
    cuts = (0,) + stations + (n - 1,)
    segs = [ordered_product(step_propagators(cm, z, lo, hi)) if hi > lo
            else np.broadcast_to(np.eye(2, dtype=complex), z.shape + (2, 2)).copy()
            for lo, hi in zip(cuts[:-1], cuts[1:])]
    x = cm.grid.x
    xl, xr = x[0], x[-1]
    eye = np.broadcast_to(np.eye(2, dtype=complex), z.shape + (2, 2))
    out = np.empty((len(stations), 3, z.size), complex)
    sup = 1.0
    for k in range(1, len(cuts) - 1):
        left = eye
        for s in segs[:k]:
            left = matmul2(s, left)
        right = eye
        for s in segs[k:]:
            right = matmul2(s, right)
        back = adjugate2(right)
        f_mm = left[..., :, 0] * np.exp(1j * phase_angle(xl, z))[:, None]
        f_nm = left[..., :, 1] * np.exp(-1j * phase_angle(xl, z))[:, None]
        f_mp = back[..., :, 0] * np.exp(1j * phase_angle(xr, z))[:, None]
        f_np = back[..., :, 1] * np.exp(-1j * phase_angle(xr, z))[:, None]
        sup = max(sup, float(np.max(np.abs(left))), float(np.max(np.abs(back))))
        a = wronskian(f_mm, f_np)
        b1 = wronskian(f_mp, f_mm)
        b2 = np.conj(wronskian(f_np, f_nm))
        out[k - 1] = _chart_to_z(cm.chart, a, b1, b2)
    if not np.isfinite(sup) or sup > overflow_bound:
        raise JostOverflowError(f"Jost frame norm {sup:.3g} exceeds bound {overflow_bound:.3g}")
    return out, sup


def _sweep_both(args):
    cm_s, cm_l, z, stations, overflow = args
    vs, sup_s = sweep_chart(cm_s, z, stations, overflow)
    vl, sup_l = sweep_chart(cm_l, z, stations, overflow)
    return vs, vl, max(sup_s, sup_l)


@dataclass(eq=False)
class ScatteringSet:
    grid: SpectralGrid
    a: np.ndarray
    bp: np.ndarray
    bm: np.ndarray
    a0: complex
    ainf: complex
    min_abs_a: float
    diagnostics: dict = field(default_factory=dict)

    def determinant_defect(self):
        return np.abs(self.a * np.conj(self.a) + self.bp * np.conj(self.bm) - 1.0)


def scattering_limits(p: Potential):
    """(a0, ainf): a(z) as z -> 0 and as |z| -> infinity."""
    q = p.charge()
    a0 = complex(np.exp(-0.25j * q))
    return a0, a0.conjugate()


def compute_scattering(p: Potential, grid: SpectralGrid, workers: int = 1, chunk: int = 64,
                       overflow_bound: float = DEFAULT_OVERFLOW, stations=None) -> ScatteringSet:
    """a, b+ and b- on every node of ``grid``.

    Both charts are integrated at every node. The returned values use the
    small-lambda chart for |z| <= 1 and the large-lambda chart for |z| > 1;
    the per-node disagreement is kept in the diagnostics.
    """
    z = grid.nodes
    a0, ainf = scattering_limits(p)
    N = z.size
    if p.is_zero():
        # closed form: the Jost solutions are the pure exponentials
        zeros = np.zeros(N)
        return ScatteringSet(grid, np.ones(N, complex), np.zeros(N, complex), np.zeros(N, complex),
                             a0, ainf, 1.0,
                             {"wronskian_drift": zeros, "chart_mismatch": zeros.copy(),
                              "symmetry_defect": zeros.copy(), "frame_sup": 1.0})
    stations = tuple(stations or default_stations(p.grid.n))
    cm_s = assemble_coefficients(p, Chart.SMALL_LAMBDA)
    cm_l = assemble_coefficients(p, Chart.LARGE_LAMBDA)
    jobs = [(cm_s, cm_l, z[i:i + chunk], stations, overflow_bound) for i in range(0, N, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_both, jobs))
    else:
        results = [_sweep_both(j) for j in jobs]
    vs = np.concatenate([r[0] for r in results], axis=2)
    vl = np.concatenate([r[1] for r in results], axis=2)
    sup = max(r[2] for r in results)
    mid = len(stations) // 2
    small, large = vs[mid], vl[mid]
    drift = np.maximum(relative_drift(vs, small), relative_drift(vl, large))
    pick = np.abs(z) <= 1
    a, bp, bm = (np.where(pick, small[i], large[i]) for i in range(3))
    diag = {
        "wronskian_drift": drift,
        "chart_mismatch": np.max(np.abs(small - large), axis=0),
        "symmetry_defect": np.abs(bm - z * bp),
        "frame_sup": sup,
        "a_small": small[0],
        "a_large": large[0],
    }
    return ScatteringSet(grid, a, bp, bm, a0, ainf, float(np.min(np.abs(a))), diag)


def a_from_integral(p: Potential, znode: float, chart=Chart.SMALL_LAMBDA) -> complex:
    """Second estimator of a(z): quadrature of the potential against m_- (or m-hat_-)."""
    chart = Chart(chart)
    frame = integrate_jost(assemble_coefficients(p, chart), znode, JostKind.M_MINUS)
    m1, m2 = frame.values
    u, v, z = p.u, p.v, float(znode)
    rho = p.density()
    if chart is Chart.SMALL_LAMBDA:
        f = rho * m1 - 2 * np.conj(u) * m2 - 2 * z * np.conj(v) * (u * m1 - m2)
        return complex(1 - 0.25j * np.trapezoid(f, dx=p.grid.dx))
    f = rho * m1 - 2 * np.conj(v) * m2 - 2 / z * np.conj(u) * (v * m1 - m2)
    return complex(1 + 0.25j * np.trapezoid(f, dx=p.grid.dx))


# -- obstruction check ---------------------------------------------------------

@dataclass(frozen=True)
class ObstructionReport:
    min_abs_a: float
    winding: int
    winding_raw: float
    verdict: str
    threshold: float

    @property
    def ok(self) -> bool:
        return self.verdict == "OK"

    def as_dict(self):
        return {"min_abs_a": self.min_abs_a, "winding": self.winding,
                "winding_raw": self.winding_raw, "verdict": self.verdict, "threshold": self.threshold}


def detect_spectrum_obstructions(ss: ScatteringSet, threshold: float = 1e-3) -> ObstructionReport:
    """min|a| over the nodes and the winding number of a around the closed real line."""
    a = ss.a
    min_abs = float(np.min(np.abs(a)))
    if min_abs == 0:
        return ObstructionReport(0.0, 0, float("nan"), "OBSTRUCTED", threshold)
    # sorted nodes then back to the first node through infinity
    steps = np.angle(np.roll(a, -1) / a)
    raw = float(np.sum(steps) / (2 * np.pi))
    wind = int(round(raw))
    verdict = "OK" if (min_abs >= threshold and wind == 0) else "OBSTRUCTED"
    return ObstructionReport(min_abs, wind, raw, verdict, threshold)


# -- I/O -----------------------------------------------------------------------

def write_scattering(stem, ss: ScatteringSet, report: ObstructionReport, fmt="csv"):
    import json
    from .tables import table_path
    path = table_path(stem, fmt)
    write_table(path, SCATTERING_HEADER, complex_columns(ss.grid.nodes, ss.a, ss.bp, ss.bm), fmt)
    side = {"a0": [ss.a0.real, ss.a0.imag], "ainf": [ss.ainf.real, ss.ainf.imag],
            "min_abs_a": ss.min_abs_a, "winding": report.winding, "verdict": report.verdict,
            "grid": {"mapping": ss.grid.mapping, "step": ss.grid.step}}
    with open(f"{stem}.json", "w") as fh:
        json.dump(side, fh, indent=2)
    return path


def read_scattering(path) -> ScatteringSet:
    import json
    _, d = read_table(path, SCATTERING_HEADER)
    stem = str(path).rsplit(".", 1)[0]
    with open(f"{stem}.json") as fh:
        side = json.load(fh)
    g = SpectralGrid(d[:, 0], mapping=side["grid"]["mapping"], step=side["grid"]["step"])
    a = d[:, 1] + 1j * d[:, 2]
    return ScatteringSet(g, a, d[:, 3] + 1j * d[:, 4], d[:, 5] + 1j * d[:, 6],
                         complex(*side["a0"]), complex(*side["ainf"]), float(np.min(np.abs(a))))
