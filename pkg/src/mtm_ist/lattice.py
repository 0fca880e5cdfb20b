"""Grids, the potential container and discrete weighted norms."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputFormatError
from .tables import complex_columns, read_table, write_table

POTENTIAL_HEADER = ["x", "re_u", "im_u", "re_v", "im_v"]


@dataclass(frozen=True)
class XGrid:
    x0: float
    dx: float
    n: int

    def __post_init__(self):
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if self.n < 2:
            raise ValueError(f"need at least 2 samples, got {self.n}")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def x_end(self) -> float:
        return self.x0 + self.dx * (self.n - 1)

    @property
    def period(self) -> float:
        """Length of the periodic cell used by FFT-based operations."""
        return self.n * self.dx


def make_xgrid(half_width: float, n: int) -> XGrid:
    if not half_width > 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    n = int(n)
    return XGrid(x0=-float(half_width), dx=2.0 * half_width / (n - 1), n=n)


class SpectralChart(str, Enum):
    Z_CHART = "z"
    OMEGA_CHART = "omega"
    LAMBDA_CHART = "lambda"


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Origin-punctured symmetric node set on the real line.

    Each sign branch is uniform in a parameter ``t`` with spacing ``step``:
    ``mapping="mapped"`` uses t = s - 1/s, ``mapping="log"`` uses t = log|s|.
    Both node sets are closed under s -> 1/s.
    """

    nodes: np.ndarray
    chart: SpectralChart = SpectralChart.Z_CHART
    mapping: str = "mapped"
    step: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.nodes, dtype=np.float64)
        object.__setattr__(self, "nodes", s)
        if s.ndim != 1 or s.size < 4 or s.size % 2:
            raise ValueError("spectral grid needs an even number (>= 4) of nodes")
        if np.any(s == 0):
            raise ValueError("0 cannot be a spectral node")
        if np.any(np.diff(s) <= 0):
            raise ValueError("spectral nodes must be strictly increasing")
        if np.count_nonzero(s < 0) != s.size // 2:
            raise ValueError("spectral grid must have equally many nodes of each sign")
        if self.mapping not in ("mapped", "log"):
            raise ValueError(f"unknown mapping {self.mapping!r}")

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def half(self) -> int:
        return self.nodes.size // 2

    def jacobian(self) -> np.ndarray:
        """ds/dt at each node."""
        s = self.nodes
        if self.mapping == "mapped":
            return s * s / (1.0 + s * s)
        return np.abs(s)

    def weights(self) -> np.ndarray:
        """Trapezoid-in-t quadrature weights (ds = jacobian dt)."""
        return self.step * self.jacobian()

    @property
    def z_max(self) -> float:
        return float(self.nodes[-1])


def make_spectral_grid(z_max: float = 16.0, nodes: int = 512, mapping: str = "mapped",
                       chart: SpectralChart = SpectralChart.Z_CHART) -> SpectralGrid:
    """Symmetric grid with 1/z_max <= |s| <= z_max and ``nodes`` points in total."""
    if not z_max > 1:
        raise ValueError(f"z_max must exceed 1, got {z_max}")
    if nodes < 4 or nodes % 2:
        raise ValueError(f"node count must be even and >= 4, got {nodes}")
    m = nodes // 2
    if mapping == "mapped":
        ymax = z_max - 1.0 / z_max
        y = np.linspace(-ymax, ymax, m)
        pos = y / 2 + np.sqrt(1 + y * y / 4)
        step = 2 * ymax / (m - 1)
    elif mapping == "log":
        t = np.linspace(-np.log(z_max), np.log(z_max), m)
        pos = np.exp(t)
        step = 2 * np.log(z_max) / (m - 1)
    else:
        raise ValueError(f"unknown mapping {mapping!r}")
    s = np.concatenate([-pos[::-1], pos])
    return SpectralGrid(nodes=s, chart=SpectralChart(chart), mapping=mapping, step=step)


def nodes_for_decades(z_max: float, nodes_per_decade: int) -> int:
    """Total node count of a log grid with the given density per decade."""
    per_branch = int(np.ceil(2 * np.log10(z_max) * nodes_per_decade)) + 1
    return 2 * per_branch


def reciprocal_of(g: SpectralGrid) -> SpectralGrid:
    """The grid of reciprocals; Z_CHART <-> OMEGA_CHART."""
    other = {SpectralChart.Z_CHART: SpectralChart.OMEGA_CHART,
             SpectralChart.OMEGA_CHART: SpectralChart.Z_CHART}.get(g.chart, g.chart)
    return SpectralGrid(nodes=np.sort(1.0 / g.nodes), chart=other, mapping=g.mapping, step=g.step)


def reciprocal_permutation(g: SpectralGrid) -> np.ndarray:
    """Index map k -> j with reciprocal_of(g).nodes[k] == 1 / g.nodes[j]."""
    return np.argsort(1.0 / g.nodes)


@dataclass(frozen=True, eq=False)
class Potential:
    grid: XGrid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.complex128)
        v = np.asarray(self.v, dtype=np.complex128)
        if u.shape != (self.grid.n,) or v.shape != (self.grid.n,):
            raise ValueError(f"fields must have length {self.grid.n}, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("potential contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def density(self) -> np.ndarray:
        return np.abs(self.u) ** 2 + np.abs(self.v) ** 2

    def charge(self) -> float:
        return float(np.trapezoid(self.density(), dx=self.grid.dx))

    def is_zero(self) -> bool:
        return not (np.any(self.u) or np.any(self.v))


def gaussian_potential(grid: XGrid, u_amp=0.2, v_amp=0.1, width=1.0) -> Potential:
    """u = u_amp exp(-(x/width)^2), v = v_amp exp(-(x/width)^2)."""
    g = np.exp(-(grid.x / width) ** 2)
    return Potential(grid, u_amp * g, v_amp * g)


@dataclass(frozen=True)
class NormReport:
    h1: float
    h2: float
    h11: float
    l21: float

    def as_dict(self):
        return {"h1": self.h1, "h2": self.h2, "h11": self.h11, "l21": self.l21}


def weighted_norms(f, grid: XGrid) -> NormReport:
    """Trapezoid H^1, H^2, H^{1,1} and L^{2,1} norms with finite-difference derivatives."""
    f = np.asarray(f)
    if f.shape != (grid.n,):
        raise ValueError(f"field length {f.shape} does not match grid size {grid.n}")
    x = grid.x
    d1 = np.gradient(f, grid.dx)
    d2 = np.gradient(d1, grid.dx)
    a0, a1, a2 = np.abs(f) ** 2, np.abs(d1) ** 2, np.abs(d2) ** 2
    w = 1.0 + x * x

    def integ(y):
        return float(np.sqrt(max(np.trapezoid(y, dx=grid.dx), 0.0)))

    return NormReport(h1=integ(a0 + a1), h2=integ(a0 + a1 + a2),
                      h11=integ(w * (a0 + a1)), l21=integ(w * a0))


def tail_report(p: Potential, fraction: float = 0.05) -> dict:
    """Size of the fields near the truncation edges."""
    k = max(1, int(round(fraction * p.grid.n)))
    rho = p.density()
    tail = np.concatenate([rho[:k], rho[-k:]])
    return {
        "edge_amplitude": float(max(np.abs(p.u[[0, -1]]).max(), np.abs(p.v[[0, -1]]).max())),
        "tail_l2": float(np.sqrt(tail.sum() * p.grid.dx)),
        "fraction": fraction,
    }


def wavenumbers(n: int, dx: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, d=dx)


def spectral_shift(f, dx: float, delta: float):
    """Periodic band-limited translate: returns f(x + delta) sampled on the grid."""
    f = np.asarray(f)
    n = f.shape[-1]
    k = wavenumbers(n, dx)
    mult = np.exp(1j * k * delta)
    if n % 2 == 0:
        mult[n // 2] = np.cos(k[n // 2] * delta)
    return np.fft.ifft(np.fft.fft(f, axis=-1) * mult, axis=-1)


def spectral_derivative(f, dx: float):
    f = np.asarray(f)
    n = f.shape[-1]
    k = wavenumbers(n, dx)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(f, axis=-1), axis=-1)


def write_potential(path, p: Potential, fmt=None):
    write_table(path, POTENTIAL_HEADER, complex_columns(p.x, p.u, p.v), fmt)


def read_potential(path) -> Potential:
    _, data = read_table(path, POTENTIAL_HEADER)
    x = data[:, 0]
    if x.size < 2:
        raise InputFormatError(f"{path}: need at least 2 samples")
    dx = (x[-1] - x[0]) / (x.size - 1)
    if not dx > 0 or np.max(np.abs(np.diff(x) - dx)) > 1e-8 * max(1.0, abs(dx)):
        raise InputFormatError(f"{path}: x column is not a uniform increasing grid")
    grid = XGrid(x0=float(x[0]), dx=float(dx), n=x.size)
    return Potential(grid, data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])
