"""Run configuration: JSON in, JSON out, with full defaulting."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .lattice import SpectralGrid, XGrid, make_spectral_grid, make_xgrid, nodes_for_decades

MAX_GRID_POINTS = 1 << 20
MAX_CONTOUR_NODES = 8192


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    half_width: float = 20.0
    n: int = 4001


@dataclass
class SpectralConfig:
    z_max: float = 16.0
    nodes: int = 512
    mapping: str = "mapped"
    nodes_per_decade: int | None = None   # log mapping only; overrides nodes when set


@dataclass
class Tolerances:
    ode_tol: float = 1e-8          # determinant identity and chart agreement
    rh_tol: float = 1e-10
    wronskian_tol: float = 1e-8
    a_threshold: float = 1e-3
    gauge_tol: float = 1e-6
    roundtrip_tol: float = 1e-3
    pde_tol: float = 5e-3
    isospectral_tol: float = 1e-3
    overflow_bound: float = 1e8


@dataclass
class TimeConfig:
    T: float = 0.0
    dt: float | None = None        # None: dt = dx
    splitting: str = "STRANG"
    output_every: int = 0


@dataclass
class IOConfig:
    input: str | None = None
    output_dir: str = "mtm_out"
    format: str = "csv"


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    time: TimeConfig = field(default_factory=TimeConfig)
    io: IOConfig = field(default_factory=IOConfig)
    workers: int | None = None

    def validate(self):
        if not self.grid.half_width > 0 or self.grid.n < 2:
            raise ConfigError("grid needs half_width > 0 and n >= 2")
        if self.grid.n > MAX_GRID_POINTS:
            raise ConfigError(f"grid.n above cap {MAX_GRID_POINTS}")
        if self.spectral.mapping not in ("mapped", "log"):
            raise ConfigError(f"unknown spectral mapping {self.spectral.mapping!r}")
        if not self.spectral.z_max > 1:
            raise ConfigError("spectral.z_max must exceed 1")
        n_nodes = self.contour_nodes()
        if n_nodes < 4 or n_nodes % 2 or n_nodes > MAX_CONTOUR_NODES:
            raise ConfigError(f"contour node count {n_nodes} must be even, >= 4 and <= {MAX_CONTOUR_NODES}")
        for f in fields(self.tolerances):
            if not getattr(self.tolerances, f.name) > 0:
                raise ConfigError(f"tolerance {f.name} must be positive")
        if self.time.splitting not in ("LIE", "STRANG"):
            raise ConfigError(f"unknown splitting {self.time.splitting!r}")
        if self.time.dt is not None and not self.time.dt > 0:
            raise ConfigError("time.dt must be positive")
        if self.io.format not in ("csv", "bin"):
            raise ConfigError(f"unknown format {self.io.format!r}")
        if not self.io.output_dir:
            raise ConfigError("io.output_dir must be nonempty")
        if self.io.input is not None and not self.io.input:
            raise ConfigError("io.input must be nonempty when given")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def contour_nodes(self) -> int:
        s = self.spectral
        if s.mapping == "log" and s.nodes_per_decade:
            return nodes_for_decades(s.z_max, s.nodes_per_decade)
        return s.nodes

    def xgrid(self) -> XGrid:
        return make_xgrid(self.grid.half_width, self.grid.n)

    def spectral_grid(self) -> SpectralGrid:
        return make_spectral_grid(self.spectral.z_max, self.contour_nodes(), self.spectral.mapping)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            val = d.pop(f.name)
            sub = f.default_factory if f.default_factory is not None else None  # type: ignore[misc]
            if isinstance(sub, type):
                kwargs[f.name] = _section(sub, val, f.name)
            else:
                kwargs[f.name] = val
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        return cls(**kwargs).validate()

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _section(kind, val, name):
    if val is None:
        return kind()
    if not isinstance(val, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(kind)}
    extra = set(val) - known
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    return kind(**val)


def load_config(path: str | None) -> RunConfig:
    if not path:
        return RunConfig().validate()
    try:
        with open(path) as fh:
            return RunConfig.from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
