"""Direct and inverse scattering for the massive Thirring model on a truncated line."""
from .lattice import (NormReport, Potential, SpectralChart, SpectralGrid, XGrid, gaussian_potential,
                      make_spectral_grid, make_xgrid, reciprocal_of, weighted_norms)
from .direct import (Chart, JostKind, ScatteringSet, assemble_coefficients, compute_scattering,
                     detect_spectrum_obstructions, integrate_jost, scattering_from_wronskians,
                     scattering_limits)
from .spectra import ReflectionSet, evolve_reflections, reflection_norm_report, reflections_from_scattering
from .rhsolve import RHPChart, assemble_jump, cauchy_projector, solve_on_grid, solve_rhp
from .recon import reconstruct, recover_u, recover_v, roundtrip
from .mtmpde import EvolverConfig, Splitting, evolve, step

__version__ = "0.1.0"
