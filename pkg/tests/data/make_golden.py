"""Regenerate the golden files for the small Gaussian CLI run.

Expected (a, b+) come from the adaptive Runge-Kutta oracle in tests/oracles.py
applied to the analytic Gaussian, not from the package's own integrator. The
nodes are rebuilt here from the mapped-grid formula s = y/2 + sqrt(1 + y^2/4).

    python tests/data/make_golden.py
"""
import json
import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.dirname(HERE))

from oracles import gaussian_fields, scattering_oracle  # noqa: E402

UA, VA = 0.2, 0.1
HALF_WIDTH, N = 10.0, 1001
Z_MAX, NODES = 8.0, 64

CONFIG = {
    "grid": {"half_width": HALF_WIDTH, "n": N},
    "spectral": {"z_max": Z_MAX, "nodes": NODES, "mapping": "mapped"},
    "io": {"format": "csv"},
}


def nodes():
    ymax = Z_MAX - 1 / Z_MAX
    y = np.linspace(-ymax, ymax, NODES // 2)
    pos = y / 2 + np.sqrt(1 + y * y / 4)
    return np.concatenate([-pos[::-1], pos])


def main():
    x = np.linspace(-HALF_WIDTH, HALF_WIDTH, N)
    g = np.exp(-x * x)
    pot = np.column_stack([x, UA * g, 0 * g, VA * g, 0 * g])
    np.savetxt(os.path.join(HERE, "gaussian_potential.csv"), pot, delimiter=",", fmt="%.17g",
               header="x,re_u,im_u,re_v,im_v", comments="")
    fields = gaussian_fields(UA, VA)
    rows = []
    for z in nodes():
        a, bp = scattering_oracle(fields, z, HALF_WIDTH)
        rows.append([z, a.real, a.imag, bp.real, bp.imag])
    np.savetxt(os.path.join(HERE, "golden_scattering.csv"), np.array(rows), delimiter=",", fmt="%.17g",
               header="z,re_a,im_a,re_bp,im_bp", comments="")
    with open(os.path.join(HERE, "gaussian_config.json"), "w") as fh:
        json.dump(CONFIG, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
