import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mtm_ist.cli import (EXIT_IO, EXIT_OBSTRUCTED, EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, build_parser,
                         main)
from mtm_ist.config import ConfigError, RunConfig, load_config
from mtm_ist.lattice import Potential, gaussian_potential, make_xgrid, read_potential, write_potential
from mtm_ist.spectra import read_reflections
from mtm_ist.tables import read_table

DATA = os.path.join(os.path.dirname(__file__), "data")
GOLD_CFG = os.path.join(DATA, "gaussian_config.json")
GOLD_POT = os.path.join(DATA, "gaussian_potential.csv")


def _config(tmp_path, **sections):
    cfg = {"grid": {"half_width": 10.0, "n": 1001}, "spectral": {"z_max": 8.0, "nodes": 64}}
    for k, v in sections.items():
        cfg.setdefault(k, {}).update(v)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _zero_file(tmp_path, n=1001):
    g = make_xgrid(10.0, n)
    path = tmp_path / "zero.csv"
    write_potential(path, Potential(g, np.zeros(n), np.zeros(n)))
    return str(path)


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_direct_zero_potential(tmp_path):
    out = tmp_path / "out"
    rc = main(["direct", "--config", _config(tmp_path), "--input", _zero_file(tmp_path), "--output-dir", str(out)])
    assert rc == EXIT_OK
    rs = read_reflections(out)
    assert rs.is_zero()
    _, d = read_table(out / "scattering.csv")
    np.testing.assert_array_equal(d[:, 1], 1)
    assert not np.any(d[:, [2, 3, 4, 5, 6]])
    assert _json(out / "scattering.json")["verdict"] == "OK"
    assert (out / "config.json").exists()


def test_direct_matches_golden_files(tmp_path):
    out = tmp_path / "out"
    assert main(["direct", "--config", GOLD_CFG, "--input", GOLD_POT, "--output-dir", str(out)]) == EXIT_OK
    _, got = read_table(out / "scattering.csv")
    _, gold = read_table(os.path.join(DATA, "golden_scattering.csv"))
    np.testing.assert_allclose(got[:, 0], gold[:, 0], rtol=1e-14)
    np.testing.assert_allclose(got[:, 1:5], gold[:, 1:5], atol=1e-7)
    # b- = z b+ for the oracle
    z = gold[:, 0]
    np.testing.assert_allclose(got[:, 5] + 1j * got[:, 6], z * (gold[:, 3] + 1j * gold[:, 4]), atol=1e-7)
    rep = _json(out / "direct_report.json")
    assert rep["obstruction"]["verdict"] == "OK"
    assert rep["checks"]["wronskian_drift"] < 1e-8


def test_truncated_input(tmp_path):
    lines = open(GOLD_POT).read().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:500] + [lines[500][:7]]) + "\n")
    rc = main(["direct", "--config", GOLD_CFG, "--input", str(bad), "--output-dir", str(tmp_path / "o")])
    assert rc == EXIT_IO


def test_missing_input_and_bad_config(tmp_path):
    assert main(["direct", "--output-dir", str(tmp_path / "o")]) == EXIT_IO
    assert main(["direct", "--input", str(tmp_path / "nope.csv"), "--output-dir", str(tmp_path / "o")]) == EXIT_IO
    cfg = tmp_path / "c.json"
    cfg.write_text('{"grid": {"n": 11, "colour": 3}}')
    assert main(["norms", "--config", str(cfg), "--input", GOLD_POT, "--output-dir", str(tmp_path)]) == EXIT_IO
    cfg.write_text("{not json")
    assert main(["norms", "--config", str(cfg), "--input", GOLD_POT, "--output-dir", str(tmp_path)]) == EXIT_IO


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["frobnicate"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["direct", "--workers", "many"])
    assert info.value.code == EXIT_USAGE


def test_obstructed_exit_code(tmp_path):
    g = make_xgrid(10.0, 1001)
    pot = tmp_path / "big.csv"
    write_potential(pot, gaussian_potential(g, 3.0, 0.0))
    out = tmp_path / "out"
    cfg = _config(tmp_path, spectral={"z_max": 16.0, "nodes": 128})
    assert main(["direct", "--config", cfg, "--input", str(pot), "--output-dir", str(out)]) == EXIT_OBSTRUCTED
    assert _json(out / "scattering.json")["verdict"] == "OBSTRUCTED"
    assert _json(out / "direct_report.json")["obstruction"]["winding"] != 0
    assert not (out / "reflections_z.csv").exists()
    assert main(["roundtrip", "--config", cfg, "--input", str(pot), "--output-dir", str(out)]) == EXIT_OBSTRUCTED


def test_config_round_trip():
    cfg = load_config(GOLD_CFG)
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert RunConfig.from_dict(cfg.to_dict()).to_json() == cfg.to_json()
    assert RunConfig().validate() == RunConfig.from_json("{}")


@pytest.mark.parametrize("bad", [
    {"tolerances": {"rh_tol": 0}},
    {"grid": {"n": 1}},
    {"grid": {"n": 2 ** 21}},
    {"spectral": {"nodes": 63}},
    {"spectral": {"nodes": 100000}},
    {"io": {"output_dir": ""}},
    {"io": {"format": "xml"}},
    {"time": {"splitting": "RK4"}},
    {"workers": 0},
    {"extra": 1},
])
def test_config_rejections(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["direct", "--config", GOLD_CFG, "--input", GOLD_POT, "--output-dir", str(out)]) == EXIT_OK
        outs.append(out)
    for name in ("scattering.csv", "reflections_z.csv", "reflections_omega.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_parallel_flag_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["direct", "--config", GOLD_CFG, "--input", GOLD_POT, "--output-dir", str(a)])
    main(["direct", "--config", GOLD_CFG, "--input", GOLD_POT, "--output-dir", str(b), "--workers", "2"])
    _, da = read_table(a / "scattering.csv")
    _, db = read_table(b / "scattering.csv")
    np.testing.assert_allclose(da, db, rtol=0, atol=1e-12)
    assert _json(b / "config.json")["workers"] == 2


def test_binary_format(tmp_path):
    out = tmp_path / "out"
    assert main(["direct", "--config", GOLD_CFG, "--input", GOLD_POT, "--output-dir", str(out),
                 "--format", "bin"]) == EXIT_OK
    assert (out / "scattering.bin").read_bytes()[:4] == b"MTM1"
    rs = read_reflections(out)
    _, ref = read_table(os.path.join(DATA, "golden_scattering.csv"))
    assert rs.z_grid.size == ref.shape[0]


def test_roundtrip_zero(tmp_path):
    out = tmp_path / "out"
    rc = main(["roundtrip", "--config", _config(tmp_path), "--input", _zero_file(tmp_path),
               "--output-dir", str(out), "--T", "0"])
    assert rc == EXIT_OK
    p = read_potential(out / "recovered.csv")
    assert not np.any(p.u) and not np.any(p.v)
    rep = _json(out / "roundtrip_report.json")
    assert rep["violations"] == [] and rep["u_rel_error"] == 0


def test_roundtrip_flags_coarse_resolution(tmp_path):
    # a 64-node contour cut at |z| = 8 cannot meet a 1e-6 round-trip tolerance
    out = tmp_path / "out"
    cfg = _config(tmp_path, tolerances={"roundtrip_tol": 1e-6})
    rc = main(["roundtrip", "--config", cfg, "--input", GOLD_POT, "--output-dir", str(out)])
    rep = _json(out / "roundtrip_report.json")
    assert rc == EXIT_TOLERANCE
    assert "u_rel_error" in rep["violations"]
    assert rep["u_rel_error"] < 1e-2 and rep["gauge_modulus_defect"] < 1e-8


def test_direct_evolve_inverse_chain(tmp_path):
    cfg = _config(tmp_path)
    d, e, i = tmp_path / "d", tmp_path / "e", tmp_path / "i"
    assert main(["direct", "--config", cfg, "--input", GOLD_POT, "--output-dir", str(d)]) == EXIT_OK
    assert main(["evolve-spectral", "--config", cfg, "--input", str(d), "--output-dir", str(e), "--T", "0.5"]) == 0
    assert read_reflections(e).t == 0.5
    assert main(["inverse", "--config", cfg, "--input", str(e), "--output-dir", str(i), "--T", "0.5"]) == EXIT_OK
    p = read_potential(i / "recovered.csv")
    assert p.grid.n == 1001
    rep = _json(i / "inverse_report.json")
    assert rep["t"] == 0.5 and rep["gauge_modulus_defect"] < 1e-8


def test_pde_check_zero(tmp_path):
    out = tmp_path / "out"
    rc = main(["pde-check", "--config", _config(tmp_path), "--input", _zero_file(tmp_path),
               "--output-dir", str(out), "--T", "1"])
    assert rc == EXIT_OK
    _, d = read_table(out / "pde_check.csv")
    assert not np.any(d[:, 1])
    assert _json(out / "pde_check.json")["max_abs_da"] == 0


def test_pde_check_dt_halving(tmp_path):
    defects = []
    for dt in (0.02, 0.01):
        out = tmp_path / f"dt{dt}"
        cfg = _config(tmp_path, time={"dt": dt})
        assert main(["pde-check", "--config", cfg, "--input", GOLD_POT, "--output-dir", str(out),
                     "--T", "1"]) == EXIT_OK
        defects.append(_json(out / "pde_check.json")["max_abs_da"])
        assert _json(out / "pde_check.json")["charge_drift"] < 1e-12
    # second-order splitting: the defect drops by about four
    assert 2.5 < defects[0] / defects[1] < 6


def test_norms_command(tmp_path):
    assert main(["norms", "--input", GOLD_POT, "--output-dir", str(tmp_path)]) == EXIT_OK
    rep = _json(tmp_path / "norms.json")
    assert rep["charge"] == pytest.approx(0.05 * np.sqrt(np.pi / 2), rel=1e-8)
    assert rep["u"]["l21"] > 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mtm_ist", "norms", "--input", GOLD_POT, "--output-dir",
                        str(tmp_path)], capture_output=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "mtm_ist", "direct", "--input", str(tmp_path / "x.csv"),
                        "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == EXIT_IO and "ERROR" in r.stderr


def test_roundtrip_with_pde_cross_check(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, spectral={"z_max": 16.0, "nodes": 256})
    rc = main(["roundtrip", "--config", cfg, "--input", GOLD_POT, "--output-dir", str(out), "--T", "1",
               "--cross-check-pde"])
    rep = _json(out / "roundtrip_report.json")
    assert rc == EXIT_OK, rep["violations"]
    assert rep["u_rel_error"] < 5e-3 and rep["v_rel_error"] < 5e-3
    assert rep["pde_charge_drift"] < 1e-12 and rep["t"] == 1.0
