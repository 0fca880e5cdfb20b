import numpy as np
import pytest

from mtm_ist.direct import compute_scattering, detect_spectrum_obstructions
from mtm_ist.errors import ObstructedSpectrumError
from mtm_ist.lattice import Potential, gaussian_potential, make_spectral_grid, make_xgrid
from mtm_ist.spectra import (c0_bound, coefficient_norms, evolution_phase, evolve_reflections, from_z_chart,
                             lambda_reflection, read_reflections, reflection_norm_report,
                             reflections_from_scattering, write_reflections)


@pytest.fixture(scope="module")
def small_rs():
    p = gaussian_potential(make_xgrid(10, 2001), 0.2, 0.1)
    return reflections_from_scattering(compute_scattering(p, make_spectral_grid(8, 64)))


def test_ladder_exact(canonical_reflections):
    d = canonical_reflections.ladder_defects()
    assert d["z_ladder"] == 0 and d["omega_ladder"] <= 1e-15 * max(1, canonical_reflections.max_modulus())
    assert d["cross_chart"] == 0
    assert d["reciprocal_nodes"] < 1e-15


def test_reflections_from_b_plus_and_b_minus(canonical_scattering, canonical_reflections):
    ss, rs = canonical_scattering, canonical_reflections
    z = ss.grid.nodes
    np.testing.assert_allclose(rs.rhm, ss.bp / ss.a, atol=1e-8)
    np.testing.assert_allclose(rs.rhp, ss.bm / ss.a, atol=1e-8)
    assert np.all(np.isfinite(rs.rhp)) and np.all(np.isfinite(rs.rhm))
    inner = np.abs(z) <= 1
    np.testing.assert_array_equal(rs.rhm[inner], (ss.bp / ss.a)[inner])


def test_zero_data():
    g = make_xgrid(5, 101)
    ss = compute_scattering(Potential(g, np.zeros(g.n), np.zeros(g.n)), make_spectral_grid(16, 32))
    rs = reflections_from_scattering(ss)
    assert rs.is_zero()
    assert c0_bound(rs) == 1
    assert evolve_reflections(rs, 3.0).is_zero()


def test_obstructed_input_is_refused():
    g = make_xgrid(20, 4001)
    ss = compute_scattering(gaussian_potential(g, 3.0, 0.0), make_spectral_grid(16, 128))
    with pytest.raises(ObstructedSpectrumError) as info:
        reflections_from_scattering(ss)
    assert info.value.report.verdict == "OBSTRUCTED"
    assert not detect_spectrum_obstructions(ss).ok


def test_evolution_identity_and_group(small_rs):
    assert evolve_reflections(small_rs, 0.0) is small_rs
    a = evolve_reflections(evolve_reflections(small_rs, 0.7), 1.6)
    b = evolve_reflections(small_rs, 2.3)
    np.testing.assert_allclose(a.rhm, b.rhm, atol=1e-14)
    np.testing.assert_allclose(a.rp, b.rp, atol=1e-14)
    assert a.t == pytest.approx(2.3)
    back = evolve_reflections(b, -2.3)
    np.testing.assert_allclose(back.rhp, small_rs.rhp, atol=1e-14)


def test_evolution_preserves_modulus_and_ladder(small_rs):
    e = evolve_reflections(small_rs, 5.0)
    for k in ("rp", "rm", "rhp", "rhm"):
        np.testing.assert_allclose(np.abs(getattr(e, k)), np.abs(getattr(small_rs, k)), rtol=1e-14)
    d = e.ladder_defects()
    assert d["z_ladder"] < 1e-15 and d["cross_chart"] < 1e-15
    assert abs(np.abs(evolution_phase(np.array([-3.0, 0.1, 7.0]), 2.0)) - 1).max() < 1e-15


def test_evolution_phase_value():
    assert evolution_phase(2.0, 1.0) == pytest.approx(np.exp(-0.5j * 2.5), abs=1e-16)
    # s and 1/s pick up the same phase
    assert evolution_phase(4.0, 0.3) == pytest.approx(evolution_phase(0.25, 0.3), abs=1e-16)


def test_modulus_norms_invariant_under_evolution(small_rs):
    before = reflection_norm_report(small_rs)
    after = reflection_norm_report(evolve_reflections(small_rs, 4.0))
    for k in before:
        assert after[k].l21 == pytest.approx(before[k].l21, rel=1e-13)
        assert after[k].l2m2 == pytest.approx(before[k].l2m2, rel=1e-13)


def test_norms_finite(canonical_reflections):
    for k, n in reflection_norm_report(canonical_reflections).items():
        assert all(np.isfinite(v) and v >= 0 for v in n.as_dict().values()), k
    n = coefficient_norms(canonical_reflections.rhm, canonical_reflections.z_grid)
    assert n.l2m2 > 0


def test_coefficient_norm_of_known_function():
    g = make_spectral_grid(200, 4096)
    s = g.nodes
    f = 1 / (1 + s * s)
    n = coefficient_norms(f, g)
    # int (1 + s^2) / (1 + s^2)^2 ds over the real line is pi
    assert n.l21 ** 2 == pytest.approx(np.pi, rel=2e-2)


def test_c0_bound_matches_lambda_chart(canonical_reflections):
    rs = canonical_reflections
    lam, r = lambda_reflection(rs)
    neg = rs.z_grid.nodes < 0
    np.testing.assert_allclose(lam[neg].real, 0, atol=0)
    c0 = c0_bound(rs)
    assert 0 < c0 <= 1
    assert c0 == pytest.approx(np.sqrt(np.min(1 - np.abs(r[neg]) ** 2)), rel=1e-12)
    np.testing.assert_allclose(lam * r, rs.rhp, atol=1e-15)


def test_from_z_chart_synthetic():
    g = make_spectral_grid(16, 64)
    z = g.nodes
    rs = from_z_chart(g, 0.01 * np.exp(-np.log(np.abs(z)) ** 2))
    d = rs.ladder_defects()
    assert max(d.values()) < 1e-15


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_reflection_io_round_trip(tmp_path, small_rs, fmt):
    write_reflections(tmp_path, small_rs, fmt)
    back = read_reflections(tmp_path)
    np.testing.assert_array_equal(back.rhm, small_rs.rhm)
    np.testing.assert_array_equal(back.rp, small_rs.rp)
    np.testing.assert_array_equal(back.z_grid.nodes, small_rs.z_grid.nodes)
    assert back.z_grid.step == small_rs.z_grid.step


def test_modulus_profile_matches_scattering_arrays(canonical_scattering, canonical_reflections):
    ss, rs = canonical_scattering, canonical_reflections
    profile = np.abs(ss.bp * ss.bm) / np.abs(ss.a) ** 2
    np.testing.assert_allclose(np.abs(rs.rhp * rs.rhm), profile, rtol=1e-7, atol=1e-14)


def test_zero_reflections_have_zero_norms():
    rs = from_z_chart(make_spectral_grid(16, 64), np.zeros(64))
    for n in reflection_norm_report(rs).values():
        assert all(v == 0 for v in n.as_dict().values())


def test_inverse_square_weight_norm_settles_under_refinement(canonical_potential):
    vals = []
    for zmax in (16.0, 32.0, 64.0):
        rs = reflections_from_scattering(compute_scattering(canonical_potential, make_spectral_grid(zmax, 512)))
        vals.append(coefficient_norms(rs.rm, rs.omega_grid).l2m2)
        # r- vanishes at the origin fast enough for the 1/omega^2 weight
        assert np.max(np.abs(rs.rm[[rs.omega_grid.half - 1, rs.omega_grid.half]])) < 1e-4
    assert abs(vals[2] - vals[0]) < 0.01 * vals[0]
