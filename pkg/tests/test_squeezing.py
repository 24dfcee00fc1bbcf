import math

import numpy as np
import pytest

from osqt import (
    FrequencyGrid,
    apply_efficiency,
    build_map,
    dephase_covariance,
    find_squeezing_bands,
    optimal_spectrum,
    output_spectra,
    quadrature_spectrum,
    rotate_covariance,
)
from osqt.model import SpectralTriple

from oracles import mc_dephased_covariance, scan_bands_below


def random_triple(n=64, seed=0):
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid.from_hz(np.linspace(1e3, 200e3, n))
    s_qq = rng.uniform(0.3, 4.0, n)
    s_pp = rng.uniform(0.3, 4.0, n)
    # keep the matrix positive definite
    s_qp = rng.uniform(-0.9, 0.9, n) * np.sqrt(s_qq * s_pp)
    return SpectralTriple(grid, s_qq, s_pp, s_qp)


def model_triple(table1, n=160):
    grid = FrequencyGrid.linspace_hz(30.0123e3, 229.9877e3, n)
    return apply_efficiency(output_spectra(grid, table1), table1)


# --- rotation ----------------------------------------------------------------

def test_rotate_identity():
    s = random_triple()
    out = rotate_covariance(s, 0.0)
    assert np.array_equal(out.s_qq, s.s_qq)
    assert np.array_equal(out.s_qp, s.s_qp)


def test_rotate_quarter_turn():
    s = random_triple(seed=1)
    out = rotate_covariance(s, math.pi / 2)
    assert np.allclose(out.s_qq, s.s_pp, atol=1e-15)
    assert np.allclose(out.s_pp, s.s_qq, atol=1e-15)
    assert np.allclose(out.s_qp, -s.s_qp, atol=1e-15)


def test_rotate_eighth_turn_example():
    grid = FrequencyGrid.from_hz([1e3])
    s = SpectralTriple(grid, np.array([2.0]), np.array([1.0]), np.array([0.0]))
    out = rotate_covariance(s, math.pi / 4)
    assert out.s_qq[0] == pytest.approx(1.5, abs=1e-14)
    assert out.s_pp[0] == pytest.approx(1.5, abs=1e-14)
    assert out.s_qp[0] == pytest.approx(0.5, abs=1e-14)


def test_rotate_matches_matrix_oracle():
    rng = np.random.default_rng(4)
    s = random_triple(n=16, seed=4)
    for theta in rng.uniform(-3 * math.pi, 3 * math.pi, 12):
        out = rotate_covariance(s, theta)
        c, sn = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -sn], [sn, c]])
        for i in range(16):
            v = np.array([[s.s_qq[i], s.s_qp[i]], [s.s_qp[i], s.s_pp[i]]])
            ref = rot @ v @ rot.T
            assert out.s_qq[i] == pytest.approx(ref[0, 0], rel=1e-12, abs=1e-14)
            assert out.s_pp[i] == pytest.approx(ref[1, 1], rel=1e-12, abs=1e-14)
            assert out.s_qp[i] == pytest.approx(ref[0, 1], rel=1e-12, abs=1e-14)
            assert ref[0, 1] == pytest.approx(ref[1, 0], abs=1e-14)


def test_rotate_preserves_trace():
    s = random_triple(seed=2)
    for theta in (0.3, 1.1, 2.9):
        out = rotate_covariance(s, theta)
        assert np.allclose(out.s_qq + out.s_pp, s.s_qq + s.s_pp, rtol=1e-14)


# --- Gaussian dephasing ------------------------------------------------------

def test_dephase_zero_identity():
    s = random_triple(seed=3)
    out = dephase_covariance(s, 0.0)
    assert np.allclose(out.s_qq, s.s_qq, rtol=0, atol=0)
    assert np.allclose(out.s_qp, s.s_qp, rtol=0, atol=0)


def test_dephase_full_mixing_limit():
    s = random_triple(seed=5)
    out = dephase_covariance(s, 50.0)
    mean = 0.5 * (s.s_qq + s.s_pp)
    assert np.allclose(out.s_qq, mean, rtol=1e-12)
    assert np.allclose(out.s_pp, mean, rtol=1e-12)
    assert np.max(np.abs(out.s_qp)) < 1e-40


def test_dephase_trace_preserved():
    s = random_triple(seed=6)
    for sig in (0.01, 0.062, 0.5, 3.0):
        out = dephase_covariance(s, sig)
        assert np.allclose(out.s_qq + out.s_pp, s.s_qq + s.s_pp, rtol=1e-14)


def test_dephase_offdiagonal_contrast():
    s = random_triple(seed=7)
    out = dephase_covariance(s, 0.062)
    assert np.allclose(out.s_qp, math.exp(-0.124) * s.s_qp, rtol=1e-14)


def test_dephase_contraction_monotone():
    s = random_triple(seed=8)
    sigmas = [0.0, 0.05, 0.2, 1.0, 4.0]
    offs = [np.abs(dephase_covariance(s, sig).s_qp) for sig in sigmas]
    for smaller, larger in zip(offs[1:], offs[:-1]):
        assert np.all(smaller <= larger + 1e-15)


def test_dephase_matches_monte_carlo(table1):
    """Quick version of the Monte-Carlo equivalence (full run in acceptance)."""
    s = model_triple(table1, n=48)
    out = dephase_covariance(s, 0.062)
    means, sems = mc_dephased_covariance(s.s_qq, s.s_pp, s.s_qp, 0.062, 200_000, seed=9)
    for got, mean, sem in zip((out.s_qq, out.s_pp, out.s_qp), means, sems):
        frac_ok = np.mean(np.abs(got - mean) <= 3.0 * np.maximum(sem, 1e-15))
        assert frac_ok >= 0.95


def test_dephase_single_rotation_consistency():
    """A dephased matrix equals the expectation over rotations; each sample
    rotation is produced by the same operation the Monte-Carlo averages."""
    s = random_triple(n=8, seed=10)
    theta = 0.37
    out = rotate_covariance(s, theta)
    c2, s2 = math.cos(2 * theta), math.sin(2 * theta)
    expect_qq = 0.5 * (s.s_qq + s.s_pp) + 0.5 * (s.s_qq - s.s_pp) * c2 - s.s_qp * s2
    assert np.allclose(out.s_qq, expect_qq, rtol=1e-12)


# --- quadrature spectra ------------------------------------------------------

def test_quadrature_axis_phases():
    s = random_triple(seed=11)
    assert np.allclose(quadrature_spectrum(s, 0.0), s.s_qq, atol=1e-15)
    assert np.allclose(quadrature_spectrum(s, math.pi / 2), s.s_pp, atol=1e-14)
    mid = quadrature_spectrum(s, math.pi / 4)
    assert np.allclose(mid, 0.5 * (s.s_qq + s.s_pp) + s.s_qp, atol=1e-14)


def test_quadrature_equals_rotated_element():
    s = random_triple(seed=12)
    rng = np.random.default_rng(13)
    for phi in rng.uniform(0, math.pi, 32):
        direct = quadrature_spectrum(s, phi, 0.0)
        rotated = rotate_covariance(s, -phi).s_qq
        assert np.allclose(direct, rotated, rtol=1e-12, atol=1e-12)


def test_quadrature_periodicity():
    s = random_triple(seed=14)
    rng = np.random.default_rng(15)
    for phi in rng.uniform(-2 * math.pi, 2 * math.pi, 16):
        a = quadrature_spectrum(s, phi, 0.1)
        b = quadrature_spectrum(s, phi + math.pi, 0.1)
        # floating addition of pi limits bitwise equality; machine-level check
        assert np.allclose(a, b, rtol=0, atol=1e-12)


# --- optimal spectrum --------------------------------------------------------

def test_optimal_vacuum():
    grid = FrequencyGrid.from_hz(np.linspace(1e3, 9e3, 9))
    vac = SpectralTriple.vacuum(grid)
    values, _ = optimal_spectrum(vac, 0.0)
    assert np.allclose(values, 1.0, atol=1e-15)


def test_optimal_diagonal_case():
    grid = FrequencyGrid.from_hz([1e3])
    s = SpectralTriple(grid, np.array([2.0]), np.array([1.0]), np.array([0.0]))
    values, phases = optimal_spectrum(s, 0.0)
    assert values[0] == pytest.approx(1.0, abs=1e-14)
    assert phases[0] == pytest.approx(math.pi / 2, abs=1e-12)


def test_optimal_is_minimum_over_phases():
    s = random_triple(seed=16)
    values, phases = optimal_spectrum(s, 0.03)
    rng = np.random.default_rng(17)
    for phi in rng.uniform(0, math.pi, 256):
        assert np.all(quadrature_spectrum(s, phi, 0.03) >= values - 1e-12)
    # at the argmin phases the two routes agree
    at_min = np.array(
        [quadrature_spectrum(s, phases[i], 0.03)[i] for i in range(len(s.grid))]
    )
    assert np.allclose(at_min, values, rtol=1e-10, atol=1e-12)


def test_optimal_below_diagonals_without_noise():
    s = random_triple(seed=18)
    values, _ = optimal_spectrum(s, 0.0)
    assert np.all(values <= np.minimum(s.s_qq, s.s_pp) + 1e-14)


# --- 2D map ------------------------------------------------------------------

def test_map_vacuum_uniform():
    grid = FrequencyGrid.from_hz(np.linspace(1e3, 9e3, 5))
    m = build_map(SpectralTriple.vacuum(grid), 0.0, n_phases=7)
    assert m.values.shape == (7, 5)
    assert np.allclose(m.values, 1.0, atol=1e-15)


def test_map_two_phase_rows():
    s = random_triple(seed=19)
    m = build_map(s, 0.0, n_phases=2)
    assert np.allclose(m.values[0], s.s_qq, atol=1e-15)
    assert np.allclose(m.values[1], s.s_pp, atol=1e-14)


def test_map_detection_floor(table1):
    s = model_triple(table1)
    m = build_map(s, table1.sigma_theta_sq, n_phases=64)
    assert np.all(m.values >= 1.0 - table1.eta_eff - 1e-12)


def test_map_rejects_single_phase():
    s = random_triple()
    with pytest.raises(ValueError):
        build_map(s, 0.0, n_phases=1)


# --- band finding ------------------------------------------------------------

def test_bands_empty_for_ones():
    grid = FrequencyGrid.from_hz(np.linspace(1e3, 9e3, 9))
    report = find_squeezing_bands(np.ones(9), grid)
    assert len(report) == 0


def test_bands_single_dip():
    f = np.linspace(50e3, 120e3, 701)
    grid = FrequencyGrid.from_hz(f)
    opt = np.ones(701)
    dip = (f >= 70e3) & (f <= 95e3)
    opt[dip] = 0.99
    opt[np.argmin(np.abs(f - 82e3))] = 0.98
    report = find_squeezing_bands(opt, grid)
    assert len(report) == 1
    band = report.bands[0]
    assert band.f_low_hz == pytest.approx(70e3, abs=200)
    assert band.f_high_hz == pytest.approx(95e3, abs=200)
    assert band.min_value == pytest.approx(0.98)
    assert band.argmin_freq_hz == pytest.approx(82e3, abs=200)


def test_bands_match_linear_scan():
    rng = np.random.default_rng(20)
    f = np.linspace(10e3, 200e3, 997)
    grid = FrequencyGrid.from_hz(f)
    opt = 1.0 + 0.05 * np.sin(f / 7e3) + 0.02 * rng.standard_normal(997)
    phases = rng.uniform(0, math.pi, 997)
    report = find_squeezing_bands(opt, grid, threshold=1.0, phases=phases)
    expected = scan_bands_below(opt, 1.0)
    assert len(report) == len(expected)
    for band, (lo, hi) in zip(report.bands, expected):
        assert band.f_low_hz == pytest.approx(f[lo])
        assert band.f_high_hz == pytest.approx(f[hi - 1])
        k = lo + int(np.argmin(opt[lo:hi]))
        assert band.argmin_freq_hz == pytest.approx(f[k])
        assert band.argmin_phase == pytest.approx(phases[k])


def test_bands_two_dips():
    f = np.linspace(50e3, 200e3, 1501)
    grid = FrequencyGrid.from_hz(f)
    opt = np.ones(1501)
    opt[(f > 70e3) & (f < 95e3)] = 0.985
    opt[(f > 140e3) & (f < 160e3)] = 0.992
    report = find_squeezing_bands(opt, grid)
    assert len(report) == 2
    assert report.bands[0].f_high_hz < report.bands[1].f_low_hz
