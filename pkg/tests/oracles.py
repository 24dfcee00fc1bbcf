"""Independent reference implementations used to validate the library.

Everything here recomputes results from first principles (direct linear
solves of the coupled-mode equations, Monte-Carlo averages, linear scans)
and never calls the closed-form production code paths it checks.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

# Input channel order: (a_in, a_in_dag, xi_x, xi_y).
# Frequency-domain correlations: <a(-w) a^dag(w)> = 1 (anti-normal vacuum),
# <xi(-w) xi(w)> = 1 per thermal channel; everything else vanishes.
CORR = np.zeros((4, 4), dtype=complex)
CORR[0, 1] = 1.0
CORR[2, 2] = 1.0
CORR[3, 3] = 1.0


def langevin_solve(w, p):
    """Solve the coupled cavity/mechanics equations at one frequency.

    Unknowns v = (Q_c, P_c, x, y); returns the coefficient rows of the
    output quadratures and positions on the four input channels.
    """
    chi_c = lambda om: 1.0 / (-1j * (p.delta + om) + 0.5 * p.kappa)
    cc_p = chi_c(w)
    cc_m = np.conj(chi_c(-w))
    cdiff = cc_p - cc_m
    csum = cc_p + cc_m
    chi_x = p.omega_x / (p.omega_x**2 - w**2)
    chi_y = p.omega_y / (p.omega_y**2 - w**2)
    sqrt_k = np.sqrt(p.kappa)

    M = np.eye(4, dtype=complex)
    F = np.zeros((4, 4), dtype=complex)
    # Q_c = i cdiff (g_x x + g_y y) + sqrt(k) (cc_p a + cc_m a^dag)
    M[0, 2] = -1j * cdiff * p.g_x
    M[0, 3] = -1j * cdiff * p.g_y
    F[0, 0] = sqrt_k * cc_p
    F[0, 1] = sqrt_k * cc_m
    # P_c = csum (g_x x + g_y y) + i sqrt(k) (-cc_p a + cc_m a^dag)
    M[1, 2] = -csum * p.g_x
    M[1, 3] = -csum * p.g_y
    F[1, 0] = -1j * sqrt_k * cc_p
    F[1, 1] = 1j * sqrt_k * cc_m
    # x = 2 chi_x (g_x Q_c + sqrt(G_x) xi_x); same for y
    M[2, 0] = -2.0 * chi_x * p.g_x
    F[2, 2] = 2.0 * chi_x * np.sqrt(p.gamma_x)
    M[3, 0] = -2.0 * chi_y * p.g_y
    F[3, 3] = 2.0 * chi_y * np.sqrt(p.gamma_y)

    G = np.linalg.solve(M, F)
    # Input-output: Q = sqrt(k) Q_c - (a + a^dag), P = sqrt(k) P_c + i a - i a^dag
    q_row = sqrt_k * G[0] + np.array([-1.0, -1.0, 0.0, 0.0])
    p_row = sqrt_k * G[1] + np.array([1j, -1j, 0.0, 0.0])
    return {"Q": q_row, "P": p_row, "x": G[2], "y": G[3]}


def _sym_spectrum(row_a_pos, row_a_neg, row_b_pos, row_b_neg):
    """Symmetrized cross-spectrum of outputs a, b from coefficient rows."""
    s_pos = row_a_neg @ CORR @ row_b_pos
    s_neg = row_a_pos @ CORR @ row_b_neg
    return 0.5 * np.real(s_pos + s_neg)


def output_spectra_oracle(omega, p):
    """Brute-force per-frequency symmetrized output spectra (s_qq, s_pp, s_qp)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    s_qq = np.empty(omega.size)
    s_pp = np.empty(omega.size)
    s_qp = np.empty(omega.size)
    for i, w in enumerate(omega):
        pos = langevin_solve(w, p)
        neg = langevin_solve(-w, p)
        s_qq[i] = _sym_spectrum(pos["Q"], neg["Q"], pos["Q"], neg["Q"])
        s_pp[i] = _sym_spectrum(pos["P"], neg["P"], pos["P"], neg["P"])
        qp = _sym_spectrum(pos["Q"], neg["Q"], pos["P"], neg["P"])
        pq = _sym_spectrum(pos["P"], neg["P"], pos["Q"], neg["Q"])
        s_qp[i] = 0.5 * (qp + pq)
    return s_qq, s_pp, s_qp


def mechanical_spectra_oracle(omega, p):
    """Brute-force symmetrized displacement spectra (s_xx, s_yy)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    s_xx = np.empty(omega.size)
    s_yy = np.empty(omega.size)
    for i, w in enumerate(omega):
        pos = langevin_solve(w, p)
        neg = langevin_solve(-w, p)
        s_xx[i] = _sym_spectrum(pos["x"], neg["x"], pos["x"], neg["x"])
        s_yy[i] = _sym_spectrum(pos["y"], neg["y"], pos["y"], neg["y"])
    return s_xx, s_yy


def mc_dephased_covariance(s_qq, s_pp, s_qp, sigma_sq, n_draws, seed, chunk=20000):
    """Monte-Carlo average of the rotated covariance over Gaussian angles.

    Returns per-bin means and standard errors for the three matrix elements.
    """
    rng = np.random.default_rng(seed)
    n_bins = s_qq.size
    sums = np.zeros((3, n_bins))
    sums_sq = np.zeros((3, n_bins))
    drawn = 0
    while drawn < n_draws:
        m = min(chunk, n_draws - drawn)
        theta = rng.normal(0.0, np.sqrt(sigma_sq), size=m)
        c = np.cos(theta)[:, None]
        sn = np.sin(theta)[:, None]
        qq = c * c * s_qq - 2.0 * c * sn * s_qp + sn * sn * s_pp
        pp = sn * sn * s_qq + 2.0 * c * sn * s_qp + c * c * s_pp
        qp = c * sn * (s_qq - s_pp) + (c * c - sn * sn) * s_qp
        for j, comp in enumerate((qq, pp, qp)):
            sums[j] += comp.sum(axis=0)
            sums_sq[j] += (comp**2).sum(axis=0)
        drawn += m
    means = sums / n_draws
    variances = np.maximum(sums_sq / n_draws - means**2, 0.0)
    sems = np.sqrt(variances / n_draws)
    return means, sems


def scan_bands_below(values, threshold):
    """Linear scan for contiguous below-threshold runs; returns (lo, hi) index
    pairs with hi exclusive."""
    bands = []
    start = None
    for i, v in enumerate(values):
        if v < threshold and start is None:
            start = i
        elif v >= threshold and start is not None:
            bands.append((start, i))
            start = None
    if start is not None:
        bands.append((start, len(values)))
    return bands


def grid_scan_minimum(fn, lo, hi, n_points):
    """Dense 1-d scan minimizer used as the fitting oracle."""
    xs = np.linspace(lo, hi, n_points)
    vals = np.array([fn(x) for x in xs])
    k = int(np.argmin(vals))
    return xs[k], vals[k], xs[1] - xs[0]
