"""Analytic spectra of the two-mode levitated cavity optomechanics model.

The cavity couples to two mechanical modes (x, y) through coherent-scattering
rates g_x, g_y; the modes are driven by white heating noise and the cavity by
vacuum.  Solving the linear Langevin equations in the frequency domain gives
the output-field quadratures as linear filters on the three input channels,

    Q(w) = A_Q(w) N(w) + B_Q(w) a_in + B_Q*(-w) a_in^dag
    P(w) = A_P(w) N(w) + B_P(w) a_in + B_P*(-w) a_in^dag

with N the mechanical thermal-force combination.  All spectra are symmetrized
and expressed in shot-noise units (vacuum level = 1).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import TWO_PI, FrequencyGrid, SystemParams


class PoleError(ValueError):
    """Raised when a frequency coincides with a bare mechanical resonance."""


def _check_off_poles(omega, p: SystemParams) -> None:
    omega = np.asarray(omega, dtype=float)
    for pole in (p.omega_x, p.omega_y):
        if np.any(np.isclose(np.abs(omega), pole, rtol=1e-12, atol=0.0)):
            raise PoleError(
                f"frequency grid hits the bare mechanical resonance at "
                f"{pole / TWO_PI:.6g} Hz; the undamped susceptibility is singular there"
            )


def mech_susceptibility(omega, omega_j: float):
    """Undamped mechanical susceptibility Omega_j / (Omega_j^2 - w^2).

    Real and even in omega; singular at |omega| = omega_j (PoleError).
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(np.isclose(np.abs(omega), omega_j, rtol=1e-12, atol=0.0)):
        raise PoleError(
            f"mechanical susceptibility evaluated on its pole at "
            f"{omega_j / TWO_PI:.6g} Hz"
        )
    out = np.asarray(omega_j / (omega_j**2 - omega**2))
    return float(out) if out.ndim == 0 else out


def cavity_susceptibility(omega, delta: float, kappa: float):
    """Cavity susceptibility 1 / (-i (delta + w) + kappa / 2)."""
    omega = np.asarray(omega, dtype=float)
    out = np.asarray(1.0 / (-1j * (delta + omega) + 0.5 * kappa))
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransferSet:
    """Output-field transfer functions at one frequency (or a grid of them).

    `*_pos` members are evaluated at +w, `*_neg` at -w, so the symmetrized
    spectra can be assembled without re-deriving symmetry relations.
    """

    a_q: np.ndarray
    b_q_pos: np.ndarray
    b_q_neg: np.ndarray
    a_p: np.ndarray
    b_p_pos: np.ndarray
    b_p_neg: np.ndarray


def _transfer_at(omega, p: SystemParams):
    """Raw transfer functions evaluated literally at the given frequency."""
    chi_p = cavity_susceptibility(omega, p.delta, p.kappa)          # chi_c(w)
    chi_m = np.conj(cavity_susceptibility(-np.asarray(omega, dtype=float), p.delta, p.kappa))  # chi_c*(-w)
    chi_diff = chi_p - chi_m
    chi_sum = chi_p + chi_m
    coupling = (
        p.g_x**2 * mech_susceptibility(omega, p.omega_x)
        + p.g_y**2 * mech_susceptibility(omega, p.omega_y)
    )
    denom = 1.0 - 2j * chi_diff * coupling
    sqrt_kappa = np.sqrt(p.kappa)
    a_q = 1j * sqrt_kappa * chi_diff / denom
    # The amplitude-path prefactor carries no extra factor of i: with it the
    # mechanical cross-spectrum term would be odd in w, breaking the evenness
    # of the symmetrized spectra and disagreeing with the Langevin solution.
    a_p = sqrt_kappa * chi_sum / denom
    b_q = p.kappa * chi_p / denom - 1.0
    b_p = -1j * (p.kappa * chi_p * (1.0 + 4j * chi_m * coupling) / denom - 1.0)
    return a_q, a_p, b_q, b_p


def transfer_functions(omega, p: SystemParams) -> TransferSet:
    """Evaluate the six output transfer functions needed for the spectra.

    `omega` may be a scalar or an array; poles of the bare susceptibilities
    raise PoleError.
    """
    _check_off_poles(omega, p)
    a_q, a_p, b_q_pos, b_p_pos = _transfer_at(omega, p)
    neg = np.negative(np.asarray(omega, dtype=float))
    _, _, b_q_neg, b_p_neg = _transfer_at(neg, p)
    return TransferSet(
        a_q=a_q,
        b_q_pos=b_q_pos,
        b_q_neg=b_q_neg,
        a_p=a_p,
        b_p_pos=b_p_pos,
        b_p_neg=b_p_neg,
    )


def _output_channel_coefficients(omega, p: SystemParams):
    """Output-quadrature coefficients on (xi_x, xi_y, a_in, a_in^dag) in
    pole-safe form.

    The bare susceptibility poles cancel inside the closed-loop transfer
    functions (backaction moves them off the real axis); multiplying numerator
    and denominator by (omega_x^2 - w^2)(omega_y^2 - w^2) gives expressions
    that stay finite on the bare resonances, so synthesis can evaluate on an
    arbitrary FFT grid.  The a_in^dag coefficients (the conjugated response
    at -w) follow from the same intermediates by conjugation symmetry of the
    denominator, so a single evaluation per frequency suffices.

    Returns (cq_x, cq_y, cq_a, cq_adag, cp_x, cp_y, cp_a, cp_adag).
    """
    omega = np.asarray(omega, dtype=float)
    chi_p = cavity_susceptibility(omega, p.delta, p.kappa)
    chi_m = np.conj(cavity_susceptibility(-omega, p.delta, p.kappa))
    chi_diff = chi_p - chi_m
    u_x = p.omega_x**2 - omega**2
    u_y = p.omega_y**2 - omega**2
    u_xy = u_x * u_y
    weighted = (p.g_x**2 * p.omega_x) * u_y + (p.g_y**2 * p.omega_y) * u_x
    denom = u_xy - 2j * chi_diff * weighted
    if np.any(denom == 0):
        raise PoleError(
            "closed-loop response is singular (zero detuning on a bare resonance?)"
        )
    inv_denom = 1.0 / denom
    sqrt_kappa = np.sqrt(p.kappa)
    mech_q = (1j * sqrt_kappa) * chi_diff * inv_denom
    mech_p = sqrt_kappa * (chi_p + chi_m) * inv_denom
    force_x = (2.0 * p.g_x * np.sqrt(p.gamma_x) * p.omega_x) * u_y
    force_y = (2.0 * p.g_y * np.sqrt(p.gamma_y) * p.omega_y) * u_x
    kp = p.kappa * chi_p * inv_denom
    km = p.kappa * chi_m * inv_denom
    cq_a = kp * u_xy - 1.0
    cq_adag = km * u_xy - 1.0
    cp_a = -1j * (kp * (u_xy + 4j * chi_m * weighted) - 1.0)
    cp_adag = 1j * (km * (u_xy - 4j * chi_p * weighted) - 1.0)
    return (
        mech_q * force_x,
        mech_q * force_y,
        cq_a,
        cq_adag,
        mech_p * force_x,
        mech_p * force_y,
        cp_a,
        cp_adag,
    )


@dataclass
class SpectralTriple:
    """Per-frequency symmetrized quadrature spectra in shot-noise units.

    Represents the symmetric 2x2 covariance matrix
    [[s_qq, s_qp], [s_qp, s_pp]] at each grid point; the off-diagonal is the
    symmetrized cross-spectrum stored once.
    """

    grid: FrequencyGrid
    s_qq: np.ndarray
    s_pp: np.ndarray
    s_qp: np.ndarray

    def __post_init__(self):
        n = len(self.grid)
        self.s_qq = np.asarray(self.s_qq, dtype=float)
        self.s_pp = np.asarray(self.s_pp, dtype=float)
        self.s_qp = np.asarray(self.s_qp, dtype=float)
        for name in ("s_qq", "s_pp", "s_qp"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have the grid length {n}")

    @classmethod
    def vacuum(cls, grid: FrequencyGrid) -> "SpectralTriple":
        n = len(grid)
        return cls(grid, np.ones(n), np.ones(n), np.zeros(n))

    def copy(self) -> "SpectralTriple":
        return SpectralTriple(
            self.grid, self.s_qq.copy(), self.s_pp.copy(), self.s_qp.copy()
        )


def _thermal_weight(omega, p: SystemParams):
    chi_x = mech_susceptibility(omega, p.omega_x)
    chi_y = mech_susceptibility(omega, p.omega_y)
    return 4.0 * (p.g_x**2 * chi_x**2 * p.gamma_x + p.g_y**2 * chi_y**2 * p.gamma_y)


def output_spectra(grid: FrequencyGrid, p: SystemParams) -> SpectralTriple:
    """Ideal (pre-detection) symmetrized output spectra on the grid.

    s_qq = W |A_Q|^2 + (|B_Q(-w)|^2 + |B_Q(w)|^2)/2 and analogously for s_pp;
    the cross-spectrum uses Re[A_Q* A_P] and Re[B_Q*(-w) B_P(-w) + B_Q*(w) B_P(w)]/2,
    with W the thermal forcing weight 4 (g_x^2 chi_x^2 Gamma_x + g_y^2 chi_y^2 Gamma_y).
    """
    t = transfer_functions(grid.omega, p)
    weight = _thermal_weight(grid.omega, p)
    s_qq = weight * np.abs(t.a_q) ** 2 + 0.5 * (
        np.abs(t.b_q_neg) ** 2 + np.abs(t.b_q_pos) ** 2
    )
    s_pp = weight * np.abs(t.a_p) ** 2 + 0.5 * (
        np.abs(t.b_p_neg) ** 2 + np.abs(t.b_p_pos) ** 2
    )
    s_qp = weight * np.real(np.conj(t.a_q) * t.a_p) + 0.5 * np.real(
        np.conj(t.b_q_neg) * t.b_p_neg + np.conj(t.b_q_pos) * t.b_p_pos
    )
    return SpectralTriple(grid, s_qq, s_pp, s_qp)


def apply_efficiency(s: SpectralTriple, p: SystemParams) -> SpectralTriple:
    """Detection-efficiency map: diagonals -> eta_eff S + (1 - eta_eff),
    off-diagonal -> eta_eff S.  Uses eta/2 when the heterodyne penalty is set."""
    eta = p.eta_eff
    return SpectralTriple(
        s.grid,
        eta * s.s_qq + (1.0 - eta),
        eta * s.s_pp + (1.0 - eta),
        eta * s.s_qp,
    )


@dataclass
class MechanicalSpectra:
    """Symmetrized displacement spectra (zero-point units) of both modes."""

    grid: FrequencyGrid
    s_xx: np.ndarray
    s_yy: np.ndarray


def _position_coefficients(omega, p: SystemParams, mode: str):
    """Frequency-domain coefficients of x (or y) on (a_in, a_in^dag, xi_x, xi_y).

    Closed form from eliminating the intracavity field; shares the denominator
    of the output transfer functions.
    """
    if mode == "x":
        g_own, om_own, gam_own = p.g_x, p.omega_x, p.gamma_x
        g_oth, om_oth, gam_oth = p.g_y, p.omega_y, p.gamma_y
    elif mode == "y":
        g_own, om_own, gam_own = p.g_y, p.omega_y, p.gamma_y
        g_oth, om_oth, gam_oth = p.g_x, p.omega_x, p.gamma_x
    else:
        raise ValueError(f"mode must be 'x' or 'y', got {mode!r}")
    chi_p = cavity_susceptibility(omega, p.delta, p.kappa)
    chi_m = np.conj(cavity_susceptibility(-np.asarray(omega, dtype=float), p.delta, p.kappa))
    chi_diff = chi_p - chi_m
    chi_own = mech_susceptibility(omega, om_own)
    chi_oth = mech_susceptibility(omega, om_oth)
    coupling = g_own**2 * chi_own + g_oth**2 * chi_oth
    denom = 1.0 - 2j * chi_diff * coupling
    sqrt_kappa = np.sqrt(p.kappa)
    c_own = 2.0 * chi_own * np.sqrt(gam_own) * (
        1.0 + 2j * g_own**2 * chi_own * chi_diff / denom
    )
    c_oth = 4j * g_own * g_oth * chi_own * chi_oth * np.sqrt(gam_oth) * chi_diff / denom
    c_a = 2.0 * chi_own * g_own * sqrt_kappa * chi_p / denom
    c_adag = 2.0 * chi_own * g_own * sqrt_kappa * chi_m / denom
    return c_a, c_adag, c_own, c_oth


def _position_spectrum(omega, p: SystemParams, mode: str):
    """Symmetrized S_xx (or S_yy) at the given frequencies."""

    def one_sided(w):
        c_a, c_adag, c_own, c_oth = _position_coefficients(w, p, mode)
        c_a_n, c_adag_n, c_own_n, c_oth_n = _position_coefficients(
            -np.asarray(w, dtype=float), p, mode
        )
        # Contraction with the input correlations: <a a^dag> = 1 (anti-normal
        # vacuum term pairs the a coefficient at -w with a^dag at +w),
        # <xi xi> = 1 for each thermal channel.
        return np.real(c_a_n * c_adag + c_own_n * c_own + c_oth_n * c_oth)

    omega = np.asarray(omega, dtype=float)
    return 0.5 * (one_sided(omega) + one_sided(-omega))


def mechanical_spectra(grid: FrequencyGrid, p: SystemParams) -> MechanicalSpectra:
    """Symmetrized, dimensionless displacement spectra of both modes."""
    _check_off_poles(grid.omega, p)
    return MechanicalSpectra(
        grid,
        _position_spectrum(grid.omega, p, "x"),
        _position_spectrum(grid.omega, p, "y"),
    )


def occupancy(
    grid: FrequencyGrid,
    p: SystemParams,
    mode: str = "x",
    warn_fraction: float = 1e-2,
) -> float:
    """Mean phonon occupancy n = (<x^2> - 1)/2 with <x^2> = integral of the
    displacement spectrum over the full frequency axis / 2 pi.

    The grid must cover positive frequencies densely enough to resolve the
    hybridized peaks and extend far enough that the boundary density is
    negligible; the integral uses the spectrum's evenness, doubling the
    positive-frequency trapezoid.  Warns when the endpoint density exceeds
    `warn_fraction` of the peak (truncation risk).
    """
    _check_off_poles(grid.omega, p)
    if grid.omega[0] <= 0.0:
        raise ValueError("occupancy expects a positive-frequency grid")
    s = _position_spectrum(grid.omega, p, mode)
    peak = float(np.max(s))
    boundary = max(float(s[0]), float(s[-1]))
    if boundary > warn_fraction * peak:
        warnings.warn(
            f"occupancy grid boundary density is {boundary / peak:.2e} of the peak; "
            "widen the grid to reduce truncation error",
            RuntimeWarning,
            stacklevel=2,
        )
    mean_square = np.trapezoid(s, grid.omega) / np.pi
    return 0.5 * (mean_square - 1.0)


# -- CSV schema: freq_hz,s_qq,s_pp,s_qp with 12 significant digits -----------

def write_spectra_csv(path, s: SpectralTriple) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "s_qq", "s_pp", "s_qp"])
        for f_hz, qq, pp, qp in zip(s.grid.hz, s.s_qq, s.s_pp, s.s_qp):
            writer.writerow([f"{f_hz:.11e}", f"{qq:.11e}", f"{pp:.11e}", f"{qp:.11e}"])


def read_spectra_csv(path) -> SpectralTriple:
    data = np.genfromtxt(Path(path), delimiter=",", names=True)
    data = np.atleast_1d(data)
    grid = FrequencyGrid.from_hz(data["freq_hz"])
    return SpectralTriple(grid, data["s_qq"], data["s_pp"], data["s_qp"])
