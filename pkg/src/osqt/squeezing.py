"""Covariance-matrix operations: rotation, phase-noise averaging, quadrature
spectra at arbitrary detection phase, optimal squeezing spectra, 2D maps, and
sub-shot-noise band detection.

Conventions: the rotation matrix is R(theta) = [[cos, -sin], [sin, cos]] and
the detection-phase spectrum at phase phi equals the (1, 1) element of the
covariance rotated by -phi (for zero phase noise); both are fixed so that the
two routes agree identically and are tested against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SpectralTriple
from .params import TWO_PI, FrequencyGrid


def rotate_covariance(s: SpectralTriple, theta: float) -> SpectralTriple:
    """Congruence V -> R V R^T by the rotation angle theta, per frequency bin."""
    c = math.cos(theta)
    sn = math.sin(theta)
    qq = c * c * s.s_qq - 2.0 * c * sn * s.s_qp + sn * sn * s.s_pp
    pp = sn * sn * s.s_qq + 2.0 * c * sn * s.s_qp + c * c * s.s_pp
    qp = c * sn * (s.s_qq - s.s_pp) + (c * c - sn * sn) * s.s_qp
    return SpectralTriple(s.grid, qq, pp, qp)


def dephase_covariance(s: SpectralTriple, sigma_sq: float) -> SpectralTriple:
    """Average the covariance over a Gaussian-distributed rotation angle.

    For theta ~ N(0, sigma_sq) the averaged matrix has diagonals
    (t + d e^{-2 sigma^2})/2 and (t - d e^{-2 sigma^2})/2 with t = s_qq + s_pp
    and d = s_qq - s_pp, and off-diagonal e^{-2 sigma^2} s_qp.  The trace is
    preserved exactly.
    """
    if sigma_sq < 0.0:
        raise ValueError("sigma_sq must be >= 0")
    if sigma_sq == 0.0:
        return s.copy()
    contrast = math.exp(-2.0 * sigma_sq)
    half_sum = 0.5 * (s.s_qq + s.s_pp)
    half_diff = 0.5 * (s.s_qq - s.s_pp)
    return SpectralTriple(
        s.grid,
        half_sum + contrast * half_diff,
        half_sum - contrast * half_diff,
        contrast * s.s_qp,
    )


def quadrature_spectrum(s: SpectralTriple, phi: float, sigma_sq: float = 0.0) -> np.ndarray:
    """Spectrum of the quadrature measured at detection phase phi.

    (s_qq + s_pp)/2 + e^{-2 sigma^2} [ (s_qq - s_pp)/2 cos(2 phi)
                                       + s_qp sin(2 phi) ].
    For sigma_sq = 0 this equals the (1, 1) element of
    rotate_covariance(s, -phi).
    """
    contrast = math.exp(-2.0 * sigma_sq)
    c2 = math.cos(2.0 * phi)
    s2 = math.sin(2.0 * phi)
    return (
        0.5 * (s.s_qq + s.s_pp)
        + contrast * (0.5 * (s.s_qq - s.s_pp) * c2 + s.s_qp * s2)
    )


def optimal_spectrum(s: SpectralTriple, sigma_sq: float = 0.0):
    """Per-bin minimum over the detection phase of the quadrature spectrum.

    Returns (values, phi_opt): the minimum
    (s_qq + s_pp)/2 - (e^{-2 sigma^2}/2) sqrt((s_qq - s_pp)^2 + 4 s_qp^2)
    and the phase realizing it,
    phi_opt = atan2(2 s_qp, s_qq - s_pp)/2 + pi/2 (mod pi).
    """
    contrast = math.exp(-2.0 * sigma_sq)
    values = 0.5 * (s.s_qq + s.s_pp) - 0.5 * contrast * np.hypot(
        s.s_qq - s.s_pp, 2.0 * s.s_qp
    )
    phi_opt = np.mod(
        0.5 * np.arctan2(2.0 * s.s_qp, s.s_qq - s.s_pp) + 0.5 * np.pi, np.pi
    )
    return values, phi_opt


@dataclass
class SqueezingMap:
    """Quadrature spectrum on a (detection phase) x (frequency) grid."""

    freq_grid: FrequencyGrid
    phases: np.ndarray  # detection phases in [0, pi), one per row
    values: np.ndarray  # shape (n_phases, n_freq)


def build_map(s: SpectralTriple, sigma_sq: float = 0.0, n_phases: int = 181) -> SqueezingMap:
    """Evaluate the quadrature spectrum on a uniform phase grid over [0, pi)."""
    if n_phases < 2:
        raise ValueError("n_phases must be >= 2")
    phases = np.linspace(0.0, np.pi, int(n_phases), endpoint=False)
    values = np.empty((len(phases), len(s.grid)))
    for i, phi in enumerate(phases):
        values[i] = quadrature_spectrum(s, phi, sigma_sq)
    return SqueezingMap(s.grid, phases, values)


@dataclass(frozen=True)
class Band:
    """One maximal contiguous frequency interval below the threshold."""

    f_low_hz: float
    f_high_hz: float
    min_value: float
    argmin_freq_hz: float
    argmin_phase: float  # nan when no phase information was supplied


@dataclass
class BandReport:
    """Disjoint, ordered sub-threshold bands of an optimal spectrum."""

    threshold: float
    bands: list

    def __len__(self) -> int:
        return len(self.bands)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "bands": [
                {
                    "f_low_hz": b.f_low_hz,
                    "f_high_hz": b.f_high_hz,
                    "min_value": b.min_value,
                    "argmin_freq_hz": b.argmin_freq_hz,
                    "argmin_phase_rad": b.argmin_phase,
                }
                for b in self.bands
            ],
        }


def find_squeezing_bands(
    opt,
    grid: FrequencyGrid,
    threshold: float = 1.0,
    phases=None,
) -> BandReport:
    """Locate maximal contiguous runs strictly below the threshold.

    `opt` is the per-bin optimal spectrum; `phases` (optional, same length)
    supplies the argmin detection phases recorded per band.
    """
    opt = np.asarray(opt, dtype=float)
    if opt.shape != (len(grid),):
        raise ValueError("opt and grid must have the same length")
    if phases is not None:
        phases = np.asarray(phases, dtype=float)
        if phases.shape != opt.shape:
            raise ValueError("phases must match opt in length")
    below = opt < threshold
    edges = np.flatnonzero(np.diff(np.concatenate(([False], below, [False]))))
    bands = []
    freq_hz = grid.hz
    for lo, hi in zip(edges[::2], edges[1::2]):
        k = lo + int(np.argmin(opt[lo:hi]))
        bands.append(
            Band(
                f_low_hz=float(freq_hz[lo]),
                f_high_hz=float(freq_hz[hi - 1]),
                min_value=float(opt[k]),
                argmin_freq_hz=float(freq_hz[k]),
                argmin_phase=float(phases[k]) if phases is not None else float("nan"),
            )
        )
    return BandReport(threshold=threshold, bands=bands)
