"""Weighted least-squares fit of the detection-phase jitter variance.

All physical parameters stay fixed; the only free parameter is the variance
of the Gaussian phase jitter that averages the model covariance matrix.  The
residual sums squared differences of all four covariance spectra (the
off-diagonal counts twice, being the two mirror panels of the symmetric
matrix) between the measured estimate and the dephased model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .dsp import EstimatedCovariance
from .model import SpectralTriple


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    freq_band: tuple = (70e3, 170e3)  # Hz
    sigma_sq_bounds: tuple = (0.0, 1.0)  # rad^2
    weight_mode: str = "inverse-variance"
    tolerance: float = 1e-6

    def __post_init__(self):
        if not self.freq_band[0] < self.freq_band[1]:
            raise ValueError("freq_band must satisfy f_low < f_high")
        if not self.sigma_sq_bounds[0] < self.sigma_sq_bounds[1]:
            raise ValueError("sigma_sq_bounds must have positive width")
        if self.sigma_sq_bounds[0] < 0.0:
            raise ValueError("sigma_sq lower bound must be >= 0")
        if self.weight_mode not in ("uniform", "inverse-variance"):
            raise ValueError("weight_mode must be 'uniform' or 'inverse-variance'")


@dataclass
class FitResult:
    sigma_sq_hat: float
    residual_sum: float
    per_element_residuals: tuple  # (qq, pp, qp, pq) at the minimum
    ci_68: tuple
    n_bins: int
    at_bound: bool
    n_evaluations: int


def _band_arrays(data: EstimatedCovariance, model: SpectralTriple, c: FitConfig):
    """Mask the data to the fit band and put the model on the data grid."""
    f_data = data.spectra.grid.hz
    mask = (f_data >= c.freq_band[0]) & (f_data <= c.freq_band[1])
    if not np.any(mask):
        raise FitError("no data bins inside the fit band")
    f_sel = f_data[mask]
    f_model = model.grid.hz
    if f_model.size == f_data.size and np.allclose(f_model, f_data, rtol=1e-12):
        m_qq, m_pp, m_qp = model.s_qq[mask], model.s_pp[mask], model.s_qp[mask]
    else:
        if f_sel[0] < f_model[0] or f_sel[-1] > f_model[-1]:
            raise FitError("model grid does not cover the fit band; cannot interpolate")
        m_qq = np.interp(f_sel, f_model, model.s_qq)
        m_pp = np.interp(f_sel, f_model, model.s_pp)
        m_qp = np.interp(f_sel, f_model, model.s_qp)
    d_qq = data.spectra.s_qq[mask]
    d_pp = data.spectra.s_pp[mask]
    d_qp = data.spectra.s_qp[mask]
    if c.weight_mode == "inverse-variance":
        w_qq = 1.0 / data.stderr_qq[mask] ** 2
        w_pp = 1.0 / data.stderr_pp[mask] ** 2
        w_qp = 1.0 / data.stderr_qp[mask] ** 2
    else:
        ones = np.ones(int(mask.sum()))
        w_qq = w_pp = w_qp = ones
    return (d_qq, d_pp, d_qp), (m_qq, m_pp, m_qp), (w_qq, w_pp, w_qp), int(mask.sum())


def _residual_terms(sigma_sq, data_arrays, model_arrays, weights):
    (d_qq, d_pp, d_qp) = data_arrays
    (m_qq, m_pp, m_qp) = model_arrays
    (w_qq, w_pp, w_qp) = weights
    contrast = math.exp(-2.0 * sigma_sq)
    half_sum = 0.5 * (m_qq + m_pp)
    half_diff = 0.5 * (m_qq - m_pp)
    t_qq = half_sum + contrast * half_diff
    t_pp = half_sum - contrast * half_diff
    t_qp = contrast * m_qp
    r_qq = float(np.sum(w_qq * (d_qq - t_qq) ** 2))
    r_pp = float(np.sum(w_pp * (d_pp - t_pp) ** 2))
    r_qp = float(np.sum(w_qp * (d_qp - t_qp) ** 2))
    # Off-diagonal counted twice: the measured matrix carries two mirror panels.
    return r_qq, r_pp, r_qp, r_qp


def residual_phase_noise(
    sigma_sq: float,
    data: EstimatedCovariance,
    model: SpectralTriple,
    c: FitConfig,
) -> float:
    """Weighted sum of squared residuals of the four covariance spectra
    against the model dephased by `sigma_sq`, over the configured band."""
    data_arrays, model_arrays, weights, _ = _band_arrays(data, model, c)
    return float(np.sum(_residual_terms(sigma_sq, data_arrays, model_arrays, weights)))


def fit_sigma_theta(
    data: EstimatedCovariance,
    model: SpectralTriple,
    c: FitConfig,
) -> FitResult:
    """Bounded derivative-free 1-d minimization of the phase-noise residual.

    The 68 % interval uses the delta-chi-squared = 1 crossing of the residual
    curve; with uniform weights the residual is first rescaled by its
    minimum per degree of freedom so the criterion stays calibrated.
    Flags (rather than hides) a minimum that sits on a bound.
    """
    data_arrays, model_arrays, weights, n_bins = _band_arrays(data, model, c)
    evaluations = [0]

    def objective(s):
        evaluations[0] += 1
        return float(np.sum(_residual_terms(s, data_arrays, model_arrays, weights)))

    lo, hi = c.sigma_sq_bounds
    res = optimize.minimize_scalar(
        objective,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": c.tolerance, "maxiter": 500},
    )
    if not res.success:
        raise FitError(f"minimizer failed to converge: {res.message}")
    s_hat = float(res.x)
    r_min = float(res.fun)
    bound_tol = max(10.0 * c.tolerance, 1e-4 * (hi - lo))
    at_bound = (s_hat - lo) < bound_tol or (hi - s_hat) < bound_tol

    n_terms = 4 * n_bins
    if c.weight_mode == "inverse-variance":
        delta = 1.0
    else:
        delta = r_min / max(n_terms - 1, 1)
    target = r_min + delta

    def ci_edge(inner, outer):
        a, b = sorted((inner, outer))
        fa = objective(a) - target
        fb = objective(b) - target
        if fa * fb > 0:
            return outer  # no crossing inside: interval clipped at the bound
        return float(optimize.brentq(lambda s: objective(s) - target, a, b, xtol=c.tolerance))

    ci_lo = ci_edge(s_hat, lo) if s_hat > lo else lo
    ci_hi = ci_edge(s_hat, hi) if s_hat < hi else hi
    ci = (min(ci_lo, s_hat), max(ci_hi, s_hat))

    per_element = _residual_terms(s_hat, data_arrays, model_arrays, weights)
    return FitResult(
        sigma_sq_hat=s_hat,
        residual_sum=r_min,
        per_element_residuals=per_element,
        ci_68=ci,
        n_bins=n_bins,
        at_bound=at_bound,
        n_evaluations=evaluations[0],
    )
