"""Synthetic heterodyne records with the statistics of the analytic model.

The synthesis is exact for a stationary Gaussian surrogate: independent
complex white noises are drawn per physical input channel directly in the
frequency domain, shaped by the output transfer functions, and inverse
transformed (circulant embedding).  The optical vacuum channel drives both
quadrature filters coherently, which is what produces the cross-spectrum.

Classical surrogate normalization: a Hermitian channel of unit spectral
density represents each thermal force, and a circular complex channel of
density 1/2 per conjugate component represents the vacuum; with these choices
the surrogate's spectra equal the symmetrized quantum spectra identically.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .model import _output_channel_coefficients
from .params import TWO_PI, SystemParams

TRACE_MAGIC = b"OSQT"
TRACE_VERSION = 1
_BLOCK = 1 << 21  # frequency-domain and sample-domain processing block

# Independent RNG roles derived from one user seed.
_ROLE_TRACES = 101
_ROLE_JITTER = 211


class SynthConfigError(ValueError):
    """Raised when a synthesis configuration violates its invariants."""


@dataclass(frozen=True)
class SynthConfig:
    """Record synthesis configuration.

    sample_rate      : ADC rate in Hz
    duration         : record length in seconds (duration * sample_rate integer)
    seed             : 64-bit RNG seed; one seed fixes the whole record
    beat_freq        : heterodyne beat frequency in Hz
    jitter_sigma_sq  : stationary variance of the slow detection-phase jitter
    jitter_bandwidth : corner frequency (Hz) of the jitter process; 0 freezes
                       the phase at a single Gaussian draw
    """

    sample_rate: float
    duration: float
    seed: int
    beat_freq: float
    jitter_sigma_sq: float = 0.0
    jitter_bandwidth: float = 1.0

    def __post_init__(self):
        n = self.sample_rate * self.duration
        if abs(n - round(n)) > 1e-6 or round(n) < 2:
            raise SynthConfigError(
                "duration * sample_rate must be an integer >= 2"
            )
        if self.beat_freq <= 0.0 or self.beat_freq >= 0.5 * self.sample_rate:
            raise SynthConfigError("beat_freq must lie inside the Nyquist band")
        if self.jitter_sigma_sq < 0.0:
            raise SynthConfigError("jitter_sigma_sq must be >= 0")
        if self.jitter_bandwidth < 0.0:
            raise SynthConfigError("jitter_bandwidth must be >= 0")
        if self.jitter_bandwidth >= self.sample_rate / 16.0:
            raise SynthConfigError("jitter_bandwidth is not slow compared to the record")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    def validate_against(self, p: SystemParams) -> None:
        """Enforce the sampling and sideband-placement invariants."""
        f_mech = max(p.omega_x, p.omega_y) / TWO_PI
        if self.sample_rate <= 4.0 * (self.beat_freq + f_mech):
            raise SynthConfigError(
                "sample_rate must exceed 4 x (beat_freq + max mechanical frequency)"
            )


@dataclass
class TimeTrace:
    """Uniformly sampled real-valued record."""

    samples: np.ndarray
    sample_rate: float
    label: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise ValueError("trace samples must be 1-d")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.n / self.sample_rate


def _rng(seed: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), role]))


def _hermitian_unit_noise(rng, size, real_mask):
    """Complex standard-normal bins (E|z|^2 = 1); real N(0,1) where masked."""
    z = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)
    if np.any(real_mask):
        z[real_mask] = math.sqrt(2.0) * z[real_mask].real
    return z


def synthesize_quadrature_traces(
    p: SystemParams,
    c: SynthConfig,
    dtype=np.float64,
    include_detection: bool = False,
):
    """Draw one record of the output quadratures Q(t), P(t).

    Frequency-domain synthesis on the half-spectrum grid: two Hermitian
    thermal channels and one circular optical channel (drawn separately at +w
    and -w) are shaped by the transfer functions and inverse transformed with
    irfft.  Welch spectra of the result converge to `output_spectra` (eta = 1)
    by default; with `include_detection` the detected field is synthesized
    instead (signal scaled by sqrt(eta_eff), plus the matching vacuum
    admixture), which is the right input for beat modulation.

    The synthesized spectral support is capped at the beat frequency: content
    above the beat would alias into the analysis band when the record is
    demodulated (the physical origin of the heterodyne penalty, which this
    surrogate carries in eta_eff instead).

    `dtype` selects the output sample dtype; float32 halves memory for long
    records without affecting the statistics meaningfully.
    """
    c.validate_against(p)
    n = c.n_samples
    n_half = n // 2 + 1
    rng = _rng(c.seed, _ROLE_TRACES)
    scale = math.sqrt(n)
    spec_dtype = np.complex64 if np.dtype(dtype) == np.float32 else np.complex128

    has_nyquist = n % 2 == 0
    # highest synthesized bin: spectral support stays below the beat tone;
    # bins beyond stay zero (exact-length input spares irfft an internal pad)
    n_keep = min(int(math.floor(c.beat_freq * n / c.sample_rate)) + 1, n_half)
    q_spec = np.zeros(n_half, dtype=spec_dtype)
    p_spec = np.zeros(n_half, dtype=spec_dtype)
    amp_signal = math.sqrt(p.eta_eff) if include_detection else 1.0
    amp_vacuum = math.sqrt(1.0 - p.eta_eff) if include_detection else 0.0

    for k0 in range(0, n_keep, _BLOCK):
        k1 = min(k0 + _BLOCK, n_keep)
        k = np.arange(k0, k1)
        omega = TWO_PI * c.sample_rate * k / n
        cq_x, cq_y, cq_a, cq_adag, cp_x, cp_y, cp_a, cp_adag = (
            _output_channel_coefficients(omega, p)
        )

        real_mask = np.zeros(k1 - k0, dtype=bool)
        if k0 == 0:
            real_mask[0] = True
        if has_nyquist and k1 == n_half:
            real_mask[-1] = True

        # Thermal channels: Hermitian white noise of unit spectral density.
        z_x = _hermitian_unit_noise(rng, k1 - k0, real_mask)
        z_y = _hermitian_unit_noise(rng, k1 - k0, real_mask)

        # Optical channel: circular complex noise, density 1/2, independent
        # at +w and -w except for the shared DC (and Nyquist) bin.
        alpha_pos = 0.5 * (rng.standard_normal(k1 - k0) + 1j * rng.standard_normal(k1 - k0))
        alpha_neg = 0.5 * (rng.standard_normal(k1 - k0) + 1j * rng.standard_normal(k1 - k0))
        if k0 == 0:
            alpha_neg[0] = alpha_pos[0]
        if has_nyquist and k1 == n_half:
            alpha_neg[-1] = alpha_pos[-1]

        q_blk = cq_x * z_x + cq_y * z_y + cq_a * alpha_pos + cq_adag * np.conj(alpha_neg)
        p_blk = cp_x * z_x + cp_y * z_y + cp_a * alpha_pos + cp_adag * np.conj(alpha_neg)
        if include_detection:
            w_q = _hermitian_unit_noise(rng, k1 - k0, real_mask)
            w_p = _hermitian_unit_noise(rng, k1 - k0, real_mask)
            q_blk = amp_signal * q_blk + amp_vacuum * w_q
            p_blk = amp_signal * p_blk + amp_vacuum * w_p
        q_spec[k0:k1] = scale * q_blk
        p_spec[k0:k1] = scale * p_blk

    # DC is real by construction; the Nyquist bin (if inside the synthesis
    # support) mixes indistinguishable +-Nyquist responses, keep its real part.
    q_spec[0] = q_spec[0].real
    p_spec[0] = p_spec[0].real
    if has_nyquist and n_keep == n_half:
        q_spec[-1] = q_spec[-1].real
        p_spec[-1] = p_spec[-1].real

    q = scipy.fft.irfft(q_spec, n=n, overwrite_x=True).astype(dtype, copy=False)
    del q_spec
    p_t = scipy.fft.irfft(p_spec, n=n, overwrite_x=True).astype(dtype, copy=False)
    del p_spec
    return (
        TimeTrace(q, c.sample_rate, label="Q"),
        TimeTrace(p_t, c.sample_rate, label="P"),
    )


def apply_detection(q: TimeTrace, p_trace: TimeTrace, p: SystemParams, seed: int):
    """Trace-level detection efficiency: sqrt(eta_eff) signal plus
    sqrt(1 - eta_eff) independent unit white noise per quadrature.

    The added noise is white up to the trace Nyquist.  Traces destined for
    beat modulation must keep their spectral support below the beat frequency,
    so there use `synthesize_quadrature_traces(..., include_detection=True)`,
    which draws the vacuum admixture inside the synthesis band."""
    if q.n != p_trace.n:
        raise ValueError("quadrature traces must have equal length")
    eta = p.eta_eff
    if eta == 1.0:
        return q, p_trace
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    amp_sig = math.sqrt(eta)
    amp_vac = math.sqrt(1.0 - eta)
    out = []
    for trace in (q, p_trace):
        dtype = trace.samples.dtype
        noise_dtype = np.float32 if dtype == np.float32 else np.float64
        mixed = np.empty(trace.n, dtype=dtype)
        for i0 in range(0, trace.n, _BLOCK):
            i1 = min(i0 + _BLOCK, trace.n)
            noise = rng.standard_normal(i1 - i0, dtype=noise_dtype)
            mixed[i0:i1] = amp_sig * trace.samples[i0:i1] + amp_vac * noise
        out.append(TimeTrace(mixed, trace.sample_rate, trace.label))
    return out[0], out[1]


def _ou_phase(c: SynthConfig, n: int, rng) -> tuple[np.ndarray, float]:
    """Stationary Ornstein-Uhlenbeck phase on a coarse grid; returns the
    coarse samples and their sample rate."""
    sigma = math.sqrt(c.jitter_sigma_sq)
    if c.jitter_bandwidth == 0.0:
        theta0 = sigma * rng.standard_normal()
        return np.full(2, theta0), c.sample_rate / max(n - 1, 1)
    gamma = TWO_PI * c.jitter_bandwidth
    coarse_rate = min(c.sample_rate, max(64.0 * c.jitter_bandwidth, 8.0 / c.duration))
    n_coarse = int(math.ceil(c.duration * coarse_rate)) + 2
    decay = math.exp(-gamma / coarse_rate)
    drive = sigma * math.sqrt(1.0 - decay * decay)
    steps = rng.standard_normal(n_coarse)
    theta = np.empty(n_coarse)
    theta[0] = sigma * steps[0]
    for i in range(1, n_coarse):
        theta[i] = decay * theta[i - 1] + drive * steps[i]
    return theta, coarse_rate


def apply_phase_jitter(q: TimeTrace, p_trace: TimeTrace, c: SynthConfig):
    """Rotate the quadrature pair by a slow Gaussian phase process theta(t)
    with stationary variance jitter_sigma_sq and corner jitter_bandwidth."""
    if q.n != p_trace.n:
        raise ValueError("quadrature traces must have equal length")
    if c.jitter_sigma_sq == 0.0:
        return q, p_trace
    n = q.n
    rng = _rng(c.seed, _ROLE_JITTER)
    theta_coarse, coarse_rate = _ou_phase(c, n, rng)
    coarse_t = np.arange(theta_coarse.size) / coarse_rate

    dtype = q.samples.dtype
    q_out = np.empty(n, dtype=dtype)
    p_out = np.empty(n, dtype=dtype)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        t = np.arange(i0, i1) / q.sample_rate
        theta = np.interp(t, coarse_t, theta_coarse).astype(dtype, copy=False)
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        qs = q.samples[i0:i1]
        ps = p_trace.samples[i0:i1]
        q_out[i0:i1] = cos_t * qs - sin_t * ps
        p_out[i0:i1] = sin_t * qs + cos_t * ps
    return (
        TimeTrace(q_out, q.sample_rate, q.label),
        TimeTrace(p_out, p_trace.sample_rate, p_trace.label),
    )


def modulate_beat(q: TimeTrace, p_trace: TimeTrace, c: SynthConfig) -> TimeTrace:
    """Raw balanced-heterodyne surrogate
    v(t) = q(t) cos(2 pi f_beat t) + p(t) sin(2 pi f_beat t)."""
    if q.n != p_trace.n:
        raise ValueError("quadrature traces must have equal length")
    n = q.n
    out = np.empty(n, dtype=q.samples.dtype)
    w_beat = TWO_PI * c.beat_freq
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        phase = w_beat * (np.arange(i0, i1) / q.sample_rate)
        out[i0:i1] = q.samples[i0:i1] * np.cos(phase) + p_trace.samples[i0:i1] * np.sin(phase)
    return TimeTrace(out, q.sample_rate, label="beat")


def add_offset(trace: TimeTrace, amplitude: float) -> TimeTrace:
    """Constant offset on a quadrature: the coherent carrier that phase
    tracking locks to downstream."""
    return TimeTrace(
        trace.samples + np.asarray(amplitude, dtype=trace.samples.dtype),
        trace.sample_rate,
        trace.label,
    )


# -- binary trace format ------------------------------------------------------
# 16-byte header: magic 'OSQT', u16 version, u16 reserved, f64 sample rate
# (little-endian), then float64 little-endian samples.

def write_trace(path, trace: TimeTrace) -> None:
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<HHd", TRACE_VERSION, 0, trace.sample_rate))
        samples = np.ascontiguousarray(trace.samples, dtype="<f8")
        fh.write(samples.tobytes())


def read_trace(path, label: str = "") -> TimeTrace:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != TRACE_MAGIC:
        raise ValueError(f"{path}: not a trace file (bad magic)")
    version, _reserved, sample_rate = struct.unpack("<HHd", raw[4:16])
    if version != TRACE_VERSION:
        raise ValueError(f"{path}: unsupported trace version {version}")
    samples = np.frombuffer(raw, dtype="<f8", offset=16)
    return TimeTrace(samples.astype(np.float64), sample_rate, label=label)


def write_trace_csv(path, trace: TimeTrace) -> None:
    """Plain two-column export for small traces."""
    with open(path, "w", newline="") as fh:
        fh.write("time_s,value\n")
        for i, v in enumerate(trace.samples):
            fh.write(f"{i / trace.sample_rate:.11e},{v:.11e}\n")
