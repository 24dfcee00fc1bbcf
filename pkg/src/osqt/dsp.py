"""Quadrature reconstruction and spectral estimation for heterodyne records.

A numerical lock-in mixes the record with quadrature references at the beat
frequency and low-pass filters with a zero-phase (two-pass) Butterworth, so
cross-spectral phase relations survive.  Welch periodogram averaging with
per-segment scatter then yields the measured covariance matrix with per-bin
standard errors; a shot-noise reference record calibrates the result into
vacuum units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import signal

from .model import SpectralTriple
from .params import TWO_PI, FrequencyGrid
from .synth import TimeTrace, _BLOCK

WINDOWS = ("hann", "rectangular", "flattop")


class DspError(ValueError):
    pass


class TrackingError(RuntimeError):
    """Raised when the beat-phase tracker cannot find a usable carrier."""


@dataclass(frozen=True)
class HeterodyneRecord:
    """Raw beat-note record plus the nominal beat frequency used to demodulate."""

    trace: TimeTrace
    nominal_beat_freq: float

    def __post_init__(self):
        if not (0.0 < self.nominal_beat_freq < 0.5 * self.trace.sample_rate):
            raise DspError("nominal_beat_freq must lie inside the Nyquist band")


@dataclass(frozen=True)
class WelchConfig:
    segment_length: int
    overlap_fraction: float = 0.5
    window: str = "hann"
    discard_edges: int = 0

    def __post_init__(self):
        if self.segment_length < 4:
            raise DspError("segment_length must be >= 4")
        if not (0.0 <= self.overlap_fraction < 1.0):
            raise DspError("overlap_fraction must be in [0, 1)")
        if self.window not in WINDOWS:
            raise DspError(f"window must be one of {WINDOWS}")
        if self.discard_edges < 0:
            raise DspError("discard_edges must be >= 0")


@dataclass
class EstimatedCovariance:
    """Welch-estimated spectral covariance with per-bin standard errors.

    `cross_imag` keeps the imaginary part of the averaged cross-periodogram
    as a diagnostic; the symmetrized estimate is its real part.
    """

    spectra: SpectralTriple
    stderr_qq: np.ndarray
    stderr_pp: np.ndarray
    stderr_qp: np.ndarray
    n_segments: int
    cross_imag: np.ndarray | None = None

    def __post_init__(self):
        if self.n_segments < 2:
            raise DspError("at least 2 segments are required")


def _design_lowpass(corner_hz: float, fs: float, order: int):
    return signal.butter(order, corner_hz, btype="low", fs=fs, output="sos")


def _mix_with_reference(record: HeterodyneRecord, lo_phase: float, use_sine: bool):
    """Blockwise 2 v(t) cos(2 pi f_b t - lo_phase), or the sine counterpart."""
    v = record.trace.samples
    n = v.size
    fs = record.trace.sample_rate
    w_beat = TWO_PI * record.nominal_beat_freq
    ref = np.sin if use_sine else np.cos
    mixed = np.empty(n, dtype=v.dtype)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        phase = w_beat * (np.arange(i0, i1) / fs) - lo_phase
        mixed[i0:i1] = 2.0 * v[i0:i1] * ref(phase)
    return mixed


def _zero_phase_lowpass(sos, x: np.ndarray, fs: float, corner_hz: float) -> np.ndarray:
    """Forward-backward IIR low-pass with reflected-prefix state warmup.

    Equivalent in response to filtfilt but with O(1) extra arrays of the
    input size, so hundred-second records stay within memory.
    """
    if x.dtype == np.float32:
        sos = sos.astype(np.float32)
    zi0 = signal.sosfilt_zi(sos).astype(sos.dtype)
    pad = int(min(x.size - 1, max(50.0 * fs / corner_hz, 512)))

    def one_pass(data):
        prefix = data[pad:0:-1]
        _, zi = signal.sosfilt(sos, prefix, zi=zi0 * data[0])
        out, _ = signal.sosfilt(sos, data, zi=zi)
        return out

    y = one_pass(x)
    y = y[::-1].copy()
    y2 = one_pass(y)
    del y
    return y2[::-1].copy()


def lock_in_demodulate(
    record: HeterodyneRecord,
    lo_phase: float = 0.0,
    lp_corner: float | None = None,
    order: int = 4,
    decimate: int = 1,
):
    """Numerical lock-in: mix with cos/sin references at the nominal beat
    frequency (reference phase offset `lo_phase`), low-pass zero-phase
    (Butterworth of the given order applied forward and backward), and scale
    by 2 to restore baseband amplitude.

    `decimate` keeps every decimate-th output sample; the decimated Nyquist
    band must still clear the filter corner.  Returns (Q_m, P_m).
    """
    fs = record.trace.sample_rate
    if lp_corner is None:
        lp_corner = 0.45 * record.nominal_beat_freq
    if not (0.0 < lp_corner < 0.5 * record.nominal_beat_freq):
        raise DspError("lp_corner must be positive and below beat/2")
    decimate = int(decimate)
    if decimate < 1:
        raise DspError("decimate must be >= 1")
    if decimate > 1 and fs / decimate <= 2.4 * lp_corner:
        raise DspError("decimation would fold the filter passband")

    sos = _design_lowpass(lp_corner, fs, order)
    out = []
    for use_sine in (False, True):
        mixed = _mix_with_reference(record, lo_phase, use_sine)
        filtered = _zero_phase_lowpass(sos, mixed, fs, lp_corner)
        del mixed
        out.append(np.ascontiguousarray(filtered[::decimate]))
        del filtered
    fs_out = fs / decimate
    return (
        TimeTrace(out[0], fs_out, label="Q_m"),
        TimeTrace(out[1], fs_out, label="P_m"),
    )


@dataclass
class PhaseTrackResult:
    q: TimeTrace
    p: TimeTrace
    theta_est: TimeTrace
    residual_phase_var: float
    carrier_amplitude: float


def _block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    m = (x.size // factor) * factor
    return x[:m].reshape(-1, factor).mean(axis=1)


def track_phase(
    record: HeterodyneRecord,
    tracking_bandwidth: float,
    lp_corner: float | None = None,
    order: int = 4,
    decimate: int = 1,
    carrier_bandwidth: float = 20.0,
    min_carrier: float = 1.0,
) -> PhaseTrackResult:
    """Demodulate, then estimate and remove the slowly varying beat phase.

    The instantaneous phase of the low-passed complex baseband (carrier
    band `carrier_bandwidth`) is extracted, its slow component (below
    `tracking_bandwidth`, including the mean) is removed by re-rotating the
    quadratures, and the variance of the remaining fast phase is reported.
    Requires a coherent carrier on the record; raises TrackingError when the
    carrier magnitude is below `min_carrier`.
    """
    if tracking_bandwidth <= 0.0:
        raise DspError("tracking_bandwidth must be positive")
    if carrier_bandwidth <= 4.0 * tracking_bandwidth:
        raise DspError("carrier_bandwidth must sit well above tracking_bandwidth")
    q, p = lock_in_demodulate(
        record, lo_phase=0.0, lp_corner=lp_corner, order=order, decimate=decimate
    )
    fs = q.sample_rate
    duration = q.n / fs

    # Stage 1: coarse complex baseband for carrier extraction.
    target_rate = max(16.0 * carrier_bandwidth, 64.0 / duration)
    factor1 = max(int(fs / target_rate), 1)
    z_coarse = _block_mean(q.samples.astype(np.float64), factor1) + 1j * _block_mean(
        p.samples.astype(np.float64), factor1
    )
    fs1 = fs / factor1
    if z_coarse.size < 16:
        raise DspError("record too short for phase tracking")
    if carrier_bandwidth < 0.25 * fs1:
        sos1 = _design_lowpass(carrier_bandwidth, fs1, 2)
        carrier = signal.sosfiltfilt(sos1, z_coarse)
    else:
        carrier = z_coarse
    amplitude = float(np.median(np.abs(carrier)))
    if amplitude < min_carrier:
        raise TrackingError(
            f"carrier magnitude {amplitude:.3g} below the tracking floor {min_carrier:.3g}"
        )
    theta_full = np.unwrap(np.angle(carrier))

    # Stage 2: slow component of the phase at the tracking bandwidth.
    target_rate2 = max(32.0 * tracking_bandwidth, 8.0 / duration)
    factor2 = max(int(fs1 / target_rate2), 1)
    theta_coarse = _block_mean(theta_full, factor2)
    fs2 = fs1 / factor2
    if theta_coarse.size >= 16 and tracking_bandwidth < 0.25 * fs2:
        sos2 = _design_lowpass(tracking_bandwidth, fs2, 2)
        padlen = min(3 * (2 * sos2.shape[0] + 1) * 10, theta_coarse.size - 1)
        theta_slow_coarse = signal.sosfiltfilt(sos2, theta_coarse, padlen=padlen)
    else:
        theta_slow_coarse = np.full(theta_coarse.size, theta_coarse.mean())
    t2 = (np.arange(theta_slow_coarse.size) + 0.5) * (factor1 * factor2) / fs
    t1 = (np.arange(theta_full.size) + 0.5) * factor1 / fs

    theta_slow_at1 = np.interp(t1, t2, theta_slow_coarse)
    residual_var = float(np.var(theta_full - theta_slow_at1))

    # Re-rotate the baseband by the tracked slow phase (blockwise).
    n = q.n
    dtype = q.samples.dtype
    q_corr = np.empty(n, dtype=dtype)
    p_corr = np.empty(n, dtype=dtype)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        theta = np.interp(np.arange(i0, i1) / fs, t2, theta_slow_coarse)
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        qs = q.samples[i0:i1]
        ps = p.samples[i0:i1]
        q_corr[i0:i1] = cos_t * qs + sin_t * ps
        p_corr[i0:i1] = -sin_t * qs + cos_t * ps
    return PhaseTrackResult(
        q=TimeTrace(q_corr, fs, label="Q_m"),
        p=TimeTrace(p_corr, fs, label="P_m"),
        theta_est=TimeTrace(theta_slow_coarse, fs / (factor1 * factor2), label="theta_est"),
        residual_phase_var=residual_var,
        carrier_amplitude=amplitude,
    )


def _segment_view(x: np.ndarray, length: int, hop: int) -> np.ndarray:
    n_seg = 1 + (x.size - length) // hop
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n_seg, length),
        strides=(x.strides[0] * hop, x.strides[0]),
        writeable=False,
    )


def _get_window(name: str, length: int) -> np.ndarray:
    if name == "hann":
        return signal.windows.hann(length, sym=False)
    if name == "flattop":
        return signal.windows.flattop(length, sym=False)
    return np.ones(length)


def welch_cross_spectra(
    q: TimeTrace,
    p: TimeTrace,
    c: WelchConfig,
) -> EstimatedCovariance:
    """Welch auto- and cross-spectra of the quadrature pair in shot-noise units.

    Spectra are normalized so unit-variance white noise estimates to 1; the
    symmetrized cross-spectrum is the real part of the averaged complex
    cross-periodogram.  Standard errors come from the per-segment scatter
    (sample std of the mean).  The DC and Nyquist bins are dropped.
    """
    if q.n != p.n:
        raise DspError("q and p must have equal length")
    if q.sample_rate != p.sample_rate:
        raise DspError("q and p must share a sample rate")
    edge = c.discard_edges
    x = q.samples[edge: q.n - edge if edge else q.n]
    y = p.samples[edge: p.n - edge if edge else p.n]
    length = c.segment_length
    if x.size < length:
        raise DspError("record shorter than one segment after edge discard")
    hop = max(int(round(length * (1.0 - c.overlap_fraction))), 1)
    segments_x = _segment_view(np.ascontiguousarray(x, dtype=np.float64), length, hop)
    segments_y = _segment_view(np.ascontiguousarray(y, dtype=np.float64), length, hop)
    n_seg = segments_x.shape[0]
    if n_seg < 2:
        raise DspError(f"only {n_seg} segment(s); need >= 2 for standard errors")

    window = _get_window(c.window, length)
    norm = 1.0 / np.sum(window**2)
    keep = slice(1, length // 2 if length % 2 == 0 else length // 2 + 1)

    n_bins = (length // 2 + 1) - 1 - (1 if length % 2 == 0 else 0)
    sums = {
        "qq": np.zeros(n_bins),
        "qq2": np.zeros(n_bins),
        "pp": np.zeros(n_bins),
        "pp2": np.zeros(n_bins),
        "qp": np.zeros(n_bins, dtype=complex),
        "re2": np.zeros(n_bins),
    }
    chunk = max(int(64 * 1048576 / (length * 16)), 1)
    for s0 in range(0, n_seg, chunk):
        s1 = min(s0 + chunk, n_seg)
        seg_x = segments_x[s0:s1] - segments_x[s0:s1].mean(axis=1, keepdims=True)
        seg_y = segments_y[s0:s1] - segments_y[s0:s1].mean(axis=1, keepdims=True)
        fx = scipy.fft.rfft(seg_x * window, axis=1)[:, keep]
        fy = scipy.fft.rfft(seg_y * window, axis=1)[:, keep]
        pxx = norm * (fx.real**2 + fx.imag**2)
        pyy = norm * (fy.real**2 + fy.imag**2)
        pxy = norm * (np.conj(fx) * fy)
        sums["qq"] += pxx.sum(axis=0)
        sums["qq2"] += (pxx**2).sum(axis=0)
        sums["pp"] += pyy.sum(axis=0)
        sums["pp2"] += (pyy**2).sum(axis=0)
        sums["qp"] += pxy.sum(axis=0)
        sums["re2"] += (pxy.real**2).sum(axis=0)

    def mean_and_stderr(total, total_sq):
        mean = total / n_seg
        var = np.maximum(total_sq / n_seg - mean**2, 0.0) * n_seg / (n_seg - 1)
        return mean, np.sqrt(var / n_seg)

    s_qq, err_qq = mean_and_stderr(sums["qq"], sums["qq2"])
    s_pp, err_pp = mean_and_stderr(sums["pp"], sums["pp2"])
    qp_mean = sums["qp"] / n_seg
    s_qp, err_qp = mean_and_stderr(sums["qp"].real, sums["re2"])

    freq_hz = scipy.fft.rfftfreq(length, d=1.0 / q.sample_rate)[keep]
    grid = FrequencyGrid.from_hz(freq_hz)
    return EstimatedCovariance(
        spectra=SpectralTriple(grid, s_qq, s_pp, s_qp),
        stderr_qq=err_qq,
        stderr_pp=err_pp,
        stderr_qp=err_qp,
        n_segments=n_seg,
        cross_imag=qp_mean.imag,
    )


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    width = min(width | 1, 2 * x.size - 1)  # odd, not absurdly large
    half = width // 2
    padded = np.concatenate((x[half:0:-1], x, x[-2: -2 - half: -1]))
    kernel = np.full(width, 1.0 / width)
    return np.convolve(padded, kernel, mode="valid")


def calibrate_shot_noise(
    raw: EstimatedCovariance,
    reference: EstimatedCovariance,
    smooth_bins: int = 101,
) -> EstimatedCovariance:
    """Divide by the smoothed diagonal of a shot-noise reference measurement.

    The reference must share the raw grid; its diagonals are smoothed with a
    `smooth_bins`-wide moving average to form per-quadrature gain curves, and
    the cross-spectrum is divided by the geometric-mean gain.  Reference
    statistical noise after smoothing is negligible and is not propagated.
    """
    if not np.allclose(raw.spectra.grid.omega, reference.spectra.grid.omega, rtol=1e-12):
        raise DspError("raw and reference grids differ")
    gain_q = _moving_average(reference.spectra.s_qq, smooth_bins)
    gain_p = _moving_average(reference.spectra.s_pp, smooth_bins)
    floor = 1e-6 * max(np.median(gain_q), np.median(gain_p))
    if np.any(gain_q <= floor) or np.any(gain_p <= floor):
        raise DspError("reference diagonal has near-zero bins; cannot calibrate")
    gain_qp = np.sqrt(gain_q * gain_p)
    spectra = SpectralTriple(
        raw.spectra.grid,
        raw.spectra.s_qq / gain_q,
        raw.spectra.s_pp / gain_p,
        raw.spectra.s_qp / gain_qp,
    )
    return EstimatedCovariance(
        spectra=spectra,
        stderr_qq=raw.stderr_qq / gain_q,
        stderr_pp=raw.stderr_pp / gain_p,
        stderr_qp=raw.stderr_qp / gain_qp,
        n_segments=raw.n_segments,
        cross_imag=None if raw.cross_imag is None else raw.cross_imag / gain_qp,
    )


def align_phase_reference(
    est: EstimatedCovariance,
    model: SpectralTriple,
    freq_band=None,
):
    """Global quadrature-frame alignment between measurement and model.

    The phase references of the reconstructed quadratures are arbitrary; this
    post-processing step finds the single rotation angle that minimizes the
    L2 distance of the off-diagonal spectra to the model over the band, and
    returns the rotated estimate together with the angle.  Standard errors
    are propagated in quadrature through the rotation.
    """
    from scipy import optimize

    f = est.spectra.grid.hz
    if freq_band is None:
        mask = np.ones(f.size, dtype=bool)
    else:
        mask = (f >= freq_band[0]) & (f <= freq_band[1])
        if not np.any(mask):
            raise DspError("no bins inside the alignment band")
    if len(model.grid) != f.size or not np.allclose(model.grid.hz, f, rtol=1e-12):
        raise DspError("model grid must match the estimate grid for alignment")

    s = est.spectra

    def rotated_offdiag(theta):
        c, sn = np.cos(theta), np.sin(theta)
        return c * sn * (s.s_qq[mask] - s.s_pp[mask]) + (c * c - sn * sn) * s.s_qp[mask]

    target = model.s_qp[mask]
    result = optimize.minimize_scalar(
        lambda t: float(np.sum((rotated_offdiag(t) - target) ** 2)),
        bounds=(-np.pi / 2, np.pi / 2),
        method="bounded",
        options={"xatol": 1e-9},
    )
    theta = float(result.x)
    c, sn = np.cos(theta), np.sin(theta)
    rotated = SpectralTriple(
        s.grid,
        c * c * s.s_qq - 2 * c * sn * s.s_qp + sn * sn * s.s_pp,
        sn * sn * s.s_qq + 2 * c * sn * s.s_qp + c * c * s.s_pp,
        c * sn * (s.s_qq - s.s_pp) + (c * c - sn * sn) * s.s_qp,
    )
    err_qq = np.sqrt(
        (c * c * est.stderr_qq) ** 2
        + (2 * c * sn * est.stderr_qp) ** 2
        + (sn * sn * est.stderr_pp) ** 2
    )
    err_pp = np.sqrt(
        (sn * sn * est.stderr_qq) ** 2
        + (2 * c * sn * est.stderr_qp) ** 2
        + (c * c * est.stderr_pp) ** 2
    )
    err_qp = np.sqrt(
        (c * sn * est.stderr_qq) ** 2
        + (c * sn * est.stderr_pp) ** 2
        + ((c * c - sn * sn) * est.stderr_qp) ** 2
    )
    aligned = EstimatedCovariance(
        spectra=rotated,
        stderr_qq=err_qq,
        stderr_pp=err_pp,
        stderr_qp=err_qp,
        n_segments=est.n_segments,
        cross_imag=est.cross_imag,
    )
    return aligned, theta


# -- covariance CSV schema ----------------------------------------------------

_COV_HEADER = ["freq_hz", "s_qq", "s_pp", "s_qp", "stderr_qq", "stderr_pp", "stderr_qp"]


def write_covariance_csv(path, est: EstimatedCovariance) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COV_HEADER + [f"n_segments={est.n_segments}"])
        rows = zip(
            est.spectra.grid.hz,
            est.spectra.s_qq,
            est.spectra.s_pp,
            est.spectra.s_qp,
            est.stderr_qq,
            est.stderr_pp,
            est.stderr_qp,
        )
        for row in rows:
            writer.writerow([f"{v:.11e}" for v in row])


def read_covariance_csv(path) -> EstimatedCovariance:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[: len(_COV_HEADER)] != _COV_HEADER:
            raise DspError(f"{path}: unexpected covariance CSV header")
        n_segments = 2
        for token in header[len(_COV_HEADER):]:
            if token.startswith("n_segments="):
                n_segments = int(token.split("=", 1)[1])
        data = np.array([[float(v) for v in row] for row in reader])
    if data.ndim != 2 or data.shape[1] < 7:
        raise DspError(f"{path}: malformed covariance CSV")
    grid = FrequencyGrid.from_hz(data[:, 0])
    return EstimatedCovariance(
        spectra=SpectralTriple(grid, data[:, 1], data[:, 2], data[:, 3]),
        stderr_qq=data[:, 4],
        stderr_pp=data[:, 5],
        stderr_qp=data[:, 6],
        n_segments=n_segments,
    )
