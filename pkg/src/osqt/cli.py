"""Command-line front end: reproduction workflows over the library modules.

Every command reads a flat-text system configuration, writes its products
(CSV data, JSON reports, SVG plots) into --out, and finishes by writing
run_manifest.json listing the configuration snapshot, seeds, and outputs.
Commands exit nonzero on any validation failure; an absent or truncated
manifest marks a partial run.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dsp import (
    HeterodyneRecord,
    WelchConfig,
    align_phase_reference,
    calibrate_shot_noise,
    lock_in_demodulate,
    read_covariance_csv,
    track_phase,
    welch_cross_spectra,
    write_covariance_csv,
)
from .fit import FitConfig, fit_sigma_theta
from .model import (
    FrequencyGrid,
    apply_efficiency,
    occupancy,
    output_spectra,
    read_spectra_csv,
    write_spectra_csv,
)
from .params import ConfigError, load_params
from .squeezing import (
    build_map,
    dephase_covariance,
    find_squeezing_bands,
    optimal_spectrum,
)
from .synth import (
    SynthConfig,
    add_offset,
    apply_phase_jitter,
    modulate_beat,
    read_trace,
    synthesize_quadrature_traces,
    write_trace,
)

DEFAULT_GRID = "50e3:170e3:2048"
DEFAULT_SAMPLE_RATE = 2.0e6
DEFAULT_BEAT = 375e3
DEFAULT_LP_CORNER = 185e3


class CliError(ValueError):
    pass


def _parse_grid(spec: str) -> FrequencyGrid:
    try:
        start, stop, n = spec.split(":")
        return FrequencyGrid.linspace_hz(float(start), float(stop), int(float(n)))
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad --grid {spec!r}; expected F_START:F_STOP:N in Hz") from exc


def _parse_band(spec: str) -> tuple:
    try:
        lo, hi = (float(v) for v in spec.split(":"))
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad --band {spec!r}; expected F_LOW:F_HIGH in Hz") from exc
    if not lo < hi:
        raise CliError("--band requires F_LOW < F_HIGH")
    return lo, hi


class Manifest:
    """Collects the run description; written last so that its presence marks
    a complete run."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.payload = {
            "command": command,
            "version": __version__,
            "arguments": {k: v for k, v in vars(args).items() if k != "func"},
            "config": None,
            "seeds": [],
            "outputs": [],
            "timings_s": {},
        }
        self._t0 = time.perf_counter()

    def set_config(self, params) -> None:
        self.payload["config"] = params.to_hz_dict()

    def add_seed(self, seed: int) -> None:
        self.payload["seeds"].append(int(seed))

    def add_output(self, path: Path) -> None:
        self.payload["outputs"].append(path.name)

    def write(self, out_dir: Path) -> Path:
        self.payload["timings_s"]["total"] = round(time.perf_counter() - self._t0, 3)
        path = out_dir / "run_manifest.json"
        path.write_text(json.dumps(self.payload, indent=2, sort_keys=True) + "\n")
        return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _model_on_grid(params, grid, with_phase_noise: bool):
    spectra = apply_efficiency(output_spectra(grid, params), params)
    if with_phase_noise and params.sigma_theta_sq > 0.0:
        spectra = dephase_covariance(spectra, params.sigma_theta_sq)
    return spectra


def cmd_model_spectra(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("model-spectra", args)
    params = load_params(args.config)
    manifest.set_config(params)
    grid = _parse_grid(args.grid)
    spectra = _model_on_grid(params, grid, not args.no_phase_noise)

    csv_path = out / "spectra.csv"
    write_spectra_csv(csv_path, spectra)
    manifest.add_output(csv_path)

    sidecar = out / "spectra_params.json"
    _write_json(
        sidecar,
        {
            "config": params.to_hz_dict(),
            "eta_eff": params.eta_eff,
            "phase_noise_applied": (not args.no_phase_noise) and params.sigma_theta_sq > 0,
            "grid": {"f_start_hz": grid.hz[0], "f_stop_hz": grid.hz[-1], "n": len(grid)},
        },
    )
    manifest.add_output(sidecar)

    if not args.no_plot:
        from .plot import line_plot

        svg_path = out / "spectra.svg"
        line_plot(
            svg_path,
            grid.hz,
            [("S_QQ", spectra.s_qq), ("S_PP", spectra.s_pp), ("S_QP", spectra.s_qp)],
            ylabel="spectrum (shot-noise units)",
        )
        manifest.add_output(svg_path)
    manifest.write(out)


def cmd_map(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("map", args)
    params = load_params(args.config)
    manifest.set_config(params)
    grid = _parse_grid(args.grid)
    sigma_sq = 0.0 if args.no_phase_noise else params.sigma_theta_sq
    spectra = apply_efficiency(output_spectra(grid, params), params)
    sq_map = build_map(spectra, sigma_sq, n_phases=args.phases)

    csv_path = out / "map.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("freq_hz,phase_rad,value\n")
        for i, phi in enumerate(sq_map.phases):
            for f_hz, val in zip(grid.hz, sq_map.values[i]):
                fh.write(f"{f_hz:.11e},{phi:.11e},{val:.11e}\n")
    manifest.add_output(csv_path)

    if not args.no_plot:
        from .plot import squeezing_heatmap

        svg_path = out / "map.svg"
        squeezing_heatmap(svg_path, grid.hz, sq_map.phases, sq_map.values)
        manifest.add_output(svg_path)
    manifest.write(out)


def cmd_simulate(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("simulate", args)
    params = load_params(args.config)
    if args.shot_noise_only:
        params = params.with_couplings_off()
    manifest.set_config(params)
    manifest.add_seed(args.seed)
    synth_cfg = SynthConfig(
        sample_rate=args.sample_rate,
        duration=args.duration,
        seed=args.seed,
        beat_freq=args.beat,
        jitter_sigma_sq=0.0 if args.no_phase_noise else params.sigma_theta_sq,
        jitter_bandwidth=args.jitter_bandwidth,
    )
    dtype = np.float32 if args.float32 else np.float64
    q, p_tr = synthesize_quadrature_traces(
        params, synth_cfg, dtype=dtype, include_detection=True
    )
    if args.carrier > 0.0:
        q = add_offset(q, args.carrier)
    q, p_tr = apply_phase_jitter(q, p_tr, synth_cfg)
    record = modulate_beat(q, p_tr, synth_cfg)
    del q, p_tr

    trace_path = out / "record.osqt"
    write_trace(trace_path, record)
    manifest.add_output(trace_path)
    sidecar = out / "record_params.json"
    _write_json(
        sidecar,
        {
            "config": params.to_hz_dict(),
            "sample_rate_hz": synth_cfg.sample_rate,
            "duration_s": synth_cfg.duration,
            "beat_freq_hz": synth_cfg.beat_freq,
            "seed": args.seed,
            "carrier": args.carrier,
            "jitter_sigma_sq": synth_cfg.jitter_sigma_sq,
            "jitter_bandwidth_hz": synth_cfg.jitter_bandwidth,
            "n_samples": record.n,
        },
    )
    manifest.add_output(sidecar)
    manifest.write(out)


def cmd_analyze(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("analyze", args)
    trace = read_trace(args.trace)
    record = HeterodyneRecord(trace, nominal_beat_freq=args.beat)
    lp_corner = args.lp_corner

    if args.track is not None:
        tracked = track_phase(
            record, args.track, lp_corner=lp_corner, decimate=args.decimate
        )
        q, p_tr = tracked.q, tracked.p
        tracking_info = {
            "tracking_bandwidth_hz": args.track,
            "residual_phase_var": tracked.residual_phase_var,
            "carrier_amplitude": tracked.carrier_amplitude,
        }
    else:
        q, p_tr = lock_in_demodulate(
            record, lo_phase=args.lo_phase, lp_corner=lp_corner, decimate=args.decimate
        )
        tracking_info = None
    del record, trace

    welch_cfg = WelchConfig(
        segment_length=args.segment_length,
        overlap_fraction=args.overlap,
        window=args.window,
        discard_edges=args.discard_edges,
    )
    estimate = welch_cross_spectra(q, p_tr, welch_cfg)

    if args.reference is not None:
        ref_trace = read_trace(args.reference)
        ref_record = HeterodyneRecord(ref_trace, nominal_beat_freq=args.beat)
        ref_q, ref_p = lock_in_demodulate(
            ref_record, lo_phase=args.lo_phase, lp_corner=lp_corner, decimate=args.decimate
        )
        del ref_record, ref_trace
        reference = welch_cross_spectra(ref_q, ref_p, welch_cfg)
        estimate = calibrate_shot_noise(estimate, reference, smooth_bins=args.smooth_bins)
    else:
        print(
            "warning: no shot-noise reference supplied; spectra keep the raw "
            "demodulation gain (unity calibration)",
            file=sys.stderr,
        )

    alignment_angle = None
    if args.align_config is not None:
        align_params = load_params(args.align_config)
        model = apply_efficiency(
            output_spectra(estimate.spectra.grid, align_params), align_params
        )
        if align_params.sigma_theta_sq > 0.0:
            model = dephase_covariance(model, align_params.sigma_theta_sq)
        band = _parse_band(args.band) if args.band else None
        estimate, alignment_angle = align_phase_reference(estimate, model, band)

    cov_path = out / "covariance.csv"
    write_covariance_csv(cov_path, estimate)
    manifest.add_output(cov_path)
    report = {
        "n_segments": estimate.n_segments,
        "n_bins": len(estimate.spectra.grid),
        "f_low_hz": estimate.spectra.grid.hz[0],
        "f_high_hz": estimate.spectra.grid.hz[-1],
        "calibrated": args.reference is not None,
        "alignment_angle_rad": alignment_angle,
        "tracking": tracking_info,
    }
    report_path = out / "analyze_report.json"
    _write_json(report_path, report)
    manifest.add_output(report_path)
    manifest.write(out)


def cmd_fit_phase_noise(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("fit-phase-noise", args)
    params = load_params(args.config)
    manifest.set_config(params)
    data = read_covariance_csv(args.data)

    band = _parse_band(args.band) if args.band else (70e3, 170e3)
    fit_cfg = FitConfig(freq_band=band, weight_mode=args.weights)
    f_data = data.spectra.grid.hz
    mask = (f_data >= band[0]) & (f_data <= band[1])
    if not np.any(mask):
        raise CliError("no covariance bins inside the fit band; check --band and the data grid")
    model = apply_efficiency(output_spectra(data.spectra.grid, params), params)
    result = fit_sigma_theta(data, model, fit_cfg)

    payload = {
        "sigma_sq_hat_rad2": result.sigma_sq_hat,
        "ci_68_rad2": list(result.ci_68),
        "residual_sum": result.residual_sum,
        "per_element_residuals": list(result.per_element_residuals),
        "n_bins": result.n_bins,
        "at_bound": result.at_bound,
        "band_hz": list(band),
        "weight_mode": args.weights,
        "configured_sigma_sq_rad2": params.sigma_theta_sq,
        "ratio_to_configured": (
            result.sigma_sq_hat / params.sigma_theta_sq
            if params.sigma_theta_sq > 0
            else None
        ),
    }
    fit_path = out / "fit.json"
    _write_json(fit_path, payload)
    manifest.add_output(fit_path)
    manifest.write(out)


def cmd_optimal(args) -> None:
    out = _out_dir(args)
    manifest = Manifest("optimal", args)
    params = load_params(args.config)
    manifest.set_config(params)

    if args.data is not None:
        data = read_covariance_csv(args.data)
        spectra = data.spectra
        grid = spectra.grid
        source = "measured"
    else:
        grid = _parse_grid(args.grid)
        spectra = apply_efficiency(output_spectra(grid, params), params)
        source = "model"

    sigma_sq = 0.0 if args.no_phase_noise else params.sigma_theta_sq
    values, phases = optimal_spectrum(spectra, sigma_sq)
    values_clean, _ = optimal_spectrum(spectra, 0.0)
    report = find_squeezing_bands(values, grid, threshold=1.0, phases=phases)

    csv_path = out / "optimal.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("freq_hz,s_opt,phi_opt_rad,s_opt_no_phase_noise\n")
        for row in zip(grid.hz, values, phases, values_clean):
            fh.write(",".join(f"{v:.11e}" for v in row) + "\n")
    manifest.add_output(csv_path)

    bands_path = out / "bands.json"
    _write_json(bands_path, {"source": source, **report.to_dict()})
    manifest.add_output(bands_path)

    if not args.no_plot:
        from .plot import line_plot

        svg_path = out / "optimal.svg"
        line_plot(
            svg_path,
            grid.hz,
            [
                ("optimal (with phase noise)", values),
                ("optimal (no phase noise)", values_clean),
            ],
            ylabel="optimal quadrature spectrum (shot-noise units)",
        )
        manifest.add_output(svg_path)
    manifest.write(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osqt",
        description=(
            "Two-mode levitated cavity optomechanics: model spectra, synthetic "
            "heterodyne records, covariance estimation, and phase-noise fitting."
        ),
    )
    parser.add_argument("--version", action="version", version=f"osqt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="system configuration file")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("model-spectra", help="analytic covariance spectra to CSV/SVG")
    common(p)
    p.add_argument("--grid", default=DEFAULT_GRID, help="F_START:F_STOP:N in Hz")
    p.add_argument("--no-phase-noise", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_model_spectra)

    p = sub.add_parser("map", help="quadrature spectrum vs detection phase map")
    common(p)
    p.add_argument("--grid", default=DEFAULT_GRID)
    p.add_argument("--phases", type=int, default=181)
    p.add_argument("--no-phase-noise", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="synthesize a heterodyne record")
    common(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--duration", type=float, default=10.0, help="seconds")
    p.add_argument("--sample-rate", type=float, default=DEFAULT_SAMPLE_RATE, help="Hz")
    p.add_argument("--beat", type=float, default=DEFAULT_BEAT, help="Hz")
    p.add_argument("--jitter-bandwidth", type=float, default=1.0, help="Hz")
    p.add_argument("--carrier", type=float, default=0.0,
                   help="coherent carrier amplitude for phase tracking (shot units)")
    p.add_argument("--no-phase-noise", action="store_true")
    p.add_argument("--shot-noise-only", action="store_true",
                   help="zero the couplings (vacuum reference record)")
    p.add_argument("--float32", action="store_true",
                   help="synthesize in float32 to halve memory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="demodulate a record and estimate the covariance")
    common(p, config=False)
    p.add_argument("--trace", required=True, help="input record (.osqt)")
    p.add_argument("--reference", default=None, help="shot-noise reference record (.osqt)")
    p.add_argument("--beat", type=float, default=DEFAULT_BEAT, help="Hz")
    p.add_argument("--lp-corner", type=float, default=DEFAULT_LP_CORNER, help="Hz")
    p.add_argument("--lo-phase", type=float, default=0.0, help="rad")
    p.add_argument("--track", type=float, default=None,
                   help="enable beat-phase tracking at this bandwidth (Hz)")
    p.add_argument("--decimate", type=int, default=4)
    p.add_argument("--segment-length", type=int, default=16384)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--window", default="hann", choices=["hann", "rectangular", "flattop"])
    p.add_argument("--discard-edges", type=int, default=4096)
    p.add_argument("--smooth-bins", type=int, default=101)
    p.add_argument("--align-config", default=None,
                   help="fit a global quadrature-frame rotation against the "
                        "model from this configuration (post-processing)")
    p.add_argument("--band", default=None,
                   help="F_LOW:F_HIGH band for the alignment fit (Hz)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit-phase-noise", help="fit the phase-jitter variance")
    common(p)
    p.add_argument("--data", required=True, help="covariance CSV from analyze")
    p.add_argument("--band", default=None, help="F_LOW:F_HIGH in Hz (default 70e3:170e3)")
    p.add_argument("--weights", default="inverse-variance",
                   choices=["inverse-variance", "uniform"])
    p.set_defaults(func=cmd_fit_phase_noise)

    p = sub.add_parser("optimal", help="optimal squeezing spectrum and band report")
    common(p)
    p.add_argument("--grid", default=DEFAULT_GRID)
    p.add_argument("--data", default=None,
                   help="covariance CSV; when given, the optimal spectrum is "
                        "computed from the measured matrix instead of the model")
    p.add_argument("--no-phase-noise", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_optimal)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"osqt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
