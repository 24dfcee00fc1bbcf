"""osqt: optical squeezing toolkit for a two-mode levitated optomechanical cavity.

Analytic covariance spectra of the cavity output field, synthetic heterodyne
records with matching statistics, lock-in + Welch reconstruction of the
measured spectral covariance matrix, and phase-noise fitting.
"""

__version__ = "0.1.0"

from .dsp import (
    EstimatedCovariance,
    HeterodyneRecord,
    PhaseTrackResult,
    TrackingError,
    WelchConfig,
    align_phase_reference,
    calibrate_shot_noise,
    lock_in_demodulate,
    read_covariance_csv,
    track_phase,
    welch_cross_spectra,
    write_covariance_csv,
)
from .fit import FitConfig, FitResult, fit_sigma_theta, residual_phase_noise
from .model import (
    MechanicalSpectra,
    PoleError,
    SpectralTriple,
    TransferSet,
    apply_efficiency,
    cavity_susceptibility,
    mech_susceptibility,
    mechanical_spectra,
    occupancy,
    output_spectra,
    read_spectra_csv,
    transfer_functions,
    write_spectra_csv,
)
from .params import (
    ConfigError,
    FrequencyGrid,
    SystemParams,
    load_params,
    parse_config_text,
    save_params,
)
from .squeezing import (
    Band,
    BandReport,
    SqueezingMap,
    build_map,
    dephase_covariance,
    find_squeezing_bands,
    optimal_spectrum,
    quadrature_spectrum,
    rotate_covariance,
)
from .synth import (
    SynthConfig,
    SynthConfigError,
    TimeTrace,
    add_offset,
    apply_detection,
    apply_phase_jitter,
    modulate_beat,
    read_trace,
    synthesize_quadrature_traces,
    write_trace,
    write_trace_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
