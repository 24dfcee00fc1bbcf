"""System parameters and frequency grids for the two-mode optomechanical model.

All internal quantities are angular frequencies (rad/s).  Configuration files
and CLI arguments use ordinary frequencies (Hz, the conventional "/2pi"
values); conversion happens at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

CONFIG_KEYS = (
    "omega_x_hz",
    "omega_y_hz",
    "g_x_hz",
    "g_y_hz",
    "gamma_x_hz",
    "gamma_y_hz",
    "kappa_hz",
    "delta_hz",
    "eta",
    "heterodyne_penalty",
    "sigma_theta_sq",
)


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid parameter values."""


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of the two-mode cavity model plus detection parameters.

    omega_x, omega_y : bare mechanical angular frequencies (rad/s)
    g_x, g_y         : optomechanical coupling rates (rad/s)
    gamma_x, gamma_y : heating rates (rad/s)
    kappa            : full cavity linewidth (rad/s)
    delta            : tweezer-cavity detuning (rad/s, signed; cooling has delta < 0)
    eta              : total detection efficiency, 0 < eta <= 1
    heterodyne_penalty : if True the effective efficiency is eta/2 (simultaneous
                         measurement of both quadratures)
    sigma_theta_sq   : detection-phase jitter variance (rad^2), >= 0
    """

    omega_x: float
    omega_y: float
    g_x: float
    g_y: float
    gamma_x: float
    gamma_y: float
    kappa: float
    delta: float
    eta: float = 1.0
    heterodyne_penalty: bool = False
    sigma_theta_sq: float = 0.0

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "g_x", "g_y", "gamma_x", "gamma_y", "kappa"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if not math.isfinite(self.delta):
            raise ConfigError(f"delta must be finite, got {self.delta}")
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if self.sigma_theta_sq < 0.0:
            raise ConfigError(f"sigma_theta_sq must be >= 0, got {self.sigma_theta_sq}")

    @property
    def eta_eff(self) -> float:
        """Effective detection efficiency, halved under the heterodyne penalty."""
        return 0.5 * self.eta if self.heterodyne_penalty else self.eta

    @classmethod
    def from_hz(
        cls,
        omega_x_hz,
        omega_y_hz,
        g_x_hz,
        g_y_hz,
        gamma_x_hz,
        gamma_y_hz,
        kappa_hz,
        delta_hz,
        eta=1.0,
        heterodyne_penalty=False,
        sigma_theta_sq=0.0,
    ) -> "SystemParams":
        """Build from ordinary frequencies in Hz (the configuration convention)."""
        return cls(
            omega_x=TWO_PI * omega_x_hz,
            omega_y=TWO_PI * omega_y_hz,
            g_x=TWO_PI * g_x_hz,
            g_y=TWO_PI * g_y_hz,
            gamma_x=TWO_PI * gamma_x_hz,
            gamma_y=TWO_PI * gamma_y_hz,
            kappa=TWO_PI * kappa_hz,
            delta=TWO_PI * delta_hz,
            eta=eta,
            heterodyne_penalty=heterodyne_penalty,
            sigma_theta_sq=sigma_theta_sq,
        )

    def to_hz_dict(self) -> dict:
        """Ordinary-frequency dictionary, matching the config-file keys."""
        return {
            "omega_x_hz": self.omega_x / TWO_PI,
            "omega_y_hz": self.omega_y / TWO_PI,
            "g_x_hz": self.g_x / TWO_PI,
            "g_y_hz": self.g_y / TWO_PI,
            "gamma_x_hz": self.gamma_x / TWO_PI,
            "gamma_y_hz": self.gamma_y / TWO_PI,
            "kappa_hz": self.kappa / TWO_PI,
            "delta_hz": self.delta / TWO_PI,
            "eta": self.eta,
            "heterodyne_penalty": self.heterodyne_penalty,
            "sigma_theta_sq": self.sigma_theta_sq,
        }

    def with_couplings_off(self) -> "SystemParams":
        """Copy with negligible coupling, for shot-noise-only reference records.

        The heating rates are scaled down with the couplings so the undamped
        thermal response (no longer cavity-cooled at negligible g) cannot leak
        into the output on a bare-resonance frequency bin.
        """
        tiny = 1e-12 * min(self.omega_x, self.omega_y)
        return replace(self, g_x=tiny, g_y=tiny, gamma_x=1e-20 * tiny**2, gamma_y=1e-20 * tiny**2)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean value {text!r}")


def parse_config_text(text: str) -> SystemParams:
    """Parse the flat key-value configuration format.

    One `key = value` pair per line; `#` starts a comment; all keys required.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key == "heterodyne_penalty":
            values[key] = _parse_bool(val)
        else:
            try:
                values[key] = float(val)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad number {val!r} for {key}") from exc
    missing = [k for k in CONFIG_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    return SystemParams.from_hz(**values)


def load_params(path) -> SystemParams:
    """Load SystemParams from a configuration file."""
    return parse_config_text(Path(path).read_text())


def save_params(path, p: SystemParams) -> None:
    """Write a configuration file that `load_params` reads back exactly."""
    d = p.to_hz_dict()
    lines = []
    for key in CONFIG_KEYS:
        value = d[key]
        if key == "heterodyne_penalty":
            lines.append(f"{key} = {'true' if value else 'false'}")
        else:
            lines.append(f"{key} = {value!r}")
    Path(path).write_text("\n".join(lines) + "\n")


class FrequencyGrid:
    """Strictly increasing grid of angular frequencies (rad/s)."""

    __slots__ = ("omega",)

    def __init__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if omega.ndim != 1 or omega.size < 1:
            raise ValueError("frequency grid must be a non-empty 1-d array")
        if not np.all(np.diff(omega) > 0.0):
            raise ValueError("frequency grid must be strictly increasing")
        self.omega = omega
        self.omega.setflags(write=False)

    @classmethod
    def from_hz(cls, freq_hz) -> "FrequencyGrid":
        return cls(TWO_PI * np.asarray(freq_hz, dtype=float))

    @classmethod
    def linspace_hz(cls, f_start_hz, f_stop_hz, n_points) -> "FrequencyGrid":
        return cls.from_hz(np.linspace(f_start_hz, f_stop_hz, int(n_points)))

    @property
    def hz(self) -> np.ndarray:
        return self.omega / TWO_PI

    def __len__(self) -> int:
        return self.omega.size

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyGrid) and np.array_equal(self.omega, other.omega)

    def __repr__(self) -> str:
        f = self.hz
        return f"FrequencyGrid({len(self)} points, {f[0]:.6g}..{f[-1]:.6g} Hz)"
