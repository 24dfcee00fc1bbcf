"""Static SVG emission with byte-stable output.

matplotlib's SVG backend embeds a creation date and content-hashed ids; both
are pinned here (empty date metadata, fixed hashsalt) so repeated runs with
identical inputs write identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import TwoSlopeNorm  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "osqt"

_SVG_KW = {"format": "svg", "metadata": {"Date": None}}


def line_plot(path, x_hz, curves, ylabel, title="", shot_noise_line=True):
    """Spectra vs frequency (kHz); `curves` is a list of (label, values)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, values in curves:
        ax.plot([f / 1e3 for f in x_hz], values, label=label, linewidth=1.0)
    if shot_noise_line:
        ax.axhline(1.0, color="0.4", linewidth=0.8, linestyle=":")
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SVG_KW)
    plt.close(fig)


def squeezing_heatmap(path, freq_hz, phases, values, title=""):
    """Phase-frequency map with a diverging scale split at the vacuum level:
    values below 1 render blue, above 1 red."""
    vmin = float(values.min())
    vmax = float(values.max())
    if not vmin < 1.0 < vmax:
        # Degenerate maps (e.g. vacuum input) still need a valid norm.
        vmin = min(vmin, 1.0 - 1e-9)
        vmax = max(vmax, 1.0 + 1e-9)
    norm = TwoSlopeNorm(vcenter=1.0, vmin=vmin, vmax=vmax)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    mesh = ax.pcolormesh(
        [f / 1e3 for f in freq_hz],
        phases,
        values,
        norm=norm,
        cmap="RdBu_r",
        shading="nearest",
        rasterized=True,
    )
    fig.colorbar(mesh, ax=ax, label="quadrature spectrum (shot-noise units)")
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("detection phase (rad)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SVG_KW)
    plt.close(fig)
