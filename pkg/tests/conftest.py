import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from osqt import SystemParams


@pytest.fixture(scope="session")
def table1():
    """Reproduction parameters: two-mode system in the cooling regime."""
    return SystemParams.from_hz(
        omega_x_hz=121e3,
        omega_y_hz=109e3,
        g_x_hz=14.13e3,
        g_y_hz=10.37e3,
        gamma_x_hz=4.03e3,
        gamma_y_hz=3.05e3,
        kappa_hz=57e3,
        delta_hz=-115e3,
        eta=0.32,
        heterodyne_penalty=True,
        sigma_theta_sq=0.062,
    )


@pytest.fixture(scope="session")
def toy():
    """Same system scaled down 10x in frequency, for cheap synthesis tests."""
    return SystemParams.from_hz(
        omega_x_hz=12.1e3,
        omega_y_hz=10.9e3,
        g_x_hz=1.413e3,
        g_y_hz=1.037e3,
        gamma_x_hz=403.0,
        gamma_y_hz=305.0,
        kappa_hz=5.7e3,
        delta_hz=-11.5e3,
        eta=0.32,
        heterodyne_penalty=True,
        sigma_theta_sq=0.062,
    )
