import numpy as np
import pytest

from acns.spectral import SolenoidalField, SpectralGrid


@pytest.fixture
def grid8():
    return SpectralGrid(8, 8)


@pytest.fixture
def grid16():
    return SpectralGrid(16, 16)


def random_solenoidal(grid, rng, n=None, scale=1.0):
    n = grid.n_modes if n is None else n
    return SolenoidalField.from_coefficients(grid, scale * rng.standard_normal(n))


def random_phase(grid, rng, amp=0.6):
    """Smooth dealiased field with max |phi| = amp."""
    z = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * grid.dealias_mask
    z *= np.exp(-0.3 * grid.lam)
    f = grid.ifft(z)
    return amp * f / np.max(np.abs(f))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
