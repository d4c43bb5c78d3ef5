import math

import numpy as np
import pytest

from gridlight import oracle
from gridlight.errors import DomainError
from gridlight.stencil import band_refraction_angle, contour_error, get_design, slit_matrices


@pytest.mark.parametrize("stencil,bound", [(8, 1e-5), (4, 1e-5)])
def test_contour_is_circular(stencil, bound):
    assert contour_error(get_design(8.0, stencil)) < bound


def test_coin_is_unitary():
    coin = get_design(8.0, 8).coin
    np.testing.assert_allclose(coin.conj().T @ coin, np.eye(8), atol=1e-13)


def test_slit_maps_are_isometric():
    m, b = slit_matrices(get_design(8.0, 8))
    np.testing.assert_allclose(m.conj().T @ m + b.conj().T @ b, np.eye(8), atol=1e-13)


def test_slit_needs_eight_channels():
    with pytest.raises(DomainError):
        slit_matrices(get_design(8.0, 4))


def test_medium_phase_range():
    d = get_design(8.0, 8)
    assert d.medium_phase(1.0) == 0.0
    for n in (0.9, 2.6):
        with pytest.raises(DomainError):
            d.medium_phase(n)


def test_medium_moves_band_wavenumber():
    d = get_design(8.0, 8)
    v = d.medium_phase(1.5)
    # with the shift applied, the source frequency sits at wavenumber 1.5 k0
    shifted = d.frequency(1.5 * d.k0) + v
    assert math.remainder(shifted - d.omega0, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_band_refraction_close_to_snell():
    d = get_design(8.0, 8)
    assert band_refraction_angle(d, 1.0, 30.0) == pytest.approx(30.0, abs=0.01)
    # the discrete band bends a little less than the continuum law
    angle = band_refraction_angle(d, 1.5, 30.0)
    assert abs(angle - oracle.snell_angle(30.0, 1.0, 1.5)) < 1.0


def test_design_rejects_short_wavelength():
    with pytest.raises(DomainError):
        get_design(1.5, 8)
