import math

import pytest
from hypothesis import given, strategies as st

from gridlight import units
from gridlight.errors import DomainError

wavelengths = st.floats(min_value=2.0, max_value=1e6, allow_nan=False)


@pytest.mark.parametrize("lam,f", [(2, 0.5), (4, 0.25)])
def test_frequency(lam, f):
    assert units.frequency_of(lam) == f


@pytest.mark.parametrize("lam,e", [(2, 0.5), (10, 0.1)])
def test_energy(lam, e):
    assert units.energy_of(lam) == pytest.approx(e, rel=1e-15)


@pytest.mark.parametrize("lam,p", [(2, 0.5), (8, 0.125)])
def test_momentum(lam, p):
    assert units.momentum_of(lam) == p


@pytest.mark.parametrize("lam,share", [(2, 0.5), (100, 0.01)])
def test_processing_share(lam, share):
    assert units.node_processing_share(lam) == share


@pytest.mark.parametrize("fn", [units.frequency_of, units.energy_of, units.momentum_of, units.node_processing_share])
def test_shorter_than_two_nodes_rejected(fn):
    with pytest.raises(DomainError, match="first light"):
        fn(1)


def test_share_reciprocal_over_integer_wavelengths():
    for lam in range(2, 1001):
        share = units.node_processing_share(lam)
        assert share == 1.0 / lam
        # the product is exact up to the final rounding of one float multiply
        assert abs(share * lam - 1.0) <= 2.0 ** -52


@given(wavelengths)
def test_energy_is_h_times_frequency(lam):
    e, f = units.energy_of(lam), units.frequency_of(lam)
    assert e == pytest.approx(units.UNITS.h * f, rel=1e-15)


@given(wavelengths)
def test_doubling_wavelength_halves_energy(lam):
    assert units.energy_of(2 * lam) == pytest.approx(units.energy_of(lam) / 2, rel=1e-15)


@given(wavelengths)
def test_momentum_times_wavelength_is_h(lam):
    assert units.momentum_of(lam) * lam == pytest.approx(units.UNITS.h, rel=1e-15)


def test_hbar():
    assert units.UNITS.hbar == pytest.approx(1 / (2 * math.pi), rel=1e-15)


def test_uncertainty_boundary():
    hbar = units.UNITS.hbar
    assert units.uncertainty_satisfied(1.0, hbar / 2)
    assert not units.uncertainty_satisfied(1.0, hbar / 4)
    with pytest.raises(DomainError):
        units.uncertainty_satisfied(-1.0, hbar)


def test_gaussian_packet_sits_on_the_bound():
    from gridlight import grid
    from gridlight.wavefield import emit, packet_stats

    top = grid.build_lattice(256, 9, stencil=8)
    _, fld = emit(top, (128, 4), 8.0, envelope={"kind": "gaussian", "sigma": 4.0, "sigma_y": 1e3}, project=False)
    st_ = packet_stats(fld)
    # p = hbar k, so sigma_p = hbar sigma_k
    assert units.uncertainty_satisfied(st_.sigma_x, units.UNITS.hbar * st_.sigma_k)
    assert st_.product == pytest.approx(0.5, rel=1e-9)
