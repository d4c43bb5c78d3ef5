"""Invariants checked over generated inputs."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlight import grid, oracle
from gridlight.collapse import choose, lottery_indices, resolve_outcomes
from gridlight.wavefield import AmplitudeField, Photon, run_lattice, step_lattice

index = st.floats(1.0, 2.5, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def _lattice(n, stencil=8, slit=True):
    masks = [((6, 0, 7, 20), grid.slit_mask([(6, 9)]))] if slit and stencil == 8 else []
    return grid.build_lattice(24, 20, media_regions=[((12, 0, 18, 20), n)], masks=masks, stencil=stencil)


def _random_field(top, rng, channels):
    psi = rng.normal(size=(channels, *top.dims)) + 1j * rng.normal(size=(channels, *top.dims))
    fld = AmplitudeField(top, Photon(8.0))
    fld.set_psi(psi)
    return fld


@given(n=index, seed=seeds)
@settings(max_examples=25)
def test_step_is_linear(n, seed):
    rng = np.random.default_rng(seed)
    top = _lattice(round(n, 3))
    f1, f2 = _random_field(top, rng, 8), _random_field(top, rng, 8)
    a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    both = AmplitudeField(top, Photon(8.0))
    both.set_psi(a * f1.psi + b * f2.psi)
    for fld in (both, f1, f2):
        step_lattice(fld)
    scale = np.max(np.abs(both.psi))
    assert np.max(np.abs(both.psi - (a * f1.psi + b * f2.psi))) <= 1e-12 * max(scale, 1.0)


@given(n=index, seed=seeds, stencil=st.sampled_from([4, 8]), ticks=st.integers(1, 40))
@settings(max_examples=25)
def test_probability_is_conserved(n, seed, stencil, ticks):
    rng = np.random.default_rng(seed)
    top = _lattice(round(n, 3), stencil)
    fld = _random_field(top, rng, stencil)
    start = fld.norm() + fld.sink_total()
    run_lattice(fld, ticks)
    assert abs(fld.norm() + fld.sink_total() - start) < 1e-9 * start


@given(x=st.integers(10, 50), y=st.integers(10, 50), ticks=st.integers(1, 9), seed=seeds)
@settings(max_examples=25)
def test_support_grows_at_most_one_node_per_tick(x, y, ticks, seed):
    top = grid.build_lattice(61, 61, stencil=8)
    rng = np.random.default_rng(seed)
    psi = np.zeros((8, 61, 61), complex)
    psi[:, x, y] = rng.normal(size=8) + 1j * rng.normal(size=8)
    fld = AmplitudeField(top, Photon(8.0))
    fld.set_psi(psi)
    run_lattice(fld, ticks)
    assert fld.support_radius((x, y)) <= ticks


@given(p1=st.floats(0, 1), p2=st.floats(0, 1), phi=st.floats(-10, 10))
def test_two_path_bounds(p1, p2, phi):
    p = oracle.two_path_probability(p1, p2, phi)
    assert 0.0 <= p <= (math.sqrt(p1) + math.sqrt(p2)) ** 2 + 1e-12
    # averaging over the phase leaves the incoherent sum
    avg = 0.5 * (p + oracle.two_path_probability(p1, p2, phi + math.pi))
    assert math.isclose(avg, p1 + p2, abs_tol=1e-12)


@given(angles=st.lists(st.floats(-360, 360), min_size=1, max_size=6), pol=st.none() | st.floats(0, 180))
def test_polarizer_chain_never_amplifies(angles, pol):
    p = oracle.sequential_malus(angles, pol)
    assert 0.0 <= p <= oracle.sequential_malus(angles[:-1], pol) + 1e-15


@given(a=st.floats(0, 180), b=st.floats(0, 180), c=st.floats(0, 180), d=st.floats(0, 180))
def test_chsh_never_exceeds_tsirelson(a, b, c, d):
    assert oracle.chsh(a, b, c, d) <= 2 * math.sqrt(2) + 1e-12
    assert math.isclose(oracle.entangled_correlation(a, b), oracle.entangled_correlation(b, a), abs_tol=1e-12)


@given(weights=st.lists(st.floats(0, 10), min_size=1, max_size=12).filter(lambda w: sum(w) > 0), seed=seeds)
def test_vectorised_lottery_agrees_with_scalar(weights, seed):
    total = sum(weights)
    probs = {i: w / total for i, w in enumerate(weights)}
    u = np.random.default_rng(seed).random(64)
    assert list(lottery_indices(list(probs.values()), u)) == [choose(probs, x) for x in u]


@given(a=st.floats(0, 180), seed=seeds)
def test_same_angle_always_opposite(a, seed):
    u = np.random.default_rng(seed).random((256, 2))
    first, second = resolve_outcomes(a, a, u[:, 0], u[:, 1])
    assert np.all(first != second)
