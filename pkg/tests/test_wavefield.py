import math

import numpy as np
import pytest

from gridlight import grid, oracle
from gridlight.collapse import detection_probabilities
from gridlight.errors import DomainError, NotReadyError, StateError, TopologyError
from gridlight.rng import shot_uniforms
from gridlight.stats import chi_square
from gridlight.collapse import lottery_indices
from gridlight.wavefield import (AmplitudeField, Photon, apply_polarizer, block, dump_field_csv, emit, packet_stats,
                                 run_graph, run_lattice, step_graph, step_lattice)


def _mz(bomb=False):
    els = [grid.source(), grid.beam_splitter(), grid.mirror(), grid.mirror(), grid.beam_splitter(),
           grid.detector("D1"), grid.detector("D2")]
    edges = [(0, 0, 1, 0), (1, 0, 2, 0), (2, 0, 4, 0), (4, 0, 6, 0), (4, 1, 5, 0)]
    if bomb:
        els.append(grid.detector("bomb"))
        edges += [(1, 1, 3, 0), (3, 0, 7, 0)]
    else:
        edges += [(1, 1, 3, 0), (3, 0, 4, 1)]
    return grid.build_optical_graph(els, edges)


def test_gaussian_launch_normalised():
    top = grid.build_lattice(128, 128, stencil=8)
    _, fld = emit(top, (64, 64), 8.0, envelope={"kind": "gaussian", "sigma": 4.0})
    assert fld.norm() == pytest.approx(1.0, abs=1e-12)


def test_graph_launch_is_unit_amplitude_on_one_port():
    top = _mz()
    _, fld = emit(top, top.source_node, 8.0)
    assert list(fld.amps.values()) == [1 + 0j]


def test_photons_are_independent():
    top = grid.build_lattice(32, 32, stencil=8)
    p1, f1 = emit(top, (16, 16), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    p2, f2 = emit(top, (16, 16), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    assert p1.id != p2.id
    step_lattice(f1)
    assert f1.tick == 1 and f2.tick == 0
    assert not np.shares_memory(f1.re, f2.re)


@pytest.mark.parametrize("kwargs,msg", [({"lam": 1.5}, "first light"), ({"envelope": {"kind": "gaussian", "sigma": 0.5}}, "sigma")])
def test_emit_preconditions(kwargs, msg):
    top = grid.build_lattice(32, 32, stencil=8)
    args = {"lam": 8.0, "envelope": {"kind": "gaussian", "sigma": 2.0}, **kwargs}
    with pytest.raises(DomainError, match=msg):
        emit(top, (16, 16), args["lam"], envelope=args["envelope"])


def test_free_field_conserves():
    top = grid.build_lattice(96, 96, stencil=8)
    _, fld = emit(top, (48, 48), 8.0, envelope={"kind": "gaussian", "sigma": 3.0})
    worst = 0.0
    for _ in range(20):
        run_lattice(fld, 50)
        worst = max(worst, abs(fld.drift))
    assert fld.tick == 1000
    assert worst < 1e-9


def test_front_moves_one_node_per_tick():
    top = grid.build_lattice(61, 61, stencil=8)
    fld = AmplitudeField(top, Photon(8.0))
    psi = np.zeros((8, 61, 61), complex)
    psi[:, 30, 30] = 1 / math.sqrt(8)
    fld.set_psi(psi)
    for t in range(1, 26):
        step_lattice(fld)
        assert fld.support_radius((30, 30)) == t


def test_absorbing_frame_drains_everything():
    top = grid.build_lattice(120, 120, stencil=8, boundary=grid.Sponge(24))
    _, fld = emit(top, (60, 60), 8.0, envelope={"kind": "gaussian", "sigma": 4.0})
    fld.trim = 1e-14
    run_lattice(fld, 2000)
    assert fld.norm() < 1e-9
    assert fld.sink_total() == pytest.approx(1.0, abs=1e-9)


def test_step_lattice_rejects_graph():
    top = _mz()
    _, fld = emit(top, top.source_node, 8.0)
    with pytest.raises(TopologyError):
        step_lattice(fld)


def test_step_graph_rejects_lattice():
    top = grid.build_lattice(16, 16, stencil=8)
    _, fld = emit(top, (8, 8), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    with pytest.raises(TopologyError):
        step_graph(fld)


def test_mach_zehnder_clear():
    top = _mz()
    _, fld = emit(top, top.source_node, 8.0)
    run_graph(fld)
    assert fld.sinks["D1"] == pytest.approx(1.0, abs=1e-12)
    assert fld.sinks.get("D2", 0.0) < 1e-12


def test_mach_zehnder_bomb():
    top = _mz(bomb=True)
    _, fld = emit(top, top.source_node, 8.0)
    run_graph(fld)
    for label, p in {"D1": 0.25, "D2": 0.25, "bomb": 0.5}.items():
        assert fld.sinks[label] == pytest.approx(p, abs=1e-12)


def test_single_splitter():
    top = grid.build_optical_graph([grid.source(), grid.beam_splitter(), grid.detector("D1"), grid.detector("D2")],
                                   [(0, 0, 1, 0), (1, 0, 2, 0), (1, 1, 3, 0)])
    _, fld = emit(top, top.source_node, 8.0)
    run_graph(fld)
    assert fld.sinks == pytest.approx({"D1": 0.5, "D2": 0.5}, abs=1e-12)


@pytest.mark.parametrize("delta,kept", [(0.0, 1.0), (60.0, 0.25), (90.0, 0.0)])
def test_polarizer_on_field(delta, kept):
    top = grid.build_lattice(32, 32, stencil=8)
    photon, fld = emit(top, (16, 16), 8.0, polarization=0.0, envelope={"kind": "gaussian", "sigma": 2.0})
    before = fld.psi.copy()
    apply_polarizer(fld, photon, delta)
    assert fld.norm() == pytest.approx(kept, abs=1e-12)
    assert fld.sinks[f"polarizer@{delta:g}"] == pytest.approx(1 - kept, abs=1e-12)
    if delta == 0.0:
        np.testing.assert_array_equal(fld.psi, before)


def test_polarizer_needs_a_spreading_photon():
    top = grid.build_lattice(16, 16, stencil=8)
    photon, fld = emit(top, (8, 8), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    photon.collapse((8, 8), 0)
    with pytest.raises(StateError):
        apply_polarizer(fld, photon, 10.0)


def test_block_one_of_two_equal_paths():
    top = grid.build_optical_graph([grid.source(), grid.beam_splitter(), grid.detector("D1"), grid.detector("D2")],
                                   [(0, 0, 1, 0), (1, 0, 2, 0), (1, 1, 3, 0)])
    _, fld = emit(top, top.source_node, 8.0)
    block(fld, [(1, 3)], label="obstacle")
    run_graph(fld)
    assert fld.sinks["D1"] == pytest.approx(0.5, abs=1e-12)
    assert fld.sinks["obstacle"] == pytest.approx(0.5, abs=1e-12)


def test_block_nothing_is_identity():
    top = grid.build_lattice(24, 24, stencil=8)
    _, fld = emit(top, (12, 12), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    ref = fld.copy()
    block(fld, [])
    run_lattice(fld, 5)
    run_lattice(ref, 5)
    np.testing.assert_array_equal(fld.psi, ref.psi)


@pytest.mark.slow
def test_blocked_slit_gives_single_slit_envelope():
    d, L, lam, sigma, W = 80, 800, 8.0, 20.0, 48
    xb = W + 1 + int(4 * sigma) + 160
    xsc, h = xb + L, 2 * (260 + W) + 1
    yc = 260 + W
    edges = yc - 124.5 + 8 * np.arange(32)
    top = grid.build_lattice(xsc + W + 1, h, stencil=8, boundary=grid.Sponge(W, sides="lbt"),
                             masks=[((xb, 0, xb + 1, h), grid.slit_mask([(xb, yc + d // 2), (xb, yc - d // 2)])),
                                    ((xsc, 0, xsc + W + 1, h), grid.screen(edges))])
    _, fld = emit(top, (xb - 160, yc), lam, envelope={"kind": "gaussian", "sigma": sigma, "sigma_y": 40.0})
    fld.trim = 1e-12
    block(fld, [(xb, yc - d // 2)], label="blocked")
    run_lattice(fld, 10_000)
    probs = detection_probabilities(fld)
    mass = np.array([probs[f"screen[{i}]"] for i in range(31)])
    # no-interference reference: P1 + P2 per bin with the blocked slit contributing nothing
    upper = oracle.double_slit_pattern(d, L, lam, edges - yc, slits="upper")
    expected = np.array([oracle.no_interference_probability(p, 0.0) for p in upper])
    counts = np.bincount(lottery_indices(mass / mass.sum(), shot_uniforms(17, 0, 100_000)[:, 0]), minlength=31)
    assert chi_square(counts, expected).p_value > 1e-3
    assert probs["blocked"] > 0.0


def test_detection_before_absorption_is_not_ready():
    top = grid.build_lattice(32, 32, stencil=8)
    _, fld = emit(top, (16, 16), 8.0, envelope={"kind": "gaussian", "sigma": 2.0})
    with pytest.raises(NotReadyError):
        detection_probabilities(fld)


def test_gaussian_packet_stats():
    top = grid.build_lattice(256, 9, stencil=8)
    _, fld = emit(top, (128, 4), 8.0, envelope={"kind": "gaussian", "sigma": 4.0, "sigma_y": 1e3}, project=False)
    st = packet_stats(fld)
    # a sampled Gaussian |psi|^2 of width s has a transform of width 1/(2 s)
    assert st.sigma_x == pytest.approx(4.0, rel=0.02)
    assert st.sigma_k == pytest.approx(1 / 8.0, rel=0.02)
    assert st.product == pytest.approx(0.5, rel=0.02)


def test_narrower_packet_spreads_in_k():
    top = grid.build_lattice(256, 9, stencil=8)
    stats = []
    for s in (8.0, 4.0, 2.0, 1.0):
        _, fld = emit(top, (128, 4), 8.0, envelope={"kind": "gaussian", "sigma": s, "sigma_y": 1e3}, project=False)
        stats.append(packet_stats(fld))
    assert all(a.sigma_k < b.sigma_k for a, b in zip(stats, stats[1:]))
    assert all(s.product >= 0.5 * (1 - 1e-6) for s in stats)


def test_two_node_pair_is_extremal():
    from gridlight.scenarios import _packet_rows, _stats_lattice
    from gridlight.config import GEOMETRY

    rows = _packet_rows(_stats_lattice(256), 8.0, GEOMETRY["packet_uncertainty"])
    pair = [r for r in rows if r["family"] == "two_node"]
    others = [r for r in rows if r["family"] != "two_node"]
    # |1 + e^{i(phi - k)}|^2 on the circle has spread sqrt(pi^2/3 - 2) whatever the phase
    for r in pair:
        assert r["sigma_x"] == pytest.approx(0.5, abs=1e-12)
        assert r["sigma_k"] == pytest.approx(math.sqrt(math.pi ** 2 / 3 - 2), rel=1e-6)
    assert max(r["sigma_x"] for r in pair) <= min(r["sigma_x"] for r in others) + 1e-12
    assert min(r["sigma_k"] for r in pair) >= max(r["sigma_k"] for r in others) - 1e-12


def test_packet_stats_empty_field():
    top = grid.build_lattice(16, 16, stencil=8)
    with pytest.raises(DomainError):
        packet_stats(AmplitudeField(top, Photon(8.0)))


def test_field_dump_rows(tmp_path):
    top = grid.build_lattice(16, 16, stencil=8)
    _, fld = emit(top, (8, 8), 8.0, envelope={"kind": "gaussian", "sigma": 1.0})
    path = tmp_path / "field.csv"
    with open(path, "w", newline="") as fh:
        rows = dump_field_csv(fld, fh, threshold=1e-3)
    lines = path.read_text().splitlines()
    assert len(lines) == rows > 0
    tick, x, y, re, im, ch = lines[0].split(",")
    assert int(tick) == 0 and 0 <= int(ch) < 8
