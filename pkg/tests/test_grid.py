import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridlight import grid
from gridlight.errors import DomainError, TopologyError


def test_empty_lattice():
    top = grid.build_lattice(64, 64)
    assert top.node_count == 64 * 64
    assert np.all(top.medium == 1.0)
    assert len(top.elements) == 0


def test_right_half_glass():
    top = grid.build_lattice(64, 64, media_regions=[((32, 0, 64, 64), 1.5)])
    for x in (0, 31, 32, 63):
        assert top.medium_at((x, 10)) == (1.5 if x >= 32 else 1.0)


def test_slit_row_has_two_openings():
    top = grid.build_lattice(64, 64, masks=[((20, 0, 21, 64), grid.slit_mask([(20, 27), (20, 37)]))])
    open_nodes = [y for y in range(64) if not top.is_blocking(20, y)]
    assert open_nodes == [27, 37]


@pytest.mark.parametrize("region,n", [((0, 0, 65, 10), 1.5), ((-1, 0, 4, 4), 1.5), ((0, 0, 4, 4), 0.9)])
def test_bad_media_rejected(region, n):
    with pytest.raises(TopologyError):
        grid.build_lattice(64, 64, media_regions=[(region, n)])


def test_contradictory_masks_rejected():
    with pytest.raises(TopologyError, match="contradictory"):
        grid.build_lattice(16, 16, masks=[((4, 0, 6, 16), grid.detector("A")), ((5, 0, 8, 16), grid.absorber("B"))])


def _interferometer():
    els = [grid.source(), grid.beam_splitter("BS1"), grid.mirror(), grid.mirror(), grid.beam_splitter("BS2"),
           grid.detector("D1"), grid.detector("D2")]
    edges = [(0, 0, 1, 0), (1, 0, 2, 0), (1, 1, 3, 0), (2, 0, 4, 0), (3, 0, 4, 1), (4, 0, 6, 0), (4, 1, 5, 0)]
    return grid.build_optical_graph(els, edges)


def test_mach_zehnder_graph():
    top = _interferometer()
    assert top.kind == grid.GRAPH
    assert top.node_count == 7
    assert top.source_node == 0


def test_polarizer_chain_graph():
    top = grid.build_optical_graph([grid.source(), grid.polarizer(30.0), grid.detector("D")], [(0, 0, 1, 0), (1, 0, 2, 0)])
    assert grid.neighbors(top, 2) == [1]


def test_splitter_with_one_connected_port():
    with pytest.raises(TopologyError, match="dangling"):
        grid.build_optical_graph([grid.source(), grid.beam_splitter(), grid.detector("D")], [(0, 0, 1, 0), (1, 0, 2, 0)])


def test_lattice_elements_are_not_graph_nodes():
    with pytest.raises(TopologyError):
        grid.build_optical_graph([grid.source(), grid.screen([0, 1])], [(0, 0, 1, 0)])


def test_neighbour_counts():
    top = grid.build_lattice(10, 10)
    assert len(grid.neighbors(top, (5, 5))) == 4
    assert len(grid.neighbors(top, (0, 0))) == 2
    assert len(grid.neighbors(grid.build_lattice(10, 10, stencil=8), (5, 5))) == 8


def test_detector_neighbour_is_its_upstream_port():
    top = _interferometer()
    assert grid.neighbors(top, 5) == [4]


def test_invalid_node():
    top = grid.build_lattice(10, 10)
    with pytest.raises(DomainError):
        grid.neighbors(top, 100)
    with pytest.raises(DomainError):
        grid.hop_delay(top, (10, 0))


def test_hop_delay_tracks_index():
    top = grid.build_lattice(20, 20, media_regions=[((10, 0, 20, 20), 1.5)])
    assert grid.hop_delay(top, (2, 2)) == 1.0
    assert grid.hop_delay(top, (15, 2)) == 1.5
    assert min(grid.hop_delay(top, n) for n in range(top.node_count)) >= 1.0


@given(st.integers(4, 12), st.integers(4, 12), st.sampled_from([4, 8]))
def test_adjacency_symmetric(w, h, stencil):
    assert grid.adjacency_symmetric(grid.build_lattice(w, h, stencil=stencil))


def test_graph_adjacency_symmetric():
    assert grid.adjacency_symmetric(_interferometer())


@pytest.mark.parametrize("element", [grid.beam_splitter(), grid.mirror(), grid.phase_shifter(1.3), grid.polarizer(10.0)])
def test_unitarity(element):
    assert grid.unitarity_defect(element, trials=100) < 1e-12


def test_splitter_convention():
    s = grid.beam_splitter().scattering
    np.testing.assert_allclose(s, np.array([[1, 1j], [1j, 1]]) / np.sqrt(2), atol=1e-15)
    assert grid.mirror().scattering[0, 0] == 1j


def test_frame_wider_than_lattice():
    with pytest.raises(TopologyError):
        grid.build_lattice(40, 40, boundary=grid.Sponge(20))
