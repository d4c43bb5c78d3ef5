"""Node networks: 2D lattices with media and masks, and optical-element graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, TopologyError

NodeId = int

LATTICE = "lattice2d"
GRAPH = "optical_graph"

# Channel directions.  Channel j of a node carries amplitude that arrived
# travelling along DIRS[j]; the ordering is counter-clockwise from +x.
DIRS8 = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
DIRS4 = ((1, 0), (0, 1), (-1, 0), (0, -1))

TRANSMIT = 1.0 / math.sqrt(2.0)
REFLECT = 1j / math.sqrt(2.0)

ELEMENT_KINDS = (
    "source", "beam_splitter", "mirror", "phase_shifter", "polarizer",
    "detector", "absorber", "slit_mask", "screen",
)
TERMINATING = ("detector", "absorber")
# (inputs, outputs) for elements that live in optical graphs
GRAPH_ARITY = {
    "source": (0, 1),
    "beam_splitter": (2, 2),
    "mirror": (1, 1),
    "phase_shifter": (1, 1),
    "polarizer": (1, 1),
    "detector": (1, 0),
    "absorber": (1, 0),
}


@dataclass(frozen=True)
class Rect:
    """Half-open node rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise TopologyError(f"empty rectangle {self}")

    @classmethod
    def of(cls, value) -> "Rect":
        if isinstance(value, Rect):
            return value
        if isinstance(value, Mapping):
            return cls(int(value["x0"]), int(value["y0"]), int(value["x1"]), int(value["y1"]))
        x0, y0, x1, y1 = value
        return cls(int(x0), int(y0), int(x1), int(y1))

    def inside(self, width: int, height: int) -> bool:
        return 0 <= self.x0 and 0 <= self.y0 and self.x1 <= width and self.y1 <= height

    def slices(self):
        return slice(self.x0, self.x1), slice(self.y0, self.y1)

    def nodes(self):
        for x in range(self.x0, self.x1):
            for y in range(self.y0, self.y1):
                yield x, y


@dataclass(frozen=True)
class OpticalElement:
    """An optical element.  Only the fields relevant to ``kind`` are used.

    ``open_slits`` holds absolute (x, y) nodes left open in a slit mask;
    ``bins`` holds ascending bin edges (in y) of a screen;
    ``depth`` is the absorbing backing thickness behind a screen's tally row.
    """

    kind: str
    label: str | None = None
    phase: float = 0.0
    axis: float = 0.0
    open_slits: tuple = ()
    bins: tuple = ()
    depth: int = 0

    def __post_init__(self):
        if self.kind not in ELEMENT_KINDS:
            raise TopologyError(f"unknown element kind {self.kind!r}")
        if self.kind in ("detector", "absorber", "screen") and not self.label:
            object.__setattr__(self, "label", self.kind)
        object.__setattr__(self, "open_slits", tuple(tuple(int(c) for c in s) for s in self.open_slits))
        object.__setattr__(self, "bins", tuple(float(b) for b in self.bins))
        if any(hi <= lo for lo, hi in zip(self.bins, self.bins[1:])):
            raise TopologyError("screen bin edges must be strictly ascending")

    @property
    def terminating(self) -> bool:
        return self.kind in TERMINATING

    @property
    def sink(self) -> str | None:
        """Label of the sink this element feeds, if any."""
        if self.kind in TERMINATING or self.kind == "screen":
            return self.label
        if self.kind == "polarizer":
            return self.label or f"polarizer@{self.axis:g}"
        if self.kind == "slit_mask":
            return self.label or "barrier"
        return None

    @property
    def arity(self) -> tuple[int, int]:
        try:
            return GRAPH_ARITY[self.kind]
        except KeyError:
            raise TopologyError(f"{self.kind} elements are lattice masks, not graph nodes") from None

    @property
    def scattering(self) -> np.ndarray:
        """Port scattering matrix, outputs x inputs.

        Terminating elements have no outputs; a polarizer's matrix is the
        pass amplitude for a photon aligned with its axis.
        """
        if self.kind == "beam_splitter":
            return np.array([[TRANSMIT, REFLECT], [REFLECT, TRANSMIT]], dtype=complex)
        if self.kind == "mirror":
            return np.array([[1j]], dtype=complex)
        if self.kind == "phase_shifter":
            return np.array([[np.exp(1j * self.phase)]], dtype=complex)
        if self.kind in ("source", "polarizer"):
            return np.eye(1, dtype=complex)
        if self.kind in TERMINATING:
            return np.zeros((0, 1), dtype=complex)
        raise TopologyError(f"{self.kind} has no port scattering matrix")


def source(label: str = "source") -> OpticalElement:
    return OpticalElement("source", label=label)


def beam_splitter(label: str | None = None) -> OpticalElement:
    return OpticalElement("beam_splitter", label=label)


def mirror(label: str | None = None) -> OpticalElement:
    return OpticalElement("mirror", label=label)


def phase_shifter(phase: float, label: str | None = None) -> OpticalElement:
    return OpticalElement("phase_shifter", label=label, phase=float(phase))


def polarizer(axis: float, label: str | None = None) -> OpticalElement:
    return OpticalElement("polarizer", label=label, axis=float(axis))


def detector(label: str) -> OpticalElement:
    return OpticalElement("detector", label=label)


def absorber(label: str) -> OpticalElement:
    return OpticalElement("absorber", label=label)


def slit_mask(open_slits: Iterable[Sequence[int]], label: str = "barrier") -> OpticalElement:
    return OpticalElement("slit_mask", label=label, open_slits=tuple(open_slits))


def screen(bins: Sequence[float], label: str = "screen", depth: int = 0) -> OpticalElement:
    return OpticalElement("screen", label=label, bins=tuple(bins), depth=int(depth))


@dataclass(frozen=True)
class Sponge:
    """Graded absorbing frame: factor exp(-strength*((width-d)/width)**2) at depth d, zero at the rim."""

    width: int = 48
    strength: float = 0.25
    label: str = "frame"
    sides: str = "lrbt"

    def factor(self, depth: int) -> float:
        if depth <= 0:
            return 0.0
        return math.exp(-self.strength * ((self.width - depth) / self.width) ** 2)


@dataclass(frozen=True)
class Edge:
    """Directed port connection: amplitude leaves ``src`` port ``src_port`` and enters ``dst`` port ``dst_port``."""

    src: NodeId
    src_port: int
    dst: NodeId
    dst_port: int


@dataclass(frozen=True, eq=False)
class Topology:
    kind: str
    dims: tuple[int, int] | None
    stencil: int
    medium_grid: np.ndarray | None
    element_map: Mapping[NodeId, OpticalElement]
    edges: tuple[Edge, ...] = ()
    boundary: Sponge | None = None
    masks: tuple = ()
    graph_elements: tuple[OpticalElement, ...] = ()

    # --- identity -------------------------------------------------------
    @property
    def node_count(self) -> int:
        if self.kind == LATTICE:
            return self.dims[0] * self.dims[1]
        return len(self.graph_elements)

    def node_id(self, x: int, y: int) -> NodeId:
        w, h = self.dims
        if not (0 <= x < w and 0 <= y < h):
            raise DomainError(f"node ({x}, {y}) outside {w}x{h} lattice")
        return x * h + y

    def coords(self, node: NodeId) -> tuple[int, int]:
        self._check_node(node)
        return divmod(int(node), self.dims[1])

    def _check_node(self, node) -> NodeId:
        if isinstance(node, tuple):
            return self.node_id(*node)
        if not isinstance(node, (int, np.integer)) or not 0 <= node < self.node_count:
            raise DomainError(f"invalid node {node!r}")
        return int(node)

    # --- per-node data --------------------------------------------------
    @property
    def elements(self) -> Mapping[NodeId, OpticalElement]:
        return self.element_map

    @property
    def medium(self) -> Mapping[NodeId, float] | np.ndarray:
        """Refractive index per node (2D array for lattices, mapping for graphs)."""
        if self.kind == LATTICE:
            return self.medium_grid
        return MappingProxyType({i: 1.0 for i in range(self.node_count)})

    def medium_at(self, node) -> float:
        node = self._check_node(node)
        if self.kind == LATTICE:
            x, y = divmod(node, self.dims[1])
            return float(self.medium_grid[x, y])
        return 1.0

    def element_at(self, node) -> OpticalElement | None:
        return self.element_map.get(self._check_node(node))

    @cached_property
    def adjacency(self) -> Mapping[NodeId, tuple[NodeId, ...]]:
        """Full node -> neighbor table.  Built lazily; large lattices prefer ``neighbors``."""
        return MappingProxyType({n: tuple(neighbors(self, n)) for n in range(self.node_count)})

    @cached_property
    def open_nodes(self) -> frozenset:
        """Slit openings: (x, y) nodes inside a slit mask rectangle that stay transmissive."""
        out = set()
        for rect, el in self.masks:
            if el.kind == "slit_mask":
                out.update(s for s in el.open_slits if rect.x0 <= s[0] < rect.x1 and rect.y0 <= s[1] < rect.y1)
        return frozenset(out)

    def is_blocking(self, x: int, y: int) -> bool:
        el = self.element_map.get(self.node_id(x, y))
        return el is not None and el.kind in ("slit_mask", "absorber", "detector")

    # --- graph helpers ---------------------------------------------------
    @cached_property
    def out_edges(self) -> Mapping[tuple[NodeId, int], Edge]:
        return MappingProxyType({(e.src, e.src_port): e for e in self.edges})

    @cached_property
    def source_node(self) -> NodeId:
        return next(i for i, el in enumerate(self.graph_elements) if el.kind == "source")



# ---------------------------------------------------------------------------
# lattice construction

def build_lattice(width: int, height: int, media_regions=(), masks=(), *, stencil: int = 4,
                  boundary: Sponge | None = None) -> Topology:
    """Validated lattice.  Later media regions override earlier ones; masks may not contradict."""
    if int(width) != width or int(height) != height or width < 4 or height < 4:
        raise TopologyError(f"lattice must be at least 4x4 nodes, got {width}x{height}")
    width, height = int(width), int(height)
    if stencil not in (4, 8):
        raise TopologyError(f"stencil must be 4 or 8, got {stencil}")
    medium = np.ones((width, height))
    for region, n in media_regions:
        rect = Rect.of(region)
        if not rect.inside(width, height):
            raise TopologyError(f"media region {rect} outside {width}x{height} lattice")
        if not (isinstance(n, (int, float)) and math.isfinite(n)) or n < 1.0:
            raise TopologyError(f"refractive index must be >= 1, got {n}")
        medium[rect.slices()] = float(n)
    medium.setflags(write=False)

    element_map: dict[NodeId, OpticalElement] = {}
    mask_list = []
    for region, el in masks:
        rect = Rect.of(region)
        if not rect.inside(width, height):
            raise TopologyError(f"mask {rect} outside {width}x{height} lattice")
        if not isinstance(el, OpticalElement):
            raise TopologyError(f"mask element must be an OpticalElement, got {el!r}")
        if el.kind == "slit_mask":
            for s in el.open_slits:
                if not (rect.x0 <= s[0] < rect.x1 and rect.y0 <= s[1] < rect.y1):
                    raise TopologyError(f"slit opening {s} lies outside its mask {rect}")
        open_here = set(el.open_slits) if el.kind == "slit_mask" else set()
        for x, y in rect.nodes():
            if (x, y) in open_here:
                continue
            node = x * height + y
            prev = element_map.get(node)
            if prev is not None and prev != el:
                raise TopologyError(f"contradictory masks at node ({x}, {y}): {prev.kind} vs {el.kind}")
            element_map[node] = el
        mask_list.append((rect, el))
    if boundary is not None and 2 * boundary.width >= min(width, height):
        raise TopologyError("absorbing frame is wider than half the lattice")
    return Topology(
        kind=LATTICE, dims=(width, height), stencil=stencil, medium_grid=medium,
        element_map=MappingProxyType(element_map), boundary=boundary, masks=tuple(mask_list),
    )


# ---------------------------------------------------------------------------
# optical graphs

def build_optical_graph(elements: Sequence[OpticalElement], edges) -> Topology:
    """Validated element graph.  ``edges`` are (src, src_port, dst, dst_port) tuples or Edge objects."""
    elements = tuple(elements)
    edge_list = tuple(e if isinstance(e, Edge) else Edge(*map(int, e)) for e in edges)
    n = len(elements)
    for el in elements:
        el.arity  # rejects lattice-only kinds
    if sum(el.kind == "source" for el in elements) != 1:
        raise TopologyError("an optical graph needs exactly one source")
    seen_out: set = set()
    seen_in: set = set()
    for e in edge_list:
        for node in (e.src, e.dst):
            if not 0 <= node < n:
                raise TopologyError(f"edge {e} references unknown element {node}")
        n_in_src, n_out_src = elements[e.src].arity
        n_in_dst, _ = elements[e.dst].arity
        if not 0 <= e.src_port < n_out_src:
            raise TopologyError(f"element {e.src} ({elements[e.src].kind}) has no output port {e.src_port}")
        if not 0 <= e.dst_port < n_in_dst:
            raise TopologyError(f"element {e.dst} ({elements[e.dst].kind}) has no input port {e.dst_port}")
        if (e.src, e.src_port) in seen_out or (e.dst, e.dst_port) in seen_in:
            raise TopologyError(f"port connected twice by {e}")
        seen_out.add((e.src, e.src_port))
        seen_in.add((e.dst, e.dst_port))
    # unconnected inputs are open (vacuum) ports; an output with nowhere to go is dangling
    for i, el in enumerate(elements):
        n_in, n_out = el.arity
        if el.kind != "source" and not any((i, p) in seen_in for p in range(n_in)):
            raise TopologyError(f"element {i} ({el.kind}) has no connected input")
        for p in range(n_out):
            if (i, p) not in seen_out:
                raise TopologyError(f"dangling output port {p} on element {i} ({el.kind})")
    # every element must drain into a terminator, otherwise amplitude circulates forever
    downstream = {i: set() for i in range(n)}
    for e in edge_list:
        downstream[e.src].add(e.dst)
    drains = {i for i, el in enumerate(elements) if el.terminating}
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if i not in drains and downstream[i] & drains:
                drains.add(i)
                changed = True
    stuck = sorted(set(range(n)) - drains)
    if stuck:
        raise TopologyError(f"elements {stuck} sit on a cycle with no terminating element")
    return Topology(
        kind=GRAPH, dims=None, stencil=0, medium_grid=None,
        element_map=MappingProxyType(dict(enumerate(elements))), edges=edge_list,
        graph_elements=elements,
    )


# ---------------------------------------------------------------------------
# queries

def neighbors(topology: Topology, node) -> list[NodeId]:
    """Nodes that may feed ``node`` within one tick, in channel order."""
    node = topology._check_node(node)
    if topology.kind == LATTICE:
        w, h = topology.dims
        x, y = divmod(node, h)
        dirs = DIRS8 if topology.stencil == 8 else DIRS4
        out = []
        for dx, dy in dirs:
            # channel j at (x, y) is gathered from the node one step against DIRS[j]
            sx, sy = x - dx, y - dy
            if 0 <= sx < w and 0 <= sy < h:
                out.append(sx * h + sy)
        return out
    linked = []
    for e in topology.edges:
        if e.dst == node and e.src not in linked:
            linked.append(e.src)
    for e in topology.edges:
        if e.src == node and e.dst not in linked:
            linked.append(e.dst)
    return linked


def hop_delay(topology: Topology, node) -> float:
    """Ticks per hop at ``node``: the local refractive index."""
    return topology.medium_at(node)


def unitarity_defect(element: OpticalElement, trials: int = 100, seed: int = 0) -> float:
    """Largest | ||S v|| - ||v|| | over random port vectors (0 for exact unitaries).

    Terminating elements report the mismatch between flux in and flux
    delivered to their sink, which is zero by construction.
    """
    rng = np.random.default_rng(seed)
    if element.terminating:
        v = rng.normal(size=(trials, 1)) + 1j * rng.normal(size=(trials, 1))
        sunk = np.abs(v[:, 0]) ** 2
        return float(np.max(np.abs(sunk - np.sum(np.abs(v) ** 2, axis=1))))
    s = element.scattering
    v = rng.normal(size=(trials, s.shape[1])) + 1j * rng.normal(size=(trials, s.shape[1]))
    out = v @ s.T
    return float(np.max(np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(v, axis=1))))


def adjacency_symmetric(topology: Topology, nodes: Iterable[NodeId] | None = None) -> bool:
    nodes = range(topology.node_count) if nodes is None else nodes
    for a in nodes:
        for b in neighbors(topology, a):
            if a not in neighbors(topology, b):
                return False
    return True
