"""Photons, amplitude fields and the two propagation engines.

Lattice fields keep one complex amplitude per direction channel per node
(the stencil's internal state); node probability is the channel sum of
|psi|^2.  Optical-graph fields keep one amplitude per directed edge, i.e.
per element input port, plus a scalar polarization tag.
"""
from __future__ import annotations

import csv
import itertools
import math
import weakref
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .errors import DomainError, StateError, TopologyError
from .grid import GRAPH, LATTICE, Sponge, Topology, neighbors
from .stencil import StencilDesign, band_project, get_design, slit_matrices
from .units import MIN_WAVELENGTH

SPREADING = "spreading"
COLLAPSED = "collapsed"
ABSORBED = "absorbed"

_ids = itertools.count(1)

# a sink counts as reached once it holds more than this much probability
ARRIVAL_THRESHOLD = 1e-12


def _reduce_angle(theta: float) -> float:
    theta = float(theta) % 180.0
    return 0.0 if theta == 180.0 else theta


def pass_probability(delta_deg: float) -> float:
    """cos^2 of an angle in degrees, written so 0 and 90 degrees are exact."""
    return 0.5 * (1.0 + math.cos(math.radians(2.0 * float(delta_deg))))


class Photon:
    """An entity program: wavelength, polarization tag and lifecycle."""

    def __init__(self, lam: float, polarization: float = 0.0, birth=(None, 0)):
        if lam < MIN_WAVELENGTH:
            raise DomainError(f"wavelength {lam} shorter than first light")
        self.id = next(_ids)
        self._lam = float(lam)
        # None marks a branch of an entangled pair whose polarization is not yet fixed
        self.polarization = None if polarization is None else _reduce_angle(polarization)
        self.status = SPREADING
        self.site = None
        self.status_tick = None
        self.birth = tuple(birth)

    @property
    def lam(self) -> float:
        return self._lam

    def _finish(self, status, site, tick):
        if self.status != SPREADING:
            raise StateError(f"photon {self.id} already {self.status}")
        self.status, self.site, self.status_tick = status, site, tick

    def collapse(self, site, tick: int) -> None:
        self._finish(COLLAPSED, site, tick)

    def absorb(self, sink: str, tick: int) -> None:
        self._finish(ABSORBED, sink, tick)

    def __repr__(self):
        return f"Photon(id={self.id}, lam={self.lam:g}, pol={self.polarization}, {self.status})"


@dataclass(frozen=True)
class Envelope:
    """Launch profile.  ``gaussian`` uses amplitude exp(-r^2/(4 sigma^2)) so sigma is the |psi|^2 spread."""

    kind: str = "gaussian"
    sigma: float = 4.0
    sigma_y: float | None = None
    width: int = 16
    depth: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "plane_segment"):
            raise DomainError(f"unknown envelope {self.kind!r}")
        if self.kind == "gaussian" and (self.sigma < 1 or (self.sigma_y is not None and self.sigma_y < 1)):
            raise DomainError("gaussian envelope needs sigma >= 1 node")
        if self.kind == "plane_segment" and (self.width < 1 or self.depth < 1):
            raise DomainError("plane segment needs positive width and depth")

    @classmethod
    def of(cls, spec) -> "Envelope":
        if isinstance(spec, Envelope):
            return spec
        if isinstance(spec, Mapping):
            return cls(**spec)
        if isinstance(spec, tuple):
            kind, *rest = spec
            if kind == "gaussian":
                return cls("gaussian", *rest)
            return cls("plane_segment", width=rest[0] if rest else 16)
        return cls(str(spec))


@dataclass
class PacketStats:
    sigma_x: float
    sigma_k: float
    centroid: float

    @property
    def product(self) -> float:
        return self.sigma_x * self.sigma_k


class AmplitudeField:
    """The wave function of one photon plus the probability already drained into sinks."""

    def __init__(self, topology: Topology, photon: Photon):
        self.topology = topology
        self.entity = photon.id
        self.lam = photon.lam
        self.polarization = photon.polarization
        self.tick = 0
        self.sinks: dict[str, float] = {}
        self.arrivals: dict[str, int] = {}
        self.screens: dict[str, np.ndarray] = {}
        self.blocked: dict[str, list] = {}
        if topology.kind == LATTICE:
            w, h = topology.dims
            d = topology.stencil
            self.re = np.zeros((d, w + 2, h + 2))
            self.im = np.zeros((d, w + 2, h + 2))
            self._qr = np.zeros_like(self.re)
            self._qi = np.zeros_like(self.im)
            self.window = (1, 0)
            self.trim = 0.0
        else:
            self.edge_amp = np.zeros(len(topology.edges), complex)
            self.edge_pol = np.full(len(topology.edges), photon.polarization or 0.0)

    # --- views ------------------------------------------------------------
    @property
    def is_lattice(self) -> bool:
        return self.topology.kind == LATTICE

    @property
    def psi(self) -> np.ndarray:
        """Complex channel amplitudes on the lattice nodes, shape (channels, width, height)."""
        return self.re[:, 1:-1, 1:-1] + 1j * self.im[:, 1:-1, 1:-1]

    def set_psi(self, psi: np.ndarray) -> None:
        self.re[:] = 0.0
        self.im[:] = 0.0
        self._qr[:] = 0.0
        self._qi[:] = 0.0
        self.re[:, 1:-1, 1:-1] = psi.real
        self.im[:, 1:-1, 1:-1] = psi.imag
        self._refresh_window()

    def density(self) -> np.ndarray:
        if self.is_lattice:
            return (self.re[:, 1:-1, 1:-1] ** 2 + self.im[:, 1:-1, 1:-1] ** 2).sum(axis=0)
        return np.abs(self.edge_amp) ** 2

    @property
    def amps(self) -> dict:
        """Non-zero amplitudes: lattice node -> channel vector, graph (element, port) -> complex."""
        if self.is_lattice:
            psi = self.psi
            h = self.topology.dims[1]
            xs, ys = np.nonzero((np.abs(psi) > 0).any(axis=0))
            return {int(x) * h + int(y): psi[:, x, y].copy() for x, y in zip(xs, ys)}
        return {(e.dst, e.dst_port): complex(a) for e, a in zip(self.topology.edges, self.edge_amp) if a != 0}

    def norm(self) -> float:
        if self.is_lattice:
            # columns outside the active window hold no amplitude
            s0, s1 = self.window
            if s0 > s1:
                return 0.0
            re, im = self.re[:, s0:s1 + 1], self.im[:, s0:s1 + 1]
            return float((re * re).sum() + (im * im).sum())
        return float(self.density().sum())

    def sink_total(self) -> float:
        return float(sum(self.sinks.values()))

    @property
    def drift(self) -> float:
        """Deviation of total probability (field plus sinks) from one."""
        return self.norm() + self.sink_total() - 1.0

    def credit(self, label: str, mass: float) -> None:
        total = self.sinks.get(label, 0.0) + float(mass)
        self.sinks[label] = total
        if label not in self.arrivals and total > ARRIVAL_THRESHOLD:
            self.arrivals[label] = self.tick

    def copy(self) -> "AmplitudeField":
        other = object.__new__(AmplitudeField)
        other.__dict__.update(self.__dict__)
        other.sinks = dict(self.sinks)
        other.arrivals = dict(self.arrivals)
        other.screens = {k: v.copy() for k, v in self.screens.items()}
        other.blocked = {k: list(v) for k, v in self.blocked.items()}
        if self.is_lattice:
            for name in ("re", "im", "_qr", "_qi"):
                setattr(other, name, getattr(self, name).copy())
        else:
            other.edge_amp = self.edge_amp.copy()
            other.edge_pol = self.edge_pol.copy()
        return other

    def _refresh_window(self) -> None:
        cols = np.nonzero((self.re ** 2 + self.im ** 2).sum(axis=(0, 2)))[0]
        self.window = (int(cols[0]), int(cols[-1])) if len(cols) else (1, 0)

    def support_radius(self, origin) -> int:
        """Chebyshev distance from ``origin`` (x, y) to the farthest non-zero node."""
        xs, ys = np.nonzero(self.density() > 0)
        if len(xs) == 0:
            return 0
        return int(max(np.abs(xs - origin[0]).max(), np.abs(ys - origin[1]).max()))


# ---------------------------------------------------------------------------
# emission

def emit(topology: Topology, source_node, lam: float, polarization: float = 0.0, envelope="gaussian", *,
         direction=(1.0, 0.0), project: bool = True, cutoff: float = 1e-24) -> tuple[Photon, AmplitudeField]:
    """Create a photon and its normalised launch field.

    Lattice launches carry the phase ramp exp(i 2 pi d.x / lam) along
    ``direction``.  With ``project`` the carrier-modulated envelope is
    spread onto the stencil's working band, so the packet moves as a single
    clean wave; otherwise every node holds the band vector of the carrier
    times the scalar envelope.  Nodes whose density falls below ``cutoff``
    times the peak are dropped before normalisation.
    """
    if lam < MIN_WAVELENGTH:
        raise DomainError(f"wavelength {lam} shorter than first light")
    if topology.kind == GRAPH:
        node = topology._check_node(source_node)
        if topology.graph_elements[node].kind != "source":
            raise DomainError(f"element {node} is not a source")
        photon = Photon(lam, polarization, birth=(node, 0))
        fld = AmplitudeField(topology, photon)
        edge = topology.out_edges[(node, 0)]
        fld.edge_amp[topology.edges.index(edge)] = 1.0 + 0.0j
        return photon, fld

    env = Envelope.of(envelope)
    node = topology._check_node(source_node)
    sx, sy = topology.coords(node)
    photon = Photon(lam, polarization, birth=(node, 0))
    fld = AmplitudeField(topology, photon)
    design = get_design(lam, topology.stencil)
    w, h = topology.dims
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    x = np.arange(w)[:, None] - sx
    y = np.arange(h)[None, :] - sy
    along = d[0] * x + d[1] * y
    across = -d[1] * x + d[0] * y
    if env.kind == "gaussian":
        sig_y = env.sigma if env.sigma_y is None else env.sigma_y
        scalar = np.exp(-along ** 2 / (4 * env.sigma ** 2) - across ** 2 / (4 * sig_y ** 2))
    else:
        scalar = ((np.abs(across) <= (env.width - 1) / 2) & (along > -env.depth) & (along <= 0)).astype(float)
    if project:
        psi = band_project(design, scalar.astype(complex), direction=d)
    else:
        vec = band_vectors_at(design, d)
        psi = vec[:, None, None] * (scalar * np.exp(1j * design.k0 * along))[None]
    dens = (np.abs(psi) ** 2).sum(axis=0)
    psi[:, dens < cutoff * dens.max()] = 0.0
    # nothing may start inside an absorbing element
    for nid, el in topology.element_map.items():
        if el.kind in ("slit_mask", "absorber", "detector"):
            px, py = divmod(nid, h)
            psi[:, px, py] = 0.0
    total = float((np.abs(psi) ** 2).sum())
    if total == 0.0:
        raise DomainError("launch envelope has no support on the lattice")
    fld.set_psi(psi / math.sqrt(total))
    return photon, fld


def band_vectors_at(design: StencilDesign, direction) -> np.ndarray:
    from .stencil import band_vectors

    kx, ky = design.k0 * direction[0], design.k0 * direction[1]
    return band_vectors(design, np.array([kx]), np.array([ky]))[0]


# ---------------------------------------------------------------------------
# lattice engine

_engines: "weakref.WeakKeyDictionary[Topology, dict]" = weakref.WeakKeyDictionary()


def lattice_engine(topology: Topology, lam: float) -> "LatticeEngine":
    per_topology = _engines.setdefault(topology, {})
    eng = per_topology.get(float(lam))
    if eng is None:
        eng = per_topology[float(lam)] = LatticeEngine(topology, get_design(lam, topology.stencil))
    return eng


@dataclass
class _Screen:
    label: str
    column: int          # array x of the tally plane
    rows: slice          # lattice y range covered
    bins: tuple


class LatticeEngine:
    """Element tables compiled from a lattice topology for one wavelength."""

    def __init__(self, topology: Topology, design: StencilDesign):
        if topology.kind != LATTICE:
            raise TopologyError("lattice engine needs a lattice topology")
        self.topology = topology
        self.design = design
        w, h = topology.dims
        self.w, self.h = w, h
        self.labels: list[str] = []
        fac = np.ones((w + 2, h + 2))
        sid = np.full((w + 2, h + 2), -1, dtype=np.int64)

        def put(x, y, f, label):
            # strongest absorption wins; masks are applied after the frame so equal factors go to the mask
            if f <= fac[x, y]:
                fac[x, y] = f
                sid[x, y] = self._label(label)

        b = topology.boundary
        if b is not None:
            for dd in range(b.width):
                f = b.factor(dd)
                if "l" in b.sides:
                    for y in range(1, h + 1):
                        put(1 + dd, y, f, b.label)
                if "r" in b.sides:
                    for y in range(1, h + 1):
                        put(w - dd, y, f, b.label)
                if "b" in b.sides:
                    for x in range(1, w + 1):
                        put(x, 1 + dd, f, b.label)
                if "t" in b.sides:
                    for x in range(1, w + 1):
                        put(x, h - dd, f, b.label)

        phase = np.zeros((w + 2, h + 2))
        medium = topology.medium_grid
        for n in np.unique(medium):
            if n != 1.0:
                v = design.medium_phase(float(n))
                mx, my = np.nonzero(medium == n)
                phase[mx + 1, my + 1] -= v

        self.screens: list[_Screen] = []
        slit_nodes, slit_sink = [], []
        mirror_nodes = []
        for rect, el in topology.masks:
            ax = slice(rect.x0 + 1, rect.x1 + 1)
            ay = slice(rect.y0 + 1, rect.y1 + 1)
            if el.kind in ("absorber", "detector"):
                fac[ax, ay] = 0.0
                sid[ax, ay] = self._label(el.label)
            elif el.kind == "slit_mask":
                fac[ax, ay] = 0.0
                sid[ax, ay] = self._label(el.sink)
                for sx, sy in el.open_slits:
                    fac[sx + 1, sy + 1] = 1.0
                    sid[sx + 1, sy + 1] = -1
                    slit_nodes.append((sx + 1, sy + 1))
                    slit_sink.append(self._label(el.sink))
            elif el.kind == "screen":
                back = rect.x1 - rect.x0 - 1
                if back < 1:
                    raise TopologyError("a screen mask needs at least one backing column behind its tally plane")
                backing = Sponge(width=el.depth or back)
                for i in range(back):
                    x = rect.x1 - i     # array column, i = 0 at the far edge
                    f = backing.factor(i)
                    if f < 1.0:
                        hit = fac[x, ay] >= f
                        fac[x, ay] = np.where(hit, f, fac[x, ay])
                        sid[x, ay] = np.where(hit, self._label(el.label), sid[x, ay])
                self.screens.append(_Screen(el.label, rect.x0 + 1, slice(rect.y0, rect.y1), el.bins))
            elif el.kind == "phase_shifter":
                phase[ax, ay] += el.phase
            elif el.kind == "mirror":
                if rect.x1 - rect.x0 == 1:
                    normal = 0
                elif rect.y1 - rect.y0 == 1:
                    normal = 1
                else:
                    raise TopologyError("lattice mirrors must be one node thick")
                mirror_nodes += [(x + 1, y + 1, normal) for x, y in rect.nodes()]
            elif el.kind == "polarizer":
                raise TopologyError("polarizers act on whole fields; use apply_polarizer")

        ax_, ay_ = np.nonzero(sid >= 0)
        self.damp_x, self.damp_y = ax_.astype(np.int64), ay_.astype(np.int64)
        self.damp_f = fac[ax_, ay_].copy()
        self.damp_id = sid[ax_, ay_].copy()
        px, py = np.nonzero(phase)
        self.rot_x, self.rot_y = px.astype(np.int64), py.astype(np.int64)
        self.rot_c, self.rot_s = np.cos(phase[px, py]), np.sin(phase[px, py])

        d = design.channels
        maps, bmaps, mx, my, mid = [], [], [], [], []
        if slit_nodes:
            if topology.stencil != 8:
                raise TopologyError("slit openings need the 8-channel stencil")
            m, bm = slit_matrices(design)
            for (x, y), s in zip(slit_nodes, slit_sink):
                maps.append(m)
                bmaps.append(bm)
                mx.append(x)
                my.append(y)
                mid.append(s)
        dirs = design.dirs
        for x, y, normal in mirror_nodes:
            perm = np.zeros((d, d), complex)
            for j, (dx, dy) in enumerate(dirs):
                target = (-dx, dy) if normal == 0 else (dx, -dy)
                k = next(i for i, e in enumerate(dirs) if tuple(e) == target)
                perm[k, j] = 1j
            # the node state is post-coin: recover the gathered input and send it back out reflected
            maps.append(perm @ design.coin.conj().T)
            bmaps.append(np.zeros((5 if topology.stencil == 8 else 1, d), complex))
            mx.append(x)
            my.append(y)
            mid.append(self._label("mirror"))
        self.map_x = np.array(mx, dtype=np.int64)
        self.map_y = np.array(my, dtype=np.int64)
        nb = bmaps[0].shape[0] if bmaps else 1
        self.map_m = np.array(maps, complex).reshape(-1, d, d)
        self.map_b = np.array(bmaps, complex).reshape(-1, nb, d)
        self.map_id = np.array(mid, dtype=np.int64)
        self.dx = np.ascontiguousarray(dirs[:, 0])
        self.dy = np.ascontiguousarray(dirs[:, 1])
        self.fwd = np.ascontiguousarray(design.forward.astype(np.int64))
        self.bwd = np.ascontiguousarray(design.backward.astype(np.int64))
        lam_w = design.eigenvalues
        self.lr, self.li = lam_w.real.copy(), lam_w.imag.copy()
        self.cr, self.ci = design.coin.real.copy(), design.coin.imag.copy()
        self._edge = self._label("edge")
        self._floor = self._label("floor")

    def _label(self, label: str) -> int:
        if label not in self.labels:
            self.labels.append(label)
        return self.labels.index(label)

    def step(self, fld: AmplitudeField) -> None:
        s0, s1 = fld.window
        blocked = [(self._label(label), bx, by) for label, (bx, by) in fld.blocked.items()]
        sinks = np.zeros(len(self.labels))
        if s0 > s1:
            fld.tick += 1
            return
        x0, x1 = max(1, s0 - 1), min(self.w, s1 + 1)
        sinks[self._edge] += kernels.outflow(fld.re, fld.im, self.dx, self.dy, x0, x1, self.w, self.h)
        if self.design.stencil == 8:
            kernels.step8(fld.re, fld.im, fld._qr, fld._qi, self.lr, self.li, x0, x1, 1, self.h)
        else:
            kernels.step_dense(fld.re, fld.im, fld._qr, fld._qi, self.cr, self.ci, self.dx, self.dy, x0, x1, 1, self.h)
        fld.re, fld._qr = fld._qr, fld.re
        fld.im, fld._qi = fld._qi, fld.im
        if len(self.map_x):
            kernels.remap(fld.re, fld.im, self.map_x, self.map_y, self.map_m, self.map_b, self.map_id, sinks)
        if len(self.rot_x):
            kernels.rotate(fld.re, fld.im, self.rot_x, self.rot_y, self.rot_c, self.rot_s, x0, x1)
        kernels.damp(fld.re, fld.im, self.damp_x, self.damp_y, self.damp_f, self.damp_id, sinks, x0, x1)
        for lab, bx, by in blocked:
            kernels.damp(fld.re, fld.im, bx, by, np.zeros(len(bx)), np.full(len(bx), lab, np.int64), sinks, x0, x1)
        for scr in self.screens:
            flux = fld.screens.get(scr.label)
            if flux is None:
                flux = fld.screens[scr.label] = np.zeros(self.h)
            if x0 <= scr.column + 1 and scr.column <= x1:
                kernels.tally(fld.re, fld.im, scr.column, self.fwd, self.bwd, flux)
        # shrink the active window past columns holding at most ``trim`` probability
        while x0 <= x1:
            m = kernels.colmass(fld.re, fld.im, x0)
            if m > fld.trim:
                break
            sinks[self._floor] += m
            kernels.clear_column(fld.re, fld.im, fld._qr, fld._qi, x0)
            x0 += 1
        while x1 >= x0:
            m = kernels.colmass(fld.re, fld.im, x1)
            if m > fld.trim:
                break
            sinks[self._floor] += m
            kernels.clear_column(fld.re, fld.im, fld._qr, fld._qi, x1)
            x1 -= 1
        fld.window = (x0, x1)
        for i, v in enumerate(sinks):
            if v:
                fld.credit(self.labels[i], v)
        fld.tick += 1


def step_lattice(fld: AmplitudeField, topology: Topology | None = None) -> AmplitudeField:
    """Advance a lattice field one tick in place (and return it).

    Passing a different topology than the field was built on swaps the
    apparatus for this tick onward; the field itself is unaffected.
    """
    topology = fld.topology if topology is None else topology
    if topology.kind != LATTICE or not fld.is_lattice:
        raise TopologyError("step_lattice needs a lattice field and topology")
    if topology.dims != fld.topology.dims or topology.stencil != fld.topology.stencil:
        raise TopologyError("apparatus swap must keep the lattice shape and stencil")
    fld.topology = topology
    lattice_engine(topology, fld.lam).step(fld)
    return fld


def run_lattice(fld: AmplitudeField, ticks: int, *, schedule: Mapping[int, Topology] | None = None,
                until_empty: bool = False, dump=None) -> AmplitudeField:
    """Step ``ticks`` times, swapping apparatus at the ticks named in ``schedule``."""
    schedule = schedule or {}
    for _ in range(int(ticks)):
        if fld.tick in schedule:
            fld.topology = schedule[fld.tick]
        if dump is not None:
            dump(fld)
        step_lattice(fld)
        if until_empty and fld.window[0] > fld.window[1]:
            break
    return fld


# ---------------------------------------------------------------------------
# optical-graph engine

def step_graph(fld: AmplitudeField, topology: Topology | None = None) -> AmplitudeField:
    """Move every edge amplitude through the element it enters (one element per tick)."""
    topology = fld.topology if topology is None else topology
    if topology.kind != GRAPH or fld.is_lattice:
        raise TopologyError("step_graph needs an optical-graph field and topology")
    edges = topology.edges
    index = {e: i for i, e in enumerate(edges)}
    new_amp = np.zeros_like(fld.edge_amp)
    new_pol = fld.edge_pol.copy()
    blocked = set(itertools.chain.from_iterable(fld.blocked.values()))
    inbound: dict[int, dict[int, int]] = {}
    for i, e in enumerate(edges):
        if fld.edge_amp[i] != 0:
            inbound.setdefault(e.dst, {})[e.dst_port] = i
    for node, ports in sorted(inbound.items()):
        el = topology.graph_elements[node]
        if el.terminating:
            (i,) = ports.values()
            fld.credit(el.label, abs(fld.edge_amp[i]) ** 2)
            continue
        n_in, n_out = el.arity
        vin = np.zeros(n_in, complex)
        pol = None
        for port, i in ports.items():
            vin[port] = fld.edge_amp[i]
            pol = fld.edge_pol[i] if pol is None else pol
        if el.kind == "polarizer":
            keep = math.sqrt(pass_probability(pol - el.axis))
            lost = float(np.sum(np.abs(vin) ** 2)) * (1.0 - keep ** 2)
            fld.credit(el.sink, lost)
            vout = vin * keep
            pol = el.axis
        else:
            vout = el.scattering @ vin
        for port in range(n_out):
            j = index[topology.out_edges[(node, port)]]
            new_amp[j] += vout[port]
            new_pol[j] = pol
    for j in blocked:
        if new_amp[j] != 0:
            fld.credit(_block_label(fld, j), abs(new_amp[j]) ** 2)
            new_amp[j] = 0
    fld.edge_amp = new_amp
    fld.edge_pol = new_pol
    fld.tick += 1
    return fld


def _block_label(fld, edge_index):
    for label, edges in fld.blocked.items():
        if edge_index in edges:
            return label
    return "obstacle"


def run_graph(fld: AmplitudeField, max_ticks: int = 10_000) -> AmplitudeField:
    """Step until no amplitude remains on any edge."""
    for _ in range(max_ticks):
        if not np.any(fld.edge_amp):
            break
        step_graph(fld)
    return fld


# ---------------------------------------------------------------------------
# element actions on whole fields

def apply_polarizer(fld: AmplitudeField, photon: Photon, axis_angle: float, label: str | None = None) -> AmplitudeField:
    """Project onto ``axis_angle``: amplitudes scale by cos(delta), the sin^2 share goes to the polarizer sink."""
    if photon.status != SPREADING:
        raise StateError(f"photon {photon.id} is {photon.status}")
    if fld.polarization is None:
        raise StateError(f"photon {photon.id} has no definite polarization")
    keep = pass_probability(fld.polarization - axis_angle)
    label = label or f"polarizer@{_reduce_angle(axis_angle):g}"
    fld.credit(label, fld.norm() * (1.0 - keep))
    amp = math.sqrt(keep)
    if fld.is_lattice:
        fld.re *= amp
        fld.im *= amp
        fld._qr *= amp
        fld._qi *= amp
    else:
        fld.edge_amp *= amp
        fld.edge_pol[:] = _reduce_angle(axis_angle)
    # the photon itself takes the new axis only when it collapses on the pass branch
    fld.polarization = _reduce_angle(axis_angle)
    return fld


def block(fld: AmplitudeField, nodes_or_path: Iterable, label: str = "obstacle") -> AmplitudeField:
    """Register obstacles: amplitude reaching them is moved to ``label`` now and on every later tick.

    Lattice obstacles are nodes ((x, y) or ids); graph obstacles are edge
    indices or (src, dst) element pairs.
    """
    items = list(nodes_or_path)
    if not items:
        return fld
    topo = fld.topology
    if fld.is_lattice:
        xs, ys = [], []
        for item in items:
            x, y = item if isinstance(item, tuple) else topo.coords(item)
            topo.node_id(x, y)
            xs.append(x + 1)
            ys.append(y + 1)
        bx, by = np.array(xs, np.int64), np.array(ys, np.int64)
        mass = float((fld.re[:, bx, by] ** 2 + fld.im[:, bx, by] ** 2).sum())
        fld.re[:, bx, by] = 0.0
        fld.im[:, bx, by] = 0.0
        if label in fld.blocked:
            bx = np.concatenate([fld.blocked[label][0], bx])
            by = np.concatenate([fld.blocked[label][1], by])
        fld.blocked[label] = [bx, by]
    else:
        idx = []
        for item in items:
            if isinstance(item, tuple):
                matches = [i for i, e in enumerate(topo.edges) if (e.src, e.dst) == tuple(item)]
                if not matches:
                    raise DomainError(f"no edge between elements {item}")
                idx += matches
            else:
                if not 0 <= int(item) < len(topo.edges):
                    raise DomainError(f"invalid edge {item}")
                idx.append(int(item))
        mass = float(np.sum(np.abs(fld.edge_amp[idx]) ** 2))
        fld.edge_amp[idx] = 0
        fld.blocked.setdefault(label, [])
        fld.blocked[label] += idx
    if mass:
        fld.credit(label, mass)
    return fld


# ---------------------------------------------------------------------------
# statistics and audits

def packet_stats(fld: AmplitudeField, axis: int = 0) -> PacketStats:
    """Position spread of |psi|^2 and wavenumber spread of the DFT power spectrum along ``axis``.

    The spectrum lives on the circle [-pi, pi); its mean and spread are
    taken about the circular mean so a carrier near the zone edge is handled.
    """
    if not fld.is_lattice:
        raise DomainError("packet statistics need a lattice field")
    psi = fld.psi
    dens = (np.abs(psi) ** 2).sum(axis=0)
    total = dens.sum()
    if total == 0:
        raise DomainError("empty field")
    marginal = dens.sum(axis=1 - axis)
    pos = np.arange(marginal.size)
    centroid = float((pos * marginal).sum() / total)
    sigma_x = math.sqrt(max(float(((pos - centroid) ** 2 * marginal).sum() / total), 0.0))
    spec = np.abs(np.fft.fft(psi, axis=1 + axis)) ** 2
    power = spec.sum(axis=(0, 2 - axis))
    k = 2 * np.pi * np.fft.fftfreq(power.size)
    mean_dir = np.angle((power * np.exp(1j * k)).sum())
    dev = np.angle(np.exp(1j * (k - mean_dir)))
    p = power / power.sum()
    mu = (p * dev).sum()
    sigma_k = math.sqrt(max(float((p * (dev - mu) ** 2).sum()), 0.0))
    return PacketStats(sigma_x=sigma_x, sigma_k=sigma_k, centroid=centroid)


def audit_holographic(topology: Topology, lam: float = 8.0, samples: int = 20, seed: int = 0) -> bool:
    """Check that one tick only moves amplitude from a node into nodes that list it as a neighbour."""
    rng = np.random.default_rng(seed)
    w, h = topology.dims
    for _ in range(samples):
        x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
        photon = Photon(lam)
        fld = AmplitudeField(topology, photon)
        psi = np.zeros((topology.stencil, w, h), complex)
        psi[:, x, y] = rng.normal(size=topology.stencil) + 1j * rng.normal(size=topology.stencil)
        fld.set_psi(psi)
        step_lattice(fld)
        src = topology.node_id(x, y)
        hit_x, hit_y = np.nonzero(fld.density() > 0)
        for hx, hy in zip(hit_x, hit_y):
            node = topology.node_id(int(hx), int(hy))
            if node != src and src not in neighbors(topology, node):
                return False
    return True


def dump_field_csv(fld: AmplitudeField, handle, threshold: float = 0.0) -> int:
    """Append rows (tick, x, y, re, im, channel) for every channel amplitude above ``threshold``."""
    writer = csv.writer(handle, lineterminator="\n")
    psi = fld.psi
    c, xs, ys = np.nonzero(np.abs(psi) > threshold)
    for j, x, y in zip(c, xs, ys):
        a = psi[j, x, y]
        writer.writerow([fld.tick, int(x), int(y), repr(float(a.real)), repr(float(a.imag)), int(j)])
    return len(c)
