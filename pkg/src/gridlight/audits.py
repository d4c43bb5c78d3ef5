"""Invariant checks shared by ``gridlight audit`` and the property tests."""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grid
from .wavefield import AmplitudeField, Photon, audit_holographic, emit, run_lattice, step_lattice

ORDERING_SIZE = (64, 32)
ORDERING_TICKS = 240
DETECTOR_ROWS = ((0, 11), (11, 21), (21, 32))


@dataclass(frozen=True)
class OrderingTrial:
    media: tuple
    delay: int
    first: dict     # detector -> first-arrival tick of the earlier photon (None if never reached)
    second: dict

    @property
    def preserved(self) -> bool:
        for label, t1 in self.first.items():
            t2 = self.second[label]
            if t1 is None:
                if t2 is not None:
                    return False
            elif t2 is None or t2 < t1:
                return False
        return True


def random_media(rng: np.random.Generator, count: int | None = None) -> tuple:
    """A few random slabs with indices in [1, 2.5] between the source and the detectors."""
    w, h = ORDERING_SIZE
    count = int(rng.integers(1, 6)) if count is None else count
    regions = []
    for _ in range(count):
        x0 = int(rng.integers(8, w - 12))
        x1 = int(rng.integers(x0 + 1, w - 4))
        y0 = int(rng.integers(0, h - 1))
        y1 = int(rng.integers(y0 + 1, h + 1))
        n = round(float(rng.uniform(1.0, 2.5)), 3)
        regions.append(((x0, y0, x1, y1), n))
    return tuple(regions)


def ordering_topology(media) -> grid.Topology:
    w, h = ORDERING_SIZE
    masks = [((w - 4, y0, w - 2, y1), grid.detector(f"D{i}")) for i, (y0, y1) in enumerate(DETECTOR_ROWS)]
    return grid.build_lattice(w, h, media_regions=media, masks=masks, stencil=8)


def _arrivals(top, emitted_at: int, lam: float, until: int) -> dict:
    _, fld = emit(top, (6, ORDERING_SIZE[1] // 2), lam, envelope={"kind": "gaussian", "sigma": 2.0})
    fld.tick = emitted_at
    run_lattice(fld, until - emitted_at)
    return {f"D{i}": fld.arrivals.get(f"D{i}") for i in range(len(DETECTOR_ROWS))}


def ordering_trial(seed: int, lam: float = 8.0) -> OrderingTrial:
    """Emit two equal-wavelength photons Delta ticks apart through one random medium profile."""
    rng = np.random.default_rng(seed)
    media = random_media(rng)
    delay = int(rng.integers(1, 40))
    top = ordering_topology(media)
    first = _arrivals(top, 0, lam, ORDERING_TICKS)
    second = _arrivals(top, delay, lam, ORDERING_TICKS + delay)
    return OrderingTrial(media, delay, first, second)


def ordering_audit(profiles: int = 100, seed: int = 0) -> dict:
    trials = [ordering_trial(seed * 1_000_003 + i) for i in range(profiles)]
    bad = [i for i, t in enumerate(trials) if not t.preserved]
    reached = sum(1 for t in trials for v in t.first.values() if v is not None)
    return {"profiles": profiles, "detector_arrivals_checked": reached, "violations": bad, "passed": not bad}


def conservation_audit(ticks: int = 2000, seed: int = 0, lam: float = 8.0) -> dict:
    """Drift of field plus sinks on a lattice with media, a slit and an absorbing frame."""
    rng = np.random.default_rng(seed)
    w, h = 160, 120
    media = [((90, 0, 130, h), round(float(rng.uniform(1.0, 2.5)), 3))]
    masks = [((60, 0, 61, h), grid.slit_mask([(60, 50), (60, 70)]))]
    top = grid.build_lattice(w, h, media_regions=media, masks=masks, stencil=8, boundary=grid.Sponge(24))
    _, fld = emit(top, (40, 60), lam, envelope={"kind": "gaussian", "sigma": 6.0})
    worst = 0.0
    for _ in range(ticks // 50):
        run_lattice(fld, 50)
        worst = max(worst, abs(fld.drift))
    return {"ticks": fld.tick, "max_abs_drift": worst, "passed": worst < 1e-9}


def front_speed_audit(ticks: int = 30, lam: float = 8.0) -> dict:
    """Support radius of a single-node start may grow by at most one node per tick."""
    top = grid.build_lattice(2 * ticks + 5, 2 * ticks + 5, stencil=8)
    fld = AmplitudeField(top, Photon(lam))
    c = ticks + 2
    psi = np.zeros((8, *top.dims), complex)
    psi[:, c, c] = 1.0 / math.sqrt(8.0)
    fld.set_psi(psi)
    worst = 0
    for t in range(1, ticks + 1):
        step_lattice(fld)
        worst = max(worst, fld.support_radius((c, c)) - t)
    return {"ticks": ticks, "max_excess_radius": worst, "passed": worst <= 0}


def linearity_audit(seed: int = 0, lam: float = 8.0) -> dict:
    """step(a F1 + b F2) against a step(F1) + b step(F2) on random small fields."""
    rng = np.random.default_rng(seed)
    top = grid.build_lattice(24, 20, media_regions=[((12, 0, 18, 20), 1.7)],
                             masks=[((6, 0, 7, 20), grid.slit_mask([(6, 9)]))], stencil=8)

    def field(psi):
        fld = AmplitudeField(top, Photon(lam))
        fld.set_psi(psi)
        return fld

    shape = (8, *top.dims)
    p1 = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    p2 = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    combined = field(a * p1 + b * p2)
    f1, f2 = field(p1), field(p2)
    for fld in (combined, f1, f2):
        step_lattice(fld)
    err = float(np.max(np.abs(combined.psi - (a * f1.psi + b * f2.psi))))
    return {"max_abs_error": err, "passed": err < 1e-12}


def interference_audit(lam: float = 8.0) -> dict:
    """Two equal instances at a node: in phase gives 4x the single density, out of phase gives 0."""
    top = grid.build_lattice(8, 8, stencil=8)
    vec = np.exp(2j * np.pi * np.arange(8) / 8) / math.sqrt(8)
    out = {}
    for name, phase in (("in_phase", 0.0), ("out_of_phase", math.pi)):
        psi = np.zeros((8, 8, 8), complex)
        psi[:, 3, 3] = vec + vec * np.exp(1j * phase)
        fld = AmplitudeField(top, Photon(lam))
        fld.re[:, 1:-1, 1:-1] = psi.real
        fld.im[:, 1:-1, 1:-1] = psi.imag
        out[name] = float(fld.density()[3, 3])
    single = float((np.abs(vec) ** 2).sum())
    ok = abs(out["in_phase"] - 4 * single) < 1e-12 and out["out_of_phase"] < 1e-24
    return {"single": single, **out, "passed": ok}


def unitarity_audit() -> dict:
    elements = [grid.beam_splitter(), grid.mirror(), grid.phase_shifter(0.7), grid.polarizer(30.0), grid.source(),
                grid.detector("D"), grid.absorber("A")]
    defects = {el.kind: grid.unitarity_defect(el) for el in elements}
    return {"defects": defects, "passed": max(defects.values()) < 1e-12}


def holographic_audit(lam: float = 8.0) -> dict:
    tops = {
        "stencil4": grid.build_lattice(12, 10, stencil=4),
        "stencil8_media_slit": grid.build_lattice(16, 12, media_regions=[((8, 0, 12, 12), 1.5)],
                                                  masks=[((4, 0, 5, 12), grid.slit_mask([(4, 5)]))], stencil=8),
    }
    results = {name: audit_holographic(top, lam) for name, top in tops.items()}
    symmetric = {name: grid.adjacency_symmetric(top) for name, top in tops.items()}
    return {"input_from_neighbours": results, "adjacency_symmetric": symmetric,
            "passed": all(results.values()) and all(symmetric.values())}


def oracle_independence_audit() -> dict:
    """The reference module may not import the propagation or collapse code."""
    forbidden = {"wavefield", "kernels", "collapse", "stencil", "scenarios", "harness"}
    tree = ast.parse(Path(__file__).with_name("oracle.py").read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            names = [node.module or ""] + [a.name for a in node.names]
            imported.update(n.split(".")[-1] for n in names if n)
        elif isinstance(node, ast.Import):
            imported.update(a.name.split(".")[-1] for a in node.names)
    clash = sorted(imported & forbidden)
    return {"forbidden_imports": clash, "passed": not clash}


AUDITS = {
    "ordering": ordering_audit,
    "conservation": conservation_audit,
    "front_speed": front_speed_audit,
    "linearity": linearity_audit,
    "interference": interference_audit,
    "unitarity": unitarity_audit,
    "holographic": holographic_audit,
    "oracle_independence": oracle_independence_audit,
}


def run_all() -> dict:
    return {name: fn() for name, fn in AUDITS.items()}
