"""Turning amplitude into events: the reboot lottery, polarization and spin
measurement, and entangled pairs sharing one program."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, NotReadyError, StateError
from .rng import as_uniform_source
from .units import UNITS
from .wavefield import SPREADING, AmplitudeField, Photon, pass_probability

READY_THRESHOLD = 1e-9
NORM_TOLERANCE = 1e-9
PASS = "pass"
ABSORBED = "absorbed"


@dataclass(frozen=True)
class CollapseEvent:
    tick: int | None
    site: object
    entity: int | None
    outcome: object
    shot: int = 0

    def as_record(self) -> dict:
        """JSON-ready record with the log's key order."""
        return {"shot": self.shot, "tick": self.tick, "site": self.site, "outcome": self.outcome}


def screen_bin_labels(label: str, bins) -> list[str]:
    return [f"{label}[{i}]" for i in range(len(bins) - 1)]


def detection_probabilities(fld: AmplitudeField, sinks=None) -> dict:
    """Outcome probabilities from a finished field: sink masses, with screens split per bin.

    A screen's mass is shared among its bins in proportion to the net flux
    tallied inside each bin; flux outside the bin range goes to
    ``<screen>[outside]``.  ``sinks`` restricts the report to those labels
    (the remainder is then reported as ``other``).
    """
    remaining = fld.norm()
    if remaining >= READY_THRESHOLD:
        raise NotReadyError(f"field still holds {remaining:.3e} probability; propagate until absorbed")
    masses = dict(fld.sinks)
    out: dict = {}
    screens = {}
    if fld.is_lattice:
        from .wavefield import lattice_engine

        screens = {s.label: s for s in lattice_engine(fld.topology, fld.lam).screens}
    for label, mass in masses.items():
        scr = screens.get(label)
        flux = fld.screens.get(label)
        if scr is None or flux is None or not scr.bins:
            out[label] = mass
            continue
        out.update(_split_screen(label, mass, np.clip(flux, 0.0, None), scr.bins))
    if sinks is not None:
        wanted = set(sinks)
        kept = {k: v for k, v in out.items() if k in wanted or k.split("[")[0] in wanted}
        rest = sum(out.values()) - sum(kept.values())
        if rest:
            kept["other"] = rest
        out = kept
    total = sum(out.values())
    if abs(total - 1.0) > NORM_TOLERANCE:
        raise NotReadyError(f"outcome masses sum to {total:.12f}, not 1")
    return out


def _split_screen(label, mass, flux, bins) -> dict:
    """Share ``mass`` over bin edges (in node coordinates; a node y covers [y-0.5, y+0.5))."""
    y = np.arange(len(flux))
    edges = np.asarray(bins, float)
    per_bin = np.zeros(len(edges) - 1)
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        # fractional overlap of each node's unit cell with [lo, hi)
        cover = np.clip(np.minimum(y + 0.5, hi) - np.maximum(y - 0.5, lo), 0.0, 1.0)
        per_bin[i] = float((flux * cover).sum())
    total = float(flux.sum())
    out = {}
    if total <= 0.0:
        out[f"{label}[outside]"] = mass
        return out
    for name, f in zip(screen_bin_labels(label, bins), per_bin):
        out[name] = mass * f / total
    outside = mass * (total - per_bin.sum()) / total
    if outside > 0:
        out[f"{label}[outside]"] = outside
    return out


def born_probabilities(amplitudes: Mapping) -> dict:
    """Normalised |psi|^2 weights from raw outcome amplitudes."""
    weights = {k: abs(complex(a)) ** 2 for k, a in amplitudes.items()}
    total = sum(weights.values())
    if total <= 0:
        raise DomainError("all amplitudes are zero")
    return {k: w / total for k, w in weights.items()}


def _check_distribution(probabilities: Mapping) -> None:
    if not probabilities:
        raise DomainError("empty outcome distribution")
    values = np.array(list(probabilities.values()), float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("probabilities must be finite and non-negative")
    if abs(values.sum() - 1.0) > NORM_TOLERANCE:
        raise DomainError(f"probabilities sum to {values.sum():.12f}, not 1")


def choose(probabilities: Mapping, u: float):
    """Outcome whose cumulative interval (in mapping order) contains ``u``."""
    acc = 0.0
    last = None
    for key, p in probabilities.items():
        if p <= 0:
            continue
        acc += p
        last = key
        if u < acc:
            return key
    return last


def lottery_indices(weights, u) -> np.ndarray:
    """Vectorised ``choose``: index of the cumulative interval holding each uniform."""
    p = np.asarray(weights, float)
    live = np.nonzero(p > 0)[0]
    if len(live) == 0:
        raise DomainError("all outcome weights are zero")
    cum = np.cumsum(np.where(p > 0, p, 0.0))
    idx = np.searchsorted(cum, np.asarray(u, float), side="right")
    # rounding can leave u just above the last cumulative value
    return np.minimum(idx, live[-1])


def reboot_lottery(probabilities: Mapping, rng, *, photon: Photon | None = None, fld: AmplitudeField | None = None,
                   shot: int = 0) -> CollapseEvent:
    """Draw the single site where the program restarts.

    With ``photon`` the lifecycle is advanced: it collapses at the winning
    site and adopts the field's polarization tag.
    """
    _check_distribution(probabilities)
    site = choose(probabilities, as_uniform_source(rng)())
    tick = fld.tick if fld is not None else None
    if photon is not None:
        if fld is not None and fld.polarization is not None:
            photon.polarization = fld.polarization
        photon.collapse(site, tick)
    return CollapseEvent(tick=tick, site=site, entity=photon.id if photon else None, outcome={"hit": site}, shot=shot)


def measure_polarization(photon: Photon, analyzer_angle: float, rng, *, tick: int | None = None) -> str:
    """All-or-nothing analyzer: pass with cos^2 of the angle difference, else absorbed."""
    if photon.status != SPREADING:
        raise StateError(f"photon {photon.id} is {photon.status}")
    if photon.polarization is None:
        raise StateError(f"photon {photon.id} has no definite polarization")
    p = pass_probability(photon.polarization - analyzer_angle)
    if as_uniform_source(rng)() < p:
        photon.polarization = float(analyzer_angle) % 180.0
        return PASS
    photon.absorb(f"analyzer@{float(analyzer_angle) % 180.0:g}", tick)
    return ABSORBED


def measure_spin(photon: Photon, axis: float, rng, p_up: float = 0.5) -> float:
    """Spin along ``axis``: always magnitude hbar, sign drawn fresh each time."""
    if photon.status not in (SPREADING, "collapsed"):
        raise StateError(f"photon {photon.id} is {photon.status}")
    if not 0.0 <= p_up <= 1.0:
        raise DomainError("p_up must lie in [0, 1]")
    return UNITS.hbar if as_uniform_source(rng)() < p_up else -UNITS.hbar


CLOCKWISE = +1
ANTICLOCKWISE = -1


@dataclass
class EntangledPair:
    """Two photons running one program whose pool holds both spin instruction sets."""

    program: dict
    branches: tuple[Photon, Photon]
    source: object = None
    resolved: tuple | None = None
    outcomes: tuple | None = field(default=None, repr=False)

    @property
    def net_spin(self) -> int:
        return sum(sense * count for sense, count in self.program.items())

    def carries_both(self, branch: int) -> bool:
        return self.resolved is None and self.branches[branch].polarization is None and set(self.program) == {
            CLOCKWISE, ANTICLOCKWISE}


def merge_entangled(source_node, lam: float) -> EntangledPair:
    a = Photon(lam, None, birth=(source_node, 0))
    b = Photon(lam, None, birth=(source_node, 0))
    return EntangledPair(program={CLOCKWISE: 1, ANTICLOCKWISE: 1}, branches=(a, b), source=source_node)


def resolve_outcomes(first_angle, second_angle, u1, u2):
    """Vectorised resolution protocol on uniforms: returns (first_pass, second_pass) booleans.

    The first analyzer passes with probability 1/2; that fixes the first
    branch at the analyzer angle (pass) or perpendicular to it (absorbed),
    the partner takes the orthogonal state, and the second analyzer then
    follows Malus against it.
    """
    first_pass = np.asarray(u1) < 0.5
    first_state = np.asarray(first_angle, float) + np.where(first_pass, 0.0, 90.0)
    partner_state = first_state + 90.0
    delta = np.radians(2.0 * (partner_state - np.asarray(second_angle, float)))
    second_pass = np.asarray(u2) < 0.5 * (1.0 + np.cos(delta))
    return first_pass, second_pass


def resolve_entangled(pair: EntangledPair, first, second, rng, *, tick: int | None = None) -> tuple[str, str]:
    """Measure both branches, ``first`` = (branch, analyzer angle) before ``second``."""
    if pair.resolved is not None:
        raise StateError("entangled pair already resolved")
    (b1, a1), (b2, a2) = first, second
    if {b1, b2} != {0, 1}:
        raise DomainError("the two measurements must address distinct branches 0 and 1")
    draw = as_uniform_source(rng)
    p1, p2 = resolve_outcomes(a1, a2, draw(), draw())
    o1 = PASS if p1 else ABSORBED
    o2 = PASS if p2 else ABSORBED
    first_photon, second_photon = pair.branches[b1], pair.branches[b2]
    first_photon.polarization = (float(a1) + (0.0 if p1 else 90.0)) % 180.0
    second_photon.polarization = (first_photon.polarization + 90.0) % 180.0
    pair.resolved = (b1, o1)
    pair.outcomes = (o1, o2)
    for photon, angle, outcome in ((first_photon, a1, o1), (second_photon, a2, o2)):
        site = f"analyzer@{float(angle) % 180.0:g}"
        if outcome == PASS:
            photon.polarization = float(angle) % 180.0
            photon.collapse(site, tick)
        else:
            photon.absorb(site, tick)
    return o1, o2


def correlation(first_pass, second_pass) -> float:
    """E = <s1 s2> with pass = +1 and absorbed = -1."""
    s1 = np.where(first_pass, 1.0, -1.0)
    s2 = np.where(second_pass, 1.0, -1.0)
    return float(np.mean(s1 * s2))


__all__ = [
    "CollapseEvent", "EntangledPair", "detection_probabilities", "reboot_lottery", "measure_polarization",
    "measure_spin", "merge_entangled", "resolve_entangled", "resolve_outcomes", "born_probabilities",
    "correlation", "choose", "lottery_indices", "screen_bin_labels", "PASS", "ABSORBED",
]
