"""Independent references for every simulated quantity.

Nothing here imports the propagation engines or the collapse protocol; the
formulas are evaluated directly so a bug in the simulator cannot hide in
its own reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainError, ResourceError
from .grid import LATTICE, Topology

TWO_PI = 2.0 * math.pi


def _check_probability(name, p):
    if not (isinstance(p, (int, float, np.floating)) and 0.0 <= p <= 1.0):
        raise DomainError(f"{name} must be a probability in [0, 1], got {p!r}")


def two_path_probability(p1: float, p2: float, phi: float) -> float:
    """P1 + P2 + 2 sqrt(P1 P2) cos(phi), clamped to its physical range."""
    _check_probability("P1", p1)
    _check_probability("P2", p2)
    value = p1 + p2 + 2.0 * math.sqrt(p1 * p2) * math.cos(phi)
    return min(max(value, 0.0), (math.sqrt(p1) + math.sqrt(p2)) ** 2)


def no_interference_probability(p1: float, p2: float) -> float:
    _check_probability("P1", p1)
    _check_probability("P2", p2)
    if p1 + p2 > 1.0 + 1e-12:
        raise DomainError(f"P1 + P2 = {p1 + p2} exceeds 1")
    return p1 + p2


def mz_probabilities(bomb_on_path2: bool) -> dict:
    """Balanced Mach-Zehnder outcomes, traced amplitude by amplitude through both splitters."""
    t, r = 1.0 / math.sqrt(2.0), 1j / math.sqrt(2.0)
    # amplitudes reaching the second splitter along each arm (one mirror each)
    arm1 = t * 1j
    arm2 = 0.0 if bomb_on_path2 else r * 1j
    d2 = arm1 * t + arm2 * r
    d1 = arm1 * r + arm2 * t
    out = {"D1": abs(d1) ** 2, "D2": abs(d2) ** 2}
    if bomb_on_path2:
        out["bomb"] = abs(r) ** 2
    return out


def malus(delta_deg: float) -> float:
    """cos^2 of an angle in degrees, exact at multiples of 90."""
    return 0.5 * (1.0 + math.cos(math.radians(2.0 * delta_deg)))


def sequential_malus(angles, input_polarization: float | None = None) -> float:
    """Pass probability through polarizers at ``angles`` in order; None input means unpolarized."""
    angles = list(angles)
    if not angles:
        return 1.0
    p = 0.5 if input_polarization is None else malus(input_polarization - angles[0])
    for a, b in zip(angles, angles[1:]):
        p *= malus(b - a)
    return p


def snell_angle(theta1: float, n1: float, n2: float) -> float:
    if n1 <= 0 or n2 <= 0:
        raise DomainError("refractive indices must be positive")
    s = n1 * math.sin(math.radians(theta1)) / n2
    if abs(s) > 1.0:
        raise DomainError(f"total internal reflection: n1 sin(theta1)/n2 = {s:.6f} > 1")
    return math.degrees(math.asin(s))


def entangled_correlation(a: float, b: float) -> float:
    """E(a, b) of the sequential resolution protocol, summed over the two first-outcome cases.

    First analyzer: pass (+1) or absorb (-1) with probability 1/2 each, leaving
    the partner at a+90 or a+180; the second analyzer then passes with
    cos^2(partner - b).
    """
    e = 0.0
    for sign, partner in ((+1.0, a + 90.0), (-1.0, a + 180.0)):
        p_pass = malus(partner - b)
        e += 0.5 * sign * (p_pass - (1.0 - p_pass))
    return e


def entangled_joint(a: float, b: float) -> dict:
    """P(s1, s2) for analyzers a (measured first) and b, s = +1 pass / -1 absorbed, by case enumeration."""
    out = {}
    for s1, partner in ((+1, a + 90.0), (-1, a + 180.0)):
        p_pass = malus(partner - b)
        out[(s1, +1)] = 0.5 * p_pass
        out[(s1, -1)] = 0.5 * (1.0 - p_pass)
    return out


def chsh(a: float, a_prime: float, b: float, b_prime: float) -> float:
    E = entangled_correlation
    return abs(E(a, b) - E(a, b_prime) + E(a_prime, b) + E(a_prime, b_prime))


# ---------------------------------------------------------------------------
# two-slit pattern

def double_slit_pattern(d: float, L: float, lam: float, bins, *, slits: str = "both",
                        sigma_k: float = 0.0, envelope: str = "isotropic", sub: int = 64,
                        normalize: bool = True) -> np.ndarray:
    """Per-bin probability on a screen at distance L from two point slits separated by d.

    ``bins`` are ascending edges in screen coordinate y measured from the
    barrier midpoint.  Each slit contributes intensity A_j(y) = L / r_j^2
    (``envelope="isotropic"``: a point source in the plane, obliquity and
    1/r spreading) or 1 (``envelope="none"``); the two-path formula joins
    them with phase 2 pi (r1 - r2)/lam, damped by exp(-sigma_k^2 dr^2 / 2)
    for a packet of wavenumber spread ``sigma_k``.  ``slits`` selects
    "both", "upper" (+d/2), "lower" (-d/2) or "incoherent" (P1 + P2).
    With ``normalize=False`` the raw per-bin intensities are returned.
    """
    edges = np.asarray(bins, float)
    if d <= 0 or L <= 0 or lam <= 0:
        raise DomainError("slit separation, distance and wavelength must be positive")
    if L < d:
        raise DomainError(f"screen distance {L} is inside the near field of slits {d} apart")
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("bins must be at least two strictly ascending edges")
    if slits not in ("both", "upper", "lower", "incoherent"):
        raise DomainError(f"unknown slit selection {slits!r}")
    lo, hi = edges[:-1], edges[1:]
    frac = (np.arange(sub) + 0.5) / sub
    y = lo[:, None] + frac[None, :] * (hi - lo)[:, None]
    r1 = np.hypot(L, y - d / 2.0)
    r2 = np.hypot(L, y + d / 2.0)
    if envelope == "isotropic":
        a1, a2 = L / r1 ** 2, L / r2 ** 2
    elif envelope == "none":
        a1 = a2 = np.ones_like(y)
    else:
        raise DomainError(f"unknown envelope {envelope!r}")
    dr = r1 - r2
    if slits == "upper":
        inten = a1
    elif slits == "lower":
        inten = a2
    elif slits == "incoherent":
        inten = a1 + a2
    else:
        cross = 2.0 * np.sqrt(a1 * a2) * np.cos(TWO_PI * dr / lam) * np.exp(-0.5 * sigma_k ** 2 * dr ** 2)
        inten = a1 + a2 + cross
    per_bin = inten.mean(axis=1) * (hi - lo)
    total = per_bin.sum()
    if total <= 0:
        raise DomainError("degenerate geometry: no intensity in any bin")
    return per_bin / total if normalize else per_bin


def which_way_pattern(d: float, L: float, lam: float, bins, **kw) -> tuple[np.ndarray, np.ndarray]:
    """Joint probability of (slit, bin) when each passage is recorded at its slit.

    Rows are the upper and lower slit; together they sum to one.  Their
    bin-wise sum is the no-interference pattern P1 + P2.
    """
    upper = double_slit_pattern(d, L, lam, bins, slits="upper", normalize=False, **kw)
    lower = double_slit_pattern(d, L, lam, bins, slits="lower", normalize=False, **kw)
    total = upper.sum() + lower.sum()
    return upper / total, lower / total


def fringe_extrema(p: np.ndarray) -> tuple[list[int], list[int]]:
    """Interior local maxima and minima (bin indices) of a per-bin distribution."""
    p = np.asarray(p, float)
    maxima = [i for i in range(1, len(p) - 1) if p[i] > p[i - 1] and p[i] >= p[i + 1]]
    minima = [i for i in range(1, len(p) - 1) if p[i] < p[i - 1] and p[i] <= p[i + 1]]
    return maxima, minima


def gaussian_bins(edges, centre: float, sigma: float) -> np.ndarray:
    """Normal-distribution mass per bin (normalised over the bins)."""
    from scipy.stats import norm

    cdf = norm.cdf((np.asarray(edges, float) - centre) / sigma)
    p = np.diff(cdf)
    return p / p.sum()


def beam_width(sigma0: float, distance: float, lam: float) -> float:
    """Paraxial spread of |psi|^2 for a Gaussian beam with waist ``sigma0`` after ``distance``."""
    if sigma0 <= 0 or distance < 0 or lam <= 0:
        raise DomainError("beam waist, distance and wavelength must be positive")
    k = TWO_PI / lam
    return math.hypot(sigma0, distance / (2.0 * k * sigma0))


def gaussian_beam_bins(edges, centre: float, sigma0: float, distance: float, lam: float,
                       theta: float = 0.0) -> np.ndarray:
    """Screen distribution of a straight Gaussian beam crossing a screen normal to x at angle ``theta``.

    ``distance`` is measured along x; the beam travels distance/cos(theta)
    and its transverse width is stretched by 1/cos(theta) on the screen.
    """
    c = math.cos(math.radians(theta))
    if c <= 0:
        raise DomainError("beam must travel towards the screen")
    return gaussian_bins(edges, centre, beam_width(sigma0, distance / c, lam) / c)


# ---------------------------------------------------------------------------
# sum over histories

RESTRICTION = ("paths run monotonically forward in x through waypoint planes and are straight between "
               "waypoints; total geometric length is bounded by max_path_length, which bounds the "
               "transverse excursion (stationary phase is dominated by near-direct paths)")


@dataclass
class PathSumResult:
    amplitude: complex
    path_count: int
    dominant_path: list
    least_time_path: list = field(default_factory=list)
    restriction: str = RESTRICTION


def _waypoint_groups(topology: Topology, src, dst, planes) -> list[np.ndarray]:
    """Waypoint node sets between source and target, in path order, each an (m, 2) array of (x, y)."""
    w, h = topology.dims
    (xs, _), (xt, _) = src, dst
    blocking = np.zeros((w, h), bool)
    mirror_nodes = []
    slit_columns = {}
    for rect, el in topology.masks:
        if el.kind in ("absorber", "detector", "screen"):
            blocking[rect.slices()] = True
        elif el.kind == "slit_mask":
            blocking[rect.slices()] = True
            for x, y in el.open_slits:
                slit_columns.setdefault(x, []).append((x, y))
        elif el.kind == "mirror":
            mirror_nodes.extend(rect.nodes())
    ys = np.arange(h)
    if mirror_nodes:
        return [np.array(mirror_nodes)]
    columns = set(c for c in slit_columns if xs < c < xt)
    medium = topology.medium_grid
    for x in range(xs + 1, xt):
        if np.any(medium[x] != medium[x - 1]):
            columns.add(x)
    for i in range(1, planes + 1):
        columns.add(xs + round(i * (xt - xs) / (planes + 1)))
    groups = []
    for x in sorted(c for c in columns if xs < c < xt):
        if x in slit_columns:
            groups.append(np.array(slit_columns[x]))
        else:
            open_y = ys[~blocking[x]]
            groups.append(np.column_stack([np.full(len(open_y), x), open_y]))
    return groups


def _optical_lengths(topology: Topology, a: np.ndarray, b: np.ndarray, step: float = 0.1) -> np.ndarray:
    """Optical length of straight segments from each node in ``a`` (m, 2) to each node in ``b`` (k, 2).

    Media that depend on x alone use exact column overlaps (a node owns
    [x - 1/2, x + 1/2)); general media are sampled every ``step`` nodes.
    """
    medium = topology.medium_grid
    w, h = topology.dims
    diff = b[None, :, :].astype(float) - a[:, None, :].astype(float)
    length = np.hypot(diff[..., 0], diff[..., 1])
    x_lo = int(min(a[:, 0].min(), b[:, 0].min()))
    x_hi = int(max(a[:, 0].max(), b[:, 0].max()))
    region = medium[x_lo:x_hi + 1]
    if np.all(region == region.flat[0]):
        return region.flat[0] * length
    if np.all(region == region[:, :1]) and np.all(diff[..., 0] != 0):
        col_n = region[:, 0]
        # cumulative optical thickness along x with node cells [x-1/2, x+1/2)
        cum = np.concatenate([[0.0], np.cumsum(col_n)])

        def thickness(x):   # integral of n from x_lo - 1/2 to x
            u = np.clip(x - (x_lo - 0.5), 0.0, len(col_n))
            i = np.minimum(np.floor(u).astype(int), len(col_n) - 1)
            return cum[i] + (u - i) * col_n[i]

        xa = np.broadcast_to(a[:, None, 0].astype(float), length.shape)
        xb = np.broadcast_to(b[None, :, 0].astype(float), length.shape)
        mean_n = (thickness(xb) - thickness(xa)) / (xb - xa)
        return mean_n * length
    m = max(2, int(math.ceil(length.max() / step)))
    t = (np.arange(m) + 0.5) / m
    out = np.empty_like(length)
    for i in range(a.shape[0]):
        px = np.clip(np.rint(a[i, 0] + t[None, :] * diff[i, :, 0][:, None]).astype(int), 0, w - 1)
        py = np.clip(np.rint(a[i, 1] + t[None, :] * diff[i, :, 1][:, None]).astype(int), 0, h - 1)
        out[i] = medium[px, py].mean(axis=1) * length[i]
    return out


def path_sum(topology: Topology, source, target, lam: float, max_path_length: float, *,
             planes: int = 1, max_paths: int = 10_000_000, window: int | None = None) -> PathSumResult:
    """Sum exp(i 2 pi OPL / lam) over every waypoint path from ``source`` to ``target``.

    Waypoint planes are medium interfaces, slit openings, a mirror (which
    replaces the planes), and ``planes`` evenly spaced free columns.  The
    dominant path maximises the coherent sum over its neighbourhood of
    width ``window`` in waypoint-index space (stationary phase); the least
    optical length path is reported alongside for comparison.
    """
    if topology.kind != LATTICE:
        raise DomainError("path_sum needs a lattice topology")
    if lam <= 0:
        raise DomainError("wavelength must be positive")
    src = np.array(topology.coords(topology._check_node(source)))
    dst = np.array(topology.coords(topology._check_node(target)))
    if dst[0] <= src[0]:
        raise DomainError("target must lie at larger x than the source (paths run forward)")
    groups = _waypoint_groups(topology, tuple(src), tuple(dst), planes)
    bound = float(max_path_length) * (1 + 1e-12) + 1e-9
    to_target = [np.hypot(*(dst - g).T) for g in groups]

    # breadth-first extension with pruning: partial length + straight remainder <= bound
    idx = np.zeros((1, 0), dtype=np.int64)
    last = src[None, :]
    partial = np.zeros(1)
    opl = np.zeros(1)
    for gi, g in enumerate(groups):
        seg = np.hypot(g[None, :, 0] - last[:, None, 0], g[None, :, 1] - last[:, None, 1])
        total = partial[:, None] + seg + to_target[gi][None, :]
        keep_p, keep_g = np.nonzero(total <= bound)
        if len(keep_p) > max_paths:
            raise ResourceError(f"{len(keep_p)} partial paths exceed max_paths={max_paths}")
        prev_nodes = groups[gi - 1][idx[:, -1]] if gi else src[None, :]
        seg_opl = _segment_opl(topology, prev_nodes, g, keep_p, keep_g, gi == 0)
        idx = np.column_stack([idx[keep_p], keep_g])
        partial = partial[keep_p] + seg[keep_p, keep_g]
        opl = opl[keep_p] + seg_opl
        last = g[keep_g]
    final = np.hypot(*(dst[None, :] - last).T)
    keep = partial + final <= bound
    idx, opl, last = idx[keep], opl[keep], last[keep]
    if len(opl) == 0:
        return PathSumResult(0j, 0, [], [])
    opl = opl + _final_opl(topology, last, dst)
    phase = np.exp(1j * TWO_PI * opl / lam)
    amplitude = complex(phase.sum())

    def as_nodes(row):
        pts = [tuple(src)] + [tuple(groups[j][row[j]]) for j in range(len(groups))] + [tuple(dst)]
        return [(int(x), int(y)) for x, y in pts]

    least = as_nodes(idx[int(np.argmin(opl))]) if len(groups) else as_nodes([])
    if not len(groups):
        return PathSumResult(amplitude, 1, least, least)
    dominant = as_nodes(_stationary_index(idx, phase, groups, window, lam, topology, src, dst))
    return PathSumResult(amplitude, int(len(opl)), dominant, least)


def _segment_opl(topology, prev_nodes, g, keep_p, keep_g, first):
    """Optical lengths of the kept (previous waypoint -> new waypoint) segments."""
    if first:
        return _optical_lengths(topology, prev_nodes, g)[0, keep_g]
    uniq, inv = np.unique(prev_nodes, axis=0, return_inverse=True)
    table = _optical_lengths(topology, uniq, g)
    return table[inv.reshape(-1)[keep_p], keep_g]


def _final_opl(topology, last, dst):
    uniq, inv = np.unique(last, axis=0, return_inverse=True)
    return _optical_lengths(topology, uniq, dst[None, :])[:, 0][inv.reshape(-1)]


def _stationary_index(idx, phase, groups, window, lam, topology, src, dst):
    """Waypoint indices whose neighbourhood sum of unit phasors is largest."""
    lo = idx.min(axis=0)
    shape = tuple(idx.max(axis=0) - lo + 1)
    dense = np.zeros(shape, complex)
    dense[tuple((idx - lo).T)] = phase
    if window is None:
        # a fraction of the first Fresnel zone at the middle of the route
        span = float(np.hypot(*(dst - src)))
        window = max(3, int(round(0.5 * math.sqrt(lam * span / 4.0))))
    size = tuple(min(window, s) for s in shape)
    local = ndimage.uniform_filter(dense.real, size=size, mode="constant") + \
        1j * ndimage.uniform_filter(dense.imag, size=size, mode="constant")
    mag = np.abs(local)
    present = np.zeros(shape, bool)
    present[tuple((idx - lo).T)] = True
    mag[~present] = -1.0
    best = np.unravel_index(int(np.argmax(mag)), shape)
    return np.asarray(best) + lo
