"""Unitary stencils for the lattice engine.

A lattice node holds one complex amplitude per direction channel.  One tick
gathers channel j from the neighbour one step behind DIRS[j] and then mixes
the gathered vector with a circulant coin C = F^-1 diag(exp(i*phi)) F.
Plane waves psi_j(x) = a_j exp(i k.x) evolve with the Bloch matrix
U(k) = C diag(exp(-i k.e_j)), whose eigenphases -omega(k) give the bands.

The coin eigenphases are free parameters.  ``design_coin`` chooses them so
the band through the source frequency has a circular constant-frequency
contour at k0 = 2*pi/lambda, i.e. the discrete medium is isotropic at the
working wavelength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import DomainError
from .grid import DIRS4, DIRS8
from .units import MIN_WAVELENGTH

# Tabulated 8-channel design for lambda = 8 (found by ``design_coin(8, 8)``).
TABLE = {
    (8.0, 8): dict(
        phases=(3.4586399894867492, 0.018347287390768074, 3.577518320329223, -3.5872530997815435),
        omega0=-2.3443252175641662,
        group_velocity=0.6937977516940919,
    ),
}

# Slit element output weights (1, a, a) on channels (0, 1, 7), fitted so the
# two-slit screen flux matches the isotropic two-source pattern at lambda = 8.
SLIT_WEIGHT = {8.0: 0.32425329 - 0.09065903j}

CONTOUR_ANGLES = np.linspace(0.0, math.pi / 4, 7)


def directions(stencil: int) -> np.ndarray:
    return np.array(DIRS8 if stencil == 8 else DIRS4, dtype=np.int64)


def full_phases(free, stencil: int) -> np.ndarray:
    """Expand the free eigenphases to a D4-symmetric set of ``stencil`` phases."""
    free = list(free)
    if stencil == 8:
        return np.array([0.0] + free + free[2::-1])
    return np.array([0.0, free[0], free[1], free[0]])


def circulant_coin(phases) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    d = len(phases)
    c = np.fft.ifft(np.exp(1j * phases))
    idx = (np.arange(d)[:, None] - np.arange(d)[None, :]) % d
    return c[idx]


def bloch(coin: np.ndarray, dirs: np.ndarray, kx, ky) -> np.ndarray:
    """Bloch matrices U(k); broadcasts over array-valued kx, ky."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    shift = np.exp(-1j * (dirs[:, 0] * kx[..., None] + dirs[:, 1] * ky[..., None]))
    return coin * shift[..., None, :]


def _wrap(a):
    return np.angle(np.exp(1j * np.asarray(a)))


def frequencies(coin, dirs, kx, ky) -> np.ndarray:
    return -np.angle(np.linalg.eigvals(bloch(coin, dirs, kx, ky)))


def track(coin, dirs, kx, ky, ref) -> float:
    w = frequencies(coin, dirs, kx, ky)
    return float(w[np.argmin(np.abs(_wrap(w - ref)))])


def _contour_error(coin, dirs, k0, w0) -> float:
    err = 0.0
    for a in CONTOUR_ANGLES[1:]:
        e = np.array([math.cos(a), math.sin(a)])
        r = brentq(lambda r: _wrap(track(coin, dirs, *(r * e), w0) - w0), 0.85 * k0, 1.15 * k0, xtol=1e-13)
        err = max(err, abs(r / k0 - 1.0))
    return err


def _group_velocity(coin, dirs, k0, w0, h=1e-6) -> float:
    return float(_wrap(track(coin, dirs, k0 + h, 0.0, w0) - track(coin, dirs, k0 - h, 0.0, w0)) / (2 * h))


def _best_band(free, stencil, k0):
    """(contour error, omega0, vg) of the most isotropic forward band, or None."""
    dirs = directions(stencil)
    coin = circulant_coin(full_phases(free, stencil))
    best = None
    for w0 in frequencies(coin, dirs, k0, 0.0):
        vg = _group_velocity(coin, dirs, k0, w0)
        if vg < 0.3:
            continue
        try:
            err = _contour_error(coin, dirs, k0, w0)
        except ValueError:
            continue
        if best is None or err < best[0]:
            best = (err, float(w0), vg)
    return best


def design_coin(lam: float, stencil: int = 8, start=None) -> dict:
    """Optimise free coin eigenphases for an isotropic band at k0 = 2*pi/lam."""
    k0 = 2 * math.pi / lam
    if start is None:
        start = (2.4667733792026274, 0.04933405851447725, 2.9267007318403353, -2.8390790930791945) \
            if stencil == 8 else (1.5, 3.0)

    def objective(p):
        best = _best_band(p, stencil, k0)
        return 1.0 if best is None else best[0]

    res = minimize(objective, np.asarray(start, float), method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-12, maxiter=800))
    err, w0, vg = _best_band(res.x, stencil, k0)
    return dict(phases=tuple(float(v) for v in res.x), omega0=w0, group_velocity=vg, contour_error=err)


@dataclass(frozen=True, eq=False)
class StencilDesign:
    lam: float
    stencil: int
    phases: tuple
    omega0: float
    group_velocity: float
    coin: np.ndarray = field(repr=False)
    dirs: np.ndarray = field(repr=False)

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.lam

    @property
    def channels(self) -> int:
        return len(self.dirs)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Coin eigenvalues divided by the channel count (the kernel's spectral weights)."""
        return np.exp(1j * full_phases(self.phases, self.stencil)) / self.channels

    def frequency(self, kx, ky=0.0) -> float:
        """Band frequency at (kx, ky), followed continuously from k0 along a straight path."""
        target = np.array([kx, ky], float)
        start = np.array([self.k0, 0.0])
        steps = max(2, int(np.ceil(np.linalg.norm(target - start) / 0.01)))
        w = self.omega0
        for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
            w = track(self.coin, self.dirs, *(start + s * (target - start)), w)
        return w

    def medium_phase(self, n: float) -> float:
        """Per-tick phase V that shifts the band so the source frequency has wavenumber n*k0."""
        if n == 1.0:
            return 0.0
        if not 1.0 <= n <= 2.5:
            raise DomainError(f"refractive index {n} outside the stencil's supported range [1, 2.5]")
        return float(_wrap(self.omega0 - self.frequency(n * self.k0)))

    @property
    def reference_vector(self) -> np.ndarray:
        return band_vectors(self, np.array([self.k0]), np.array([0.0]))[0]

    @property
    def forward(self) -> np.ndarray:
        return np.nonzero(self.dirs[:, 0] > 0)[0]

    @property
    def backward(self) -> np.ndarray:
        return np.nonzero(self.dirs[:, 0] < 0)[0]


def band_refraction_angle(design: StencilDesign, n: float, theta1: float, h: float = 1e-5) -> float:
    """Group direction (degrees) inside a medium of index ``n`` for a beam arriving from vacuum at ``theta1``.

    The tangential wavenumber is conserved across an interface normal to x;
    the normal component solves the medium's constant-frequency condition.
    """
    from scipy.optimize import brentq

    ky = design.k0 * math.sin(math.radians(theta1))
    target = design.frequency(n * design.k0)
    # the band frequency rises with |k|, so the root sits between a tiny kx and just past n k0
    kx = brentq(lambda q: _wrap(design.frequency(q, ky) - target), 0.05 * design.k0, min(1.3 * n * design.k0, 3.0))
    gx = (design.frequency(kx + h, ky) - design.frequency(kx - h, ky)) / (2 * h)
    gy = (design.frequency(kx, ky + h) - design.frequency(kx, ky - h)) / (2 * h)
    return math.degrees(math.atan2(gy, gx))


def band_vectors(design: StencilDesign, kx: np.ndarray, ky: np.ndarray, gauge=None) -> np.ndarray:
    """Unit eigenvectors of the working band at each (kx, ky), phase fixed against ``gauge``."""
    mats = bloch(design.coin, design.dirs, kx, ky)
    vals, vecs = np.linalg.eig(mats)
    w = -np.angle(vals)
    kr = np.hypot(kx, ky)
    guess = design.omega0 + design.group_velocity * (kr - design.k0)
    pick = np.argmin(np.abs(_wrap(w - guess[:, None])), axis=1)
    v = vecs[np.arange(len(kx)), :, pick]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if gauge is not None:
        overlap = v @ np.conj(gauge)
        v *= np.exp(-1j * np.angle(overlap))[:, None]
    return v


def band_project(design: StencilDesign, envelope: np.ndarray, direction=(1.0, 0.0),
                 radius: float = 0.6, floor: float = 1e-13) -> np.ndarray:
    """Spread a carrier-modulated scalar envelope onto the working band.

    The envelope is multiplied by exp(i k0 d.x), Fourier transformed, and
    every wavevector inside a disk of ``radius``*k0 around the carrier is
    given the band eigenvector of that k.  Returns (channels, nx, ny).
    """
    nx, ny = envelope.shape
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    x = np.arange(nx)[:, None]
    y = np.arange(ny)[None, :]
    spec = np.fft.fft2(envelope * np.exp(1j * design.k0 * (d[0] * x + d[1] * y)))
    kx = 2 * np.pi * np.fft.fftfreq(nx)
    ky = 2 * np.pi * np.fft.fftfreq(ny)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    amp = np.abs(spec)
    keep = (amp > floor * amp.max()) & (np.hypot(KX - design.k0 * d[0], KY - design.k0 * d[1]) < radius * design.k0)
    ii, jj = np.nonzero(keep)
    gauge = band_vectors(design, np.array([design.k0 * d[0]]), np.array([design.k0 * d[1]]))[0]
    out = np.zeros((design.channels, nx, ny), complex)
    chunk = 4096
    for s in range(0, len(ii), chunk):
        i, j = ii[s:s + chunk], jj[s:s + chunk]
        v = band_vectors(design, kx[i], ky[j], gauge)
        out[:, i, j] = (spec[i, j][:, None] * v).T
    return np.fft.ifft2(out, axes=(1, 2))


def forward_input(design: StencilDesign, length: int = 3000, barrier: int = 2500, width: float = 300.0) -> np.ndarray:
    """Gathered channel vector at a fully absorbing node hit by a +x plane wave (monochromatic part).

    A long quasi-monochromatic pulse runs along a translation-invariant strip;
    the barrier column is zeroed every tick and the gathered input there is
    demodulated at the source frequency.
    """
    v = design.reference_vector
    x = np.arange(length)
    sigma = width * design.group_velocity
    x0 = barrier - 6 * sigma
    psi = v[:, None] * np.exp(1j * design.k0 * x)[None, :] * np.exp(-(x - x0) ** 2 / (4 * sigma ** 2))[None, :]
    acc = np.zeros(design.channels, complex)
    fade = np.ones(length)
    fade[:50] = 0.9
    for t in range(int(12 * width)):
        g = np.empty_like(psi)
        for j, (dx, _) in enumerate(design.dirs):
            g[j] = np.roll(psi[j], dx)
        acc += g[:, barrier] * np.exp(1j * design.omega0 * t)
        psi = design.coin @ g
        psi[:, barrier] = 0
        psi *= fade
    return acc


@lru_cache(maxsize=None)
def _forward_input_cached(lam: float, stencil: int) -> tuple:
    return tuple(forward_input(get_design(lam, stencil)))


def _unit_map(g: np.ndarray, u: np.ndarray) -> np.ndarray:
    """A unitary taking unit vector g to unit vector u."""
    def basis(v):
        q, _ = np.linalg.qr(np.column_stack([v, np.eye(len(v))])[:, : len(v)])
        ov = np.vdot(q[:, 0], v)
        return q * (ov / abs(ov))

    return basis(u) @ basis(g).conj().T


def slit_matrices(design: StencilDesign, weight: complex | None = None):
    """Post-coin maps (M, B) for a one-node slit in a wall normal to x.

    The forward part of the gathered input is re-emitted through a 3x3
    unitary onto channels (0, 1, 7) with weights (1, a, a); the backward and
    transverse inputs are absorbed into the wall.  M is 8x8 (new node state),
    B is 5x8 (amplitudes sent to the wall's sink).
    """
    if design.stencil != 8:
        raise DomainError("designed slit elements exist only for the 8-channel stencil")
    a = SLIT_WEIGHT.get(float(design.lam), SLIT_WEIGHT[8.0]) if weight is None else weight
    fwd = [0, 1, 7]
    rest = [2, 3, 4, 5, 6]
    g = np.array(_forward_input_cached(float(design.lam), 8))[fwd]
    g /= np.linalg.norm(g)
    u = np.array([1.0, a, a])
    u /= np.linalg.norm(u)
    s3 = _unit_map(g, u)
    gather = design.coin.conj().T   # post-coin state -> gathered vector
    m = np.zeros((8, 8), complex)
    m[np.ix_(fwd, range(8))] = s3 @ gather[fwd, :]
    b = gather[rest, :]
    return m, b


@lru_cache(maxsize=None)
def get_design(lam: float, stencil: int = 8) -> StencilDesign:
    lam = float(lam)
    if lam < MIN_WAVELENGTH:
        raise DomainError(f"wavelength {lam} shorter than first light")
    if stencil not in (4, 8):
        raise DomainError(f"stencil must be 4 or 8, got {stencil}")
    spec = TABLE.get((lam, stencil)) or design_coin(lam, stencil)
    phases = tuple(spec["phases"])
    return StencilDesign(
        lam=lam, stencil=stencil, phases=phases, omega0=spec["omega0"],
        group_velocity=spec["group_velocity"],
        coin=circulant_coin(full_phases(phases, stencil)), dirs=directions(stencil),
    )


def contour_error(design: StencilDesign) -> float:
    """Max relative deviation of the k0 frequency contour from a circle."""
    return _contour_error(design.coin, design.dirs, design.k0, design.omega0)
