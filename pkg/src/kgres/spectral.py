"""Periodic-grid substrate: transforms, Littlewood-Paley projectors, norms.

Fields live on the box ``[-L, L)^d`` sampled at ``n`` points per axis.
Wavenumbers are ``k = pi * m / L`` for integer mode indices
``m in [-n/2, n/2)``.  Real fields are transformed with ``rfftn`` for all
internal work; :func:`forward_transform` exposes the full complex spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import BlowupFlagError, UsageError

__all__ = [
    "SpectralGrid",
    "FieldState",
    "ProjectorSpec",
    "NormReport",
    "admissible_exponent_bound",
    "check_admissible",
    "forward_transform",
    "inverse_transform",
    "transfer_function",
    "apply_projector",
    "gradient",
    "norms",
    "h1_norm",
    "energy",
    "local_energy_density",
    "translate",
    "periodic_displacement",
    "distance_field",
]


def admissible_exponent_bound(d: int) -> float:
    """Upper end of the admissible exponent range for dimension ``d``."""
    if d in (1, 2):
        return math.inf
    if d in (3, 4):
        return 1.0 + 4.0 / (d - 2)
    raise UsageError(f"dimension {d} is not supported")


def check_admissible(p: float, d: int) -> None:
    bound = admissible_exponent_bound(d)
    if not (p > 1.0 and p < bound):
        raise UsageError(
            f"exponent p={p} is not admissible in d={d}: need 1 < p < {bound}"
        )


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on ``[-L, L)^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 to 3.
    n : int
        Points per axis, a power of two no smaller than 16.
    L : float
        Box half-length.
    dealias_fraction : float
        Fraction of the Nyquist index kept by the dealiasing mask.
    """

    d: int
    n: int
    L: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise UsageError(f"dimension must be 1, 2 or 3, got {self.d}")
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise UsageError(f"n must be a power of two >= 16, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise UsageError(f"box half-length must be positive, got {self.L}")
        if not (0 < self.dealias_fraction <= 1):
            raise UsageError("dealias_fraction must lie in (0, 1]")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def box_length(self) -> float:
        return 2.0 * self.L

    @property
    def nyquist(self) -> float:
        """Largest per-axis wavenumber magnitude, ``pi n / (2 L)``."""
        return math.pi * (self.n // 2) / self.L

    @property
    def k_max(self) -> float:
        """Largest ``|k|`` on the grid (the corner mode)."""
        return math.sqrt(self.d) * self.nyquist

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple:
        """Coordinate arrays, one per axis, each of full grid shape."""
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    @cached_property
    def mode_index(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    def _broadcast(self, rfft: bool) -> tuple:
        m_full = self.mode_index
        m_last = np.fft.rfftfreq(self.n, 1.0 / self.n) if rfft else m_full
        out = []
        for a in range(self.d):
            m = m_last if a == self.d - 1 else m_full
            shp = [1] * self.d
            shp[a] = m.size
            out.append(m.reshape(shp))
        return tuple(out)

    @cached_property
    def modes(self) -> tuple:
        """Integer mode indices broadcast over the full ``fftn`` layout."""
        return self._broadcast(rfft=False)

    @cached_property
    def rmodes(self) -> tuple:
        """Integer mode indices broadcast over the ``rfftn`` layout."""
        return self._broadcast(rfft=True)

    @cached_property
    def wavenumbers(self) -> tuple:
        return tuple(np.pi * m / self.L for m in self.modes)

    @cached_property
    def rwavenumbers(self) -> tuple:
        return tuple(np.pi * m / self.L for m in self.rmodes)

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers)

    @cached_property
    def rksq(self) -> np.ndarray:
        out = sum(k * k for k in self.rwavenumbers)
        return np.broadcast_to(out, self.rshape).copy()

    @property
    def rshape(self) -> tuple:
        return self.shape[:-1] + (self.n // 2 + 1,)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean rfft-layout mask of retained modes; Nyquist always dropped."""
        cut = self.dealias_fraction * (self.n // 2)
        keep = np.ones(self.rshape, dtype=bool)
        for m in self.rmodes:
            keep &= (np.abs(m) < cut) & (np.abs(m) != self.n // 2)
        return keep

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """rfft-layout mask that drops only the unpaired Nyquist modes."""
        keep = np.ones(self.rshape, dtype=bool)
        for m in self.rmodes:
            keep &= np.abs(m) != self.n // 2
        return keep

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Weights turning ``sum(w |rfftn(f)|^2)`` into the grid L2 norm squared."""
        w = np.full(self.rshape, 2.0)
        last = [slice(None)] * self.d
        last[-1] = 0
        w[tuple(last)] = 1.0
        last[-1] = self.n // 2
        w[tuple(last)] = 1.0
        return w * self.cell_volume / float(self.n ** self.d)

    def rfft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f)

    def irfft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.shape, axes=tuple(range(self.d)))

    def check_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise UsageError(
                f"field shape {f.shape} does not match grid shape {self.shape}"
            )
        return f

    def quadrature(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell_volume)


@dataclass(frozen=True, eq=False)
class FieldState:
    """A point ``(u, u_t)`` of the energy space at time ``t``."""

    grid: SpectralGrid
    u: np.ndarray
    ut: np.ndarray
    t: float = 0.0
    p: float = 3.0
    alpha: float = 0.0
    blown_up: bool = False

    def __post_init__(self):
        u = self.grid.check_field(self.u)
        ut = self.grid.check_field(self.ut)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ut", ut)
        if self.t < 0:
            raise UsageError(f"time must be nonnegative, got {self.t}")
        if self.alpha < 0:
            raise UsageError(f"damping must be nonnegative, got {self.alpha}")
        check_admissible(self.p, self.grid.d)
        if not self.blown_up and not (
            np.all(np.isfinite(u)) and np.all(np.isfinite(ut))
        ):
            raise BlowupFlagError("state has non-finite samples")

    @classmethod
    def zeros(cls, grid: SpectralGrid, **kw) -> "FieldState":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape), **kw)

    def replace(self, **kw) -> "FieldState":
        args = dict(
            grid=self.grid, u=self.u, ut=self.ut, t=self.t, p=self.p,
            alpha=self.alpha, blown_up=self.blown_up,
        )
        args.update(kw)
        return FieldState(**args)


@dataclass(frozen=True)
class ProjectorSpec:
    """Littlewood-Paley multiplier description.

    ``kind`` is ``"low"``, ``"high"`` or ``"band"``.  Smooth multipliers
    switch over one octave in ``log2|k|``: ``low(N)`` is 1 for
    ``|k| <= N/2`` and 0 for ``|k| >= N``.  ``band(N) = low(2N) - low(N)``.
    """

    cutoff: float
    kind: str = "low"
    sharp: bool = False

    def __post_init__(self):
        if not (self.cutoff > 0 and math.isfinite(self.cutoff)):
            raise UsageError(f"cutoff must be positive, got {self.cutoff}")
        if self.kind not in ("low", "high", "band"):
            raise UsageError(f"unknown projector kind {self.kind!r}")


@dataclass(frozen=True)
class NormReport:
    l2_u: float
    h1_u: float
    l2_ut: float
    linf_u: float
    H_norm: float

    def as_dict(self) -> dict:
        return dict(
            l2_u=self.l2_u, h1_u=self.h1_u, l2_ut=self.l2_ut,
            linf_u=self.linf_u, H_norm=self.H_norm,
        )


def forward_transform(grid: SpectralGrid, f) -> np.ndarray:
    """Full complex DFT of a real grid field (numpy normalisation)."""
    return np.fft.fftn(grid.check_field(f))


def inverse_transform(grid: SpectralGrid, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if coeffs.shape != grid.shape:
        raise UsageError(
            f"coefficient shape {coeffs.shape} does not match {grid.shape}"
        )
    return np.fft.ifftn(coeffs).real


def _low(kabs: np.ndarray, cutoff: float, sharp: bool) -> np.ndarray:
    if sharp:
        return (kabs < cutoff).astype(float)
    with np.errstate(divide="ignore"):
        s = np.log2(kabs / cutoff)
    ramp = np.cos(0.5 * np.pi * (np.clip(s, -1.0, 0.0) + 1.0)) ** 2
    return np.where(s <= -1.0, 1.0, np.where(s >= 0.0, 0.0, ramp))


def transfer_function(spec: ProjectorSpec, kabs: np.ndarray) -> np.ndarray:
    """Multiplier values of ``spec`` at wavenumber magnitudes ``kabs``."""
    kabs = np.asarray(kabs, dtype=float)
    if spec.kind == "low":
        return _low(kabs, spec.cutoff, spec.sharp)
    if spec.kind == "high":
        return 1.0 - _low(kabs, spec.cutoff, spec.sharp)
    return _low(kabs, 2.0 * spec.cutoff, spec.sharp) - _low(
        kabs, spec.cutoff, spec.sharp
    )


def _filter(grid: SpectralGrid, f: np.ndarray, spec: ProjectorSpec) -> np.ndarray:
    mult = transfer_function(spec, np.sqrt(grid.rksq))
    return grid.irfft(mult * grid.rfft(f))


def apply_projector(grid: SpectralGrid, target, spec: ProjectorSpec):
    """Filter a field, or both components of a :class:`FieldState`."""
    if isinstance(target, FieldState):
        return target.replace(
            u=_filter(grid, target.u, spec), ut=_filter(grid, target.ut, spec)
        )
    return _filter(grid, grid.check_field(target), spec)


def gradient(grid: SpectralGrid, f: np.ndarray) -> list:
    """Spectral gradient; the Nyquist modes have zero derivative on the grid."""
    fh = grid.rfft(f) * grid.nyquist_free
    return [grid.irfft(1j * k * fh) for k in grid.rwavenumbers]


def _grad_sq(grid: SpectralGrid, f: np.ndarray) -> np.ndarray:
    return sum(g * g for g in gradient(grid, f))


def _require_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise BlowupFlagError("non-finite samples present")


def h1_norm(grid: SpectralGrid, f: np.ndarray) -> float:
    f = grid.check_field(f)
    _require_finite(f)
    return math.sqrt(grid.quadrature(f * f + _grad_sq(grid, f)))


def norms(state: FieldState) -> NormReport:
    grid = state.grid
    _require_finite(state.u, state.ut)
    l2u_sq = grid.quadrature(state.u ** 2)
    grad_sq = grid.quadrature(_grad_sq(grid, state.u))
    l2ut_sq = grid.quadrature(state.ut ** 2)
    h1_sq = l2u_sq + grad_sq
    return NormReport(
        l2_u=math.sqrt(l2u_sq),
        h1_u=math.sqrt(h1_sq),
        l2_ut=math.sqrt(l2ut_sq),
        linf_u=float(np.max(np.abs(state.u))) if state.u.size else 0.0,
        H_norm=math.sqrt(h1_sq + l2ut_sq),
    )


def energy(state: FieldState) -> float:
    """Quadrature of the energy density; negative values are allowed."""
    grid, u, p = state.grid, state.u, state.p
    _require_finite(u, state.ut)
    dens = 0.5 * (_grad_sq(grid, u) + u * u + state.ut ** 2)
    dens -= np.abs(u) ** (p + 1) / (p + 1)
    return grid.quadrature(dens)


def local_energy_density(state: FieldState) -> np.ndarray:
    """Pointwise ``|grad u|^2 + |u|^2 + |u_t|^2``."""
    _require_finite(state.u, state.ut)
    return _grad_sq(state.grid, state.u) + state.u ** 2 + state.ut ** 2


def _as_vector(grid: SpectralGrid, point) -> np.ndarray:
    v = np.atleast_1d(np.asarray(point, dtype=float))
    if v.shape != (grid.d,):
        raise UsageError(f"expected a point with {grid.d} coordinates, got {point!r}")
    return v


def translate(grid: SpectralGrid, f, shift) -> np.ndarray:
    """Return ``f(x - shift)`` by a spectral phase shift (periodic wrap).

    A real grid field cannot carry a shifted Nyquist cosine, so along each
    axis the Nyquist mode gets the real factor ``sign(cos(k s))``.  This keeps
    the shift an exact isometry with an exact inverse, and whole-cell shifts
    agree with ``np.roll``.
    """
    f = grid.check_field(f)
    s = _as_vector(grid, shift)
    if not np.all(np.isfinite(s)):
        raise UsageError("shift must be finite")
    if not np.any(s):
        return f.copy()
    factor = np.ones(grid.rshape, dtype=complex)
    for k, m, sa in zip(grid.rwavenumbers, grid.rmodes, s):
        nyq = np.abs(m) == grid.n // 2
        c = math.cos(np.pi * (grid.n // 2) / grid.L * sa)
        factor = factor * np.where(nyq, 1.0 if c >= 0 else -1.0, np.exp(-1j * k * sa))
    return grid.irfft(grid.rfft(f) * factor)


def periodic_displacement(grid: SpectralGrid, delta):
    """Wrap coordinate differences into ``[-L, L)``."""
    two_l = grid.box_length
    return np.mod(np.asarray(delta) + grid.L, two_l) - grid.L


def distance_field(grid: SpectralGrid, centers: Sequence) -> np.ndarray:
    """Minimum periodic distance from each grid point to ``centers``."""
    centers = [_as_vector(grid, c) for c in centers]
    if not centers:
        raise UsageError("distance_field needs at least one center")
    best = None
    for c in centers:
        r2 = sum(
            periodic_displacement(grid, x - ca) ** 2
            for x, ca in zip(grid.coords, c)
        )
        best = r2 if best is None else np.minimum(best, r2)
    return np.sqrt(best)
