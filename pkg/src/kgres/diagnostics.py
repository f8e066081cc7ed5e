"""Localisation diagnostics: frequency tails, good times, concentration
points and exterior energy."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError
from .spectral import (
    FieldState,
    ProjectorSpec,
    SpectralGrid,
    apply_projector,
    distance_field,
    h1_norm,
    local_energy_density,
    periodic_displacement,
)

__all__ = [
    "DiagnosticsConfig",
    "ConcentrationSet",
    "GoodTime",
    "frequency_tail",
    "select_good_time",
    "low_frequency_amplitude",
    "detect_concentration_points",
    "exterior_energy",
    "dissipation_integral",
    "pairwise_distances",
]


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Threshold hierarchy ``mu0 > mu1 > mu2 > mu3 > mu4 > 0``.

    ``detect_cutoff`` falls back to an eighth of the Nyquist wavenumber.
    """

    mu0: float = 1e-1
    mu1: float = 1e-2
    mu2: float = 1e-3
    mu3: float = 1e-4
    mu4: float = 1e-5
    detect_cutoff: Optional[float] = None

    def __post_init__(self):
        mus = (self.mu0, self.mu1, self.mu2, self.mu3, self.mu4)
        if not all(a > b for a, b in zip(mus, mus[1:])) or not self.mu4 > 0:
            raise UsageError(f"thresholds must satisfy mu0 > mu1 > mu2 > mu3 > mu4 > 0, got {mus}")
        if self.detect_cutoff is not None and not self.detect_cutoff > 0:
            raise UsageError("detection cutoff must be positive")

    def cutoff(self, grid: SpectralGrid) -> float:
        return self.detect_cutoff if self.detect_cutoff is not None else grid.nyquist / 8.0

    def separation(self, grid: SpectralGrid) -> float:
        return min(2.0 / self.mu3, grid.box_length / 4.0)


@dataclass(frozen=True)
class ConcentrationSet:
    t: float
    centers: np.ndarray  # shape (J, d)
    amplitudes: np.ndarray
    indices: tuple  # flat grid indices of the accepted points
    separation: float

    @property
    def J(self) -> int:
        return len(self.amplitudes)


@dataclass(frozen=True)
class GoodTime:
    window: tuple
    t_star: float
    value: float


def frequency_tail(state: FieldState, cutoff: float, sharp: bool = False):
    """``(||P_{>=N} u||_{H^1}, ||P_{>=N} u_t||_{L^2})``."""
    spec = ProjectorSpec(cutoff, "high", sharp)
    hi = apply_projector(state.grid, state, spec)
    grid = state.grid
    return h1_norm(grid, hi.u), math.sqrt(grid.quadrature(hi.ut ** 2))


def select_good_time(samples: Sequence, window) -> GoodTime:
    """Sample in ``[t_lo, t_hi]`` minimising ``||u_t||_2``; earliest wins ties."""
    t_lo, t_hi = window
    best = None
    for s in samples:
        if t_lo <= s.t <= t_hi:
            v = s.norms.l2_ut
            if best is None or v < best[1]:
                best = (s.t, v)
    if best is None:
        raise UsageError(f"no samples inside window [{t_lo}, {t_hi}]")
    return GoodTime((t_lo, t_hi), best[0], best[1])


def low_frequency_amplitude(state: FieldState, config: DiagnosticsConfig) -> np.ndarray:
    grid = state.grid
    spec = ProjectorSpec(config.cutoff(grid), "low")
    return np.abs(apply_projector(grid, state.u, spec))


def _periodic_dist(grid, a, b) -> float:
    return math.sqrt(sum(float(periodic_displacement(grid, x - y)) ** 2 for x, y in zip(a, b)))


def detect_concentration_points(state: FieldState, config: DiagnosticsConfig | None = None) -> ConcentrationSet:
    """Greedy maximal separated set of points where the low-pass amplitude
    reaches ``mu3``.

    Candidates are visited by decreasing amplitude (ties by flat grid
    index) and accepted when no accepted center lies closer than the
    separation radius.
    """
    config = config or DiagnosticsConfig()
    grid = state.grid
    amp = low_frequency_amplitude(state, config).ravel()
    sep = config.separation(grid)
    cand = np.flatnonzero(amp >= config.mu3)
    order = cand[np.lexsort((cand, -amp[cand]))]
    pts = np.stack([c.ravel() for c in grid.coords], axis=1)[order]

    # accepting a point removes every later candidate within the radius
    alive = np.ones(order.size, dtype=bool)
    accepted = []
    i = 0
    while True:
        rest = np.flatnonzero(alive[i:])
        if not rest.size:
            break
        i += int(rest[0])
        accepted.append(i)
        disp = periodic_displacement(grid, pts - pts[i])
        alive &= np.sqrt(np.sum(disp * disp, axis=1)) >= sep
        i += 1
    acc_pts = pts[accepted].reshape(-1, grid.d)
    accepted = [int(order[k]) for k in accepted]
    return ConcentrationSet(
        t=state.t,
        centers=acc_pts,
        amplitudes=amp[accepted],
        indices=tuple(accepted),
        separation=sep,
    )


def pairwise_distances(grid: SpectralGrid, centers) -> np.ndarray:
    c = np.asarray(centers, dtype=float).reshape(-1, grid.d)
    out = []
    for i in range(len(c)):
        for j in range(i + 1, len(c)):
            out.append(_periodic_dist(grid, c[i], c[j]))
    return np.array(out)


def exterior_energy(state: FieldState, centers, radius: float) -> float:
    """Energy-density quadrature over points farther than ``radius`` from
    every center."""
    if not radius > 0:
        raise UsageError("radius must be positive")
    centers = np.asarray(centers, dtype=float).reshape(-1, state.grid.d)
    if len(centers) == 0:
        raise UsageError("exterior energy needs at least one center")
    dist = distance_field(state.grid, list(centers))
    dens = local_energy_density(state)
    return state.grid.quadrature(np.where(dist > radius, dens, 0.0))


def dissipation_integral(samples: Sequence, t_from: float, t_to: float) -> float:
    """Trapezoid integral of sampled ``||u_t||_2^2`` over ``[t_from, t_to]``.

    Endpoints between samples use linear interpolation of the integrand.
    """
    if t_to < t_from:
        raise UsageError("interval end precedes start")
    t = np.array([s.t for s in samples], dtype=float)
    q = np.array([s.norms.l2_ut ** 2 for s in samples], dtype=float)
    if t.size == 0 or t_from < t[0] - 1e-12 or t_to > t[-1] + 1e-12:
        raise UsageError(f"samples do not cover [{t_from}, {t_to}]")
    cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (q[1:] + q[:-1]))))
    return float(_cum_at(t, q, cum, t_to) - _cum_at(t, q, cum, t_from))


def _cum_at(t, q, cum, s):
    i = int(np.searchsorted(t, s, side="right")) - 1
    i = min(max(i, 0), t.size - 1)
    if t[i] == s or i == t.size - 1:
        return cum[i]
    frac = (s - t[i]) / (t[i + 1] - t[i])
    qs = q[i] + frac * (q[i + 1] - q[i])
    return cum[i] + 0.5 * (s - t[i]) * (q[i] + qs)
