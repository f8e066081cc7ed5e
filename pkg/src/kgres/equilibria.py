"""Stationary solutions of  -Lap Q + Q = |Q|^(p-1) Q.

Three routes are provided and cross-check each other: the closed-form 1D
ground state, radial shooting with bisection on the central value, and the
Petviashvili fixed-point iteration on a periodic grid.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import kve

from .errors import NoConvergenceError, UsageError
from .spectral import SpectralGrid, check_admissible, distance_field, translate

__all__ = [
    "EquilibriumProfile",
    "ShootingConfig",
    "closed_form_central_value",
    "closed_form_ground_state_1d",
    "radial_shoot",
    "petviashvili",
    "petviashvili_step",
    "stationarity_residual",
    "embed_on_grid",
    "embedded_residual",
    "default_library",
    "save_profile",
    "load_profile",
]

RESIDUAL_LIMIT = 1e-6
TAIL_LIMIT = 1e-10


@dataclass(frozen=True, eq=False)
class EquilibriumProfile:
    """A radial equilibrium, stored as samples ``values(radius)``.

    ``closed_form`` marks the analytic 1D ground state, which is evaluated
    exactly rather than interpolated.  ``grid_field`` optionally carries the
    centred grid solution produced by the Petviashvili iteration.
    """

    d: int
    p: float
    nodes: int
    sign: int
    radius: np.ndarray
    values: np.ndarray
    closed_form: bool = False
    residual: Optional[float] = None
    grid_field: Optional[np.ndarray] = None
    grid: Optional[SpectralGrid] = None

    @property
    def name(self) -> str:
        kind = "ground" if self.nodes == 0 else f"nodal{self.nodes}"
        return f"{'+' if self.sign > 0 else '-'}{kind}"

    @property
    def central_value(self) -> float:
        return float(self.values[0])

    def negated(self) -> "EquilibriumProfile":
        return replace(
            self,
            sign=-self.sign,
            values=-self.values,
            grid_field=None if self.grid_field is None else -self.grid_field,
        )

    def evaluate(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        if self.closed_form:
            return self.sign * _sech_profile(r, self.p)
        spline = self._spline
        out = np.zeros_like(r)
        inside = r <= self.radius[-1]
        out[inside] = spline(r[inside])
        return out

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.radius, self.values, bc_type=((1, 0.0), "not-a-knot"))

    def sign_changes(self) -> int:
        v = self.values[np.abs(self.values) > 1e-12 * np.max(np.abs(self.values))]
        return int(np.count_nonzero(np.diff(np.sign(v))))


def closed_form_central_value(p: float) -> float:
    return ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0))


def _sech_profile(r, p):
    return closed_form_central_value(p) / np.cosh(0.5 * (p - 1.0) * r) ** (2.0 / (p - 1.0))


def closed_form_ground_state_1d(p: float, r_max: float = 40.0, dr: float = 1e-3) -> EquilibriumProfile:
    """``Q(x) = ((p+1)/2)^(1/(p-1)) sech^(2/(p-1))((p-1) x / 2)``."""
    if not p > 1:
        raise UsageError(f"closed-form ground state needs p > 1, got {p}")
    r = np.arange(0.0, r_max + 0.5 * dr, dr)
    return EquilibriumProfile(1, float(p), 0, 1, r, _sech_profile(r, p), closed_form=True)


@dataclass(frozen=True)
class ShootingConfig:
    bracket: Optional[tuple] = None
    r_max: float = 40.0
    dr: float = 1e-3
    decay_tol: float = 1e-8
    max_iter: int = 200
    rtol: float = 1e-13
    atol: float = 1e-15

    def __post_init__(self):
        if self.r_max < 30:
            raise UsageError("shooting radius must be at least 30")


def _rhs(d, p):
    c = d - 1.0

    def f(r, y):
        q, dq = y
        return (dq, -c / r * dq + q - abs(q) ** (p - 1) * q)

    return f


def _series_start(a, d, p, r0):
    b = (a - abs(a) ** (p - 1) * a) / d
    return np.array([a + 0.5 * b * r0 * r0, b * r0])


_R0 = 1e-5


def _classify(a, d, p, nodes, cfg: ShootingConfig) -> bool:
    """True when the central value ``a`` overshoots the ``nodes``-node state.

    The trajectory overshoots if it crosses zero more than ``nodes`` times;
    it undershoots if ``|Q|`` reaches a local minimum (turns back) first.
    Trajectories that do neither before ``r_max`` count as undershooting.
    """
    f = _rhs(d, p)

    def hit_zero(r, y):
        return y[0]

    def turn(r, y):
        return y[1]

    hit_zero.terminal = True
    turn.terminal = True
    if abs(a) ** (p - 1) <= 1.0:
        return False  # |Q| starts at a local minimum (or sits on the constant state)
    r, y = _R0, _series_start(a, d, p, _R0)
    crossings = 0
    while r < cfg.r_max:
        sol = solve_ivp(f, (r, cfg.r_max), y, method="DOP853", rtol=cfg.rtol,
                        atol=cfg.atol, events=(hit_zero, turn), dense_output=True)
        if sol.status != 1:
            return False
        if sol.t_events[0].size:
            crossings += 1
            if crossings > nodes:
                return True
            r_ev = sol.t_events[0][0]
        else:
            r_ev = sol.t_events[1][0]
            q = sol.y_events[1][0][0]
            qpp = q - abs(q) ** (p - 1) * q
            if q * qpp >= 0:
                return False
        nudge = 1e-7 * max(1.0, r_ev)
        r = r_ev + nudge
        y = sol.sol(r)
    return False


def radial_shoot(d: int, p: float, nodes: int = 0, config: ShootingConfig | None = None) -> EquilibriumProfile:
    """Radial equilibrium with ``nodes`` sign changes by shooting on ``Q(0)``.

    Integrates ``Q'' + (d-1)/r Q' - Q + |Q|^(p-1) Q = 0`` from
    ``Q(0) = a, Q'(0) = 0`` and bisects ``a`` between undershooting and
    overshooting trajectories.  Once the bracket collapses to rounding
    level, the solution is kept up to the radius where the two bracketing
    trajectories separate and continued by the decaying solution of the
    linearised equation, ``r^(1-d/2) K_{d/2-1}(r)``.
    """
    cfg = config or ShootingConfig()
    if d not in (1, 2, 3):
        raise UsageError(f"dimension must be 1, 2 or 3, got {d}")
    check_admissible(p, d)
    if nodes < 0:
        raise UsageError("node count must be nonnegative")

    lo, hi = cfg.bracket or (0.5 * closed_form_central_value(p), 4.0 * closed_form_central_value(p))
    for _ in range(40):
        if not _classify(lo, d, p, nodes, cfg):
            break
        lo *= 0.5
    else:
        raise NoConvergenceError("could not find an undershooting central value")
    for _ in range(40):
        if _classify(hi, d, p, nodes, cfg):
            break
        lo = hi
        hi *= 2.0
    else:
        raise NoConvergenceError(
            f"no overshooting central value found for d={d}, p={p}, nodes={nodes}"
        )

    for _ in range(cfg.max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _classify(mid, d, p, nodes, cfg):
            hi = mid
        else:
            lo = mid
    else:
        raise NoConvergenceError("bisection did not reach rounding level")

    profile = _assemble(lo, hi, d, p, nodes, cfg)
    if profile.sign_changes() != nodes:
        raise NoConvergenceError(
            f"converged profile has {profile.sign_changes()} sign changes, expected {nodes}"
        )
    if abs(profile.values[-1]) > cfg.decay_tol:
        raise NoConvergenceError(f"|Q(R_max)| = {abs(profile.values[-1]):.3g} exceeds tolerance")
    return profile


def _integrate(a, d, p, r, cfg):
    f = _rhs(d, p)
    sol = solve_ivp(f, (_R0, r[-1]), _series_start(a, d, p, _R0), method="DOP853",
                    t_eval=r, rtol=cfg.rtol, atol=cfg.atol)
    q = np.full(r.size, np.nan)
    q[: sol.y.shape[1]] = sol.y[0]
    return q


def _assemble(lo, hi, d, p, nodes, cfg):
    r = np.arange(0.0, cfg.r_max + 0.5 * cfg.dr, cfg.dr)
    r_eval = r.copy()
    r_eval[0] = _R0
    q_lo = _integrate(lo, d, p, r_eval, cfg)
    q_hi = _integrate(hi, d, p, r_eval, cfg)
    q = 0.5 * (q_lo + q_hi)
    q[0] = 0.5 * (lo + hi)

    # splice point: past the last node, before the bracketing pair separates
    spread = np.abs(q_lo - q_hi)
    diverged = ~np.isfinite(spread) | (spread > 1e-6 * np.abs(q))
    i_div = int(np.argmax(diverged)) if np.any(diverged) else r.size - 1
    flips = np.flatnonzero(np.diff(np.sign(q[:i_div])) != 0)
    i_node = int(flips[-1]) + 1 if flips.size else 0
    i_peak = i_node + int(np.argmax(np.abs(q[i_node:i_div])))
    small = np.flatnonzero(np.abs(q[i_peak:i_div]) < 1e-4 * abs(q[0]))
    idx = i_peak + int(small[0]) if small.size else i_div - 1
    rc, qc = r[idx], q[idx]
    nu = 0.5 * (d - 2)
    tail_r = r[idx:]
    ratio = (rc / tail_r) ** nu * kve(nu, tail_r) / kve(nu, rc) * np.exp(-(tail_r - rc))
    q[idx:] = qc * ratio
    return EquilibriumProfile(d, float(p), nodes, 1 if q[0] > 0 else -1, r, q)


def stationarity_residual(grid: SpectralGrid, field: np.ndarray, p: float) -> float:
    """Sup norm of ``-Lap Q + Q - |Q|^(p-1) Q`` computed spectrally."""
    qh = grid.rfft(field)
    lap_free = grid.irfft((1.0 + grid.rksq) * qh)
    return float(np.max(np.abs(lap_free - np.abs(field) ** (p - 1) * field)))


def petviashvili_step(grid: SpectralGrid, u: np.ndarray, p: float) -> np.ndarray:
    """One stabilised Petviashvili update with power ``gamma = p/(p-1)``.

    ``M = <(1 - Lap)^{-1} N(u), u> / <u, u>`` equals 1 at a fixed point and
    scales like ``c^(p-1)`` under ``u -> c u``; dividing by ``M^gamma``
    cancels the amplitude drift.
    """
    symbol = 1.0 + grid.rksq
    nh = grid.rfft(np.abs(u) ** (p - 1) * u)
    uh = grid.rfft(u)
    w = grid.parseval_weights
    num = float(np.sum(w * (np.conj(nh / symbol) * uh).real))
    den = float(np.sum(w * np.abs(uh) ** 2))
    if not (num > 0 and den > 0):
        raise NoConvergenceError("Petviashvili iterate collapsed to zero")
    m = num / den
    gamma = p / (p - 1.0)
    return grid.irfft(nh / symbol) / m ** gamma


def petviashvili(grid: SpectralGrid, p: float, seed: np.ndarray, tol: float = 1e-12,
                 max_iter: int = 2000) -> EquilibriumProfile:
    """Ground state on ``grid`` from a positive seed centred at the origin."""
    check_admissible(p, grid.d)
    u = grid.check_field(seed).copy()
    if not (np.all(u >= 0) and np.any(u > 0)):
        raise UsageError("Petviashvili seed must be nonnegative and nonzero")
    for _ in range(max_iter):
        nxt = petviashvili_step(grid, u, p)
        if not np.all(np.isfinite(nxt)):
            raise NoConvergenceError("Petviashvili iteration diverged")
        diff = float(np.max(np.abs(nxt - u)))
        u = nxt
        if diff <= tol:
            break
    else:
        raise NoConvergenceError(f"Petviashvili did not converge in {max_iter} iterations")
    if float(np.max(np.abs(u))) < 1e-8:
        raise NoConvergenceError("Petviashvili iteration collapsed to zero")

    # radial samples along the last axis, from the centre outward
    centre = grid.n // 2
    line = u[(centre,) * (grid.d - 1)] if grid.d > 1 else u
    r = grid.axis[centre:] - grid.axis[centre]
    values = line[centre:].copy()
    return EquilibriumProfile(
        grid.d, float(p), 0, 1, r, values,
        residual=stationarity_residual(grid, u, p), grid_field=u, grid=grid,
    )


def embed_on_grid(profile: EquilibriumProfile, grid: SpectralGrid, center=None,
                  check: bool = True) -> np.ndarray:
    """Sample ``profile(|x - center|)`` on ``grid`` (periodic distance).

    Raises :class:`UsageError` when the profile tail at the box edge exceeds
    ``1e-10``.
    """
    if profile.d != grid.d:
        raise UsageError(f"profile is {profile.d}-dimensional, grid is {grid.d}-dimensional")
    center = np.zeros(grid.d) if center is None else np.atleast_1d(np.asarray(center, float))
    if check:
        tail = float(np.max(np.abs(profile.evaluate(np.array([grid.L])))))
        if tail > TAIL_LIMIT:
            raise UsageError(
                f"box too small for profile: |Q(L={grid.L})| = {tail:.3g} > {TAIL_LIMIT:g}"
            )
    if profile.grid_field is not None and profile.grid == grid:
        return translate(grid, profile.grid_field, center)
    return profile.evaluate(distance_field(grid, [center]))


def embedded_residual(profile: EquilibriumProfile, grid: SpectralGrid) -> float:
    return stationarity_residual(grid, embed_on_grid(profile, grid), profile.p)


def default_library(d: int, p: float, grid: SpectralGrid | None = None,
                    max_nodes: int = 2) -> list:
    """Profiles used for matching: both signs of the ground state and, for
    ``d >= 2``, nodal states with up to ``max_nodes`` sign changes.

    Decaying nodal solutions do not exist in one dimension.  When a grid is
    given, profiles that do not fit in the box or whose embedded residual
    exceeds ``1e-6`` are dropped.
    """
    return [prof for prof in _library(d, float(p), max_nodes)
            if grid is None or _resolves(prof, grid)]


def _resolves(profile, grid) -> bool:
    try:
        return embedded_residual(profile, grid) <= RESIDUAL_LIMIT
    except UsageError:
        return False


_LIB_CACHE: dict = {}


def _library(d, p, max_nodes):
    key = (d, p, max_nodes)
    if key not in _LIB_CACHE:
        ground = closed_form_ground_state_1d(p) if d == 1 else radial_shoot(d, p, 0)
        out = [ground, ground.negated()]
        if d >= 2:
            for k in range(1, max_nodes + 1):
                nodal = radial_shoot(d, p, k)
                out += [nodal, nodal.negated()]
        _LIB_CACHE[key] = out
    return list(_LIB_CACHE[key])


# -- profile files -------------------------------------------------------------

_PROFILE_MAGIC = b"DKGQ"
_PROFILE_VERSION = 1
_PROFILE_HEADER = struct.Struct("<4sIIdIiQ")


def save_profile(path, profile: EquilibriumProfile) -> None:
    """Write a DKGQ file: header (magic, version, d, p, nodes, sign, count)
    followed by little-endian f64 radius and value arrays."""
    count = profile.radius.size
    with open(path, "wb") as fh:
        fh.write(_PROFILE_HEADER.pack(_PROFILE_MAGIC, _PROFILE_VERSION, profile.d,
                                      profile.p, profile.nodes, profile.sign, count))
        fh.write(np.ascontiguousarray(profile.radius, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(profile.values, dtype="<f8").tobytes())


def load_profile(path) -> EquilibriumProfile:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PROFILE_HEADER.size:
        raise UsageError(f"{path}: truncated profile header")
    magic, version, d, p, nodes, sign, count = _PROFILE_HEADER.unpack_from(raw)
    if magic != _PROFILE_MAGIC:
        raise UsageError(f"{path}: not a DKGQ profile")
    if version != _PROFILE_VERSION:
        raise UsageError(f"{path}: unsupported profile version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_PROFILE_HEADER.size)
    if body.size != 2 * count:
        raise UsageError(f"{path}: expected {2 * count} samples, found {body.size}")
    return EquilibriumProfile(d, p, nodes, sign, body[:count].copy(), body[count:].copy())
