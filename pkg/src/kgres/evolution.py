"""Time stepping for the damped focusing Klein-Gordon equation.

    u_tt - Lap u + u + 2 alpha u_t = |u|^(p-1) u

The linear part is advanced exactly, mode by mode, with the damped
propagators; the nonlinearity enters through a Strang-split kick on u_t.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import BlowupError, UsageError
from .spectral import FieldState, NormReport, SpectralGrid, energy, norms

__all__ = [
    "EvolutionConfig",
    "TrajectorySample",
    "BlowupReport",
    "EvolutionResult",
    "flow_coefficients",
    "linear_flow",
    "step",
    "evolve",
    "stability_bound",
    "check_time_step",
    "dissipation_identity_check",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    T: float
    alpha: float = 0.0
    p: float = 3.0
    blowup_threshold: float = 1e6
    stride: int = 100
    dealias: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise UsageError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0:
            raise UsageError(f"T must be nonnegative, got {self.T}")
        if not self.blowup_threshold > 0:
            raise UsageError("blowup threshold must be positive")
        if self.alpha < 0:
            raise UsageError("damping must be nonnegative")
        if int(self.stride) != self.stride or self.stride < 1:
            raise UsageError(f"stride must be a positive integer, got {self.stride}")

    @property
    def n_steps(self) -> int:
        steps = self.T / self.dt
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, steps):
            raise UsageError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        return n


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    norms: NormReport
    energy: float
    dissipation: float  # 2 alpha * int_0^t ||u_t||^2 ds

    def as_dict(self) -> dict:
        out = dict(t=self.t, energy=self.energy, diss_integral=self.dissipation)
        out.update(self.norms.as_dict())
        return out


@dataclass(frozen=True)
class BlowupReport:
    flag: bool = False
    time: Optional[float] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.flag != (self.time is not None):
            raise UsageError("blowup flag must be set exactly when a time is recorded")


@dataclass
class EvolutionResult:
    samples: list
    blowup: BlowupReport
    final_state: Optional[FieldState]
    steps_taken: int = 0

    @property
    def blown_up(self) -> bool:
        return self.blowup.flag

    @property
    def h_bound(self) -> float:
        """Largest sampled H-norm, the observed bound on ``sup_t ||(u, u_t)||_H``.

        Kept apart from the energy functional; infinite after blowup.
        """
        if self.blown_up:
            return math.inf
        return max(s.norms.H_norm for s in self.samples)


def flow_coefficients(ksq, alpha: float, t: float):
    """Entries of the 2x2 per-mode propagator ``(u, u_t) -> (u, u_t)(t)``.

    With ``w^2 = 1 + |k|^2 - alpha^2`` the mode solution is
    ``e^{-alpha t} [(C + alpha S) u0 + S u1]`` where ``C = cos(w t)`` and
    ``S = sin(w t)/w``; hyperbolic functions replace them when ``w^2 < 0``.
    The damping factor is folded into the hyperbolic terms so that no
    intermediate overflows.
    """
    ksq = np.asarray(ksq, dtype=float)
    w2 = 1.0 + ksq - alpha * alpha
    dc = np.empty_like(w2)  # e^{-alpha t} C
    ds = np.empty_like(w2)  # e^{-alpha t} S
    decay = math.exp(-alpha * t)

    osc = w2 > 0
    w = np.sqrt(w2[osc])
    dc[osc] = decay * np.cos(w * t)
    ds[osc] = decay * t * np.sinc(w * t / np.pi)

    hyp = w2 < 0
    if np.any(hyp):
        mu = np.sqrt(-w2[hyp])
        ep = np.exp((mu - alpha) * t)
        em = np.exp(-(mu + alpha) * t)
        dc[hyp] = 0.5 * (ep + em)
        ds[hyp] = 0.5 * (ep - em) / mu

    crit = w2 == 0
    dc[crit] = decay
    ds[crit] = decay * t

    a11 = dc + alpha * ds
    a12 = ds
    a21 = -(1.0 + ksq) * ds
    a22 = dc - alpha * ds
    return a11, a12, a21, a22


def linear_flow(state: FieldState, dt: float) -> FieldState:
    """Advance the linear damped equation exactly by ``dt`` (may be negative
    when ``alpha == 0``)."""
    if dt == 0:
        return state.replace(u=state.u.copy(), ut=state.ut.copy())
    grid = state.grid
    a11, a12, a21, a22 = flow_coefficients(grid.rksq, state.alpha, dt)
    uh, uth = grid.rfft(state.u), grid.rfft(state.ut)
    u = grid.irfft(a11 * uh + a12 * uth)
    ut = grid.irfft(a21 * uh + a22 * uth)
    return FieldState(grid, u, ut, t=max(state.t + dt, 0.0), p=state.p, alpha=state.alpha)


def stability_bound(grid: SpectralGrid) -> float:
    """Largest admissible dt under ``dt * sqrt(1 + k_max^2) <= 0.5``."""
    return 0.5 / math.sqrt(1.0 + grid.k_max ** 2)


def check_time_step(grid: SpectralGrid, dt: float) -> None:
    bound = stability_bound(grid)
    if dt > bound * (1 + 1e-12):
        raise UsageError(
            f"dt={dt} violates dt*sqrt(1+k_max^2) <= 0.5; largest allowed dt is {bound:.6g}"
        )


def _power(u: np.ndarray, p: float) -> np.ndarray:
    if p == 3:
        return u * u * u
    if p == 2:
        return np.abs(u) * u
    return np.sign(u) * np.abs(u) ** p


class _Stepper:
    """Strang splitting in rfft space with precomputed half-step propagator."""

    def __init__(self, grid: SpectralGrid, config: EvolutionConfig):
        self.grid = grid
        self.config = config
        self.half = flow_coefficients(grid.rksq, config.alpha, 0.5 * config.dt)
        self.mask = grid.dealias_mask if config.dealias else grid.nyquist_free
        self.weights = grid.parseval_weights

    def _linear(self, uh, uth):
        a11, a12, a21, a22 = self.half
        return a11 * uh + a12 * uth, a21 * uh + a22 * uth

    def ut_sq(self, uth) -> float:
        return float(np.sum(self.weights * (uth.real ** 2 + uth.imag ** 2)))

    def advance(self, uh, uth, t_end: float):
        """One full step.  Returns the new pair or raises BlowupError."""
        cfg = self.config
        uh, uth = self._linear(uh, uth)
        if cfg.nonlinear:
            u = self.grid.irfft(self.mask * uh)
            peak = float(np.max(np.abs(u)))
            if not math.isfinite(peak) or peak > cfg.blowup_threshold:
                raise BlowupError(BlowupReport(True, t_end, peak))
            uth = uth + cfg.dt * (self.mask * self.grid.rfft(_power(u, cfg.p)))
        return self._linear(uh, uth)


def step(state: FieldState, config: EvolutionConfig) -> FieldState:
    """One Strang step: half linear flow, nonlinear kick, half linear flow."""
    grid = state.grid
    cfg = _bind(state, config)
    stepper = _Stepper(grid, cfg)
    uh, uth = stepper.advance(grid.rfft(state.u), grid.rfft(state.ut), state.t + cfg.dt)
    return FieldState(grid, grid.irfft(uh), grid.irfft(uth), t=state.t + cfg.dt,
                      p=state.p, alpha=state.alpha)


def _bind(state: FieldState, config: EvolutionConfig) -> EvolutionConfig:
    if state.p != config.p or state.alpha != config.alpha:
        raise UsageError(
            f"state (p={state.p}, alpha={state.alpha}) disagrees with config "
            f"(p={config.p}, alpha={config.alpha})"
        )
    return config


def _sample(state: FieldState, dissipation: float) -> TrajectorySample:
    return TrajectorySample(state.t, norms(state), energy(state), dissipation)


def evolve(
    initial: FieldState,
    config: EvolutionConfig,
    observers: Iterable[Callable] = (),
    dissipation0: float = 0.0,
) -> EvolutionResult:
    """Integrate from ``initial`` to ``initial.t + config.T``.

    A sample is taken at the start, every ``config.stride`` steps and at the
    end.  Each observer is called as ``observer(state, sample)``.  Blowup ends
    the run normally with ``result.blowup.flag`` set.

    The state is round-tripped through physical space at every sample so a
    run resumed from a sampled state reproduces the continuous run exactly.
    """
    grid = initial.grid
    cfg = _bind(initial, config)
    check_time_step(grid, cfg.dt)
    observers = list(observers)
    stepper = _Stepper(grid, cfg)
    n_steps = cfg.n_steps
    t0 = initial.t

    samples = []
    state = initial
    diss = dissipation0

    def emit(s):
        sample = _sample(s, diss)
        samples.append(sample)
        for obs in observers:
            obs(s, sample)

    emit(state)
    uh, uth = grid.rfft(state.u), grid.rfft(state.ut)
    q_prev = stepper.ut_sq(uth)
    blowup = BlowupReport()
    done = 0
    for i in range(1, n_steps + 1):
        t = t0 + i * cfg.dt
        try:
            uh, uth = stepper.advance(uh, uth, t)
        except BlowupError as exc:
            blowup = exc.report
            break
        q = stepper.ut_sq(uth)
        diss += cfg.alpha * cfg.dt * (q_prev + q)
        q_prev = q
        done = i
        if i % cfg.stride == 0 or i == n_steps:
            u, ut = grid.irfft(uh), grid.irfft(uth)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
                blowup = BlowupReport(True, t, math.inf)
                break
            state = FieldState(grid, u, ut, t=t, p=cfg.p, alpha=cfg.alpha)
            emit(state)
            uh, uth = grid.rfft(state.u), grid.rfft(state.ut)

    final = None if blowup.flag else state
    return EvolutionResult(samples, blowup, final, done)


def dissipation_identity_check(samples: Sequence[TrajectorySample]) -> float:
    """Largest relative defect of ``E(t2) - E(t1) + 2 alpha int ||u_t||^2``
    over sample pairs ``t1 < t2``.

    Accepts a sample list or an :class:`EvolutionResult`; a result that
    ended in blowup is rejected.
    """
    if isinstance(samples, EvolutionResult):
        if samples.blown_up:
            raise UsageError("identity check needs a run that did not blow up")
        samples = samples.samples
    if len(samples) < 2:
        raise UsageError("need at least two samples")
    e = np.array([s.energy for s in samples])
    if not np.all(np.isfinite(e)):
        raise UsageError("samples come from a blown-up run")
    f = e + np.array([s.dissipation for s in samples])
    # suffix extremes of f over j > i
    suf_max = np.maximum.accumulate(f[::-1])[::-1]
    suf_min = np.minimum.accumulate(f[::-1])[::-1]
    worst = 0.0
    for i in range(len(f) - 1):
        dev = max(suf_max[i + 1] - f[i], f[i] - suf_min[i + 1])
        worst = max(worst, dev / max(1.0, abs(e[i])))
    return float(worst)


# -- checkpoints -------------------------------------------------------------

_CKPT_MAGIC = b"DKGC"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIddddd")


def save_checkpoint(path, state: FieldState, dt: float) -> None:
    """Write ``state`` as a DKGC file.

    Layout: magic, u32 version, u32 d, u32 n, f64 L, p, alpha, t, dt, then
    little-endian f64 arrays u and u_t in row-major order.
    """
    g = state.grid
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC, _CKPT_VERSION, g.d, g.n, g.L, state.p, state.alpha, state.t, dt
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.ut, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a DKGC file; returns ``(state, dt)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEADER.size:
        raise UsageError(f"{path}: truncated checkpoint header")
    magic, version, d, n, L, p, alpha, t, dt = _CKPT_HEADER.unpack_from(raw)
    if magic != _CKPT_MAGIC:
        raise UsageError(f"{path}: not a DKGC checkpoint")
    if version != _CKPT_VERSION:
        raise UsageError(f"{path}: unsupported checkpoint version {version}")
    grid = SpectralGrid(d, n, L)
    count = n ** d
    body = np.frombuffer(raw, dtype="<f8", offset=_CKPT_HEADER.size)
    if body.size != 2 * count:
        raise UsageError(f"{path}: expected {2 * count} samples, found {body.size}")
    u = body[:count].reshape(grid.shape).astype(float)
    ut = body[count:].reshape(grid.shape).astype(float)
    return FieldState(grid, u, ut, t=t, p=p, alpha=alpha), dt
