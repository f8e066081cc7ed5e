"""Decomposition of a state into translated equilibria plus remainder, and
the blowup / unbounded / resolved classification of a run."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagnostics import DiagnosticsConfig, detect_concentration_points, pairwise_distances
from .equilibria import EquilibriumProfile, embed_on_grid
from .errors import UsageError
from .spectral import FieldState, SpectralGrid, h1_norm, periodic_displacement, translate

__all__ = [
    "PartitionWeights",
    "Component",
    "Match",
    "ResolutionDecomposition",
    "TrichotomyVerdict",
    "partition_weights",
    "split_components",
    "match_equilibrium",
    "decompose",
    "classify",
    "UNMATCHED_RATIO",
]

UNMATCHED_RATIO = 0.5


@dataclass(frozen=True)
class PartitionWeights:
    centers: np.ndarray
    weights: np.ndarray  # shape (J, *grid.shape)


@dataclass(frozen=True)
class Component:
    center: np.ndarray
    w: np.ndarray
    v: np.ndarray
    h_norm: float


@dataclass(frozen=True)
class Match:
    index: Optional[int]  # position in the library, None when unmatched
    name: str
    sign: int
    offset: np.ndarray  # profile position inside the recentred component
    residual: float
    component_norm: float

    @property
    def matched(self) -> bool:
        return self.index is not None


@dataclass
class ResolutionDecomposition:
    t: float
    J: int
    matches: list
    centers: np.ndarray  # refined, shape (J, d)
    component_residuals: list
    global_residual: float
    ut_l2: float
    min_separation: Optional[float]
    cross_term_bound: float = 0.0

    def as_dict(self) -> dict:
        return dict(
            t=self.t,
            J=self.J,
            equilibria=[m.name if m.matched else "unmatched" for m in self.matches],
            signs=[m.sign for m in self.matches],
            centers=[[float(c) for c in row] for row in self.centers],
            component_residuals=[float(r) for r in self.component_residuals],
            global_residual=self.global_residual,
            ut_l2=self.ut_l2,
            min_separation=self.min_separation,
            cross_term_bound=self.cross_term_bound,
        )


@dataclass(frozen=True)
class TrichotomyVerdict:
    verdict: str  # blowup | unbounded-suspected | resolved | undecided
    metrics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(verdict=self.verdict, **self.metrics)


def _centers_array(grid: SpectralGrid, centers) -> np.ndarray:
    return np.asarray(centers, dtype=float).reshape(-1, grid.d)


def _japanese_inv(grid, center) -> np.ndarray:
    r2 = sum(periodic_displacement(grid, x - c) ** 2 for x, c in zip(grid.coords, center))
    return 1.0 / np.sqrt(1.0 + r2)


def partition_weights(grid: SpectralGrid, centers) -> PartitionWeights:
    """``psi_j = <x - x_j>^-1 / sum_l <x - x_l>^-1`` with periodic distance."""
    c = _centers_array(grid, centers)
    if len(c) == 0:
        raise UsageError("partition of unity needs at least one center")
    if len(c) > 1 and np.min(pairwise_distances(grid, c)) <= 1e-12 * grid.L:
        raise UsageError("duplicate centers")
    raw = np.stack([_japanese_inv(grid, cj) for cj in c])
    return PartitionWeights(c, raw / np.sum(raw, axis=0))


def split_components(state: FieldState, centers) -> list:
    """Components ``w_j = tau_{-x_j}(psi_j u)`` and ``v_j = tau_{-x_j}(psi_j u_t)``."""
    grid = state.grid
    pw = partition_weights(grid, centers)
    out = []
    for cj, psi in zip(pw.centers, pw.weights):
        w = translate(grid, psi * state.u, -cj)
        v = translate(grid, psi * state.ut, -cj)
        h = math.sqrt(h1_norm(grid, w) ** 2 + grid.quadrature(v * v))
        out.append(Component(cj, w, v, h))
    return out


def _template_hat(grid, profile):
    return np.fft.fftn(embed_on_grid(profile, grid, check=False))


def _corr_derivatives(grid, spectrum, s):
    """Value, gradient and Hessian of ``c(s) = sum_x f(x) T(x - s)``."""
    ks = grid.wavenumbers
    phase = np.exp(1j * sum(k * sa for k, sa in zip(ks, s)))
    term = spectrum * phase
    norm = grid.cell_volume / term.size
    val = float(np.sum(term).real) * norm
    grad = np.array([float(np.sum(1j * k * term).real) for k in ks]) * norm
    hess = np.array([[float(np.sum(-ka * kb * term).real) for kb in ks] for ka in ks]) * norm
    return val, grad, hess


def _peak_shift(grid: SpectralGrid, f: np.ndarray, t_hat: np.ndarray, sign: int, near=None):
    """Shift maximising ``sign * <f, T(. - s)>``.

    The coarse peak comes from the grid correlation with parabolic sub-grid
    interpolation per axis; Newton steps on the trigonometric interpolant of
    the correlation then polish it to rounding level.
    """
    spectrum = np.fft.fftn(f) * np.conj(t_hat)
    nyq = np.zeros(grid.shape, dtype=bool)
    for m in grid.modes:
        nyq = nyq | (np.abs(m) == grid.n // 2)
    spectrum = np.where(nyq, 0.0, spectrum)
    corr = sign * np.fft.ifftn(spectrum).real
    if near is None:
        peak = np.unravel_index(int(np.argmax(corr)), corr.shape)
    else:
        # restrict to a window of one separation-free neighbourhood around `near`
        # correlation index m holds the shift m * h (wrapped), not a coordinate
        idx = [int(round(float(periodic_displacement(grid, a)) / grid.h)) % grid.n for a in near]
        shifted = np.roll(corr, [grid.n // 2 - i for i in idx], axis=tuple(range(grid.d)))
        win = [slice(grid.n // 2 - 4, grid.n // 2 + 5)] * grid.d
        sub = shifted[tuple(win)]
        local = np.unravel_index(int(np.argmax(sub)), sub.shape)
        peak = tuple((i + l - 4) % grid.n for i, l in zip(idx, local))
    s = []
    for a in range(grid.d):
        up = list(peak)
        dn = list(peak)
        up[a] = (peak[a] + 1) % grid.n
        dn[a] = (peak[a] - 1) % grid.n
        c0, cp, cm = corr[peak], corr[tuple(up)], corr[tuple(dn)]
        denom = cm - 2.0 * c0 + cp
        frac = 0.5 * (cm - cp) / denom if denom < 0 else 0.0
        m = peak[a] if peak[a] < grid.n // 2 else peak[a] - grid.n
        s.append((m + frac) * grid.h)
    s0 = np.array(s)
    s = s0.copy()
    for _ in range(30):
        _, g, hss = _corr_derivatives(grid, sign * spectrum, s)
        try:
            step = np.linalg.solve(hss, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.any(np.linalg.eigvalsh(hss) >= 0):
            break
        s = s - step
        if np.max(np.abs(step)) < 1e-14 * grid.L:
            break
    if np.max(np.abs(periodic_displacement(grid, s - s0))) > grid.h:
        s = s0
    return periodic_displacement(grid, s)


def match_equilibrium(component: Component, library: Sequence[EquilibriumProfile],
                      grid: SpectralGrid) -> Match:
    """Best translated, signed library profile for a recentred component.

    Returns an unmatched result when the best H^1 residual exceeds half of
    the component's H^1 norm.
    """
    if not library:
        raise UsageError("equilibrium library is empty")
    w = component.w
    w_norm = h1_norm(grid, w)
    best = None
    for i, prof in enumerate(library):
        t_hat = _template_hat(grid, prof)
        template = np.fft.ifftn(t_hat).real
        for s in (1, -1):
            offset = _peak_shift(grid, w, t_hat, s)
            res = h1_norm(grid, w - s * translate(grid, template, offset))
            if best is None or res < best[0]:
                best = (res, i, s, offset)
    res, i, s, offset = best
    if w_norm == 0.0 or res > UNMATCHED_RATIO * w_norm:
        return Match(None, "unmatched", 0, offset, res, w_norm)
    prof = library[i]
    sign = s * prof.sign
    name = ("+" if sign > 0 else "-") + prof.name[1:]
    return Match(i, name, sign, offset, res, w_norm)


def decompose(state: FieldState, config: DiagnosticsConfig | None,
              library: Sequence[EquilibriumProfile]) -> ResolutionDecomposition:
    """Concentration points, components, matched equilibria and residuals.

    Matched centers are refined jointly on the full field: each profile is
    re-fitted against ``u`` minus the other fitted profiles, so the global
    residual ``||u - sum_j Q^j(. - x_j)||_{H^1}`` does not inherit the bias
    of the slowly decaying partition weights.
    """
    grid = state.grid
    ut_l2 = math.sqrt(grid.quadrature(state.ut ** 2))
    cs = detect_concentration_points(state, config)
    if cs.J == 0:
        return ResolutionDecomposition(state.t, 0, [], np.empty((0, grid.d)), [],
                                       h1_norm(grid, state.u), ut_l2, None)
    comps = split_components(state, cs.centers)
    if library:
        matches = [match_equilibrium(c, library, grid) for c in comps]
    else:
        # nothing to match against; every component is reported as radiation
        matches = [Match(None, "unmatched", 0, np.zeros(grid.d), c.h_norm, h1_norm(grid, c.w))
                   for c in comps]
    centers = np.array([periodic_displacement(grid, c.center + m.offset)
                        for c, m in zip(comps, matches)]).reshape(-1, grid.d)

    fitted = {}
    for j, m in enumerate(matches):
        if m.matched:
            fitted[j] = _template_hat(grid, library[m.index]) * (m.sign * library[m.index].sign)

    def bump(j, center):
        return translate(grid, np.fft.ifftn(fitted[j]).real, center)

    for _ in range(2):
        for j in fitted:
            others = sum((bump(l, centers[l]) for l in fitted if l != j), np.zeros(grid.shape))
            centers[j] = _peak_shift(grid, state.u - others, fitted[j], 1, near=centers[j])

    approx = sum((bump(j, centers[j]) for j in fitted), np.zeros(grid.shape))
    global_res = h1_norm(grid, state.u - approx)
    comp_res = [m.residual if m.matched else m.component_norm for m in matches]
    seps = pairwise_distances(grid, centers)
    return ResolutionDecomposition(
        t=state.t,
        J=cs.J,
        matches=matches,
        centers=centers,
        component_residuals=comp_res,
        global_residual=global_res,
        ut_l2=ut_l2,
        min_separation=float(np.min(seps)) if seps.size else None,
        cross_term_bound=max(0.0, global_res - float(sum(comp_res))),
    )


def _log_slope(times, values) -> float:
    t = np.asarray(times, dtype=float)
    v = np.log(np.maximum(np.asarray(values, dtype=float), 1e-300))
    if t.size < 2 or np.ptp(t) == 0:
        return 0.0
    return float(np.polyfit(t, v, 1)[0])


def classify(samples: Sequence, blowup, final: ResolutionDecomposition | None,
             tol_v: float = 1e-3, tol_r: float = 1e-2, slope_limit: float = 0.01) -> TrichotomyVerdict:
    """Blowup, sustained H-norm growth, convergence to equilibria, or none."""
    if blowup is not None and blowup.flag:
        return TrichotomyVerdict("blowup", dict(blowup_time=blowup.time, blowup_value=blowup.value))
    if not samples:
        raise UsageError("classification needs a nonempty sample series")
    t_end = samples[-1].t
    t_mid = samples[0].t + 0.5 * (t_end - samples[0].t)
    late = [s for s in samples if s.t >= t_mid]
    slope = _log_slope([s.t for s in late], [s.norms.H_norm for s in late])
    if slope > slope_limit:
        return TrichotomyVerdict("unbounded-suspected", dict(h_norm_slope=slope))
    ut_final = samples[-1].norms.l2_ut
    metrics = dict(
        ut_l2=ut_final,
        global_residual=None if final is None else final.global_residual,
        J=None if final is None else final.J,
        h_norm_slope=slope,
    )
    if final is not None and ut_final <= tol_v and final.global_residual <= tol_r:
        return TrichotomyVerdict("resolved", metrics)
    return TrichotomyVerdict("undecided", metrics)
