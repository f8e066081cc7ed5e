"""Scenario execution: initial data, diagnostics observers, output files
and parameter sweeps."""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import BOX_TAIL_LIMIT, ScenarioSpec
from .diagnostics import exterior_energy, frequency_tail
from .equilibria import default_library, embed_on_grid
from .errors import ConfigError, KGError, NoConvergenceError, UsageError
from .evolution import BlowupReport, evolve, load_checkpoint, save_checkpoint
from .resolution import TrichotomyVerdict, classify, decompose
from .spectral import (
    FieldState,
    ProjectorSpec,
    apply_projector,
    distance_field,
    local_energy_density,
)

__all__ = [
    "BoxTailWarning",
    "RunReport",
    "SERIES_COLUMNS",
    "build_initial",
    "equilibrium_profile",
    "box_tail_fraction",
    "run_scenario",
    "sweep",
    "write_outputs",
    "SWEEP_COLUMNS",
]

SERIES_COLUMNS = ("t", "energy", "l2_ut", "h1_u", "linf_u", "H_norm", "diss_integral",
                  "tail_h1", "J", "min_sep", "global_residual")
SWEEP_COLUMNS = ("verdict", "blowup_time", "t_final", "energy", "H_norm", "l2_ut",
                 "diss_integral", "J", "global_residual", "error")


class BoxTailWarning(UserWarning):
    """Initial data carries non-negligible energy at the box edge."""


def equilibrium_profile(d: int, p: float, nodes: int = 0):
    """Positive ground (``nodes = 0``) or nodal profile from the matching
    library."""
    if nodes < 0:
        raise ConfigError("nodes must be nonnegative", "nodes")
    if d == 1 and nodes > 0:
        raise ConfigError("decaying nodal equilibria do not exist in one dimension", "nodes")
    try:
        lib = default_library(d, p, max_nodes=nodes if d > 1 else 0)
    except NoConvergenceError as exc:
        raise ConfigError(f"equilibrium with {nodes} nodes not found: {exc}", "nodes") from None
    return lib[2 * nodes]


def box_tail_fraction(state: FieldState) -> float:
    """Share of the energy density sitting in the outermost layer of cells."""
    grid = state.grid
    dens = np.abs(local_energy_density(state))
    edge = np.zeros(grid.shape, dtype=bool)
    for x in grid.coords:
        edge |= np.abs(x) >= grid.L - grid.h * 1.5
    total = float(np.sum(dens))
    return float(np.sum(dens[edge])) / total if total > 0 else 0.0


def _perturbation(spec: ScenarioSpec, q: np.ndarray) -> np.ndarray:
    grid = spec.grid
    mode = spec.mode
    if mode == "shrink":
        return -q
    if mode == "grow":
        return q
    if mode == "random":
        rng = np.random.default_rng(spec.seed)
        noise = apply_projector(grid, rng.standard_normal(grid.shape),
                                ProjectorSpec(grid.nyquist / 8.0, "low"))
        return q * noise / np.max(np.abs(noise))
    m = int(mode.split(":")[1])
    return q * np.cos(np.pi * m * grid.coords[0] / grid.L)


def build_initial(spec: ScenarioSpec) -> FieldState:
    """Initial state for the scenario's recipe.

    Warns with :class:`BoxTailWarning` when more than ``1e-10`` of the
    energy density lies in the outermost cells.
    """
    grid = spec.grid
    rec = spec.initial
    kw = dict(p=spec.p, alpha=spec.alpha)
    if rec.kind == "from-checkpoint":
        state, dt = load_checkpoint(rec.path)
        for key, a, b in (("d", state.grid.d, grid.d), ("n", state.grid.n, grid.n),
                          ("L", state.grid.L, grid.L), ("p", state.p, spec.p),
                          ("alpha", state.alpha, spec.alpha), ("dt", dt, spec.dt)):
            if a != b:
                raise ConfigError(f"checkpoint has {key} = {a!r}, scenario has {b!r}", key)
        return state
    if rec.kind == "gaussian":
        r = distance_field(grid, [rec.center])
        u = rec.amplitude * np.exp(-(r / rec.width) ** 2)
        state = FieldState(grid, u, np.zeros(grid.shape), **kw)
    else:
        try:
            if rec.kind == "multi-bump":
                u = np.zeros(grid.shape)
                for b in rec.bumps:
                    u += b.sign * embed_on_grid(equilibrium_profile(grid.d, spec.p, b.nodes), grid, b.center)
            else:
                q = rec.sign * embed_on_grid(equilibrium_profile(grid.d, spec.p, rec.nodes), grid, rec.center)
                u = q if rec.kind == "equilibrium" else q + rec.eps * _perturbation(spec, q)
        except ConfigError:
            raise
        except UsageError as exc:
            raise ConfigError(str(exc), "L") from None
        state = FieldState(grid, u, np.zeros(grid.shape), **kw)
    frac = box_tail_fraction(state)
    if frac > BOX_TAIL_LIMIT:
        warnings.warn(f"{frac:.3g} of the initial energy density lies in the outermost cells; "
                      f"enlarge L", BoxTailWarning, stacklevel=2)
    return state


@dataclass
class RunReport:
    spec: ScenarioSpec
    samples: list
    records: list  # per-sample diagnostics, aligned with samples
    decompositions: list
    verdict: TrichotomyVerdict
    blowup: BlowupReport
    final_state: Optional[FieldState]
    wall_clock: dict = field(default_factory=dict)
    out_dir: Optional[Path] = None

    def __post_init__(self):
        truncated = bool(self.samples) and self.samples[-1].t < self.samples[0].t + self.spec.T - 0.5 * self.spec.dt
        if self.blowup.flag != truncated or (self.verdict.verdict == "blowup") != self.blowup.flag:
            raise UsageError("verdict and series disagree about blowup")

    @property
    def echo(self) -> dict:
        return self.spec.echo()

    def series(self) -> list:
        """Rows of the CSV series as dictionaries."""
        out = []
        for s, rec in zip(self.samples, self.records):
            row = s.as_dict()
            row.update(rec)
            out.append({k: row.get(k) for k in SERIES_COLUMNS})
        return out

    def as_dict(self) -> dict:
        return dict(
            scenario=self.echo,
            verdict=self.verdict.as_dict(),
            blowup=dict(flag=self.blowup.flag, time=self.blowup.time, value=self.blowup.value),
            samples=len(self.samples),
            h_bound=None if self.blowup.flag else max(s.norms.H_norm for s in self.samples),
            decompositions=len(self.decompositions),
            wall_clock=self.wall_clock,
        )


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_outputs(report: RunReport, out_dir, last_state: Optional[FieldState]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "series.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in report.series():
            w.writerow([_cell(row[k]) for k in SERIES_COLUMNS])
    _write_json(out / "decomposition.json", [d.as_dict() for d in report.decompositions])
    _write_json(out / "verdict.json", dict(scenario=report.spec.name, **report.verdict.as_dict()))
    _write_json(out / "report.json", report.as_dict())
    (out / "scenario.ini").write_text(report.spec.to_text(), encoding="utf-8")
    if last_state is not None:
        save_checkpoint(out / "final.dkgc", last_state, report.spec.dt)
    return out


def run_scenario(spec: ScenarioSpec, observers: Iterable[Callable] = (), out_dir=None,
                 write: bool = True, library: Optional[Sequence] = None) -> RunReport:
    """Evolve the scenario with diagnostics attached and write its outputs.

    Each sample records the high-frequency ``H^1`` tail above the tail
    cutoff; every ``decompose_every``-th sample (and the last) also gets a
    full decomposition and the exterior energy around detected centers.
    Files written to ``out_dir`` (default ``spec.out``): ``series.csv``,
    ``decomposition.json``, ``verdict.json``, ``report.json``,
    ``scenario.ini`` and ``final.dkgc`` (the last sampled state).
    """
    started = time.time()
    t_cpu = time.process_time()
    grid = spec.grid
    initial = build_initial(spec)
    cfg = spec.evolution
    diag = spec.diagnostics
    if library is None:
        library = default_library(grid.d, spec.p, grid)
    if not library:
        warnings.warn("no equilibrium resolves on this grid; components stay unmatched", RuntimeWarning)
    cutoff = spec.tail_cutoff_value()
    n_samples_expected = cfg.n_steps // cfg.stride + (1 if cfg.n_steps % cfg.stride else 0) + 1

    records, decomps = [], []
    last = {}

    def observe(state, sample):
        k = len(records)
        tail, _ = frequency_tail(state, cutoff)
        rec = dict(tail_h1=tail, J=None, min_sep=None, global_residual=None, exterior=None)
        dec = None
        if k % spec.decompose_every == 0 or k == n_samples_expected - 1:
            dec = decompose(state, diag, library)
            decomps.append(dec)
            rec.update(J=dec.J, min_sep=dec.min_separation, global_residual=dec.global_residual)
            if dec.J:
                rec["exterior"] = exterior_energy(state, dec.centers, spec.exterior_radius)
        records.append(rec)
        last["state"] = state
        last["decomp"] = dec

    result = evolve(initial, cfg, observers=[observe, *observers])
    final_dec = None
    if not result.blown_up:
        final_dec = last["decomp"] or decompose(result.final_state, diag, library)
    verdict = classify(result.samples, result.blowup, final_dec, spec.tol_v, spec.tol_r)
    report = RunReport(
        spec=spec,
        samples=result.samples,
        records=records,
        decompositions=decomps,
        verdict=verdict,
        blowup=result.blowup,
        final_state=result.final_state,
        wall_clock=dict(started=started, elapsed_s=time.time() - started,
                        cpu_s=time.process_time() - t_cpu, steps=result.steps_taken),
    )
    if write:
        report.out_dir = write_outputs(report, out_dir or spec.out, last.get("state"))
    return report


# -- sweeps ------------------------------------------------------------------

def _sweep_row(args):
    spec, overrides, out_dir = args
    row = dict(overrides)
    row.update({k: None for k in SWEEP_COLUMNS})
    try:
        s = spec.with_overrides(**overrides, out=str(out_dir))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = run_scenario(s, out_dir=out_dir)
        last = rep.samples[-1]
        dec = rep.decompositions[-1] if rep.decompositions else None
        row.update(
            verdict=rep.verdict.verdict,
            blowup_time=rep.blowup.time,
            t_final=last.t,
            energy=last.energy,
            H_norm=last.norms.H_norm,
            l2_ut=last.norms.l2_ut,
            diss_integral=last.dissipation,
            J=None if rep.blowup.flag or dec is None else dec.J,
            global_residual=None if rep.blowup.flag or dec is None else dec.global_residual,
        )
    except KGError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # keep the sweep alive, record what broke
        row["error"] = f"internal {type(exc).__name__}: {exc}"
    return row


def sweep(spec: ScenarioSpec, grid: Optional[dict] = None, out_dir=None, workers: int = 1) -> list:
    """Run the cartesian product of ``grid`` (default ``spec.sweep``).

    Rows follow ``itertools.product`` order over the keys as declared, so
    the table does not depend on ``workers``.  A failing row records its
    error and the sweep goes on.  An empty grid gives an empty table.
    """
    grid = dict(spec.sweep if grid is None else grid)
    out = Path(out_dir or spec.out)
    keys = list(grid)
    combos = [] if not keys else list(itertools.product(*(grid[k] for k in keys)))
    jobs = [(spec, dict(zip(keys, combo)), out / f"run_{i:04d}") for i, combo in enumerate(combos)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", *keys, *SWEEP_COLUMNS])
        for i, row in enumerate(rows):
            w.writerow([i, *(_cell(row[k]) for k in keys), *(_cell(row[k]) for k in SWEEP_COLUMNS)])
    return rows

