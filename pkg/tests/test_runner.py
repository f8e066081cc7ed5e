import csv
import json
import math

import numpy as np
import pytest

from kgres.config import spec_from_values
from kgres.errors import ConfigError, UsageError
from kgres.evolution import BlowupReport, load_checkpoint, save_checkpoint
from kgres.resolution import TrichotomyVerdict
from kgres.runner import (
    SERIES_COLUMNS,
    SWEEP_COLUMNS,
    BoxTailWarning,
    RunReport,
    box_tail_fraction,
    build_initial,
    run_scenario,
    sweep,
)
from kgres.spectral import energy

# detection thresholds above the smooth low-pass ripple floor
DETECT = dict(mu0=0.8, mu1=0.4, mu2=0.2, mu3=0.1, mu4=0.05)
SMALL = dict(n=512, L=40.0, dt=0.01, stride=20, **DETECT)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_equilibrium_scenario_short_horizon(tmp_path):
    # the ground state is linearly unstable; the splitting error seeds the
    # unstable mode at O(dt^2), so keep dt small and the horizon short
    spec = spec_from_values(T=2.0, **dict(SMALL, dt=0.002, stride=100))
    rep = run_scenario(spec, out_dir=tmp_path)
    assert rep.verdict.verdict == "resolved"
    dec = rep.decompositions[-1]
    assert dec.J == 1 and dec.matches[0].name == "+ground"
    for name in ("series.csv", "decomposition.json", "verdict.json", "report.json", "scenario.ini", "final.dkgc"):
        assert (tmp_path / name).exists()
    rows = _read_csv(tmp_path / "series.csv")
    assert tuple(rows[0]) == SERIES_COLUMNS
    assert len(rows) - 1 == len(rep.samples) == 11
    assert json.loads((tmp_path / "verdict.json").read_text())["verdict"] == "resolved"
    h_bound = json.loads((tmp_path / "report.json").read_text())["h_bound"]
    assert h_bound == max(s.norms.H_norm for s in rep.samples)
    decs = json.loads((tmp_path / "decomposition.json").read_text())
    assert set(decs[0]) >= {"t", "J", "equilibria", "centers", "global_residual"}


def test_negative_energy_gaussian_blows_up(tmp_path):
    spec = spec_from_values(T=10.0, kind="gaussian", amplitude=3.0, **SMALL)
    assert energy(build_initial(spec)) < 0
    rep = run_scenario(spec, out_dir=tmp_path)
    assert rep.verdict.verdict == "blowup"
    assert 0 < rep.blowup.time < 10.0
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert v["blowup_time"] == rep.blowup.time
    assert rep.samples[-1].t < 10.0


def test_report_rejects_inconsistent_verdict():
    spec = spec_from_values(T=2.0, **SMALL)
    rep = run_scenario(spec, write=False)
    with pytest.raises(UsageError):
        RunReport(spec, rep.samples, rep.records, rep.decompositions,
                  TrichotomyVerdict("blowup"), BlowupReport(True, 1.0, 1e7), None)


def test_echo_complete(tmp_path):
    spec = spec_from_values(T=0.2, **SMALL)
    rep = run_scenario(spec, out_dir=tmp_path)
    echo = json.loads((tmp_path / "report.json").read_text())["scenario"]
    flat = {k: v for sec, vals in echo.items() if sec not in ("derived", "sweep") for k, v in vals.items()}
    assert flat == {k: v for k, v in spec.values.items()}
    assert "stability_bound" in echo["derived"]


def test_deterministic_outputs(tmp_path):
    spec = spec_from_values(T=1.0, kind="perturbed-equilibrium", mode="random", seed=7, eps=0.01, **SMALL)
    run_scenario(spec, out_dir=tmp_path / "a")
    run_scenario(spec, out_dir=tmp_path / "b")
    for name in ("series.csv", "decomposition.json", "verdict.json", "final.dkgc"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    other = spec.with_overrides(seed=8)
    run_scenario(other, out_dir=tmp_path / "c")
    assert (tmp_path / "a" / "series.csv").read_bytes() != (tmp_path / "c" / "series.csv").read_bytes()


def test_checkpoint_resume_matches_continuous_run(tmp_path):
    base = dict(kind="perturbed-equilibrium", mode="shrink", eps=0.05, **SMALL)
    whole = run_scenario(spec_from_values(T=4.0, **base), write=False)
    first = run_scenario(spec_from_values(T=2.0, **base), out_dir=tmp_path / "first")
    resumed = run_scenario(spec_from_values(T=2.0, **dict(base, kind="from-checkpoint",
                                                          path=str(tmp_path / "first" / "final.dkgc"))),
                           write=False)
    tail = [s for s in whole.samples if s.t >= 2.0 - 1e-12]
    assert len(tail) == len(resumed.samples)
    for a, b in zip(tail, resumed.samples):
        assert b.t == pytest.approx(a.t, abs=1e-12)
        assert b.energy == pytest.approx(a.energy, abs=1e-12)
        assert b.norms.H_norm == pytest.approx(a.norms.H_norm, abs=1e-12)
        assert b.norms.l2_ut == pytest.approx(a.norms.l2_ut, abs=1e-12)
    np.testing.assert_allclose(resumed.final_state.u, whole.final_state.u, atol=1e-12)
    assert first.samples[-1].t == pytest.approx(2.0)


def test_checkpoint_mismatch_rejected(tmp_path):
    run_scenario(spec_from_values(T=0.2, **SMALL), out_dir=tmp_path)
    spec = spec_from_values(T=0.2, kind="from-checkpoint", path=str(tmp_path / "final.dkgc"),
                            **dict(SMALL, alpha=0.3))
    with pytest.raises(ConfigError) as err:
        build_initial(spec)
    assert err.value.key == "alpha"


def test_checkpoint_file_round_trip_bytes(tmp_path):
    run_scenario(spec_from_values(T=0.2, **SMALL), out_dir=tmp_path)
    state, dt = load_checkpoint(tmp_path / "final.dkgc")
    save_checkpoint(tmp_path / "again.dkgc", state, dt)
    assert (tmp_path / "again.dkgc").read_bytes() == (tmp_path / "final.dkgc").read_bytes()


def test_box_tail_warning():
    spec = spec_from_values(n=128, L=10.0, dt=0.01, T=0.1, kind="gaussian", width=3.0)
    with pytest.warns(BoxTailWarning):
        state = build_initial(spec)
    assert box_tail_fraction(state) > 1e-10


def test_initial_recipes():
    two = build_initial(spec_from_values(kind="multi-bump", bumps="ground@-20:+1; ground@20:-1", **SMALL))
    x = two.grid.coords[0]
    assert two.u[np.argmin(np.abs(x + 20))] == pytest.approx(math.sqrt(2), rel=1e-12)
    assert two.u[np.argmin(np.abs(x - 20))] == pytest.approx(-math.sqrt(2), rel=1e-12)
    q = build_initial(spec_from_values(**SMALL)).u
    shrink = build_initial(spec_from_values(kind="perturbed-equilibrium", mode="shrink", eps=0.1, **SMALL)).u
    grow = build_initial(spec_from_values(kind="perturbed-equilibrium", mode="grow", eps=0.1, **SMALL)).u
    np.testing.assert_allclose(shrink, 0.9 * q, atol=1e-15)
    np.testing.assert_allclose(grow, 1.1 * q, atol=1e-15)
    with pytest.raises(ConfigError) as err:
        build_initial(spec_from_values(nodes=1, **SMALL))
    assert err.value.key == "nodes"


# -- sweeps ----------------------------------------------------------------------

def test_empty_sweep(tmp_path):
    rows = sweep(spec_from_values(**SMALL), grid={}, out_dir=tmp_path)
    assert rows == []
    assert _read_csv(tmp_path / "sweep.csv") == [["row", *SWEEP_COLUMNS]]


def test_amplitude_sweep_crosses_blowup_boundary(tmp_path):
    spec = spec_from_values(T=4.0, kind="gaussian", **SMALL)
    amps = (0.5, 1.0, 2.5, 4.0)
    rows = sweep(spec, grid={"amplitude": amps}, out_dir=tmp_path)
    assert [r["amplitude"] for r in rows] == list(amps)
    blew = [r["verdict"] == "blowup" for r in rows]
    assert blew == sorted(blew) and blew[0] is False and blew[-1] is True
    times = [r["blowup_time"] for r in rows if r["verdict"] == "blowup"]
    assert times == sorted(times, reverse=True)
    table = _read_csv(tmp_path / "sweep.csv")
    assert [row[0] for row in table[1:]] == ["0", "1", "2", "3"]
    assert (tmp_path / "run_0003" / "verdict.json").exists()


def test_alpha_sweep_dissipation_finite(tmp_path):
    spec = spec_from_values(T=3.0, kind="perturbed-equilibrium", mode="shrink", eps=0.1, **SMALL)
    rows = sweep(spec, grid={"alpha": (0.05, 0.2, 0.5)}, out_dir=tmp_path)
    for r in rows:
        assert r["error"] is None and math.isfinite(r["diss_integral"]) and r["diss_integral"] > 0


def test_sweep_records_row_errors_and_continues(tmp_path):
    spec = spec_from_values(T=0.4, **SMALL)
    rows = sweep(spec, grid={"alpha": (0.1, -1.0, 0.2)}, out_dir=tmp_path)
    assert rows[0]["error"] is None and rows[2]["error"] is None
    assert "alpha" in rows[1]["error"] and rows[1]["verdict"] is None


def test_sweep_order_independent_of_workers(tmp_path):
    spec = spec_from_values(T=0.4, kind="gaussian", **SMALL)
    grid = {"amplitude": (0.5, 3.0), "alpha": (0.1, 0.3)}
    serial = sweep(spec, grid=grid, out_dir=tmp_path / "s")
    parallel = sweep(spec, grid=grid, out_dir=tmp_path / "p", workers=2)
    assert [(r["amplitude"], r["alpha"]) for r in serial] == [(0.5, 0.1), (0.5, 0.3), (3.0, 0.1), (3.0, 0.3)]
    assert serial == parallel
    assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()


def test_sweep_uses_document_grid(tmp_path):
    from kgres.config import parse_config
    spec = parse_config("[scenario]\nn = 512\ndt = 0.01\nT = 0.2\n[sweep]\neps = 0.01, 0.02\n"
                        "[initial]\nkind = perturbed-equilibrium\n")
    rows = sweep(spec, out_dir=tmp_path)
    assert [r["eps"] for r in rows] == [0.01, 0.02]
