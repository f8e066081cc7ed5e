"""Command-line entry point ``kgr``.

Exit status is 0 for every completed run, whatever its verdict, 2 for
usage or configuration errors and 1 for anything else.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ScenarioSpec, parse_config
from .diagnostics import detect_concentration_points, exterior_energy, frequency_tail
from .equilibria import default_library, radial_shoot, save_profile
from .errors import KGError, UsageError
from .evolution import load_checkpoint
from .resolution import decompose
from .runner import _jsonable, run_scenario, sweep
from .spectral import check_admissible, energy, norms

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


def _spec(args, **extra) -> ScenarioSpec:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    over = dict(extra)
    if args.out:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    return parse_config(text, env=os.environ, **over)


def _print(obj):
    print(json.dumps(_jsonable(obj), indent=2))


def cmd_ground_state(args) -> int:
    check_admissible(args.p, args.d)
    if args.d == 1 and args.nodes > 0:
        raise UsageError("decaying nodal equilibria do not exist in one dimension")
    prof = radial_shoot(args.d, args.p, args.nodes)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{prof.name.lstrip('+')}_d{args.d}_p{args.p:g}.dkgq"
    save_profile(path, prof)
    _print(dict(profile=prof.name, d=prof.d, p=prof.p, nodes=prof.nodes,
                central_value=prof.central_value, path=str(path)))
    return EXIT_OK


def cmd_evolve(args) -> int:
    rep = run_scenario(_spec(args))
    _print(dict(verdict=rep.verdict.as_dict(), out=str(rep.out_dir)))
    return EXIT_OK


def _checkpoint_state(args):
    state, dt = load_checkpoint(args.checkpoint)
    spec = _spec(args, d=state.grid.d, n=state.grid.n, L=state.grid.L, p=state.p,
                 alpha=state.alpha, dt=dt)
    return state, spec


def cmd_diagnose(args) -> int:
    state, spec = _checkpoint_state(args)
    cs = detect_concentration_points(state, spec.diagnostics)
    tail_u, tail_ut = frequency_tail(state, spec.tail_cutoff_value())
    out = dict(
        t=state.t,
        norms=norms(state).as_dict(),
        energy=energy(state),
        tail_h1=tail_u,
        tail_l2_ut=tail_ut,
        J=cs.J,
        centers=cs.centers.tolist(),
        amplitudes=cs.amplitudes.tolist(),
        exterior_energy=exterior_energy(state, cs.centers, spec.exterior_radius) if cs.J else None,
    )
    _print(out)
    return EXIT_OK


def cmd_resolve(args) -> int:
    state, spec = _checkpoint_state(args)
    lib = default_library(state.grid.d, state.p, state.grid)
    _print(decompose(state, spec.diagnostics, lib).as_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _spec(args)
    rows = sweep(spec, workers=args.workers)
    for r in rows:
        print(json.dumps(_jsonable(r)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kgr", description="Damped focusing Klein-Gordon simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario document")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for random perturbations (u64)")
        return p

    gs = sub.add_parser("ground-state", help="solve for an equilibrium and save it as DKGQ")
    gs.add_argument("--d", type=int, default=1)
    gs.add_argument("--p", type=float, default=3.0)
    gs.add_argument("--nodes", type=int, default=0)
    gs.add_argument("--out", help="output directory")
    gs.set_defaults(func=cmd_ground_state)

    common(sub.add_parser("evolve", help="run a scenario")).set_defaults(func=cmd_evolve)
    for name, fn, msg in (("diagnose", cmd_diagnose, "localisation diagnostics of a checkpoint"),
                          ("resolve", cmd_resolve, "decompose a checkpoint into equilibria")):
        p = common(sub.add_parser(name, help=msg))
        p.add_argument("checkpoint")
        p.set_defaults(func=fn)
    sw = common(sub.add_parser("sweep", help="run the [sweep] grid of a scenario"))
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OSError) as exc:
        key = getattr(exc, "key", None)
        print(f"kgr: error{f' [{key}]' if key else ''}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KGError as exc:
        print(f"kgr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
