"""Scenario documents: parsing, defaults, environment overrides and
validation.

A scenario is an INI-style document::

    [scenario]
    d = 1
    p = 3
    alpha = 0.1

    [initial]
    kind = multi-bump
    bumps = ground@-20:+1; ground@20:+1

Keys are unique across sections, so ``KGR_ALPHA=0.2`` in the environment
overrides ``alpha`` wherever it lives.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .diagnostics import DiagnosticsConfig
from .errors import ConfigError, UsageError
from .evolution import EvolutionConfig, stability_bound
from .spectral import SpectralGrid, admissible_exponent_bound

__all__ = [
    "Bump",
    "InitialRecipe",
    "ScenarioSpec",
    "parse_config",
    "parse_bumps",
    "spec_from_values",
    "SECTIONS",
    "DEFAULTS",
    "ENV_PREFIX",
]

ENV_PREFIX = "KGR_"
INITIAL_KINDS = ("equilibrium", "multi-bump", "gaussian", "perturbed-equilibrium", "from-checkpoint")
PERTURB_MODES = ("shrink", "grow", "random")

# section -> {key: default}; every key is unique across sections
SECTIONS = {
    "scenario": dict(
        name="scenario", d=1, p=3.0, alpha=0.1, L=40.0, n=512, dt=0.01, T=10.0,
        stride=100, blowup_threshold=1e6, dealias=True, seed=0, decompose_every=1,
    ),
    "initial": dict(
        kind="equilibrium", center="0", sign=1, nodes=0, bumps="",
        amplitude=1.0, width=1.0, eps=0.05, mode="shrink", path="",
    ),
    "diagnostics": dict(
        mu0=1e-1, mu1=1e-2, mu2=1e-3, mu3=1e-4, mu4=1e-5, detect_cutoff=None,
        tail_cutoff=None, exterior_radius=10.0, tol_v=1e-3, tol_r=1e-2,
    ),
    "output": dict(out="runs/scenario"),
}
DEFAULTS = {k: v for sec in SECTIONS.values() for k, v in sec.items()}
_SECTION_OF = {k: s for s, sec in SECTIONS.items() for k in sec}

_INT_KEYS = {"d", "n", "stride", "seed", "decompose_every", "sign", "nodes"}
_FLOAT_KEYS = {"p", "alpha", "L", "dt", "T", "blowup_threshold", "amplitude", "width", "eps",
               "mu0", "mu1", "mu2", "mu3", "mu4", "detect_cutoff", "tail_cutoff",
               "exterior_radius", "tol_v", "tol_r"}
_BOOL_KEYS = {"dealias"}

# fraction of the total energy density allowed in the outermost cells
BOX_TAIL_LIMIT = 1e-10


_OPTIONAL_KEYS = {"detect_cutoff", "tail_cutoff"}


def _coerce(key, raw):
    if key not in _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS:
        return "" if raw is None else str(raw).strip()
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if key in _OPTIONAL_KEYS:
            return None
        raise ConfigError(f"{key}: a value is required", key)
    try:
        if key in _INT_KEYS:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if key in _FLOAT_KEYS:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {raw!r}", key) from None


@dataclass(frozen=True)
class Bump:
    profile: str  # "ground" or "nodalK"
    center: tuple
    sign: int = 1

    @property
    def nodes(self) -> int:
        return 0 if self.profile == "ground" else int(self.profile[5:])


_BUMP_RE = re.compile(r"^\s*(ground|nodal\d+)\s*@\s*([^:]+?)\s*(?::\s*([+-]?1))?\s*$")


def _point(text, d, key):
    try:
        vals = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"{key}: cannot read point {text!r}", key) from None
    if len(vals) == 1 and d > 1:
        vals = vals * d
    if len(vals) != d:
        raise ConfigError(f"{key}: point {text!r} needs {d} coordinates", key)
    return vals


def parse_bumps(text: str, d: int) -> tuple:
    """``"ground@-20:+1; ground@20:-1"`` into a tuple of :class:`Bump`."""
    out = []
    for part in filter(None, (s.strip() for s in text.split(";"))):
        m = _BUMP_RE.match(part)
        if m is None:
            raise ConfigError(f"bumps: cannot read {part!r} (expected name@x[,y,z][:sign])", "bumps")
        out.append(Bump(m.group(1), _point(m.group(2), d, "bumps"), int(m.group(3) or 1)))
    return tuple(out)


@dataclass(frozen=True)
class InitialRecipe:
    kind: str
    center: tuple
    sign: int = 1
    nodes: int = 0
    bumps: tuple = ()
    amplitude: float = 1.0
    width: float = 1.0
    eps: float = 0.05
    mode: str = "shrink"
    path: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully resolved scenario; ``values`` holds every key with its final
    value, defaults included."""

    values: dict = field(repr=False)
    sweep: dict = field(default_factory=dict, repr=False)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.d, self.n, self.L)

    @property
    def evolution(self) -> EvolutionConfig:
        return EvolutionConfig(
            dt=self.dt, T=self.T, alpha=self.alpha, p=self.p,
            blowup_threshold=self.blowup_threshold, stride=self.stride, dealias=self.dealias,
        )

    @property
    def diagnostics(self) -> DiagnosticsConfig:
        v = self.values
        return DiagnosticsConfig(v["mu0"], v["mu1"], v["mu2"], v["mu3"], v["mu4"], v["detect_cutoff"])

    @property
    def initial(self) -> InitialRecipe:
        v = self.values
        return InitialRecipe(
            kind=v["kind"], center=_point(v["center"], v["d"], "center"), sign=v["sign"],
            nodes=v["nodes"], bumps=parse_bumps(v["bumps"], v["d"]), amplitude=v["amplitude"],
            width=v["width"], eps=v["eps"], mode=v["mode"], path=v["path"],
        )

    def tail_cutoff_value(self) -> float:
        tc = self.values["tail_cutoff"]
        return tc if tc is not None else self.grid.nyquist / 4.0

    def echo(self) -> dict:
        """Every setting the run used, grouped by section."""
        out = {s: {k: self.values[k] for k in sec} for s, sec in SECTIONS.items()}
        out["derived"] = dict(
            stability_bound=stability_bound(self.grid),
            tail_cutoff=self.tail_cutoff_value(),
            detect_cutoff=self.diagnostics.cutoff(self.grid),
            separation=self.diagnostics.separation(self.grid),
        )
        if self.sweep:
            out["sweep"] = {k: list(v) for k, v in self.sweep.items()}
        return out

    def with_overrides(self, **kw) -> "ScenarioSpec":
        values = dict(self.values)
        for k, v in kw.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r}", k)
            values[k] = _coerce(k, v)
        return _validated(values, self.sweep)

    def to_text(self) -> str:
        """Round-trippable document form of the resolved values."""
        lines = []
        for s, sec in SECTIONS.items():
            lines.append(f"[{s}]")
            for k in sec:
                v = self.values[k]
                lines.append(f"{k} = {'none' if v is None else _fmt(v)}")
            lines.append("")
        if self.sweep:
            lines.append("[sweep]")
            for k, vals in self.sweep.items():
                lines.append(f"{k} = " + ", ".join(_fmt(v) for v in vals))
            lines.append("")
        return "\n".join(lines)


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def _validated(values: dict, sweep: dict) -> ScenarioSpec:
    d, p = values["d"], values["p"]
    if d not in (1, 2, 3):
        raise ConfigError(f"d must be 1, 2 or 3, got {d}", "d")
    bound = admissible_exponent_bound(d)
    if not 1.0 < p < bound:
        raise ConfigError(f"p = {p:g} is outside the admissible range 1 < p < {bound:g} for d = {d}", "p")
    try:
        grid = SpectralGrid(d, values["n"], values["L"])
    except UsageError as exc:
        raise ConfigError(str(exc), "L" if values["n"] >= 16 else "n") from None
    dt_max = stability_bound(grid)
    if not 0 < values["dt"] <= dt_max:
        raise ConfigError(
            f"dt = {values['dt']:g} violates dt*sqrt(1+k_max^2) <= 0.5; bound for n={grid.n}, "
            f"L={grid.L:g} is dt <= {dt_max:.6g}", "dt")
    if values["alpha"] < 0:
        raise ConfigError("alpha must be nonnegative", "alpha")
    if values["kind"] not in INITIAL_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(INITIAL_KINDS)}", "kind")
    mode = values["mode"]
    if not (mode in PERTURB_MODES or re.fullmatch(r"fourier:\d+", mode or "")):
        raise ConfigError("mode must be shrink, grow, random or fourier:<m>", "mode")
    if values["sign"] not in (1, -1):
        raise ConfigError("sign must be +1 or -1", "sign")
    if values["kind"] == "from-checkpoint" and not values["path"]:
        raise ConfigError("from-checkpoint needs a path", "path")
    if values["kind"] == "multi-bump" and not values["bumps"]:
        raise ConfigError("multi-bump needs a bumps list", "bumps")
    if values["seed"] < 0 or values["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
    for key in ("stride", "decompose_every", "width"):
        if not values[key] > 0:
            raise ConfigError(f"{key} must be positive", key)
    for key in ("exterior_radius", "tol_v", "tol_r"):
        if not values[key] > 0:
            raise ConfigError(f"{key} must be positive", key)
    if values["tail_cutoff"] is not None and not values["tail_cutoff"] > 0:
        raise ConfigError("tail_cutoff must be positive", "tail_cutoff")

    spec = ScenarioSpec(values, sweep)
    for key, build in (("T", lambda: spec.evolution.n_steps), ("mu0", lambda: spec.diagnostics),
                       ("center", lambda: spec.initial)):
        try:
            build()
        except ConfigError:
            raise
        except UsageError as exc:
            raise ConfigError(str(exc), key) from None
    return spec


def parse_config(text: str, env: Optional[Mapping[str, str]] = None, **overrides) -> ScenarioSpec:
    """Parse a scenario document into a validated :class:`ScenarioSpec`.

    Precedence, lowest first: defaults, document, ``KGR_*`` entries of
    ``env``, keyword overrides.

    Raises
    ------
    ConfigError
        Unknown keys or sections, unreadable values, an inadmissible
        ``(p, d)`` pair or a ``dt`` above the stability bound.  ``key``
        names the offending entry.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed document: {exc}") from None

    raw = dict(DEFAULTS)
    sweep = {}
    for sec in cp.sections():
        if sec == "sweep":
            for k, v in cp[sec].items():
                if k not in DEFAULTS:
                    raise ConfigError(f"unknown sweep key {k!r}", k)
                sweep[k] = tuple(_coerce(k, x) for x in v.split(",") if x.strip())
            continue
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", sec)
        for k, v in cp[sec].items():
            if k not in SECTIONS[sec]:
                where = f" (belongs in [{_SECTION_OF[k]}])" if k in _SECTION_OF else ""
                raise ConfigError(f"unknown key {k!r} in [{sec}]{where}", k)
            raw[k] = v

    for name, v in (env or {}).items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):]
        match = [k for k in DEFAULTS if k.upper() == key]
        if not match:
            raise ConfigError(f"environment variable {name} names no known key", key.lower())
        raw[match[0]] = v
    for k, v in overrides.items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown key {k!r}", k)
        raw[k] = v

    values = {k: _coerce(k, v) for k, v in raw.items()}
    return _validated(values, sweep)


def spec_from_values(**kw) -> ScenarioSpec:
    """Spec from keyword values on top of the defaults."""
    return parse_config("", **kw)

