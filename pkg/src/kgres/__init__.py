"""Pseudospectral simulation of the damped focusing Klein-Gordon equation
``u_tt - Lap u + u + 2 alpha u_t = |u|^(p-1) u`` with equilibrium solvers and
soliton-resolution diagnostics."""
from .errors import BlowupError, BlowupFlagError, ConfigError, KGError, NoConvergenceError, UsageError
from .spectral import FieldState, ProjectorSpec, SpectralGrid, energy, norms
from .evolution import EvolutionConfig, evolve
from .equilibria import EquilibriumProfile, default_library, petviashvili, radial_shoot
from .diagnostics import DiagnosticsConfig, detect_concentration_points
from .resolution import classify, decompose
from .config import ScenarioSpec, parse_config, spec_from_values
from .runner import RunReport, run_scenario, sweep

__version__ = "0.1.0"
