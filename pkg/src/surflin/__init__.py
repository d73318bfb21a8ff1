"""Second-gradient elasticity with surface energy: nonlinear functionals,
their geometric linearizations, and epsilon sweeps checking the passage to the limit."""
from .functional import EnergyBreakdown, LoadSpec, VariantTag, energy, energy_gradient
from .gamma import SweepConfig, SweepReport, run_sweep
from .grid import GridConfig, build_space
from .material import MaterialSpec
from .solve import SolveOptions, minimize

__all__ = [
    "EnergyBreakdown", "GridConfig", "LoadSpec", "MaterialSpec", "SolveOptions",
    "SweepConfig", "SweepReport", "VariantTag", "build_space", "energy",
    "energy_gradient", "minimize", "run_sweep",
]
__version__ = "0.1.0"
