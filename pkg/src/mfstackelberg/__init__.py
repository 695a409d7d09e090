"""Linear-quadratic mean-field Stackelberg games with a random exit time."""

__version__ = "0.1.0"

from .model import ConfigError, GameSpec, IntensitySpec, load_spec, scenario_c0, scenario_example, validate_spec
from .numerics import IntegrationBlowup
from .pipeline import Equilibrium, solve_equilibrium

__all__ = ["ConfigError", "Equilibrium", "GameSpec", "IntegrationBlowup", "IntensitySpec", "load_spec",
           "scenario_c0", "scenario_example", "solve_equilibrium", "validate_spec", "__version__"]
