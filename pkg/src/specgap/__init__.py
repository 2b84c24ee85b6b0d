"""Spectral gap of nonequilibrium Langevin dynamics on the circle.

A Fourier x Hermite Galerkin discretization of the generator, its spectrum
and stationary state, and the explicit hypocoercive lower bounds.
"""

from .bounds import (BoundEvaluation, PoincareConstants, dms_rate, h1_rate, kozlov_gap,
                     lambda_min_2x2, norm_LhamAstar, optimize_dms, optimize_h1,
                     poincare_constants, poincare_nu, validate_bounds)
from .errors import (BasisError, ConsistencyError, DegenerateKernelError, InvalidArgument,
                     NormalizationError, NumericalError, ResolutionError, SpecgapError)
from .galerkin import BasisSpec, GeneratorMatrix, adjoint, assemble, hermite_ladder_check
from .model import ModelConstants, ModelParams, Potential, model_constants
from .spectral import SpectrumResult, converged_gap, spectrum, sweep
from .steady import (Observables, SteadyState, diffusivity_and_einstein, fisher_information,
                     identity_residuals, mean_velocity, perturbative_series, stationary_density)

__version__ = "0.1.0"
