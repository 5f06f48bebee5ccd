"""Time rescaling of nonautonomous linear difference equations.

Converts dichotomies measured against a growth rate into exponential
dichotomies, estimates dichotomy spectra, and builds conjugacies for
small nonlinear perturbations.
"""

__version__ = "0.1.0"

from .errors import (ConditionError, ContractionError, GrowthRateError, HorizonError,
                     MudichError, NonFiniteError, ScenarioError, SingularRestrictionError)
from .growth import GrowthRate, exponential, geometric, polynomial, table
from .system import (EvolutionFamily, NormFamily, OperatorSequence, ProjectionFamily,
                     check_invariance)
from .rescale import RescaledSystem, RescaleIndexMap, build
from .dichotomy import (DichotomyCertificate, build_adapted_norms, check_bounded_growth,
                        check_ordinary, fit_mu, pull_back_projections)
from .spectrum import (SpectrumEstimate, check_band_gap, check_resonance, compare_spectra,
                       ed_spectrum_rescaled, hausdorff, mu_spectrum)
from .linearize import (NonlinearPerturbation, aggregate_f, check_class, compose_h,
                        compose_hbar, nonlinear_transition, solve_psi, verify_conjugacy)
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
