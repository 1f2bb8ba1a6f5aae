"""Gibbs Gramians of nonlinear dynamics from noise-driven simulation."""
__version__ = "0.1.0"

from .dynamics import (DynamicsModel, FhnNetwork, LinearSystem, NoiseSpec, build_expression,
                       build_fhn, build_linear, drift_jacobian)
from .errors import (ConfigurationError, DivergenceError, DomainTooSmallError, GibbsGramError,
                     NumericError, TimeLookupError)
from .fokker_planck import (GridDensity, GridSpec, crosscheck_theorem, evolve_density,
                            stochastic_controllability_on_grid)
from .gramian import (GramianMatrix, StreamingGramian, empirical_gibbs_gramian,
                      gibbs_gramian_quadrature, linear_gramian, snapshot_summed_gramian)
from .reduction import (ProjectionBasis, ReducedModel, directional_reach_score, galerkin_reduce,
                        principal_basis, projection_error)
from .sde import (EnsembleSnapshots, SnapshotSchedule, deterministic_trajectory,
                  simulate_ensemble, stream_ensemble)
