"""Least-squares problems on the space of discrete probability measures.

Solve ``argmin_{rho_x} D(G # rho_x, rho_y)`` for a tabulated forward map
``G`` with ``D`` a phi-divergence or a p-Wasserstein distance.
"""

from .divergence import GENERATORS, PhiGenerator, get_generator, phi_divergence, predicted_phi_min
from .measure import (
    DiscreteMeasure,
    ForwardMap,
    conditional_restrict,
    dirac,
    left_inverse_pullback,
    make_measure,
    mass_in_range,
    pushforward,
    range_of,
    tv_distance,
)
from .solver import (
    SolveResult,
    SolverOptions,
    bayes_variational_posterior,
    brute_force_oracle,
    solve_phi_closed_form,
    solve_phi_iterative,
    solve_wasserstein,
)
from .transport import (
    Coupling,
    GroundMetric,
    predicted_wasserstein_min,
    project_point,
    projection_pushforward,
    wasserstein_exact,
)

__version__ = "0.1.0"
