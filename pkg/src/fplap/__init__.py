"""Fractional p-Laplacian toolkit.

Discretizes the nonlocal operator (-Delta)^s_p with a lower-order term on
uniform lattices, solves exterior-value problems by convex energy
minimization, and verifies comparison principles, the scaling law, and
starshapedness of superlevel sets at desk scale.
"""

from .core import (
    DiscreteFunction,
    DomainKind,
    DomainSpec,
    GridDomain,
    NodeRole,
    build_grid,
    interpolate,
    sample_function,
)
from .operator import (
    FractionalParams,
    KernelWeights,
    ProblemSpec,
    apply_pointwise,
    assemble_weights,
    delta_shift_margin,
    gagliardo_energy,
    indicator_perturbation,
    pairing,
    total_energy,
    weak_residual,
)
from .powers import (
    Inequality,
    InequalityConstant,
    Provenance,
    certify_constant,
    check_diff_upper,
    check_holder_diff,
    check_increment_bounded,
    check_increment_geq1,
    check_sum_power,
    signed_power,
)
from .solver import (
    ResidualClass,
    SolveResult,
    SolverOptions,
    classify_residual,
    linear_solve_p2,
    solve_dirichlet,
)

__version__ = "0.1.0"
