"""Finite-difference solver for 1-D mean field games with Neumann boundaries,
the associated master field and its measure derivatives."""

from .linearized import (
    GeneralLinearizedData,
    LinearizedSolution,
    fundamental_kernel,
    intrinsic_derivative,
    normalize_kernel,
    solve_linearized_general,
    solve_linearized_mfg,
)
from .master import (
    MasterSample,
    evaluate_master,
    flat_derivative_field,
    master_residual,
    probe_flow_consistency,
    probe_lipschitz,
    probe_remainder_order,
    time_derivative_master,
)
from .metrics import dual_norm, discrete_holder_norm, lp_spacetime_norm, wasserstein1
from .mfg import MfgSolution, fixed_point_map, monotonicity_gap, solve_mfg
from .model import (
    CouplingKernel,
    EllipticCoefficient,
    Grid,
    Hamiltonian,
    MfgModel,
    build_grid,
    coupling_flat_derivative,
    coupling_value,
    model_from_spec,
    reference_model,
    validate_hypotheses,
)
from .parabolic import (
    BackwardOperator,
    assemble_backward_operator,
    solve_fokker_planck_forward,
    solve_hjb_backward,
    solve_linear_backward,
)
from .rates import RateFit, fit_rate
from .validation import ConvergenceError, ValidationError

__version__ = "0.1.0"
