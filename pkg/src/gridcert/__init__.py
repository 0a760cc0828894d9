"""Power flow and a priori convergence certificates for dc microgrids."""
from gridcert.certifier import (Certificate, ConstantSet, Verdict, certify, certify_model,
                                constants_for, constants_island, constants_master,
                                max_power_master)
from gridcert.kernels import BACKEND
from gridcert.netmodel import (CaseFormatError, GridCase, Mode, NodeKind, load_case,
                               parse_case, reduce_case)
from gridcert.numerics import NoRootError, SingularMatrixError
from gridcert.powerflow import (ResidualModel, SolverConfig, Variant, approx_newton_solve,
                                build_model, jacobian, newton_solve, residual, solve)

__version__ = "0.1.0"
