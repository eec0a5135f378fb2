"""Space-time discontinuous Galerkin solver for a coupled hyperbolic-parabolic
(poro-/thermoelastic) system written as a first-order evolutionary problem."""

from porostdg.mesh import Face, Mesh, build_mesh, face_quadrature
from porostdg.fespace import DiscreteSpace, ReferenceBasis, evaluate, project_l2
from porostdg.timeslab import (
    TemporalRule,
    TimeMesh,
    interpolate_radau,
    interpolate_radau_plus,
    weighted_gauss_radau,
    weighted_norms,
)
from porostdg.operators import (
    MaterialParams,
    OperatorSet,
    assemble_ah,
    assemble_jgamma,
    assemble_jpartial,
    assemble_m0,
    assemble_m1,
    assemble_operators,
    compute_nu0,
)
from porostdg.solver import (
    SlabSystem,
    Trajectory,
    assemble_slab,
    initial_state,
    march,
    solve_slab,
)
from porostdg.analysis import (
    ConvergenceReport,
    ManufacturedCase,
    convergence_study,
    default_case,
    discrete_error,
    verify_identities,
)

__version__ = "0.1.0"
