"""Numerical laboratory for non-autonomous parabolic regularity.

Builds explicit evolution families for elliptic operators with rough (merely
measurable) time dependence, solves the associated Cauchy problems through
the mild-solution formula, and measures the constants in maximal
L^p-regularity estimates, weighted norm inequalities, trace embeddings and a
quasilinear fixed-point scheme on periodic desk-scale grids.
"""

from .fields import (
    GridField,
    SpaceTimeField,
    TorusGrid,
    apply_multiplier,
    besov_norm,
    field_from_binary,
    field_from_csv,
    field_to_binary,
    field_to_csv,
    lq_norm,
    sobolev_norms,
    trace_norm_oracle,
)
from .symbols import (
    EllipticSymbol,
    EllipticityCertificate,
    check_ellipticity,
    laplacian_symbol,
    mihlin_audit,
    symbols_equal,
)
from .weights import (
    Kernel1D,
    PowerWeight,
    SampledWeight,
    ap_constant,
    box_kernel,
    convolve_on_grid,
    exponential_kernel,
    exponentially_weighted,
    kernel_class_constant,
    maximal_operator,
    poisson_kernel,
    poisson_kernel_entry,
    poisson_reproduction,
)
from .evolution import (
    CoefficientPath,
    EvolutionFamily,
    FamilyAuditReport,
    averaged_symbol,
    family_audit,
    random_rough_path,
)
from .solver import (
    MRProblem,
    ProbeSpec,
    SolveReport,
    Trajectory,
    freezing_audit,
    mild_solve,
    mollify_convergence,
    mr_constant_estimate,
    mr_constant_scan,
    perturbed_solve,
    probe_forcings,
    solve_with_initial,
    synthetic_trajectory,
)
from .quasilinear import (
    ContractionTrace,
    QuasilinearProblem,
    constants_probe,
    embedding_constant,
    freeze_at_state,
    mr_error_vs,
    quasilinear_solve,
    reference_solve,
)
from .rbound import (
    OperatorFamilySpec,
    RBoundEstimate,
    apply_IkT,
    rbound_sample,
    uniform_bound_check,
)
from .catalog import (
    list_catalog,
    make_forcing,
    make_initial,
    make_path,
    mms_exact,
    mms_problem,
)

__all__ = [name for name in dir() if not name.startswith("_")]
