"""Grid laboratory for Sobolev norms, composition operators, and congruence."""

from .grid_domain import (
    GridDomain,
    RigidMotion,
    apply_rigid_motion,
    cell_budget,
    congruence_check,
    connected_components,
    domain_from_spec,
    example_4_8_interval,
    example_4_8_omega1,
    example_4_8_omega2,
    example_5_4_omega1,
    example_5_4_omega2,
    fat_cantor_intervals,
    is_topologically_regular,
    make_box,
    make_fat_cantor_complement,
    random_rigid_motion,
)
from .field import (
    Field,
    VectorField,
    ball_fits,
    bump,
    exponential_probe,
    gradient,
    hat,
    is_compactly_supported,
    lp_norm,
    lp_pow_sum,
    probe_rate,
    random_smooth_field,
    w1p_norm,
    w1p_pow_sum,
)
from .forms import (
    DEFAULT_S_LADDER,
    GateauxReport,
    clarkson_check,
    form_a,
    form_b,
    gateaux_check_form,
    gateaux_check_norm,
    plap_residual,
)
from .operators import (
    BuiltinMap,
    DefectReport,
    DefectSets,
    OperatorSpec,
    PipelineReport,
    ReconstructionResult,
    RigidFitReport,
    RigidMap,
    TabulatedMap,
    apply,
    apply_to_function,
    apply_with_flags,
    averaging_operator,
    congruence_pipeline,
    defect_sets,
    disjointness_defect,
    example_4_8_operator,
    example_5_4_operator,
    identity_operator,
    intertwining_defect,
    isometry_defect,
    operator_from_spec,
    preimage_field,
    reconstruct,
    rigid_motion_fit,
    rigid_operator,
)

__version__ = "0.1.0"
