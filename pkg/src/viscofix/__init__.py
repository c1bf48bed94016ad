"""Fixed-point solvers for nonexpansive operators via implicit viscosity steps."""

from .space import (
    DEFAULT_POLICY,
    DEFAULT_SEED,
    DimensionMismatch,
    TolerancePolicy,
    ViscofixError,
    inner,
    norm,
)
from .operators import (
    AffineOperator,
    AveragedOperator,
    BallProjection,
    BlendOperator,
    BoxProjection,
    CompositeOperator,
    ConstantOperator,
    DeclaredClass,
    DeclaredWrapper,
    FixedPointSet,
    FunctionOperator,
    Identity,
    InvalidSpec,
    IteratedOperator,
    LinearOperator,
    NACertificate,
    Negation,
    NoConvergence,
    NotLinear,
    NotNonexpansive,
    Operator,
    PlaneRotation,
    blend,
    certify_norm_attainable,
    check_nonexpansive,
    contraction,
    estimate_lipschitz,
    fixed_points_linear,
    make_operator,
    nullspace_basis,
    operator_norm,
)
from .semigroup import (
    CustomFamily,
    IndexSemigroup,
    OperatorFamily,
    PowerFamily,
    RepresentationReport,
    RotationFlowFamily,
    check_representation,
    common_fixed_residual,
    common_fixed_set_linear,
    make_custom_family,
    make_family,
    make_power_family,
    make_rotation_flow,
)
from .trace import ConvergenceTrace, TraceStep, export_trace, load_trace
from .schemes import (
    EpsilonSchedule,
    FixedPointResult,
    InnerTolRule,
    InvalidSchedule,
    MaxIterExceeded,
    NonDecreasingSchedule,
    NotAContraction,
    RetractionValues,
    SolveOptions,
    anchored_implicit_solve,
    coupled_inner_tol,
    fixed_inner_tol,
    implicit_step,
    make_schedule,
    picard_solve,
    retraction_eval,
    viscosity_implicit_solve,
)
from .diagnostics import (
    NoCommonFixedPoint,
    NotAFixedPoint,
    ProofStepReport,
    RetractionCheck,
    StagnationReport,
    Step2Report,
    Step3Report,
    Step4Report,
    Step5Report,
    build_proof_step_report,
    check_retraction_nonexpansive,
    check_step2_bound,
    check_step3_residual,
    check_step4_vi,
    check_step5_convergence,
    detect_no_common_fixed_point,
    is_fixed_point,
    residual,
)

__version__ = "0.1.0"
