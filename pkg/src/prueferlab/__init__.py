"""prueferlab: transfer-matrix and Pruefer-variable laboratory for sparse
Jacobi operators with random perturbation positions."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AdmissibilityError,
    ConfigError,
    ConstantCoupling,
    DecayingCoupling,
    DisorderRealization,
    EnergyPoint,
    ExponentialGaps,
    LinearEnvelope,
    PowerEnvelope,
    PrecisionError,
    Rationality,
    SpectralConfig,
    StretchedGaps,
    coupling_at,
    generate_positions,
    sample_disorder,
    verify_product_bracketing,
)
from .angles import AngleReducer, boundary_to_theta0, reduce_angle  # noqa: F401
from .transfer import (  # noqa: F401
    NormSequence,
    TransferBlock,
    block_norms,
    local_matrices,
    spectral_norm_2x2,
)
from .pruefer import (  # noqa: F401
    ErgodicConstants,
    PrueferTrajectory,
    ergodic_constants,
    f_coefficients,
    f_eval,
    pruefer_step,
    run_trajectory,
)
from .equidist import (  # noqa: F401
    DiscrepancyReport,
    WeylReport,
    del_series_diagnostic,
    dirichlet_bound,
    koksma_factor,
    star_discrepancy,
    weyl_sum,
)
from .spectral import (  # noqa: F401
    LastSimonReport,
    PhaseVerdict,
    RegimeVerdict,
    ScalingReport,
    agreement_grid,
    classify,
    critical_energy,
    hausdorff_dimension,
    intensity,
    last_simon_diagnostics,
    lemma_l2_diagnostic,
    regime_classify,
    scaling_exponents,
)
from .manifest import (  # noqa: F401
    ExperimentManifest,
    PreconditionError,
    RunRecord,
    build_manifest,
    load_manifest,
    manifest_hash,
)
