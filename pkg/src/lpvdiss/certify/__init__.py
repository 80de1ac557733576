"""Data-based dissipativity certificates and the model-based baseline."""

from .matrices import (
    CertificationError,
    CertificationProblem,
    affine_decompose,
    build_F,
    build_M_P,
    build_Pi,
    build_Pi_L,
    build_V,
    sched_operator,
    sproc_split,
)
from .methods import (
    METHOD_TAGS,
    VerifyOptions,
    fixed_p_gain,
    fixed_p_gain_exact,
    min_gain,
    run_method,
    sp_ball,
    verify_cha,
    verify_cha_rate,
    verify_fixed_p,
    verify_fixed_p_outcome,
    verify_mba,
    verify_sdm,
    verify_sp,
)
from .outcome import OUTCOME_SCHEMA, VerificationOutcome, load_outcome, save_outcome

__all__ = [
    "CertificationError", "CertificationProblem", "METHOD_TAGS", "OUTCOME_SCHEMA",
    "VerificationOutcome", "VerifyOptions", "affine_decompose", "build_F", "build_M_P",
    "build_Pi", "build_Pi_L", "build_V", "fixed_p_gain", "fixed_p_gain_exact", "load_outcome",
    "min_gain", "run_method", "save_outcome", "sched_operator", "sp_ball", "sproc_split",
    "verify_cha", "verify_cha_rate", "verify_fixed_p", "verify_fixed_p_outcome", "verify_mba",
    "verify_sdm", "verify_sp",
]
