//! Dataset-level explanations.

mod importance;
mod profile;
mod residuals;
mod surrogate;

pub use importance::{
    permutation_for, permutation_importance, Importance, ImportanceMode, ImportanceOptions, Loss, VariableImportance,
    BASELINE, DEFAULT_IMPORTANCE_B, DEFAULT_IMPORTANCE_SAMPLE, FULL_MODEL,
};
pub use profile::{
    ale_weighted_mean, model_profile, AggregatedProfile, ProfileKind, ProfileOptions, ProfileSeries,
    DEFAULT_PROFILE_SAMPLE,
};
pub use residuals::{residual_diagnostics, ResidualTable};
pub use surrogate::{fit_surrogate_tree, SurrogateTree, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF};
