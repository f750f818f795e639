//! Selective inference for the selected coefficients: conditional-CDF
//! p-values and intervals, the selective MLE, and the sample-splitting
//! baseline.

mod ci;
mod law;
mod mle;
mod pvalue;
mod report;
mod splitting;

pub use ci::{
    confidence_intervals, confidence_intervals_strict, grid_anchor, holdout_estimate, reference_pvalue, reference_pvalues,
    reweighted_interval, reweighted_pvalue, CiOptions, ThetaEval,
};
pub use law::{importance_weight, log_importance_weight, reference_law, ConditionalLaw, LawPath, ReferenceLaw};
pub use mle::{selective_mle, MleOptions, MleResult, SelectiveLikelihood, StopReason, WaldCenter};
pub use pvalue::{pvalue, pvalue_from_law, PValue, SovOptions};
pub use report::{CoordinateInference, InferenceReport, Method};
pub use splitting::splitting_baseline;
