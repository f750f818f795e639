//! Numerical building blocks.

pub mod linalg;
pub mod quad;
pub mod special;

pub use linalg::{cholesky, CholeskyFactor, SymMatrix};
pub use special::{
    bvn_prob, log_norm_cdf, log_norm_sf, norm_cdf, norm_inv_cdf, norm_pdf, norm_quantile,
    norm_sf, owens_t, preintegrate_last, trunc_norm_moments_1d,
};
