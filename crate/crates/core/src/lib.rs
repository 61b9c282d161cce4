//! SVD-based initializations for nonnegative matrix factorization.
//!
//! The centerpiece is [`init::nnsvd_lrc`], which seeds `(W, H)` from a
//! truncated SVD of rank `ceil(r/2 + 1)` by splitting each singular pair into
//! its positive and negative parts, then refines the pair with a few
//! accelerated HALS sweeps run against the implicit low-rank approximation.
//! [`init::nndsvd`] and [`init::svd_nmf`] are the classical baselines, and
//! [`solve`] holds the NMF solvers used after initialization.

pub mod error;
pub mod init;
pub mod matrix;
pub mod opcount;
pub mod solve;
mod timing;
pub mod tsvd;

pub use error::{Error, Result};
pub use init::{
    nndsvd, nnsvd_lrc, random_init, svd_nmf, ErrorTrace, InitConfig, InitResult, Initializer,
};
pub use matrix::{
    frobenius_norm, relative_error, sparsity, split_parts, CsrMatrix, DataMatrix, FactorPair,
    LowRankMatrix,
};
pub use solve::{
    ahals_solve, low_rank_error, mu_solve, nnls_update_h, SolveOptions, SolveResult, Target,
};
pub use tsvd::{to_two_factor, truncated_svd, SvdFactors, SvdOptions};
