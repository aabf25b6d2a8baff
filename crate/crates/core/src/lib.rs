//! Generalised least squares with closed-form leave-M-out cross-validation.
//!
//! Fit a GLS model once ([`fit_gls`]) and every deletion diagnostic for any
//! subset of observations follows without refitting: the squared residual
//! difference (drop in generalised RSS), the squared cross-validation
//! residual, the Cook's-distance multiple, the downdated coefficients and the
//! reduced-data variance estimate ([`deletion_stats`], [`loo_all`]). The
//! [`crossval`] module checks these against brute-force refits.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the double-precision instantiations.

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod crossval;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod glsfit;
pub mod linalg;
pub mod report;
pub mod scalar;
pub mod synthetic;

pub use covariance::{
    build_correlation, deleted_precision, inverse_correlation, partial_correlation,
    CorrelationMatrix, CorrelationModel, Family, PartialCorrelation, PrecisionMatrix, SubsetIndex,
};
pub use crossval::{
    compare_folds, kfold_partition, make_folds, pearson, refit_actual, simulate_kfold,
    ActualDeletion, FoldRecord, FoldSet, OracleReport, OracleSummary, RhoPolicy, Scheme,
    SimulationSummary,
};
pub use dataset::{
    build_design, load_design_csv, load_long_csv, write_long_csv, ColumnRoles, Groups, LongDataset,
    ModelSpec, RegressionProblem,
};
pub use diagnostics::{deletion_stats, loo_all, srd_via_partial, DeletionStats};
pub use error::{Error, Result};
pub use glsfit::{
    estimate_rho, fit_gls, restricted_loglik, tilde_block, transformed_residuals, GlsFit,
    TildeBlock, TransformedResiduals,
};
pub use linalg::{BlockDiag, Cholesky, Matrix};
pub use scalar::Real;

pub type Matrix64 = Matrix<f64>;
pub type RegressionProblem64 = RegressionProblem<f64>;
pub type CorrelationModel64 = CorrelationModel<f64>;
pub type CorrelationMatrix64 = CorrelationMatrix<f64>;
pub type PrecisionMatrix64 = PrecisionMatrix<f64>;
pub type GlsFit64 = GlsFit<f64>;
pub type DeletionStats64 = DeletionStats<f64>;

pub type Matrix32 = Matrix<f32>;
pub type RegressionProblem32 = RegressionProblem<f32>;
pub type GlsFit32 = GlsFit<f32>;
pub type DeletionStats32 = DeletionStats<f32>;
