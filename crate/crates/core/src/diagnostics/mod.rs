//! Independent correctness checks: a grid posterior for the scalar model, a
//! joint-distribution test of the conditionals, and autocorrelation
//! comparison of the two samplers.

mod autocorr;
mod geweke;
mod grid;
pub mod stats;

pub use autocorr::{autocorr_compare, autocorrelation_with_se, AutocorrReport, Functional, LagRow, DEFAULT_MAX_LAG};
pub use geweke::{geweke_joint_test, GewekeConfig, GewekeReport, GewekeRow, FUNCTIONALS};
pub use grid::{
    grid_posterior_oracle, oracle_agreement, AgreementReport, AgreementRow, ErrorDensityTable, GridPosterior, GridSpec,
    OracleMoments, BOUNDARY_BAND, BOUNDARY_TOL, MAX_ORACLE_N, MOMENT_TAIL_TOL,
};
