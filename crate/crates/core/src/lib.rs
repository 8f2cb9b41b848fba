//! Panel quantile treatment effect estimation with period-specific
//! covariate coefficients, bootstrap inference, a changes-in-changes
//! baseline and Monte Carlo designs.

pub mod cic;
pub mod config;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod moments;
pub mod montecarlo;
pub mod normal;
pub mod panel;
pub mod quantreg;
pub mod util;

pub use cic::{cic, did, CicEstimate, Ecdf};
pub use config::EstimationConfig;
pub use error::{Error, Result};
pub use estimator::{estimate, objective, profile_beta, Problem, QtePath, SearchTrace};
pub use inference::{bootstrap, pointwise_ci, uniform_test, BootstrapDraws, NullKind, TestResult};
pub use moments::{dhat, make_rule, QuadScheme, QuadratureRule};
pub use montecarlo::{
    generate, run_mc, run_test_mc, DgpKind, DgpSpec, EstimatorKind, McReport, McRow, SizeReport,
};
pub use panel::{standardize, validate, PanelDataset, StackedRegressors, ValidationReport};
