//! Two-stage high-dimensional regression: Lasso selection followed by modified least squares
//! or Ridge on the selected columns, residual-bootstrap inference around the refitted
//! estimator, stability selection, design diagnostics and a simulation bench.
//!
//! Every numerical routine is generic over [`scalar::Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod simbench;
pub mod stability;
pub mod two_stage;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type RegressionDataset = model::RegressionDataset<f64>;
pub type LassoFit = model::LassoFit<f64>;
pub type TwoStageEstimate = model::TwoStageEstimate<f64>;
pub type PipelineConfig = two_stage::PipelineConfig<f64>;
pub type PipelineFit = two_stage::PipelineFit<f64>;
pub type CvResult = lasso::CvResult<f64>;
pub type BootstrapEnsemble = bootstrap::BootstrapEnsemble<f64>;
pub type IntervalSet = bootstrap::IntervalSet<f64>;
pub type IcReport = diagnostics::IcReport<f64>;
pub type ExperimentConfig = simbench::ExperimentConfig<f64>;
pub type MetricsReport = simbench::MetricsReport<f64>;
pub type SelectionProfile = stability::SelectionProfile<f64>;
