//! Bayesian pooled, hierarchical and clustering Normal linear regression.
//!
//! The crate bundles three Gibbs samplers over grouped regression data
//! together with the pieces needed around them:
//!
//! * [`distributions`]: sampling and log-density kernels (rate-parameterized
//!   Gamma / Inverse-Gamma, Inverse-Wishart, Dirichlet, log-weight categorical).
//! * [`data`]: grouped dataset ingestion and stacking.
//! * [`elicitation`]: OLS fit and unit-information hyperparameters.
//! * [`lrm`], [`hlrm`], [`chlrm`]: the samplers.
//! * [`diagnostics`], [`checking`]: traces, autocorrelation, posterior
//!   predictive p-values, MSE, DIC and WAIC.
//! * [`cluster`]: label-invariant partition summaries.
//! * [`synth`]: synthetic data generators, including a plant-size analogue.

pub mod checking;
pub mod chlrm;
pub mod cluster;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod draws;
pub mod elicitation;
mod error;
pub mod hlrm;
pub mod linalg;
pub mod lrm;
pub mod summary;
pub mod synth;

pub use error::{Error, Result};
