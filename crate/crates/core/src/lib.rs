//! Structural causal model simulation and prediction of causation bounds.
//!
//! The crate covers the full pipeline:
//!
//! - [`scm`]: explicit structural causal model over binary features, with
//!   observational and interventional simulation.
//! - [`informer`]: exact per-subpopulation distributions and PNS ground
//!   truth computed in closed form from an SCM.
//! - [`bounds`]: Tian-Pearl bounds and monotonic identifiability formulas
//!   for PNS/PN/PS.
//! - [`datagen`]: seeded Monte-Carlo sample generation, streaming
//!   per-subpopulation counters, and labeled dataset construction.
//! - [`ml`]: from-scratch MLP (ReLU/LeakyReLU/Mish), random forest, and
//!   gradient boosting regressors with a two-stage hyperparameter tuner.
//! - [`eval`]: MSE/MAE metrics, binned truth-vs-prediction matrices, and
//!   report emission.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod informer;
pub mod ml;
pub mod scm;

pub use error::{Error, Result};
