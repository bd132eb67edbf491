//! Survival machine learning on censored time-to-event data.
//!
//! Three models share one prediction surface ([`model::SurvivalModel`]):
//!
//! - [`cox`]: Cox proportional hazards fitted by Newton iterations on the
//!   Breslow partial likelihood,
//! - [`rsf`]: random survival forests grown with log-rank splitting and
//!   Nelson–Aalen leaves,
//! - [`deephit`]: a discrete-time softmax hazard network trained with a
//!   likelihood plus ranking loss.
//!
//! They are scored with Harrell's C-index and the calibration ratio
//! `α = Σδ / ΣH_i(t_i)` ([`metrics`]), under stratified nested cross-validation
//! repeated as a Monte Carlo experiment ([`harness`]). [`simulate`] produces
//! censored cohorts with known hazards for checking all of the above.
//!
//! ```
//! use survml::simulate::{simulate_cohort, SimSpec};
//! use survml::cox::{fit_cox, CoxParams};
//! use survml::metrics::c_index;
//! use survml::model::SurvivalModel;
//!
//! let cohort = simulate_cohort(&SimSpec { n: 300, ..SimSpec::linear(vec![1.0, -0.5], 3) }).unwrap();
//! let data = &cohort.dataset;
//! let model = fit_cox(data, &CoxParams::default()).unwrap();
//! let risk = model.risk_scores(data.features()).unwrap();
//! let c = c_index(data.time(), data.event(), &risk).unwrap();
//! assert!(c.c_index > 0.6);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cox;
pub mod dataset;
pub mod deephit;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rsf;
pub mod seed;
pub mod simulate;

pub use dataset::SurvivalDataset;
pub use error::{Result, SurvError};
pub use estimators::CumulativeHazardCurve;
pub use model::{FittedModel, ModelKind, ModelParams, SurvivalModel};
