//! Discrete-time survival network with a likelihood plus ranking objective.
//!
//! A shared trunk feeds a single cause head that also sees the raw input row;
//! the head ends in a softmax over time bins. See [`loss`] for the objective
//! and [`grid::TimeGrid`] for how time is discretized.

pub mod grid;
pub mod loss;
pub mod net;
pub mod optim;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
pub use grid::{make_time_grid, TimeGrid};
pub use loss::{deephit_loss, loss_and_gradient};
pub use net::{Activation, Mlp};
pub use optim::Optimizer;
pub use train::fit_deephit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepHitParams {
    pub nodes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub patience: usize,
    pub bins: usize,
    pub alpha_rank: f64,
    pub sigma: f64,
    pub weight_decay: f64,
}

impl Default for DeepHitParams {
    fn default() -> Self {
        Self {
            nodes: 32,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.01,
            activation: Activation::Relu,
            optimizer: Optimizer::Adam,
            patience: 10,
            bins: 10,
            alpha_rank: 0.1,
            sigma: 0.1,
            weight_decay: 0.01,
        }
    }
}

impl DeepHitParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SurvError::InvalidHyperparameter(msg));
        if !(2..=300).contains(&self.nodes) {
            return bad(format!("nodes = {} outside 2..=300", self.nodes));
        }
        if !(10..=400).contains(&self.epochs) {
            return bad(format!("epochs = {} outside 10..=400", self.epochs));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch_size and patience must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if self.bins < 2 {
            return bad(format!("bins = {} (need >= 2)", self.bins));
        }
        if !(self.alpha_rank >= 0.0) || !(self.sigma > 0.0) || !(self.weight_decay >= 0.0) {
            return bad(format!(
                "alpha_rank = {}, sigma = {}, weight_decay = {}",
                self.alpha_rank, self.sigma, self.weight_decay
            ));
        }
        Ok(())
    }
}

/// Per-epoch losses (mean per subject) and the early-stopping outcome.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Row indices of the fitting data held out for early stopping.
    pub validation_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTimeNet {
    pub grid: TimeGrid,
    pub mlp: Mlp,
    pub params: Vec<f64>,
    pub input_mean: Array1<f64>,
    pub input_sd: Array1<f64>,
    pub hyperparameters: DeepHitParams,
    pub history: TrainingHistory,
}

impl DiscreteTimeNet {
    pub fn n_features(&self) -> usize {
        self.mlp.inputs
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(SurvError::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok((&x - &self.input_mean) / &self.input_sd)
    }

    /// Softmax bin probabilities for each row of `x`.
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.standardize(x)?;
        Ok(self.mlp.probabilities(&self.params, z.view()))
    }

    fn row_probabilities(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let probs = self.probabilities(x.insert_axis(Axis(0)))?;
        Ok(probs.row(0).to_owned())
    }

    /// `H(t) = −ln S(t)` with `S` floored at `1e-12`.
    pub fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(SurvError::InvalidInput(format!("time {t} must be nonnegative")));
        }
        let q = self.row_probabilities(x)?;
        let s = self.grid.survival(q.as_slice().expect("contiguous"), t);
        Ok(-s.max(loss::LOG_FLOOR).ln())
    }

    /// Mean cumulative incidence over the bins, `Σ_b F(b) / B`.
    pub fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let q = self.row_probabilities(x)?;
        Ok(expected_incidence(q.view()))
    }

    /// Loss per subject on raw (unstandardized) data.
    pub fn mean_loss(&self, x: ArrayView2<'_, f64>, time: &[f64], event: &[bool]) -> Result<f64> {
        let probs = self.probabilities(x)?;
        let bins: Vec<usize> = time.iter().map(|&t| self.grid.bin(t)).collect();
        let hp = &self.hyperparameters;
        let total = deephit_loss(probs.view(), &bins, event, hp.alpha_rank, hp.sigma)?;
        Ok(total / time.len().max(1) as f64)
    }
}

pub(crate) fn expected_incidence(q: ArrayView1<'_, f64>) -> f64 {
    let mut cdf = 0.0;
    let mut total = 0.0;
    for &v in q {
        cdf += v;
        total += cdf;
    }
    total / q.len() as f64
}
