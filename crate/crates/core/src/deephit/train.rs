//! Minibatch training with early stopping.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::grid::make_time_grid;
use super::loss::{deephit_loss, loss_and_gradient};
use super::net::{standardization, Mlp};
use super::optim::AdamState;
use super::{DeepHitParams, DiscreteTimeNet, TrainingHistory};
use crate::dataset::SurvivalDataset;
use crate::error::{Result, SurvError};
use crate::seed;

const VALIDATION_FRACTION: f64 = 0.1;

/// Stratified hold-out: within the event and censored groups, a shuffled
/// `round(10%)` goes to validation. Returns (train, validation) row indices.
fn validation_split<R: rand::Rng>(event: &[bool], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for stratum in [true, false] {
        let mut rows: Vec<usize> = (0..event.len()).filter(|&i| event[i] == stratum).collect();
        rows.shuffle(rng);
        let k = (rows.len() as f64 * VALIDATION_FRACTION).round() as usize;
        valid.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

struct Split {
    x: Array2<f64>,
    bins: Vec<usize>,
    event: Vec<bool>,
}

impl Split {
    fn new(data: &SurvivalDataset, rows: &[usize], net: &DiscreteTimeNet) -> Self {
        let x = (&data.features().select(Axis(0), rows) - &net.input_mean) / &net.input_sd;
        Self {
            x,
            bins: rows.iter().map(|&i| net.grid.bin(data.time()[i])).collect(),
            event: rows.iter().map(|&i| data.event()[i]).collect(),
        }
    }

    fn mean_loss(&self, net: &DiscreteTimeNet) -> Result<f64> {
        let probs = net.mlp.probabilities(&net.params, self.x.view());
        let hp = &net.hyperparameters;
        let total = deephit_loss(probs.view(), &self.bins, &self.event, hp.alpha_rank, hp.sigma)?;
        Ok(total / self.bins.len() as f64)
    }
}

/// Train on `data`, holding out a stratified 10% for early stopping and
/// restoring the parameters of the epoch with the lowest validation loss.
///
/// When the hold-out would be empty (fewer than ~5 subjects per group),
/// validation falls back to the training rows.
pub fn fit_deephit(data: &SurvivalDataset, hp: &DeepHitParams, seed: u64) -> Result<DiscreteTimeNet> {
    hp.validate()?;
    if data.event_count() == 0 {
        return Err(SurvError::NoEvents);
    }
    let mut rng = seed::rng(seed::derive(seed, seed::STREAM_VALID, 0));
    let (train_rows, valid_rows) = validation_split(data.event(), &mut rng);
    if !train_rows.iter().any(|&i| data.event()[i]) {
        return Err(SurvError::NoEvents);
    }

    let train = data.subset(&train_rows);
    let grid = make_time_grid(train.time(), train.event(), hp.bins)?;
    let (input_mean, input_sd) = standardization(train.features());
    let mlp = Mlp {
        inputs: data.p(),
        hidden: hp.nodes,
        bins: grid.n_bins(),
        activation: hp.activation,
    };
    let mut fit_rng = seed::rng(seed::derive(seed, seed::STREAM_FIT, 0));
    let params = mlp.init(&mut fit_rng);
    let mut net = DiscreteTimeNet {
        grid,
        mlp,
        params,
        input_mean,
        input_sd,
        hyperparameters: hp.clone(),
        history: TrainingHistory {
            validation_rows: valid_rows.clone(),
            ..TrainingHistory::default()
        },
    };

    let train_split = Split::new(data, &train_rows, &net);
    let valid_split = if valid_rows.is_empty() {
        None
    } else {
        Some(Split::new(data, &valid_rows, &net))
    };

    let mut optimizer = AdamState::new(hp.optimizer, mlp.n_params(), hp.learning_rate, hp.weight_decay);
    let mut best_params = net.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut order: Vec<usize> = (0..train_rows.len()).collect();

    for epoch in 0..hp.epochs {
        order.shuffle(&mut fit_rng);
        for chunk in order.chunks(hp.batch_size) {
            let xb = train_split.x.select(Axis(0), chunk);
            let bins: Vec<usize> = chunk.iter().map(|&k| train_split.bins[k]).collect();
            let event: Vec<bool> = chunk.iter().map(|&k| train_split.event[k]).collect();
            let (loss, grad) = loss_and_gradient(
                &net.mlp,
                &net.params,
                xb.view(),
                &bins,
                &event,
                hp.alpha_rank,
                hp.sigma,
                chunk.len() as f64,
            )?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(SurvError::DivergedLoss {
                    epoch,
                    detail: format!("batch loss {loss} with learning rate {}", hp.learning_rate),
                });
            }
            optimizer.update(&mut net.params, &grad);
        }

        let train_loss = train_split.mean_loss(&net)?;
        let valid_loss = match &valid_split {
            Some(v) => v.mean_loss(&net)?,
            None => train_loss,
        };
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(SurvError::DivergedLoss {
                epoch,
                detail: format!("train loss {train_loss}, validation loss {valid_loss}"),
            });
        }
        net.history.train_loss.push(train_loss);
        net.history.validation_loss.push(valid_loss);
        net.history.epochs_run = epoch + 1;
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best_params.clone_from(&net.params);
            net.history.best_epoch = epoch;
        } else if epoch - net.history.best_epoch >= hp.patience {
            break;
        }
    }
    net.params = best_params;
    Ok(net)
}
