//! Likelihood plus ranking loss over discrete-time distributions.
//!
//! With `q_i` the softmax row of subject `i`, `b_i` its (0-based) bin,
//! `S_i(b) = Σ_{m>b} q_{i,m}` and `F_i(b) = Σ_{m≤b} q_{i,m}`:
//!
//! ```text
//! L1 = −Σ_i [ δ_i log q_{i,b_i} + (1 − δ_i) log S_i(b_i) ]
//! L2 = Σ_{δ_i = 1, b_i < b_j} exp(−(F_i(b_i) − F_j(b_i)) / σ)
//! L  = L1 + α L2
//! ```
//!
//! Logarithms take their argument floored at `1e-12`.

use ndarray::{Array2, ArrayView2};

use super::net::Mlp;
use crate::error::{Result, SurvError};

pub(crate) const LOG_FLOOR: f64 = 1e-12;

fn check(probs: ArrayView2<'_, f64>, bins: &[usize], event: &[bool], alpha: f64, sigma: f64) -> Result<()> {
    let (n, b) = probs.dim();
    if bins.len() != n || event.len() != n {
        return Err(SurvError::ShapeMismatch(format!(
            "{n} probability rows, {} bins, {} event flags",
            bins.len(),
            event.len()
        )));
    }
    if let Some(&bad) = bins.iter().find(|&&k| k >= b) {
        return Err(SurvError::ShapeMismatch(format!("bin {bad} outside 0..{b}")));
    }
    if !(alpha >= 0.0) || !(sigma > 0.0) {
        return Err(SurvError::InvalidHyperparameter(format!(
            "alpha_rank = {alpha}, sigma = {sigma}"
        )));
    }
    Ok(())
}

/// Total loss for softmax rows `probs` with 0-based bins.
pub fn deephit_loss(
    probs: ArrayView2<'_, f64>,
    bins: &[usize],
    event: &[bool],
    alpha_rank: f64,
    sigma: f64,
) -> Result<f64> {
    check(probs, bins, event, alpha_rank, sigma)?;
    Ok(loss_terms(probs, bins, event, alpha_rank, sigma, None))
}

/// Loss and `dL/dq`.
pub(crate) fn loss_and_prob_gradient(
    probs: ArrayView2<'_, f64>,
    bins: &[usize],
    event: &[bool],
    alpha_rank: f64,
    sigma: f64,
) -> Result<(f64, Array2<f64>)> {
    check(probs, bins, event, alpha_rank, sigma)?;
    let mut grad = Array2::zeros(probs.raw_dim());
    let loss = loss_terms(probs, bins, event, alpha_rank, sigma, Some(&mut grad));
    Ok((loss, grad))
}

fn loss_terms(
    probs: ArrayView2<'_, f64>,
    bins: &[usize],
    event: &[bool],
    alpha: f64,
    sigma: f64,
    mut grad: Option<&mut Array2<f64>>,
) -> f64 {
    let n_bins = probs.ncols();
    // Cumulative incidence F_i(b) per row.
    let mut cdf = probs.to_owned();
    for mut row in cdf.rows_mut() {
        let mut acc = 0.0;
        for v in row.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }

    let mut likelihood = 0.0;
    for (i, (&b, &d)) in bins.iter().zip(event).enumerate() {
        if d {
            let q = probs[[i, b]];
            likelihood -= q.max(LOG_FLOOR).ln();
            if let Some(g) = grad.as_deref_mut() {
                if q > LOG_FLOOR {
                    g[[i, b]] -= 1.0 / q;
                }
            }
        } else {
            let surv: f64 = (b + 1..n_bins).map(|m| probs[[i, m]]).sum();
            likelihood -= surv.max(LOG_FLOOR).ln();
            if let Some(g) = grad.as_deref_mut() {
                if surv > LOG_FLOOR {
                    for m in b + 1..n_bins {
                        g[[i, m]] -= 1.0 / surv;
                    }
                }
            }
        }
    }

    let mut ranking = 0.0;
    if alpha > 0.0 {
        for (i, (&bi, &di)) in bins.iter().zip(event).enumerate() {
            if !di {
                continue;
            }
            for (j, &bj) in bins.iter().enumerate() {
                if bi >= bj {
                    continue;
                }
                let e = (-(cdf[[i, bi]] - cdf[[j, bi]]) / sigma).exp();
                ranking += e;
                if let Some(g) = grad.as_deref_mut() {
                    let w = alpha * e / sigma;
                    for m in 0..=bi {
                        g[[i, m]] -= w;
                        g[[j, m]] += w;
                    }
                }
            }
        }
    }
    likelihood + alpha * ranking
}

/// Batch loss divided by `scale` and its gradient with respect to every
/// network parameter, for inputs already standardized.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradient(
    mlp: &Mlp,
    params: &[f64],
    x: ArrayView2<'_, f64>,
    bins: &[usize],
    event: &[bool],
    alpha_rank: f64,
    sigma: f64,
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    if x.ncols() != mlp.inputs {
        return Err(SurvError::DimensionMismatch {
            expected: mlp.inputs,
            found: x.ncols(),
        });
    }
    let fwd = mlp.forward(params, x);
    let (loss, mut d_probs) = loss_and_prob_gradient(fwd.probs.view(), bins, event, alpha_rank, sigma)?;
    d_probs /= scale;
    Ok((loss / scale, mlp.backward(params, &fwd, d_probs.view())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deephit::net::Activation;
    use crate::seed;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn perfect_predictions_have_zero_likelihood_loss() {
        let probs = array![[0.0, 1.0, 0.0]];
        assert_eq!(deephit_loss(probs.view(), &[1], &[true], 0.0, 0.1).unwrap(), 0.0);
        let probs = array![[0.0, 0.0, 0.3, 0.7]];
        assert_eq!(deephit_loss(probs.view(), &[1], &[false], 0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn hand_summed_likelihood() {
        let probs = array![[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8]];
        let bins = [1, 0, 2];
        let event = [true, false, true];
        let expected = -(0.5f64.ln() + (0.3f64 + 0.1).ln() + 0.8f64.ln());
        let got = deephit_loss(probs.view(), &bins, &event, 0.0, 0.1).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn hand_summed_ranking() {
        let probs = array![[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8]];
        let bins = [0, 1, 2];
        let event = [true, true, false];
        let sigma = 0.5;
        let f = |i: usize, b: usize| (0..=b).map(|m| probs[[i, m]]).sum::<f64>();
        // Acceptable pairs: (0,1), (0,2) at bin 0 and (1,2) at bin 1.
        let pairs = [(0, 1, 0), (0, 2, 0), (1, 2, 1)];
        let rank: f64 = pairs
            .iter()
            .map(|&(i, j, b)| (-(f(i, b) - f(j, b)) / sigma).exp())
            .sum();
        let lik = deephit_loss(probs.view(), &bins, &event, 0.0, sigma).unwrap();
        let got = deephit_loss(probs.view(), &bins, &event, 2.0, sigma).unwrap();
        assert!((got - (lik + 2.0 * rank)).abs() < 1e-12);
    }

    #[test]
    fn log_floor_keeps_loss_finite() {
        let probs = array![[1.0, 0.0]];
        let loss = deephit_loss(probs.view(), &[1], &[true], 0.1, 0.1).unwrap();
        assert!((loss - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        let probs = array![[0.5, 0.5]];
        assert!(matches!(
            deephit_loss(probs.view(), &[2], &[true], 0.1, 0.1),
            Err(SurvError::ShapeMismatch(_))
        ));
        assert!(matches!(
            deephit_loss(probs.view(), &[0, 1], &[true], 0.1, 0.1),
            Err(SurvError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn probability_gradient_matches_finite_differences() {
        let mut rng = seed::rng(12);
        let probs = Array2::from_shape_fn((6, 4), |_| rng.random_range(0.05..1.0));
        let bins = [0, 3, 1, 2, 1, 0];
        let event = [true, false, true, true, false, true];
        let (_, grad) = loss_and_prob_gradient(probs.view(), &bins, &event, 0.7, 0.3).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for m in 0..4 {
                let mut up = probs.clone();
                up[[i, m]] += h;
                let mut down = probs.clone();
                down[[i, m]] -= h;
                let fd = (deephit_loss(up.view(), &bins, &event, 0.7, 0.3).unwrap()
                    - deephit_loss(down.view(), &bins, &event, 0.7, 0.3).unwrap())
                    / (2.0 * h);
                assert!((fd - grad[[i, m]]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i} {m}");
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = seed::rng(5);
        for activation in [Activation::Relu, Activation::Elu, Activation::LeakyRelu] {
            let mlp = Mlp {
                inputs: 2,
                hidden: 2,
                bins: 3,
                activation,
            };
            assert!(mlp.n_params() <= 50);
            let params: Vec<f64> = (0..mlp.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Array2::from_shape_fn((7, 2), |_| rng.random_range(-2.0..2.0));
            let bins = [0, 1, 2, 1, 0, 2, 1];
            let event = [true, true, false, false, true, true, false];
            let f = |p: &[f64]| loss_and_gradient(&mlp, p, x.view(), &bins, &event, 0.1, 0.1, 7.0).unwrap();
            let (_, grad) = f(&params);
            let h = 1e-5;
            for k in 0..params.len() {
                let mut up = params.clone();
                up[k] += h;
                let mut down = params.clone();
                down[k] -= h;
                let fd = (f(&up).0 - f(&down).0) / (2.0 * h);
                let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(err < 1e-4 || (fd - grad[k]).abs() < 1e-9, "{activation:?} param {k}: {fd} vs {}", grad[k]);
            }
        }
    }
}
