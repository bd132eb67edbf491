//! Cox proportional hazards: `h(t | x) = h_0(t) · exp(βᵀx)`.
//!
//! Coefficients maximize the ridge-penalized Breslow partial likelihood
//!
//! ```text
//! l(β) = Σ_j [ Σ_{i∈D_j} βᵀx_i − d_j · log Σ_{k∈R_j} exp(βᵀx_k) ] − (ridge/2)‖β‖²
//! ```
//!
//! by step-halving Newton iterations on mean-centered covariates. The
//! baseline cumulative hazard is the Breslow estimate
//! `Ĥ_0(t) = Σ_{t_j ≤ t} d_j / Σ_{k∈R_j} exp(βᵀx_k)`, which makes
//! `Σ_i Ĥ_0(t_i)·exp(βᵀx_i) = Σ_i δ_i` hold exactly on the training data.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Result, SurvError};
use crate::estimators::CumulativeHazardCurve;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxParams {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CoxParams {
    fn default() -> Self {
        Self {
            ridge: 1e-8,
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub baseline_cumhaz: CumulativeHazardCurve,
    pub feature_means: Vec<f64>,
    pub ridge: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl CoxModel {
    fn check_len(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.beta.len() {
            return Err(SurvError::DimensionMismatch {
                expected: self.beta.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `βᵀ(x − mean)`.
    pub fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_len(x)?;
        Ok(self
            .beta
            .iter()
            .zip(&self.feature_means)
            .zip(x.iter())
            .map(|((b, m), v)| b * (v - m))
            .sum())
    }

    /// `Ĥ_0(t) · exp(risk score)`.
    pub fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(SurvError::InvalidInput(format!("time {t} must be nonnegative")));
        }
        Ok(self.baseline_cumhaz.eval(t) * self.risk_score(x)?.exp())
    }
}

/// Breslow partial likelihood over centered covariates.
struct PartialLikelihood {
    x: Array2<f64>,
    /// Subjects sorted by decreasing time, split into tied-time groups.
    order: Vec<usize>,
    groups: Vec<std::ops::Range<usize>>,
    event: Vec<bool>,
    time: Vec<f64>,
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: Option<DMatrix<f64>>,
}

impl PartialLikelihood {
    fn new(data: &SurvivalDataset, means: &[f64]) -> Self {
        let mut x = data.features().to_owned();
        for (mut col, m) in x.axis_iter_mut(Axis(1)).zip(means) {
            col.mapv_inplace(|v| v - m);
        }
        let time = data.time().to_vec();
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = time[order[start]];
            let len = order[start..].iter().take_while(|&&i| time[i] == t).count();
            groups.push(start..start + len);
            start += len;
        }
        Self {
            x,
            order,
            groups,
            event: data.event().to_vec(),
            time,
        }
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn linear_predictor(&self, beta: &DVector<f64>) -> Vec<f64> {
        self.x
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn evaluate(&self, beta: &DVector<f64>, ridge: f64, with_hessian: bool) -> Evaluation {
        let p = self.p();
        let eta = self.linear_predictor(beta);
        // Shift by the max so exp never overflows; ratios are unchanged.
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut value = 0.0;
        let mut gradient = DVector::<f64>::zeros(p);
        let mut hessian = with_hessian.then(|| DMatrix::<f64>::zeros(p, p));

        for group in &self.groups {
            for &i in &self.order[group.clone()] {
                let w = (eta[i] - shift).exp();
                let xi = DVector::from_iterator(p, self.x.row(i).iter().copied());
                s0 += w;
                s1.axpy(w, &xi, 1.0);
                if with_hessian {
                    s2.ger(w, &xi, &xi, 1.0);
                }
            }
            let mut d = 0.0;
            for &i in self.order[group.clone()].iter().filter(|&&i| self.event[i]) {
                d += 1.0;
                value += eta[i];
                for (g, v) in gradient.iter_mut().zip(self.x.row(i)) {
                    *g += v;
                }
            }
            if d == 0.0 {
                continue;
            }
            value -= d * (s0.ln() + shift);
            let mean = &s1 / s0;
            gradient.axpy(-d, &mean, 1.0);
            if let Some(h) = hessian.as_mut() {
                let cov = &s2 / s0 - &mean * mean.transpose();
                *h -= cov * d;
            }
        }

        value -= 0.5 * ridge * beta.norm_squared();
        gradient.axpy(-ridge, beta, 1.0);
        if let Some(h) = hessian.as_mut() {
            for k in 0..p {
                h[(k, k)] -= ridge;
            }
        }
        Evaluation {
            value,
            gradient,
            hessian,
        }
    }

    /// Breslow baseline cumulative hazard at the given coefficients.
    fn breslow(&self, beta: &DVector<f64>) -> CumulativeHazardCurve {
        let eta = self.linear_predictor(beta);
        let mut s0 = 0.0;
        let mut jumps = Vec::new();
        for group in &self.groups {
            for &i in &self.order[group.clone()] {
                s0 += eta[i].exp();
            }
            let d = self.order[group.clone()]
                .iter()
                .filter(|&&i| self.event[i])
                .count();
            if d > 0 {
                jumps.push((self.time[self.order[group.start]], d as f64 / s0));
            }
        }
        // Groups were visited in decreasing time.
        jumps.reverse();
        let mut h = 0.0;
        let (times, values) = jumps
            .into_iter()
            .map(|(t, dh)| {
                h += dh;
                (t, h)
            })
            .unzip();
        CumulativeHazardCurve::new(times, values).expect("Breslow increments are nonnegative")
    }
}

fn column_means(data: &SurvivalDataset) -> Vec<f64> {
    data.features()
        .mean_axis(Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_else(|| vec![0.0; data.p()])
}

/// Penalized log partial likelihood at `beta` (on the original covariate
/// scale; centering does not change its value).
pub fn log_partial_likelihood(data: &SurvivalDataset, beta: &[f64], ridge: f64) -> Result<f64> {
    if beta.len() != data.p() {
        return Err(SurvError::DimensionMismatch {
            expected: data.p(),
            found: beta.len(),
        });
    }
    let pl = PartialLikelihood::new(data, &vec![0.0; data.p()]);
    Ok(pl.evaluate(&DVector::from_column_slice(beta), ridge, false).value)
}

/// Analytic gradient of [`log_partial_likelihood`].
pub fn partial_likelihood_score(data: &SurvivalDataset, beta: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if beta.len() != data.p() {
        return Err(SurvError::DimensionMismatch {
            expected: data.p(),
            found: beta.len(),
        });
    }
    let pl = PartialLikelihood::new(data, &vec![0.0; data.p()]);
    Ok(pl
        .evaluate(&DVector::from_column_slice(beta), ridge, false)
        .gradient
        .iter()
        .copied()
        .collect())
}

const MAX_HALVINGS: usize = 20;

/// Fit by Newton–Raphson with step halving.
///
/// Hitting `max_iter` is not an error: the last iterate comes back with
/// `converged == false`.
pub fn fit_cox(data: &SurvivalDataset, params: &CoxParams) -> Result<CoxModel> {
    if data.event_count() == 0 {
        return Err(SurvError::NoEvents);
    }
    if data.p() == 0 {
        return Err(SurvError::InvalidInput("Cox model needs at least one covariate".into()));
    }
    if params.max_iter == 0 || !(params.tol > 0.0) || !(params.ridge >= 0.0) {
        return Err(SurvError::InvalidHyperparameter(format!("{params:?}")));
    }

    let means = column_means(data);
    let pl = PartialLikelihood::new(data, &means);
    let p = data.p();
    let mut beta = DVector::<f64>::zeros(p);
    let mut current = pl.evaluate(&beta, params.ridge, true);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        if current.gradient.amax() < params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_hessian = -current.hessian.take().expect("hessian requested");
        let step = neg_hessian
            .cholesky()
            .ok_or(SurvError::SingularHessian)?
            .solve(&current.gradient);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let eval = pl.evaluate(&candidate, params.ridge, true);
            if eval.value.is_finite() && eval.value >= current.value {
                accepted = Some((candidate, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, eval)) = accepted else {
            // No ascent direction left at machine precision.
            converged = current.gradient.amax() < params.tol.sqrt();
            break;
        };
        let change = eval.value - current.value;
        beta = candidate;
        current = eval;
        if change.abs() < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Cox fit stopped after {iterations} iterations without converging");
    }

    let beta_vec: Vec<f64> = beta.iter().copied().collect();
    if beta_vec.iter().any(|b| !b.is_finite()) {
        return Err(SurvError::InvalidInput("non-finite coefficients".into()));
    }
    Ok(CoxModel {
        baseline_cumhaz: pl.breslow(&beta),
        beta: beta_vec,
        feature_means: means,
        ridge: params.ridge,
        converged,
        iterations,
        log_likelihood: current.value,
    })
}
