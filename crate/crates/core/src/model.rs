//! Common prediction surface and serializable model wrappers.

use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cox::{fit_cox, CoxModel, CoxParams};
use crate::dataset::SurvivalDataset;
use crate::deephit::{fit_deephit, DeepHitParams, DiscreteTimeNet};
use crate::error::{Result, SurvError};
use crate::rsf::{fit_rsf, RsfParams, SurvivalForest};

/// Risk scores (higher = earlier event) and cumulative hazards for one
/// covariate row at a time.
pub trait SurvivalModel {
    fn n_features(&self) -> usize;

    fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64>;

    fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64>;

    fn risk_scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        x.rows().into_iter().map(|row| self.risk_score(row)).collect()
    }

    /// `H_i(t_i)` for each row paired with its own time.
    fn cumhaz_at(&self, x: ArrayView2<'_, f64>, times: &[f64]) -> Result<Vec<f64>> {
        if x.nrows() != times.len() {
            return Err(SurvError::ShapeMismatch(format!(
                "{} rows for {} times",
                x.nrows(),
                times.len()
            )));
        }
        x.rows()
            .into_iter()
            .zip(times)
            .map(|(row, &t)| self.cumhaz(row, t))
            .collect()
    }
}

impl SurvivalModel for CoxModel {
    fn n_features(&self) -> usize {
        self.beta.len()
    }

    fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        CoxModel::risk_score(self, x)
    }

    fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        CoxModel::cumhaz(self, x, t)
    }
}

impl SurvivalModel for SurvivalForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        SurvivalForest::risk_score(self, x)
    }

    fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        SurvivalForest::cumhaz(self, x, t)
    }
}

impl SurvivalModel for DiscreteTimeNet {
    fn n_features(&self) -> usize {
        DiscreteTimeNet::n_features(self)
    }

    fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        DiscreteTimeNet::risk_score(self, x)
    }

    fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        DiscreteTimeNet::cumhaz(self, x, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cox,
    Rsf,
    DeepHit,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cox => "cox",
            Self::Rsf => "rsf",
            Self::DeepHit => "deephit",
        }
    }

    /// Label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Cox => "Cox",
            Self::Rsf => "RSF",
            Self::DeepHit => "DeepHit",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cox" => Ok(Self::Cox),
            "rsf" => Ok(Self::Rsf),
            "deephit" => Ok(Self::DeepHit),
            other => Err(SurvError::InvalidHyperparameter(format!("unknown model {other:?}"))),
        }
    }
}

/// One hyperparameter setting for one model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Cox(CoxParams),
    Rsf(RsfParams),
    DeepHit(DeepHitParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Cox(_) => ModelKind::Cox,
            Self::Rsf(_) => ModelKind::Rsf,
            Self::DeepHit(_) => ModelKind::DeepHit,
        }
    }

    /// Default setting for `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Cox => Self::Cox(CoxParams::default()),
            ModelKind::Rsf => Self::Rsf(RsfParams::default()),
            ModelKind::DeepHit => Self::DeepHit(DeepHitParams::default()),
        }
    }

    pub fn fit(&self, data: &SurvivalDataset, seed: u64) -> Result<FittedModel> {
        Ok(match self {
            Self::Cox(p) => FittedModel::Cox(fit_cox(data, p)?),
            Self::Rsf(p) => FittedModel::Rsf(fit_rsf(data, p, seed)?),
            Self::DeepHit(p) => FittedModel::DeepHit(fit_deephit(data, p, seed)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum FittedModel {
    Cox(CoxModel),
    Rsf(SurvivalForest),
    DeepHit(DiscreteTimeNet),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Cox(_) => ModelKind::Cox,
            Self::Rsf(_) => ModelKind::Rsf,
            Self::DeepHit(_) => ModelKind::DeepHit,
        }
    }

    fn inner(&self) -> &dyn SurvivalModel {
        match self {
            Self::Cox(m) => m,
            Self::Rsf(m) => m,
            Self::DeepHit(m) => m,
        }
    }
}

impl SurvivalModel for FittedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.inner().risk_score(x)
    }

    fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        self.inner().cumhaz(x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_cohort, SimSpec};

    #[test]
    fn params_json_is_tagged_by_model() {
        let p: ModelParams = serde_json::from_str(r#"{"model": "rsf", "mtry": 3}"#).unwrap();
        assert_eq!(
            p,
            ModelParams::Rsf(RsfParams {
                mtry: 3,
                ..RsfParams::default()
            })
        );
        let p: ModelParams = serde_json::from_str(r#"{"model": "cox"}"#).unwrap();
        assert_eq!(p, ModelParams::Cox(CoxParams::default()));
        let p: ModelParams = serde_json::from_str(r#"{"model": "deephit", "nodes": 8}"#).unwrap();
        assert_eq!(p.kind(), ModelKind::DeepHit);
        assert!(serde_json::from_str::<ModelParams>(r#"{"model": "svm"}"#).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("DeepHit".parse::<ModelKind>().unwrap(), ModelKind::DeepHit);
        assert_eq!("rsf".parse::<ModelKind>().unwrap(), ModelKind::Rsf);
        assert!("lasso".parse::<ModelKind>().is_err());
    }

    #[test]
    fn fitted_models_survive_json_round_trip() {
        let data = simulate_cohort(&SimSpec {
            n: 120,
            ..SimSpec::linear(vec![0.8, -0.4], 3)
        })
        .unwrap()
        .dataset;
        let grid = [
            ModelParams::Cox(CoxParams::default()),
            ModelParams::Rsf(RsfParams {
                mtry: 1,
                min_node_size: 10,
                n_trees: 5,
                bootstrap: true,
            }),
            ModelParams::DeepHit(DeepHitParams {
                nodes: 4,
                epochs: 10,
                ..DeepHitParams::default()
            }),
        ];
        for params in grid {
            let model = params.fit(&data, 11).unwrap();
            let json = serde_json::to_string(&model).unwrap();
            let back: FittedModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.kind(), params.kind());
            assert_eq!(
                back.risk_scores(data.features()).unwrap(),
                model.risk_scores(data.features()).unwrap()
            );
        }
    }
}
