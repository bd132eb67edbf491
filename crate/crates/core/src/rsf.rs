//! Random survival forest.
//!
//! Each tree is grown on a bootstrap sample. At every node `mtry` features
//! are drawn without replacement, and the split maximizing the two-sample
//! log-rank statistic over all midpoints between consecutive distinct values
//! is taken. Leaves store the Nelson–Aalen curve of their in-bag subjects; the
//! forest prediction is the mean leaf curve.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Result, SurvError};
use crate::estimators::{nelson_aalen, CumulativeHazardCurve, LogRank};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsfParams {
    pub mtry: usize,
    pub min_node_size: usize,
    pub n_trees: usize,
    /// Grow on bootstrap samples; off only for split-search checks.
    pub bootstrap: bool,
}

impl Default for RsfParams {
    fn default() -> Self {
        Self {
            mtry: 1,
            min_node_size: 10,
            n_trees: 1000,
            bootstrap: true,
        }
    }
}

impl RsfParams {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mtry == 0 || self.mtry > p {
            return Err(SurvError::InvalidHyperparameter(format!(
                "mtry = {} outside 1..={p}",
                self.mtry
            )));
        }
        if self.min_node_size < 2 {
            return Err(SurvError::InvalidHyperparameter(format!(
                "min_node_size = {} (need >= 2)",
                self.min_node_size
            )));
        }
        if self.n_trees == 0 {
            return Err(SurvError::InvalidHyperparameter("n_trees = 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        curve: CumulativeHazardCurve,
        /// In-bag subjects (with bootstrap multiplicity).
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<Node>,
}

impl SurvivalTree {
    pub fn leaf(curve: CumulativeHazardCurve, size: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { curve, size }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    /// Index of the leaf `x` routes to.
    pub fn leaf_index(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return k,
            }
        }
    }

    pub fn curve_for(&self, x: ArrayView1<'_, f64>) -> &CumulativeHazardCurve {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { curve, .. } => curve,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&CumulativeHazardCurve, usize)> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { curve, size } => Some((curve, *size)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest {
    pub trees: Vec<SurvivalTree>,
    pub mtry: usize,
    pub min_node_size: usize,
    pub seed: u64,
    pub n_features: usize,
    /// Default risk horizon: the largest training time.
    pub horizon: f64,
}

impl SurvivalForest {
    /// Assemble a forest from prebuilt trees.
    pub fn from_trees(trees: Vec<SurvivalTree>, n_features: usize, horizon: f64) -> Result<Self> {
        if trees.is_empty() {
            return Err(SurvError::InvalidHyperparameter("forest needs at least one tree".into()));
        }
        Ok(Self {
            trees,
            mtry: n_features.max(1),
            min_node_size: 2,
            seed: 0,
            n_features,
            horizon,
        })
    }

    fn check_len(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.n_features {
            return Err(SurvError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Mean over trees of the leaf cumulative hazard at `t`.
    pub fn cumhaz(&self, x: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
        self.check_len(x)?;
        let total: f64 = self.trees.iter().map(|tree| tree.curve_for(x).eval(t)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Ensemble cumulative hazard at `horizon` (default: max training time).
    pub fn risk_score_at(&self, x: ArrayView1<'_, f64>, horizon: Option<f64>) -> Result<f64> {
        let h = horizon.unwrap_or(self.horizon);
        if !(h > 0.0) {
            return Err(SurvError::InvalidInput(format!("horizon {h} must be positive")));
        }
        self.cumhaz(x, h)
    }

    pub fn risk_score(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.risk_score_at(x, None)
    }
}

/// Read-only view of the training data shared by all trees.
struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    time: &'a [f64],
    event: &'a [bool],
    mtry: usize,
    min_node_size: usize,
}

/// Best split found for one node.
#[derive(Clone, Copy, Debug, PartialEq)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    statistic: f64,
}

impl Grower<'_> {
    fn leaf(&self, members: &[usize]) -> Node {
        let time: Vec<f64> = members.iter().map(|&i| self.time[i]).collect();
        let event: Vec<bool> = members.iter().map(|&i| self.event[i]).collect();
        let curve = match nelson_aalen(&time, &event) {
            Ok(c) => c,
            Err(SurvError::NoEvents) => CumulativeHazardCurve::zero(),
            Err(e) => unreachable!("inputs are consistent by construction: {e}"),
        };
        Node::Leaf {
            curve,
            size: members.len(),
        }
    }

    /// Exhaustive log-rank search over `features` for the node `members`.
    ///
    /// Ties go to the lowest feature index, then the lowest threshold.
    fn best_split(&self, members: &[usize], features: &[usize]) -> Option<SplitChoice> {
        let m = members.len();
        // Distinct event times in the node, ascending, with totals.
        let mut event_times: Vec<f64> = members
            .iter()
            .filter(|&&i| self.event[i])
            .map(|&i| self.time[i])
            .collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let n_times = event_times.len();
        if n_times == 0 {
            return None;
        }
        // reach[s]: number of event times <= time[s]; subject s is at risk at
        // event-time index j iff j < reach[s].
        let reach: Vec<usize> = members
            .iter()
            .map(|&i| event_times.partition_point(|&t| t <= self.time[i]))
            .collect();
        let mut deaths = vec![0.0; n_times];
        let mut at_risk_end = vec![0.0; n_times + 1];
        for (k, &i) in members.iter().enumerate() {
            at_risk_end[reach[k]] += 1.0;
            if self.event[i] {
                deaths[reach[k] - 1] += 1.0;
            }
        }
        let mut at_risk = vec![0.0; n_times];
        let mut running = 0.0;
        for j in (0..n_times).rev() {
            running += at_risk_end[j + 1];
            at_risk[j] = running;
        }

        let mut order: Vec<usize> = (0..m).collect();
        let mut left_end = vec![0.0; n_times + 1];
        let mut left_deaths = vec![0.0; n_times];
        let mut left_at_risk = vec![0.0; n_times];
        let mut best: Option<SplitChoice> = None;

        for &f in features {
            let value = |k: usize| self.x[[members[k], f]];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            left_end.iter_mut().for_each(|v| *v = 0.0);
            left_deaths.iter_mut().for_each(|v| *v = 0.0);

            for pos in 0..m - 1 {
                let k = order[pos];
                left_end[reach[k]] += 1.0;
                if self.event[members[k]] {
                    left_deaths[reach[k] - 1] += 1.0;
                }
                let (lo, hi) = (value(k), value(order[pos + 1]));
                let n_left = pos + 1;
                if lo == hi || n_left < self.min_node_size || m - n_left < self.min_node_size {
                    continue;
                }
                let mut running = 0.0;
                for j in (0..n_times).rev() {
                    running += left_end[j + 1];
                    left_at_risk[j] = running;
                }
                let mut acc = LogRank::default();
                for j in 0..n_times {
                    acc.add(deaths[j], left_deaths[j], at_risk[j], left_at_risk[j]);
                }
                let Some(statistic) = acc.statistic() else {
                    continue;
                };
                if best.is_none_or(|b| statistic > b.statistic) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        statistic,
                    });
                }
            }
        }
        best
    }

    fn grow<R: Rng>(&self, sample: Vec<usize>, rng: &mut R) -> SurvivalTree {
        let p = self.x.ncols();
        let mut nodes: Vec<Node> = Vec::new();
        // (slot in `nodes`, members)
        let mut stack = vec![(0usize, sample)];
        nodes.push(Node::Leaf {
            curve: CumulativeHazardCurve::zero(),
            size: 0,
        });
        while let Some((slot, members)) = stack.pop() {
            let events = members.iter().filter(|&&i| self.event[i]).count();
            if members.len() < 2 * self.min_node_size || events < 2 {
                nodes[slot] = self.leaf(&members);
                continue;
            }
            let mut features = rand::seq::index::sample(rng, p, self.mtry).into_vec();
            features.sort_unstable();
            let Some(split) = self.best_split(&members, &features) else {
                nodes[slot] = self.leaf(&members);
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| self.x[[i, split.feature]] <= split.threshold);
            let (l, r) = (nodes.len(), nodes.len() + 1);
            for _ in 0..2 {
                nodes.push(Node::Leaf {
                    curve: CumulativeHazardCurve::zero(),
                    size: 0,
                });
            }
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
            };
            stack.push((r, right));
            stack.push((l, left));
        }
        SurvivalTree { nodes }
    }
}

pub fn fit_rsf(data: &SurvivalDataset, params: &RsfParams, seed: u64) -> Result<SurvivalForest> {
    params.validate(data.p())?;
    if data.event_count() == 0 {
        return Err(SurvError::NoEvents);
    }
    let grower = Grower {
        x: data.features(),
        time: data.time(),
        event: data.event(),
        mtry: params.mtry,
        min_node_size: params.min_node_size,
    };
    let n = data.n();
    let grow_one = |t: usize| {
        let mut rng = seed::rng(seed::derive(seed, seed::STREAM_TREE, t as u64));
        let sample: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grower.grow(sample, &mut rng)
    };

    #[cfg(feature = "parallel")]
    let trees: Vec<SurvivalTree> = {
        use rayon::prelude::*;
        (0..params.n_trees).into_par_iter().map(grow_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees: Vec<SurvivalTree> = (0..params.n_trees).map(grow_one).collect();

    Ok(SurvivalForest {
        trees,
        mtry: params.mtry,
        min_node_size: params.min_node_size,
        seed,
        n_features: data.p(),
        horizon: data.max_time(),
    })
}
