use survml::harness::{default_grid, tune_inner};
use survml::metrics::c_index;
use survml::rsf::RsfParams;
use survml::simulate::{simulate_cohort, SimSpec};
use survml::{ModelKind, ModelParams, SurvivalModel};

#[test]
fn inner_tuning_prefers_mtry_p_with_one_informative_feature() {
    let grid: Vec<ModelParams> = [1, 5]
        .map(|mtry| ModelParams::Rsf(RsfParams { mtry, min_node_size: 10, n_trees: 30, bootstrap: true }))
        .to_vec();
    let mut picked_p = 0;
    for run in 0..100u64 {
        let spec = SimSpec { n: 200, ..SimSpec::linear(vec![1.5, 0.0, 0.0, 0.0, 0.0], 1000 + run) };
        let data = simulate_cohort(&spec).unwrap().dataset;
        let tuned = tune_inner(&data, &grid, 3, run).unwrap();
        if tuned.best_index == 1 {
            picked_p += 1;
        }
    }
    assert!(picked_p >= 90, "mtry = p chosen in {picked_p} of 100 runs");
}

#[test]
fn deephit_reaches_useful_concordance_on_linear_cohort() {
    let spec = SimSpec { n: 1000, ..SimSpec::linear(vec![1.0, -0.5, 0.5, 0.0, 0.0], 31) };
    let data = simulate_cohort(&spec).unwrap().dataset;
    let train = data.subset(&(0..500).collect::<Vec<_>>());
    let test = data.subset(&(500..1000).collect::<Vec<_>>());
    let scores: Vec<f64> = default_grid(ModelKind::DeepHit, data.p())
        .iter()
        .map(|params| {
            let model = params.fit(&train, 4).unwrap();
            let risk = model.risk_scores(test.features()).unwrap();
            c_index(test.time(), test.event(), &risk).unwrap().c_index
        })
        .collect();
    let best = scores.iter().copied().fold(0.0, f64::max);
    assert!(best >= 0.70, "held-out C-index per grid point: {scores:?}");
}
