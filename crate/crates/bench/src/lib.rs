//! Fixtures shared by the pipeline benchmarks.

use stockops_core::{
    build_feature_matrix, label_series, synthetic, CostModel, LabeledDataset, PriceSeries,
    StrategyParams,
};

/// Seeded random walk with its default-cost labeled dataset.
pub fn labeled_walk(
    len: usize,
    seed: u64,
    params: &StrategyParams,
) -> (PriceSeries, LabeledDataset) {
    let series = synthetic::random_walk("BENCH", len, seed, 0.02);
    let fm = build_feature_matrix(&series).expect("long enough for every indicator");
    let ds = label_series(&series, params, &CostModel::default(), &fm).expect("labels");
    (series, ds)
}

pub fn default_params() -> StrategyParams {
    StrategyParams::new(0.10, 0.03, 10).expect("valid triple")
}
