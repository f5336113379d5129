//! Feature preparation: derived columns, power-law normalization fitted on
//! the training split, stratified splitting and training-set oversampling.

mod derive;
mod normalize;
mod split;

use std::collections::BTreeSet;

pub use derive::{
    build_feature_table, derive_features, RateTable, DEFAULT_VALUE_FEATURES, DERIVED_NAMES, FIRST_TS, LAST_TS,
    RECEIVED_COUNT, SENT_COUNT, TOTAL_RECEIVED, TOTAL_SENT,
};
pub use normalize::{
    normalize_apply, normalize_fit, normalize_value, quantile_sorted, ApplyReport, FeatureStats, NormalizationStats,
    STATS_VERSION,
};
pub use split::{oversample_train, split_counts, stratified_split, OversampledTrainSet, Split, SplitAssignment};

use crate::error::Result;
use crate::graphstore::SubgraphCache;

/// Fits normalization stats on the distinct nodes of a training cache.
pub fn fit_on_cache(train: &SubgraphCache, value_features: &[String]) -> Result<NormalizationStats> {
    let flags: Vec<bool> = train
        .feature_names
        .iter()
        .map(|n| value_features.contains(n))
        .collect();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for s in &train.subgraphs {
        for (i, &v) in s.nodes.iter().enumerate() {
            if seen.insert(v) {
                rows.push(s.feature_row(i));
            }
        }
    }
    normalize_fit(&train.feature_names, &flags, rows)
}

/// Returns a copy of `cache` with every feature row normalized.
pub fn apply_to_cache(cache: &SubgraphCache, stats: &NormalizationStats) -> Result<(SubgraphCache, ApplyReport)> {
    if cache.feature_names != stats.names() {
        return Err(crate::Error::invalid(
            "cache feature schema differs from the fitted stats",
        ));
    }
    let mut out = cache.clone();
    let mut total = ApplyReport::default();
    for s in &mut out.subgraphs {
        total.negatives += normalize_apply(&mut s.features, stats)?.negatives;
    }
    Ok((out, total))
}
