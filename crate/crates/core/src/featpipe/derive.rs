//! Derived per-node features and optional USD conversion of value columns.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graphstore::TransactionGraph;

/// Raw transactional columns the derivations read, by name.
pub const TOTAL_SENT: &str = "total_sent";
pub const TOTAL_RECEIVED: &str = "total_received";
pub const SENT_COUNT: &str = "sent_count";
pub const RECEIVED_COUNT: &str = "received_count";
pub const FIRST_TS: &str = "first_ts";
pub const LAST_TS: &str = "last_ts";

pub const DERIVED_NAMES: [&str; 7] = [
    "avg_sent",
    "avg_received",
    "in_ratio",
    "out_ratio",
    "cluster_ratio",
    "node_age",
    "activity_rate",
];

/// Value-denominated features (converted to USD when a rate table is given).
pub const DEFAULT_VALUE_FEATURES: [&str; 4] = [TOTAL_SENT, TOTAL_RECEIVED, "avg_sent", "avg_received"];

fn raw(graph: &TransactionGraph, node: usize, name: &str) -> f64 {
    graph
        .feature_index(name)
        .map_or(f64::NAN, |j| graph.features(node)[j])
}

/// Derived features of one node, in [`DERIVED_NAMES`] order.
///
/// Missing raw columns produce NaN entries. Cluster composition is not
/// available for these graphs and is emitted as zero.
pub fn derive_features(graph: &TransactionGraph, node: usize) -> [f64; 7] {
    let in_deg = graph.in_neighbors(node).len() as f64;
    let out_deg = graph.out_neighbors(node).len() as f64;
    let sent_count = raw(graph, node, SENT_COUNT);
    let received_count = raw(graph, node, RECEIVED_COUNT);
    let age = raw(graph, node, LAST_TS) - raw(graph, node, FIRST_TS);
    [
        raw(graph, node, TOTAL_SENT) / sent_count.max(1.0),
        raw(graph, node, TOTAL_RECEIVED) / received_count.max(1.0),
        in_deg / (in_deg + out_deg + 1.0),
        out_deg / (in_deg + out_deg + 1.0),
        0.0,
        age,
        (received_count + sent_count) / age.max(1.0),
    ]
}

/// Daily BTC/USD rates keyed by days since the Unix epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    days: Vec<i64>,
    rates: Vec<f64>,
}

/// Days since 1970-01-01 of a proleptic Gregorian date.
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn parse_date(s: &str) -> Option<i64> {
    let mut it = s.trim().splitn(3, '-');
    let y = it.next()?.parse().ok()?;
    let m: u32 = it.next()?.parse().ok()?;
    let d: u32 = it.next()?.parse().ok()?;
    ((1..=12).contains(&m) && (1..=31).contains(&d)).then(|| days_from_civil(y, m, d))
}

impl RateTable {
    /// Parses `date,usd_per_btc` lines with ISO `YYYY-MM-DD` dates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t == "date,usd_per_btc" {
                continue;
            }
            let parsed = t.split_once(',').and_then(|(d, r)| {
                Some((parse_date(d)?, r.trim().parse::<f64>().ok().filter(|r| *r > 0.0)?))
            });
            match parsed {
                Some(row) => rows.push(row),
                None => {
                    return Err(Error::format(
                        "rate table",
                        format!("line {}: expected `YYYY-MM-DD,rate`, got `{t}`", i + 1),
                    ))
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::format("rate table", "no rates"));
        }
        rows.sort_by_key(|r| r.0);
        Ok(Self {
            days: rows.iter().map(|r| r.0).collect(),
            rates: rows.iter().map(|r| r.1).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Median rate over the days spanned by `[first_ts, last_ts]` (Unix
    /// seconds). Falls back to the nearest earlier rate, then the first.
    pub fn median_rate(&self, first_ts: f64, last_ts: f64) -> f64 {
        if !first_ts.is_finite() || !last_ts.is_finite() {
            return f64::NAN;
        }
        let lo = (first_ts.min(last_ts) / 86_400.0).floor() as i64;
        let hi = (first_ts.max(last_ts) / 86_400.0).floor() as i64;
        let start = self.days.partition_point(|&d| d < lo);
        let end = self.days.partition_point(|&d| d <= hi);
        if start < end {
            let mut window = self.rates[start..end].to_vec();
            window.sort_by(f64::total_cmp);
            let n = window.len();
            if n % 2 == 1 {
                window[n / 2]
            } else {
                0.5 * (window[n / 2 - 1] + window[n / 2])
            }
        } else if start > 0 {
            self.rates[start - 1]
        } else {
            self.rates[0]
        }
    }
}

/// Raw columns followed by derived columns, for every node.
///
/// With a rate table, value columns (given in satoshi) become USD using the
/// node's median lifetime rate.
pub fn build_feature_table(
    graph: &TransactionGraph,
    rates: Option<&RateTable>,
    value_features: &[String],
) -> (Vec<String>, Vec<f64>) {
    let mut names: Vec<String> = graph.feature_names().to_vec();
    names.extend(DERIVED_NAMES.iter().map(|s| s.to_string()));
    let value_cols: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| value_features.contains(n))
        .map(|(j, _)| j)
        .collect();
    let mut data = Vec::with_capacity(graph.node_count() * names.len());
    for v in 0..graph.node_count() {
        let start = data.len();
        data.extend_from_slice(graph.features(v));
        data.extend_from_slice(&derive_features(graph, v));
        if let Some(table) = rates {
            let rate = table.median_rate(raw(graph, v, FIRST_TS), raw(graph, v, LAST_TS));
            for &j in &value_cols {
                data[start + j] *= rate * 1e-8;
            }
        }
    }
    (names, data)
}
