//! Power-law feature normalization.
//!
//! Stages, in order: zeros become missing, natural log, affine map between
//! a lower anchor (minimum, or 5th percentile for value-type features) and
//! the 95th percentile, clip to `[0, 1]`, missing becomes 0. Anchors are
//! log-domain quantiles of the strictly positive training values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphstore::write_atomic;

pub const STATS_VERSION: u32 = 1;

/// Log-domain anchors of one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub q0: Option<f64>,
    pub q5: Option<f64>,
    pub q95: Option<f64>,
    pub value_type: bool,
    pub constant: bool,
}

impl FeatureStats {
    /// `(lower, upper)` anchors, or `None` for constant features.
    pub fn anchors(&self) -> Option<(f64, f64)> {
        if self.constant {
            return None;
        }
        let (q0, q5, q95) = (self.q0?, self.q5?, self.q95?);
        let lower = if self.value_type && q5 < q95 { q5 } else { q0 };
        (lower < q95).then_some((lower, q95))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub version: u32,
    pub features: Vec<FeatureStats>,
}

/// Linear interpolation between order statistics of sorted data, at
/// position `p * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fits anchors from training rows only. `rows` yields one feature row at
/// a time; `value_type[j]` selects the 5th-percentile lower anchor.
pub fn normalize_fit<'a>(
    names: &[String],
    value_type: &[bool],
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<NormalizationStats> {
    if names.len() != value_type.len() {
        return Err(Error::invalid("value-type flags do not match feature count"));
    }
    let m = names.len();
    let mut logs: Vec<Vec<f64>> = vec![Vec::new(); m];
    for row in rows {
        if row.len() != m {
            return Err(Error::invalid(format!("row of width {} for {m} features", row.len())));
        }
        for (j, &x) in row.iter().enumerate() {
            // zeros, negatives and NaN all take the missing path
            if x > 0.0 && x.is_finite() {
                logs[j].push(x.ln());
            }
        }
    }
    let features = names
        .iter()
        .zip(value_type)
        .zip(logs)
        .map(|((name, &vt), mut col)| {
            if col.is_empty() {
                return FeatureStats {
                    name: name.clone(),
                    q0: None,
                    q5: None,
                    q95: None,
                    value_type: vt,
                    constant: true,
                };
            }
            col.sort_by(f64::total_cmp);
            let mut s = FeatureStats {
                name: name.clone(),
                q0: Some(col[0]),
                q5: Some(quantile_sorted(&col, 0.05)),
                q95: Some(quantile_sorted(&col, 0.95)),
                value_type: vt,
                constant: false,
            };
            s.constant = s.anchors().is_none();
            s
        })
        .collect();
    Ok(NormalizationStats {
        version: STATS_VERSION,
        features,
    })
}

/// Normalizes one value against its feature's anchors.
pub fn normalize_value(x: f64, stats: &FeatureStats) -> f64 {
    let Some((lower, upper)) = stats.anchors() else {
        return 0.0;
    };
    if !(x > 0.0) {
        return 0.0;
    }
    let y = (x.ln() - lower) / (upper - lower);
    if y.is_nan() {
        0.0
    } else {
        y.clamp(0.0, 1.0)
    }
}

/// Outcome counters of [`normalize_apply`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyReport {
    pub negatives: usize,
}

/// Normalizes a row-major matrix in place.
pub fn normalize_apply(data: &mut [f64], stats: &NormalizationStats) -> Result<ApplyReport> {
    let m = stats.features.len();
    if m == 0 {
        return Ok(ApplyReport::default());
    }
    if data.len() % m != 0 {
        return Err(Error::invalid(format!(
            "matrix of {} values is not a multiple of {m} features",
            data.len()
        )));
    }
    let mut report = ApplyReport::default();
    for row in data.chunks_mut(m) {
        for (x, s) in row.iter_mut().zip(&stats.features) {
            if *x < 0.0 {
                report.negatives += 1;
            }
            *x = normalize_value(*x, s);
        }
    }
    if report.negatives > 0 {
        log::warn!("{} negative feature values treated as missing", report.negatives);
    }
    Ok(report)
}

impl NormalizationStats {
    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stats: NormalizationStats =
            serde_json::from_str(text).map_err(|e| Error::format("normalization stats", e))?;
        if stats.version != STATS_VERSION {
            return Err(Error::format(
                "normalization stats",
                format!("unsupported version {}", stats.version),
            ));
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
