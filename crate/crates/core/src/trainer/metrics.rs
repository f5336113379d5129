use serde::Serialize;

use crate::graphstore::EntityClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: EntityClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Evaluation seeds whose true class this is.
    pub support: usize,
}

/// Per-class and macro-averaged classification metrics.
///
/// Classes without support in the evaluated set are absent: they have no
/// entry in `per_class` and do not enter the macro averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; EntityClass::COUNT]; EntityClass::COUNT],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Builds the report from `(truth, predicted)` class indices.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = [[0u64; EntityClass::COUNT]; EntityClass::COUNT];
        for (t, p) in pairs {
            confusion[t][p] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let mut per_class = Vec::new();
        for class in EntityClass::ALL {
            let k = class.index();
            let support: u64 = confusion[k].iter().sum();
            if support == 0 {
                continue;
            }
            let tp = confusion[k][k];
            let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            per_class.push(ClassMetrics {
                class,
                precision,
                recall,
                f1,
                support: support as usize,
            });
        }
        let absent: Vec<&str> = EntityClass::ALL
            .iter()
            .filter(|c| !per_class.iter().any(|m| m.class == **c))
            .map(|c| c.as_str())
            .collect();
        if !absent.is_empty() && total > 0 {
            log::debug!("classes absent from evaluation set: {}", absent.join(", "));
        }
        let avg = |f: fn(&ClassMetrics) -> f64| {
            if per_class.is_empty() {
                0.0
            } else {
                per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
            }
        };
        let correct: u64 = (0..EntityClass::COUNT).map(|k| confusion[k][k]).sum();
        Self {
            macro_precision: avg(|m| m.precision),
            macro_recall: avg(|m| m.recall),
            macro_f1: avg(|m| m.f1),
            accuracy: ratio(correct, total),
            per_class,
            confusion,
        }
    }

    pub fn class(&self, class: EntityClass) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let r = MetricsReport::from_pairs([(0, 0), (3, 3), (3, 3), (6, 6)]);
        assert_eq!(r.per_class.len(), 3);
        assert_eq!(r.macro_f1, 1.0);
        assert!(r.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0));
    }

    #[test]
    fn hand_counts() {
        // class 0: TP=3, FP=1, FN=2
        let pairs = [(0, 0), (0, 0), (0, 0), (0, 1), (0, 1), (1, 0), (1, 1)];
        let r = MetricsReport::from_pairs(pairs);
        let m = r.class(EntityClass::Exchange).unwrap();
        assert_abs_diff_eq!(m.precision, 0.75);
        assert_abs_diff_eq!(m.recall, 0.6);
        assert_abs_diff_eq!(m.f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.confusion[0][1], 2);
    }

    #[test]
    fn zero_precision_and_recall_give_zero_f1() {
        let r = MetricsReport::from_pairs([(0, 1), (1, 0)]);
        assert!(r.per_class.iter().all(|m| m.f1 == 0.0));
        assert_eq!(r.macro_f1, 0.0);
    }

    proptest! {
        #[test]
        fn macro_is_unweighted_mean(pairs in prop::collection::vec((0usize..7, 0usize..7), 1..200)) {
            let r = MetricsReport::from_pairs(pairs.clone());
            let mean = r.per_class.iter().map(|m| m.f1).sum::<f64>() / r.per_class.len() as f64;
            prop_assert!((r.macro_f1 - mean).abs() < 1e-15);
            for m in &r.per_class {
                prop_assert!((0.0..=1.0).contains(&m.precision));
                prop_assert!((0.0..=1.0).contains(&m.recall));
                prop_assert!((0.0..=1.0).contains(&m.f1));
            }
            prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>(), pairs.len() as u64);
        }
    }
}
