use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphstore::EntityClass;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown split `{s}`")))
    }
}

const FRACTIONS: [f64; 3] = [0.4, 0.3, 0.3];

/// Per-class 40/30/30 counts by largest remainder; ties go to the earlier
/// split.
pub fn split_counts(n: usize) -> [usize; 3] {
    let quotas = FRACTIONS.map(|f| f * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Split membership of every labeled seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    assignment: BTreeMap<usize, (EntityClass, Split)>,
}

impl SplitAssignment {
    /// Rebuilds an assignment, e.g. from a split file. Nodes must be unique.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, EntityClass, Split)>) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        for (node, class, split) in entries {
            if assignment.insert(node, (class, split)).is_some() {
                return Err(Error::invalid(format!("node {node} assigned twice")));
            }
        }
        Ok(Self { assignment })
    }

    /// `(node, class, split)` in increasing node order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, EntityClass, Split)> + '_ {
        self.assignment.iter().map(|(&n, &(c, s))| (n, c, s))
    }

    pub fn split_of(&self, node: usize) -> Option<Split> {
        self.assignment.get(&node).map(|x| x.1)
    }

    /// Seeds of one split in increasing id order.
    pub fn seeds(&self, split: Split) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, v)| v.1 == split)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn seeds_of_class(&self, split: Split, class: EntityClass) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, v)| v.1 == split && v.0 == class)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn class_of(&self, node: usize) -> Option<EntityClass> {
        self.assignment.get(&node).map(|x| x.0)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Stratified 40/30/30 split: per class, a seeded shuffle followed by a
/// contiguous cut. Classes with fewer than three members go to train.
pub fn stratified_split(labels: &[(usize, EntityClass)], split_seed: u64) -> SplitAssignment {
    let mut by_class: BTreeMap<EntityClass, Vec<usize>> = BTreeMap::new();
    for &(node, class) in labels {
        by_class.entry(class).or_default().push(node);
    }
    let mut assignment = BTreeMap::new();
    for (class, mut nodes) in by_class {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.len() < 3 {
            log::warn!("class {class} has {} members; all assigned to train", nodes.len());
            for n in nodes {
                assignment.insert(n, (class, Split::Train));
            }
            continue;
        }
        let mut r = rng::stream(split_seed, &[class.index() as u64]);
        nodes.shuffle(&mut r);
        let [tr, va, _] = split_counts(nodes.len());
        for (i, n) in nodes.into_iter().enumerate() {
            let split = if i < tr {
                Split::Train
            } else if i < tr + va {
                Split::Validation
            } else {
                Split::Test
            };
            assignment.insert(n, (class, split));
        }
    }
    SplitAssignment { assignment }
}

/// Training multiset after per-class oversampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OversampledTrainSet {
    pub entries: Vec<usize>,
}

/// Brings every train class below `target` up to exactly `target` entries:
/// each original seed once, plus draws with replacement. Classes already at
/// or above `target` are left as they are.
pub fn oversample_train(
    assignment: &SplitAssignment,
    target: usize,
    rng: &mut impl Rng,
) -> Result<OversampledTrainSet> {
    let mut entries = Vec::new();
    for class in EntityClass::ALL {
        let labeled = assignment.assignment.values().any(|v| v.0 == class);
        if !labeled {
            continue;
        }
        let train = assignment.seeds_of_class(Split::Train, class);
        if train.is_empty() {
            return Err(Error::invalid(format!(
                "class {class} has no training seeds to oversample"
            )));
        }
        entries.extend_from_slice(&train);
        for _ in train.len()..target {
            entries.push(train[rng.random_range(0..train.len())]);
        }
    }
    Ok(OversampledTrainSet { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(counts: &[(EntityClass, usize)]) -> Vec<(usize, EntityClass)> {
        let mut out = Vec::new();
        let mut id = 0;
        for &(c, n) in counts {
            for _ in 0..n {
                out.push((id, c));
                id += 1;
            }
        }
        out
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(split_counts(100), [40, 30, 30]);
        assert_eq!(split_counts(10), [4, 3, 3]);
        assert_eq!(split_counts(7), [3, 2, 2]);
        assert_eq!(split_counts(3), [1, 1, 1]);
        for n in 0..500 {
            let c = split_counts(n);
            assert_eq!(c.iter().sum::<usize>(), n);
            for (k, f) in c.iter().zip(FRACTIONS) {
                assert!((*k as f64 - f * n as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn split_is_deterministic_and_stratified() {
        let l = labels(&[(EntityClass::Exchange, 100), (EntityClass::Ponzi, 7), (EntityClass::Bet, 2)]);
        let a = stratified_split(&l, 3);
        assert_eq!(a, stratified_split(&l, 3));
        assert_ne!(a, stratified_split(&l, 4));
        let count = |s, c| a.seeds_of_class(s, c).len();
        assert_eq!(count(Split::Train, EntityClass::Exchange), 40);
        assert_eq!(count(Split::Test, EntityClass::Exchange), 30);
        assert_eq!(count(Split::Train, EntityClass::Ponzi), 3);
        assert_eq!(count(Split::Validation, EntityClass::Ponzi), 2);
        assert_eq!(count(Split::Train, EntityClass::Bet), 2);
        assert_eq!(a.len(), 109);
    }

    #[test]
    fn oversampling_tallies() {
        let l = labels(&[(EntityClass::Exchange, 300), (EntityClass::Mining, 1000), (EntityClass::Gambling, 20)]);
        let a = stratified_split(&l, 1);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let o = oversample_train(&a, 300, &mut r).unwrap();
        let mut tally: BTreeMap<EntityClass, usize> = BTreeMap::new();
        for &n in &o.entries {
            assert_eq!(a.split_of(n), Some(Split::Train));
            *tally.entry(a.class_of(n).unwrap()).or_default() += 1;
        }
        assert_eq!(tally[&EntityClass::Exchange], 300); // 120 train -> 300
        assert_eq!(tally[&EntityClass::Mining], 400); // already above target
        assert_eq!(tally[&EntityClass::Gambling], 300);
        let exchange = a.seeds_of_class(Split::Train, EntityClass::Exchange);
        assert_eq!(exchange.len(), 120);
        assert!(exchange.iter().all(|s| o.entries.contains(s)));
    }
}
