use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven entity classes of the labeled address set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityClass {
    Exchange,
    Mining,
    Gambling,
    Ponzi,
    Individual,
    Ransomware,
    Bet,
}

impl EntityClass {
    pub const ALL: [EntityClass; 7] = [
        EntityClass::Exchange,
        EntityClass::Mining,
        EntityClass::Gambling,
        EntityClass::Ponzi,
        EntityClass::Individual,
        EntityClass::Ransomware,
        EntityClass::Bet,
    ];
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityClass::Exchange => "EXCHANGE",
            EntityClass::Mining => "MINING",
            EntityClass::Gambling => "GAMBLING",
            EntityClass::Ponzi => "PONZI",
            EntityClass::Individual => "INDIVIDUAL",
            EntityClass::Ransomware => "RANSOMWARE",
            EntityClass::Bet => "BET",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown class `{s}`")))
    }
}

/// Directed transaction graph with both adjacency directions indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<Option<EntityClass>>,
}

/// Offender lists are truncated to keep error messages readable.
const MAX_OFFENDERS: usize = 20;

struct Offenders(Vec<String>, usize);

impl Offenders {
    fn new() -> Self {
        Offenders(Vec::new(), 0)
    }

    fn push(&mut self, msg: String) {
        if self.0.len() < MAX_OFFENDERS {
            self.0.push(msg);
        }
        self.1 += 1;
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        if self.1 == 0 {
            return Ok(());
        }
        if self.1 > self.0.len() {
            self.0.push(format!("... {} more", self.1 - self.0.len()));
        }
        Err(Error::Ingestion {
            path: path.to_path_buf(),
            offenders: self.0,
        })
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn skip(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

impl TransactionGraph {
    /// Builds and indexes a graph. Features are row-major `node_count x names.len()`.
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<Option<EntityClass>>,
    ) -> Result<Self> {
        if let Some(&(s, d)) = edges.iter().find(|(s, d)| *s >= node_count || *d >= node_count) {
            return Err(Error::invalid(format!(
                "edge ({s}, {d}) references a node outside [0, {node_count})"
            )));
        }
        if features.len() != node_count * feature_names.len() {
            return Err(Error::invalid("feature matrix does not match node count"));
        }
        if labels.len() != node_count {
            return Err(Error::invalid("label vector does not match node count"));
        }
        let mut out_adj = vec![Vec::new(); node_count];
        let mut in_adj = vec![Vec::new(); node_count];
        for &(s, d) in &edges {
            out_adj[s].push(d);
            in_adj[d].push(s);
        }
        let neighbors = (0..node_count)
            .map(|v| {
                let mut n: Vec<usize> = out_adj[v]
                    .iter()
                    .chain(&in_adj[v])
                    .copied()
                    .filter(|&u| u != v)
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        Ok(Self {
            node_count,
            edges,
            out_adj,
            in_adj,
            neighbors,
            feature_names,
            features,
            labels,
        })
    }

    /// Loads the tab-separated edge file plus optional feature and label files.
    ///
    /// When a feature file is given it defines the node set: its ids must
    /// cover `0..rows` exactly once. Without one, the node count is one past
    /// the largest id seen in the edges.
    pub fn load(edge_file: &Path, feature_file: Option<&Path>, label_file: Option<&Path>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut bad = Offenders::new();
        for (i, line) in read_lines(edge_file)?.iter().enumerate() {
            if skip(line) {
                continue;
            }
            let mut parts = line.split('\t');
            let parsed = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => a.trim().parse::<usize>().ok().zip(b.trim().parse::<usize>().ok()),
                _ => None,
            };
            match parsed {
                Some(e) => edges.push(e),
                None => bad.push(format!("line {}: expected `src<TAB>dst`, got `{line}`", i + 1)),
            }
        }
        bad.finish(edge_file)?;

        let (node_count, feature_names, features) = match feature_file {
            Some(path) => read_features(path)?,
            None => {
                let n = edges.iter().map(|&(s, d)| s.max(d) + 1).max().unwrap_or(0);
                (n, Vec::new(), Vec::new())
            }
        };

        let mut dangling = Offenders::new();
        for (i, &(s, d)) in edges.iter().enumerate() {
            for v in [s, d] {
                if v >= node_count {
                    dangling.push(format!("edge {} references unknown node {v}", i + 1));
                }
            }
        }
        dangling.finish(edge_file)?;

        let mut labels = vec![None; node_count];
        if let Some(path) = label_file {
            read_labels(path, &mut labels)?;
        }
        Self::new(node_count, edges, feature_names, features, labels)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// Sorted, deduplicated union of in- and out-neighbors, without `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn features(&self, v: usize) -> &[f64] {
        let m = self.feature_dim();
        &self.features[v * m..(v + 1) * m]
    }

    /// Index of a named feature column.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn label(&self, v: usize) -> Option<EntityClass> {
        self.labels[v]
    }

    /// Labeled node ids in increasing order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&v| self.labels[v].is_some()).collect()
    }

    /// Replaces the feature table.
    pub fn set_features(&mut self, names: Vec<String>, data: Vec<f64>) -> Result<()> {
        if data.len() != names.len() * self.node_count {
            return Err(Error::invalid("feature table does not match node count"));
        }
        self.feature_names = names;
        self.features = data;
        Ok(())
    }

    /// Writes `edges.tsv`, `features.csv` and `labels.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut edges = String::new();
        for (s, d) in &self.edges {
            edges.push_str(&format!("{s}\t{d}\n"));
        }
        let mut feats = String::from("node_id");
        for n in &self.feature_names {
            feats.push(',');
            feats.push_str(n);
        }
        feats.push('\n');
        for v in 0..self.node_count {
            feats.push_str(&v.to_string());
            for x in self.features(v) {
                feats.push(',');
                if !x.is_nan() {
                    feats.push_str(&x.to_string());
                }
            }
            feats.push('\n');
        }
        let mut labels = String::from("node_id,class\n");
        for (v, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                labels.push_str(&format!("{v},{l}\n"));
            }
        }
        write_atomic(&dir.join("edges.tsv"), edges.as_bytes())?;
        write_atomic(&dir.join("features.csv"), feats.as_bytes())?;
        write_atomic(&dir.join("labels.csv"), labels.as_bytes())
    }
}

fn read_features(path: &Path) -> Result<(usize, Vec<String>, Vec<f64>)> {
    let lines = read_lines(path)?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !skip(l));
    let (_, header) = iter
        .next()
        .ok_or_else(|| Error::format(path.display().to_string(), "missing header"))?;
    let mut cols = header.split(',').map(str::trim);
    if cols.next() != Some("node_id") {
        return Err(Error::format(
            path.display().to_string(),
            "header must start with `node_id`",
        ));
    }
    let names: Vec<String> = cols.map(String::from).collect();
    let m = names.len();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut bad = Offenders::new();
    for (i, line) in iter {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 1 {
            bad.push(format!("line {}: expected {} fields, got {}", i + 1, m + 1, fields.len()));
            continue;
        }
        let Ok(id) = fields[0].trim().parse::<usize>() else {
            bad.push(format!("line {}: bad node id `{}`", i + 1, fields[0]));
            continue;
        };
        let mut row = Vec::with_capacity(m);
        for f in &fields[1..] {
            let f = f.trim();
            if f.is_empty() {
                row.push(f64::NAN);
            } else {
                match f.parse::<f64>() {
                    Ok(x) => row.push(x),
                    Err(_) => {
                        bad.push(format!("line {}: bad value `{f}`", i + 1));
                        row.push(f64::NAN);
                    }
                }
            }
        }
        rows.push((id, row));
    }
    bad.finish(path)?;

    let n = rows.len();
    let mut data = vec![f64::NAN; n * m];
    let mut seen = vec![false; n];
    let mut bad = Offenders::new();
    for (id, row) in rows {
        if id >= n {
            bad.push(format!("node id {id} outside [0, {n}) for a {n}-row file"));
        } else if seen[id] {
            bad.push(format!("duplicate feature row for node {id}"));
        } else {
            seen[id] = true;
            data[id * m..(id + 1) * m].copy_from_slice(&row);
        }
    }
    bad.finish(path)?;
    Ok((n, names, data))
}

fn read_labels(path: &Path, labels: &mut [Option<EntityClass>]) -> Result<()> {
    let mut bad = Offenders::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if skip(line) || line.trim() == "node_id,class" {
            continue;
        }
        let Some((id, class)) = line.split_once(',') else {
            bad.push(format!("line {}: expected `node_id,class`", i + 1));
            continue;
        };
        let id = match id.trim().parse::<usize>() {
            Ok(id) if id < labels.len() => id,
            _ => {
                bad.push(format!("line {}: unknown node `{}`", i + 1, id.trim()));
                continue;
            }
        };
        match class.parse::<EntityClass>() {
            Ok(c) => labels[id] = Some(c),
            Err(_) => bad.push(format!("line {}: unknown class `{}`", i + 1, class.trim())),
        }
    }
    bad.finish(path)
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
