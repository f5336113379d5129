use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphstore::EntityClass;
use crate::manifold::Curvature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Sage,
    Gat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Euclidean,
    Hyperbolic,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Gcn, Architecture::Sage, Architecture::Gat];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Sage => "sage",
            Architecture::Gat => "gat",
        }
    }
}

impl Geometry {
    pub fn as_str(self) -> &'static str {
        match self {
            Geometry::Euclidean => "euclidean",
            Geometry::Hyperbolic => "hyperbolic",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown architecture `{s}`")))
    }
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Geometry::Euclidean),
            "hyperbolic" => Ok(Geometry::Hyperbolic),
            _ => Err(Error::invalid(format!("unknown geometry `{s}`"))),
        }
    }
}

/// Architecture and hyperparameters of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub geometry: Geometry,
    #[serde(default = "defaults::layers")]
    pub layers: usize,
    #[serde(default = "defaults::hidden_dim")]
    pub hidden_dim: usize,
    /// Attention heads of intermediate GAT layers; the final layer has one.
    #[serde(default = "defaults::heads")]
    pub heads: usize,
    #[serde(default = "defaults::head_dim")]
    pub head_dim: usize,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub curvature: Option<Curvature>,
    #[serde(default = "defaults::classes")]
    pub classes: usize,
}

mod defaults {
    pub fn layers() -> usize {
        2
    }
    pub fn hidden_dim() -> usize {
        256
    }
    pub fn heads() -> usize {
        8
    }
    pub fn head_dim() -> usize {
        32
    }
    pub fn dropout() -> f64 {
        0.1
    }
    pub fn classes() -> usize {
        super::EntityClass::COUNT
    }
}

impl ModelConfig {
    /// Defaults: 256 hidden units, 8 heads of 32, dropout 0.1, 7 classes.
    /// Hyperbolic models start at curvature 1.
    pub fn new(architecture: Architecture, geometry: Geometry, layers: usize) -> Self {
        Self {
            architecture,
            geometry,
            layers,
            hidden_dim: defaults::hidden_dim(),
            heads: defaults::heads(),
            head_dim: defaults::head_dim(),
            dropout: defaults::dropout(),
            curvature: match geometry {
                Geometry::Hyperbolic => Some(Curvature::new(1.0).expect("positive")),
                Geometry::Euclidean => None,
            },
            classes: defaults::classes(),
        }
    }

    /// Sets the hidden width; GAT heads are resized to keep `heads * head_dim`
    /// equal to it.
    pub fn with_hidden(mut self, hidden: usize, heads: usize) -> Self {
        self.hidden_dim = hidden;
        self.heads = heads;
        self.head_dim = hidden / heads.max(1);
        self
    }

    pub fn with_curvature(mut self, c: Curvature) -> Self {
        self.curvature = Some(c);
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.layers) {
            return Err(Error::Config(format!("layers must be 2 or 3, got {}", self.layers)));
        }
        if self.hidden_dim == 0 || self.classes < 2 {
            return Err(Error::Config("hidden_dim must be positive and classes at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.architecture == Architecture::Gat && self.heads * self.head_dim != self.hidden_dim {
            return Err(Error::Config(format!(
                "heads ({}) x head_dim ({}) must equal hidden_dim ({})",
                self.heads, self.head_dim, self.hidden_dim
            )));
        }
        match (self.geometry, self.curvature) {
            (Geometry::Hyperbolic, None) => Err(Error::Config("hyperbolic models need a curvature".into())),
            (Geometry::Euclidean, Some(_)) => Err(Error::Config("euclidean models take no curvature".into())),
            _ => Ok(()),
        }
    }

    /// Short label such as `hyperbolic-sage-3`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.geometry, self.architecture, self.layers)
    }
}
