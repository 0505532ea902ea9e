//! Datasets: the in-memory [`HinDataset`], its on-disk TSV/JSON layout, the
//! synthetic planted-partition generator, and embedding export.

mod embeddings;
mod format;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::numeric::Matrix;

pub use embeddings::{read_embeddings, write_embeddings};
pub use format::{load_dataset, save_dataset, Schema};
pub use synthetic::{generate_synthetic, SyntheticConfig, ATTR_TYPES, TARGET_TYPE};

/// How hyperedges are stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLayout {
    /// One named row per hyperedge.
    Explicit { edge_ids: Vec<String> },
    /// Hyperedge `e` bundles target node `targets[e]` with its related nodes;
    /// the target is the first member.
    Bundle { targets: Vec<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl Splits {
    pub fn get(&self, which: SplitName) -> &[usize] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split {other:?} (train|val|test)")),
        }
    }
}

/// A heterogeneous hypergraph with per-type features, target-node labels and
/// a transductive split. Node indices are global; `features[t]` has one row
/// per node of type `t`, in ascending global-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct HinDataset {
    pub node_ids: Vec<String>,
    pub graph: Hypergraph,
    pub edges: EdgeLayout,
    pub features: Vec<Matrix>,
    pub labels: BTreeMap<usize, usize>,
    pub n_classes: usize,
    pub splits: Splits,
    pub target_type: usize,
}

impl HinDataset {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes
    }

    pub fn type_names(&self) -> &[String] {
        &self.graph.types.type_names
    }

    pub fn feature_dims(&self) -> Vec<usize> {
        self.features.iter().map(Matrix::cols).collect()
    }

    /// Labels for `nodes`, in order. Fails on an unlabeled node.
    pub fn labels_of(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|v| {
                self.labels
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::Structure(format!("node {} is unlabeled", self.node_ids[*v])))
            })
            .collect()
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        self.graph.check()?;
        if self.node_ids.len() != self.graph.n_nodes {
            return Err(Error::Structure("node id table does not match graph".into()));
        }
        if self.features.len() != self.graph.types.n_types() {
            return Err(Error::Structure(format!(
                "{} feature matrices for {} types",
                self.features.len(),
                self.graph.types.n_types()
            )));
        }
        for (t, f) in self.features.iter().enumerate() {
            let count = self.graph.types.nodes_of_type(t).len();
            if f.rows() != count {
                return Err(Error::Structure(format!(
                    "type {} has {count} nodes but {} feature rows",
                    self.graph.types.type_names[t],
                    f.rows()
                )));
            }
        }
        for (&v, &c) in &self.labels {
            if self.graph.types.type_of(v) != self.target_type {
                return Err(Error::Structure(format!(
                    "label on non-target node {}",
                    self.node_ids[v]
                )));
            }
            if c >= self.n_classes {
                return Err(Error::Structure(format!(
                    "class {c} of node {} outside [0, {})",
                    self.node_ids[v], self.n_classes
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for v in self.splits.train.iter().chain(&self.splits.val).chain(&self.splits.test) {
            if !self.labels.contains_key(v) {
                return Err(Error::Structure(format!(
                    "split member {} is unlabeled",
                    self.node_ids[*v]
                )));
            }
            if !seen.insert(*v) {
                return Err(Error::Structure(format!(
                    "node {} appears in more than one split",
                    self.node_ids[*v]
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical serialization of every file of the dataset.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, body) in format::render(self) {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(body.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}
