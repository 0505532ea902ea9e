//! Planted-partition heterogeneous hypergraphs.
//!
//! Every target node belongs to one class. Each attribute node belongs to a
//! class pool (attribute node `j` of a type sits in pool `j mod c`). A target's
//! hyperedge bundles it with one attribute node of each attribute type; with
//! probability `edge_purity` that node comes from the target's own pool,
//! otherwise from a uniformly chosen other pool. Features are Gaussian noise
//! plus a unit class indicator on the first `round(label_signal · d)`
//! dimensions (dimension `j` indicates class `j mod c`).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EdgeLayout, HinDataset, Splits};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeTypeTable};
use crate::numeric::Matrix;

pub const TARGET_TYPE: &str = "target";
pub const ATTR_TYPES: [&str; 2] = ["attr_a", "attr_b"];

const TRAIN_FRACTION: f64 = 0.24;
const VAL_FRACTION: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub targets_per_class: usize,
    pub n_attr_nodes_per_type: [usize; 2],
    /// Widths for `[target, attr_a, attr_b]`.
    pub feature_dims: [usize; 3],
    pub label_signal: f64,
    pub edge_purity: f64,
    /// Standard deviation of the feature noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_classes: 2,
            targets_per_class: 20,
            n_attr_nodes_per_type: [10, 10],
            feature_dims: [16, 8, 8],
            label_signal: 1.0,
            edge_purity: 1.0,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 1 || self.targets_per_class < 1 {
            return bad("n_classes and targets_per_class must be at least 1".into());
        }
        if self.feature_dims.contains(&0) {
            return bad("feature dims must be at least 1".into());
        }
        for &n in &self.n_attr_nodes_per_type {
            if n < self.n_classes {
                return bad(format!(
                    "each attribute type needs at least one node per class ({n} < {})",
                    self.n_classes
                ));
            }
        }
        for (name, p) in [("label_signal", self.label_signal), ("edge_purity", self.edge_purity)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std = {} must be finite and non-negative", self.noise_std));
        }
        Ok(())
    }
}

fn class_features(rng: &mut ChaCha8Rng, class: usize, cfg: &SyntheticConfig, dim: usize) -> Vec<f64> {
    let signal_dims = (cfg.label_signal * dim as f64).round() as usize;
    (0..dim)
        .map(|j| {
            let mean = if j < signal_dims && j % cfg.n_classes == class { 1.0 } else { 0.0 };
            let noise: f64 = StandardNormal.sample(rng);
            mean + cfg.noise_std * noise
        })
        .collect()
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<HinDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.n_classes;
    let n_targets = c * cfg.targets_per_class;
    let [na, nb] = cfg.n_attr_nodes_per_type;

    let mut node_ids = Vec::with_capacity(n_targets + na + nb);
    let mut node_type = Vec::with_capacity(n_targets + na + nb);
    let mut target_class = Vec::with_capacity(n_targets);
    for class in 0..c {
        for _ in 0..cfg.targets_per_class {
            node_ids.push(format!("t{}", node_ids.len()));
            node_type.push(0);
            target_class.push(class);
        }
    }
    // attr_offset[s] = global index of the first node of attribute type s
    let mut attr_offset = [0usize; 2];
    for (s, &count) in [na, nb].iter().enumerate() {
        attr_offset[s] = node_ids.len();
        let prefix = if s == 0 { "a" } else { "b" };
        for j in 0..count {
            node_ids.push(format!("{prefix}{j}"));
            node_type.push(s + 1);
        }
    }

    let mut hyperedges = Vec::with_capacity(n_targets);
    for (t, &y) in target_class.iter().enumerate() {
        let mut members = vec![t];
        for (s, &count) in [na, nb].iter().enumerate() {
            let pool = if c == 1 || rng.random_bool(cfg.edge_purity) {
                y
            } else {
                let other = rng.random_range(0..c - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            };
            // nodes of this type in `pool`: pool, pool + c, pool + 2c, ...
            let pool_size = (count - pool).div_ceil(c);
            let j = pool + c * rng.random_range(0..pool_size);
            members.push(attr_offset[s] + j);
        }
        hyperedges.push(members);
    }

    let mut features = Vec::with_capacity(3);
    let mut target_feats = Vec::with_capacity(n_targets * cfg.feature_dims[0]);
    for &y in &target_class {
        target_feats.extend(class_features(&mut rng, y, cfg, cfg.feature_dims[0]));
    }
    features.push(Matrix::from_vec(n_targets, cfg.feature_dims[0], target_feats)?);
    for (s, &count) in [na, nb].iter().enumerate() {
        let dim = cfg.feature_dims[s + 1];
        let mut data = Vec::with_capacity(count * dim);
        for j in 0..count {
            data.extend(class_features(&mut rng, attribute_pool(j, c), cfg, dim));
        }
        features.push(Matrix::from_vec(count, dim, data)?);
    }

    let mut splits = Splits::default();
    for class in 0..c {
        let mut members: Vec<usize> = (0..n_targets).filter(|&t| target_class[t] == class).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((TRAIN_FRACTION * n as f64).round() as usize).clamp(1, n);
        let n_val = ((VAL_FRACTION * n as f64).round() as usize)
            .max(usize::from(n >= 3))
            .min(n - n_train);
        splits.train.extend(&members[..n_train]);
        splits.val.extend(&members[n_train..n_train + n_val]);
        splits.test.extend(&members[n_train + n_val..]);
    }

    let type_names = std::iter::once(TARGET_TYPE)
        .chain(ATTR_TYPES)
        .map(String::from)
        .collect();
    let graph = Hypergraph::new(node_ids.len(), hyperedges, NodeTypeTable::new(type_names, node_type));
    let labels: BTreeMap<usize, usize> = target_class.iter().copied().enumerate().collect();
    let ds = HinDataset {
        node_ids,
        graph,
        edges: EdgeLayout::Bundle {
            targets: (0..n_targets).collect(),
        },
        features,
        labels,
        n_classes: c,
        splits,
        target_type: 0,
    };
    ds.validate()?;
    Ok(ds)
}

/// Pool class of an attribute node, from its position within its type.
pub(crate) fn attribute_pool(local_index: usize, n_classes: usize) -> usize {
    local_index % n_classes
}
