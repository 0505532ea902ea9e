#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hyperproto::dataio::{load_dataset, EdgeLayout, HinDataset, Splits};
use hyperproto::model::Classifier;
use hyperproto::numeric::{Matrix, ParameterSet};
use hyperproto::{Hypergraph, ModelParams, NodeTypeTable};
use rand::seq::index::sample;
use rand::Rng;

pub const SLOPE: f64 = 0.01;

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn fixture(name: &str) -> HinDataset {
    load_dataset(data_dir(name)).unwrap()
}

/// Random typed hypergraph with `n ≤ 10` nodes and `m ≤ 4` hyperedges. Nodes
/// 0 and 2 are targets (train and val), node 1 is of the second type, others
/// are random. Some nodes may be isolated.
pub fn random_dataset<R: Rng>(rng: &mut R) -> HinDataset {
    let n = rng.random_range(4..=10);
    let m = rng.random_range(1..=4);
    let n_types = rng.random_range(2..=3);
    let node_type: Vec<usize> = (0..n)
        .map(|v| match v {
            0 | 2 => 0,
            1 => 1,
            _ => rng.random_range(0..n_types),
        })
        .collect();
    let n_types = node_type.iter().max().unwrap() + 1;
    let hyperedges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let size = rng.random_range(2..=n.min(5));
            let mut members = sample(rng, n, size).into_vec();
            members.sort_unstable();
            members
        })
        .collect();
    let names: Vec<String> = (0..n_types).map(|t| format!("type{t}")).collect();
    let types = NodeTypeTable::new(names, node_type.clone());
    let features = (0..n_types)
        .map(|t| {
            let rows = types.nodes_of_type(t).len();
            let d = rng.random_range(2..=4);
            Matrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0))
        })
        .collect();
    let targets = types.nodes_of_type(0);
    let labels: BTreeMap<usize, usize> = targets.iter().map(|&v| (v, rng.random_range(0..2))).collect();
    let splits = Splits {
        train: vec![0],
        val: vec![2],
        test: targets.iter().copied().filter(|&v| v != 0 && v != 2).collect(),
    };
    let ds = HinDataset {
        node_ids: (0..n).map(|v| format!("n{v}")).collect(),
        graph: Hypergraph::new(n, hyperedges, types),
        edges: EdgeLayout::Explicit {
            edge_ids: (0..m).map(|e| format!("e{e}")).collect(),
        },
        features,
        labels,
        n_classes: 2,
        splits,
        target_type: 0,
    };
    ds.validate().unwrap();
    ds
}

pub fn lrelu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { SLOPE * x }).collect()
}

pub fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) * x[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention maps of one head from the loop oracle.
pub struct OracleHead {
    pub out: Vec<Vec<f64>>,
    /// `alpha[e][v]`, zero for non-members.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[v][e]`, zero for non-incident edges.
    pub beta: Vec<Vec<f64>>,
}

/// One head with LeakyReLU as σ, written as nested loops.
pub fn oracle_head(params: &ParameterSet, names: &str, f: &[Vec<f64>], edges: &[Vec<usize>]) -> OracleHead {
    let get = |s: &str| params.value(params.find(&format!("{names}.{s}")).unwrap());
    let (w_h, a1, w_e, a2) = (get("w_h"), get("a1").as_slice(), get("w_e"), get("a2").as_slice());
    let n = f.len();
    let w = w_h.rows();
    let p: Vec<Vec<f64>> = f.iter().map(|x| matvec(w_h, x)).collect();
    let u: Vec<Vec<f64>> = p.iter().map(|x| lrelu(x)).collect();
    let mut alpha = vec![vec![0.0; n]; edges.len()];
    let mut hs = Vec::new();
    for (j, e) in edges.iter().enumerate() {
        let z: f64 = e.iter().map(|&k| dot(a1, &u[k]).exp()).sum();
        let mut acc = vec![0.0; w];
        for &k in e {
            alpha[j][k] = dot(a1, &u[k]).exp() / z;
            for t in 0..w {
                acc[t] += alpha[j][k] * p[k][t];
            }
        }
        hs.push(lrelu(&acc));
    }
    let q: Vec<Vec<f64>> = hs.iter().map(|x| matvec(w_e, x)).collect();
    let g: Vec<Vec<f64>> = q.iter().map(|x| lrelu(x)).collect();
    let mut beta = vec![vec![0.0; edges.len()]; n];
    let mut out = Vec::new();
    for i in 0..n {
        let incident: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].contains(&i)).collect();
        let agg = if incident.is_empty() {
            p[i].clone()
        } else {
            let logit = |k: usize| dot(&a2[..w], &u[i]) + dot(&a2[w..], &g[k]);
            let z: f64 = incident.iter().map(|&k| logit(k).exp()).sum();
            let mut acc = vec![0.0; w];
            for &k in &incident {
                beta[i][k] = logit(k).exp() / z;
                for t in 0..w {
                    acc[t] += beta[i][k] * q[k][t];
                }
            }
            acc
        };
        out.push(lrelu(&lrelu(&agg)));
    }
    OracleHead { out, alpha, beta }
}

/// Projection then every layer, heads concatenated.
pub fn oracle_forward(model: &ModelParams, ds: &HinDataset) -> Vec<Vec<f64>> {
    let types = &ds.graph.types;
    let local = types.local_indices();
    let mut f: Vec<Vec<f64>> = (0..ds.n_nodes())
        .map(|v| {
            let t = types.type_of(v);
            let m = model.params.value(model.layout.projection.per_type[t]);
            matvec(m, ds.features[t].row(local[v]))
        })
        .collect();
    for (l, heads) in model.layout.layers.iter().enumerate() {
        let outs: Vec<OracleHead> = (0..heads.len())
            .map(|h| oracle_head(&model.params, &format!("layer{l}.head{h}"), &f, &ds.graph.hyperedges))
            .collect();
        f = (0..f.len())
            .map(|v| outs.iter().flat_map(|o| o.out[v].clone()).collect())
            .collect();
    }
    f
}

/// Mean of `−log p(y|z)` with class mass summed over its prototypes.
pub fn oracle_dce(z: &[Vec<f64>], prototypes: &Matrix, labels: &[usize], per_class: usize) -> f64 {
    let mut total = 0.0;
    for (zi, &y) in z.iter().zip(labels) {
        let w: Vec<f64> = (0..prototypes.rows())
            .map(|j| {
                let d: f64 = zi.iter().zip(prototypes.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d).exp()
            })
            .collect();
        let own: f64 = w[y * per_class..(y + 1) * per_class].iter().sum();
        total += -(own / w.iter().sum::<f64>()).ln();
    }
    total / z.len() as f64
}

/// `mean((I − F Fᵀ I D_e⁻¹)²)` entry by entry.
pub fn oracle_reg(f: &[Vec<f64>], edges: &[Vec<usize>]) -> f64 {
    let n = f.len();
    let mut total = 0.0;
    for v in 0..n {
        for e in edges {
            let member = if e.contains(&v) { 1.0 } else { 0.0 };
            let acc: f64 = e.iter().map(|&u| dot(&f[v], &f[u])).sum();
            let r = member - acc / e.len() as f64;
            total += r * r;
        }
    }
    total / (n * edges.len()) as f64
}

/// `z = θ f` for the prototype classifier.
pub fn oracle_integrate(model: &ModelParams, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Classifier::Prototype(head) = model.layout.classifier else {
        panic!("prototype classifier expected");
    };
    let theta = model.params.value(head.theta);
    f.iter().map(|x| matvec(theta, x)).collect()
}

pub fn max_abs_diff(a: &Matrix, b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in b.iter().enumerate() {
        for (x, y) in a.row(i).iter().zip(row) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
