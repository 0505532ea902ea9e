//! On-disk dataset layout:
//!
//! ```text
//! schema.json          {"types":[..], "target_type":"..", "feature_dims":{type:int}, "n_classes":int}
//! nodes.tsv            node_id<TAB>type
//! features-<type>.tsv  node_id<TAB>v1 .. v_d
//! hyperedges.tsv       first line "mode=explicit" or "mode=bundle", then
//!                      explicit: edge_id<TAB>node_id,node_id,...
//!                      bundle:   target_id<TAB>related_id,related_id,...
//! labels.tsv           node_id<TAB>class_index
//! splits.json          {"train":[ids], "val":[ids], "test":[ids]}
//! ```
//!
//! Blank lines and lines starting with `#` are ignored in TSV files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EdgeLayout, HinDataset, Splits};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeTypeTable};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub types: Vec<String>,
    pub target_type: String,
    pub feature_dims: BTreeMap<String, usize>,
    pub n_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct SplitsFile {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn read(dir: &Path, name: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(s) => Ok((path, s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(e.into()),
    }
}

/// Non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn split_ids(field: &str) -> impl Iterator<Item = &str> {
    field.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<HinDataset> {
    let dir = dir.as_ref();

    let (schema_path, schema_text) = read(dir, "schema.json")?;
    let schema: Schema = serde_json::from_str(&schema_text)
        .map_err(|e| Error::load(&schema_path, e.line(), e.to_string()))?;
    let type_index: HashMap<&str, usize> = schema
        .types
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let target_type = *type_index.get(schema.target_type.as_str()).ok_or_else(|| {
        Error::load(&schema_path, 0, format!("target_type {:?} not among types", schema.target_type))
    })?;
    for t in &schema.types {
        if !schema.feature_dims.contains_key(t) {
            return Err(Error::load(&schema_path, 0, format!("no feature_dims entry for type {t:?}")));
        }
    }
    if schema.n_classes == 0 {
        return Err(Error::load(&schema_path, 0, "n_classes must be positive"));
    }

    // nodes
    let (nodes_path, nodes_text) = read(dir, "nodes.tsv")?;
    let mut node_ids = Vec::new();
    let mut node_type = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    for (line, l) in data_lines(&nodes_text) {
        let mut cols = l.split('\t');
        let (Some(id), Some(ty), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::load(&nodes_path, line, "expected node_id<TAB>type"));
        };
        let t = *type_index
            .get(ty)
            .ok_or_else(|| Error::load(&nodes_path, line, format!("unknown type {ty:?}")))?;
        if id_index.insert(id.to_string(), node_ids.len()).is_some() {
            return Err(Error::load(&nodes_path, line, format!("duplicate node id {id:?}")));
        }
        node_ids.push(id.to_string());
        node_type.push(t);
    }
    let types = NodeTypeTable::new(schema.types.clone(), node_type);
    let local = types.local_indices();
    let lookup = |path: &Path, line: usize, id: &str| -> Result<usize> {
        id_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::load(path, line, format!("unknown node id {id:?}")))
    };

    // features
    let mut features = Vec::with_capacity(schema.types.len());
    for (t, name) in schema.types.iter().enumerate() {
        let dim = schema.feature_dims[name];
        let count = types.nodes_of_type(t).len();
        let (path, text) = read(dir, &format!("features-{name}.tsv"))?;
        let mut m = Matrix::zeros(count, dim);
        let mut filled = vec![false; count];
        for (line, l) in data_lines(&text) {
            let mut cols = l.split('\t');
            let id = cols.next().unwrap_or_default();
            let v = lookup(&path, line, id)?;
            if types.type_of(v) != t {
                return Err(Error::load(&path, line, format!("node {id:?} is not of type {name:?}")));
            }
            let values: Vec<f64> = cols
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::load(&path, line, format!("bad number {c:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::load(
                    &path,
                    line,
                    format!("feature width {} does not match schema width {dim}", values.len()),
                ));
            }
            if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
                return Err(Error::load(&path, line, format!("non-finite feature {bad}")));
            }
            let row = local[v];
            if filled[row] {
                return Err(Error::load(&path, line, format!("duplicate features for {id:?}")));
            }
            filled[row] = true;
            m.row_mut(row).copy_from_slice(&values);
        }
        if let Some(row) = filled.iter().position(|f| !f) {
            let v = types.nodes_of_type(t)[row];
            return Err(Error::load(&path, 0, format!("no features for node {:?}", node_ids[v])));
        }
        features.push(m);
    }

    // hyperedges
    let (edges_path, edges_text) = read(dir, "hyperedges.tsv")?;
    let mut lines = data_lines(&edges_text);
    let bundle = match lines.next() {
        Some((_, "mode=explicit")) => false,
        Some((_, "mode=bundle")) => true,
        Some((line, other)) => {
            return Err(Error::load(
                &edges_path,
                line,
                format!("expected mode=explicit|bundle header, found {other:?}"),
            ))
        }
        None => return Err(Error::load(&edges_path, 0, "empty hyperedge file")),
    };
    let mut hyperedges = Vec::new();
    let mut edge_ids = Vec::new();
    let mut targets = Vec::new();
    for (line, l) in lines {
        let mut cols = l.split('\t');
        let (Some(head), Some(rest), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::load(&edges_path, line, "expected id<TAB>comma-separated node ids"));
        };
        let mut members = Vec::new();
        if bundle {
            let t = lookup(&edges_path, line, head)?;
            if types.type_of(t) != target_type {
                return Err(Error::load(&edges_path, line, format!("bundle head {head:?} is not a target node")));
            }
            members.push(t);
            targets.push(t);
        } else {
            edge_ids.push(head.to_string());
        }
        for id in split_ids(rest) {
            members.push(lookup(&edges_path, line, id)?);
        }
        let distinct: BTreeSet<_> = members.iter().collect();
        if distinct.len() != members.len() {
            return Err(Error::load(&edges_path, line, "hyperedge lists a node more than once"));
        }
        if members.len() < 2 {
            return Err(Error::load(&edges_path, line, "hyperedge has <2 nodes"));
        }
        hyperedges.push(members);
    }
    let graph = Hypergraph::new(node_ids.len(), hyperedges, types);
    graph.check()?;
    for w in graph.validate() {
        log::warn!("{}: {w}", dir.display());
    }
    let edges = if bundle {
        EdgeLayout::Bundle { targets }
    } else {
        EdgeLayout::Explicit { edge_ids }
    };

    // labels
    let (labels_path, labels_text) = read(dir, "labels.tsv")?;
    let mut labels = BTreeMap::new();
    for (line, l) in data_lines(&labels_text) {
        let mut cols = l.split('\t');
        let (Some(id), Some(class), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::load(&labels_path, line, "expected node_id<TAB>class_index"));
        };
        let v = lookup(&labels_path, line, id)?;
        if graph.types.type_of(v) != target_type {
            return Err(Error::load(
                &labels_path,
                line,
                format!("label on node {id:?} of non-target type {:?}", schema.types[graph.types.type_of(v)]),
            ));
        }
        let c: usize = class
            .trim()
            .parse()
            .map_err(|e| Error::load(&labels_path, line, format!("bad class {class:?}: {e}")))?;
        if c >= schema.n_classes {
            return Err(Error::load(&labels_path, line, format!("class {c} outside [0, {})", schema.n_classes)));
        }
        if labels.insert(v, c).is_some() {
            return Err(Error::load(&labels_path, line, format!("duplicate label for {id:?}")));
        }
    }

    // splits
    let (splits_path, splits_text) = read(dir, "splits.json")?;
    let raw: SplitsFile = serde_json::from_str(&splits_text)
        .map_err(|e| Error::load(&splits_path, e.line(), e.to_string()))?;
    let mut seen = BTreeMap::new();
    let mut resolve = |name: &'static str, ids: &[String]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                let v = lookup(&splits_path, 0, id)?;
                if !labels.contains_key(&v) {
                    return Err(Error::load(&splits_path, 0, format!("{name} member {id:?} has no label")));
                }
                if let Some(prev) = seen.insert(v, name) {
                    return Err(Error::load(
                        &splits_path,
                        0,
                        format!("node {id:?} is in both {prev} and {name} splits"),
                    ));
                }
                Ok(v)
            })
            .collect()
    };
    let splits = Splits {
        train: resolve("train", &raw.train)?,
        val: resolve("val", &raw.val)?,
        test: resolve("test", &raw.test)?,
    };

    let ds = HinDataset {
        node_ids,
        graph,
        edges,
        features,
        labels,
        n_classes: schema.n_classes,
        splits,
        target_type,
    };
    ds.validate()?;
    Ok(ds)
}

/// File name → contents, in a fixed order.
pub(crate) fn render(ds: &HinDataset) -> Vec<(String, String)> {
    let names = ds.type_names();
    let schema = Schema {
        types: names.to_vec(),
        target_type: names[ds.target_type].clone(),
        feature_dims: names
            .iter()
            .cloned()
            .zip(ds.feature_dims())
            .collect(),
        n_classes: ds.n_classes,
    };
    let mut out = vec![(
        "schema.json".to_string(),
        serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n",
    )];

    let mut nodes = String::new();
    for (v, id) in ds.node_ids.iter().enumerate() {
        nodes += &format!("{id}\t{}\n", names[ds.graph.types.type_of(v)]);
    }
    out.push(("nodes.tsv".into(), nodes));

    for (t, name) in names.iter().enumerate() {
        let mut body = String::new();
        for (row, v) in ds.graph.types.nodes_of_type(t).into_iter().enumerate() {
            body += &ds.node_ids[v];
            for &x in ds.features[t].row(row) {
                body.push('\t');
                body += &fmt_f64(x);
            }
            body.push('\n');
        }
        out.push((format!("features-{name}.tsv"), body));
    }

    let id_list = |members: &[usize]| {
        members
            .iter()
            .map(|&v| ds.node_ids[v].as_str())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut edges = String::new();
    match &ds.edges {
        EdgeLayout::Explicit { edge_ids } => {
            edges += "mode=explicit\n";
            for (id, members) in edge_ids.iter().zip(&ds.graph.hyperedges) {
                edges += &format!("{id}\t{}\n", id_list(members));
            }
        }
        EdgeLayout::Bundle { targets } => {
            edges += "mode=bundle\n";
            for (&t, members) in targets.iter().zip(&ds.graph.hyperedges) {
                let related: Vec<usize> = members.iter().copied().filter(|&v| v != t).collect();
                edges += &format!("{}\t{}\n", ds.node_ids[t], id_list(&related));
            }
        }
    }
    out.push(("hyperedges.tsv".into(), edges));

    let mut labels = String::new();
    for (&v, &c) in &ds.labels {
        labels += &format!("{}\t{c}\n", ds.node_ids[v]);
    }
    out.push(("labels.tsv".into(), labels));

    let ids = |s: &[usize]| s.iter().map(|&v| ds.node_ids[v].clone()).collect();
    let splits = SplitsFile {
        train: ids(&ds.splits.train),
        val: ids(&ds.splits.val),
        test: ids(&ds.splits.test),
    };
    out.push((
        "splits.json".into(),
        serde_json::to_string(&splits).expect("splits serialize") + "\n",
    ));
    out
}

pub fn save_dataset(dir: impl AsRef<Path>, ds: &HinDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, body) in render(ds) {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
