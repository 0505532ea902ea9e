//! Optional TSV outputs of a trained model.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use hyperproto::dataio::{EdgeLayout, HinDataset};
use hyperproto::layers::LayerState;
use hyperproto::model::Classifier;
use hyperproto::numeric::pairwise_sq_dist;
use hyperproto::{Matrix, ModelParams};

fn edge_name(ds: &HinDataset, e: usize) -> &str {
    match &ds.edges {
        EdgeLayout::Explicit { edge_ids } => &edge_ids[e],
        EdgeLayout::Bundle { targets } => &ds.node_ids[targets[e]],
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// One row per (layer, head, membership) for both attention stages. Only
/// incident pairs are written; all others are zero by construction.
pub fn attention(path: &Path, ds: &HinDataset, states: &[Vec<LayerState>]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "layer\thead\tkind\thyperedge\tnode\tweight")?;
    for (l, heads) in states.iter().enumerate() {
        for (h, s) in heads.iter().enumerate() {
            for (e, members) in ds.graph.hyperedges.iter().enumerate() {
                for &v in members {
                    let name = edge_name(ds, e);
                    writeln!(out, "{l}\t{h}\talpha\t{name}\t{}\t{:e}", ds.node_ids[v], s.alpha.get(e, v))?;
                }
            }
            for (e, members) in ds.graph.hyperedges.iter().enumerate() {
                for &v in members {
                    let name = edge_name(ds, e);
                    writeln!(out, "{l}\t{h}\tbeta\t{name}\t{}\t{:e}", ds.node_ids[v], s.beta.get(v, e))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Each prototype with its coordinates and the closest labeled node in
/// prototype space.
pub fn prototypes(path: &Path, ds: &HinDataset, model: &ModelParams, f: &Matrix) -> Result<()> {
    let Classifier::Prototype(head) = model.layout.classifier else {
        anyhow::bail!("model has no prototypes");
    };
    let z = model.embed(f)?.expect("prototype classifier embeds");
    let labeled: Vec<usize> = ds.labels.keys().copied().collect();
    let protos = model.params.value(head.bank.prototypes);
    let dist = pairwise_sq_dist(protos, &z.select_rows(&labeled)?)?;

    let mut out = create(path)?;
    write!(out, "class\tslot\tnearest_node\tnearest_label\tsq_distance")?;
    for j in 0..protos.cols() {
        write!(out, "\tp{j}")?;
    }
    writeln!(out)?;
    for r in 0..protos.rows() {
        let (best, d) = dist
            .row(r)
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, &d)| if d < b.1 { (i, d) } else { b });
        let v = labeled[best];
        write!(
            out,
            "{}\t{}\t{}\t{}\t{d:e}",
            head.bank.class_of_row(r),
            r % head.bank.per_class,
            ds.node_ids[v],
            ds.labels[&v]
        )?;
        for &x in protos.row(r) {
            write!(out, "\t{x:e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
