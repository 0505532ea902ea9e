//! Hypergraph attention message passing.
//!
//! One layer runs two attention stages per head:
//!
//! * node → hyperedge: `u_k = LeakyReLU(W_h f_k)`, `α_jk = softmax_{k ∈ e_j}(a1ᵀ u_k)`,
//!   `h_j = σ(Σ_k α_jk W_h f_k)`;
//! * hyperedge → node: for `e_k ∈ s_i`, `v_ik = LeakyReLU([W_h f_i ‖ W_e h_k])`,
//!   `β_ik = softmax_{e_k ∈ s_i}(a2ᵀ v_ik)`, `f_i' = LeakyReLU(Σ_k β_ik W_e h_k)`.
//!
//! Heads are concatenated after σ. A node with no incident hyperedge receives
//! `LeakyReLU(W_h f_i)` from the second stage.
//!
//! Since LeakyReLU acts elementwise, `a2ᵀ v_ik` splits into a node term and a
//! hyperedge term. The node term is constant across the softmax over `k`, so
//! the first half of `a2` never changes β and always has zero gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{IncidenceMatrix, NodeTypeTable};
use crate::numeric::{Matrix, ParamId, ParameterSet, Tape, Var};

/// The σ of the aggregation and head-concatenation steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "leaky_relu" | "leaky-relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "none" => Ok(Activation::Identity),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOptions {
    pub leaky_slope: f64,
    pub sigma: Activation,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            leaky_slope: crate::numeric::ops::DEFAULT_LEAKY_SLOPE,
            sigma: Activation::LeakyRelu,
        }
    }
}

impl LayerOptions {
    fn apply_sigma(&self, tape: &mut Tape, x: Var) -> Var {
        match self.sigma {
            Activation::LeakyRelu => tape.leaky_relu(x, self.leaky_slope),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// `M_t` for every node type, each `d_hidden × d_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub per_type: Vec<ParamId>,
}

/// `W_h` (d'×d), `a1` (d'×1), `W_e` (d'×d'), `a2` (2d'×1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeadParams {
    pub w_h: ParamId,
    pub a1: ParamId,
    pub w_e: ParamId,
    pub a2: ParamId,
}

impl AttentionHeadParams {
    pub fn out_dim(&self, params: &ParameterSet) -> usize {
        params.value(self.w_h).rows()
    }
}

/// Incidence-derived constants shared by every forward pass on one graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub incidence: IncidenceMatrix,
    /// `Iᵀ`, the mask of the node → hyperedge softmax.
    edge_mask: Matrix,
    /// 1.0 for nodes without incident hyperedges.
    isolated: Vec<f64>,
    /// Global node indices of each type, in feature-row order.
    type_rows: Vec<Vec<usize>>,
}

impl GraphContext {
    pub fn new(incidence: IncidenceMatrix, types: &NodeTypeTable) -> Self {
        let edge_mask = incidence.matrix().transpose();
        let isolated_nodes = incidence.isolated_nodes();
        let mut isolated = vec![0.0; incidence.n_nodes()];
        for &v in &isolated_nodes {
            isolated[v] = 1.0;
        }
        if !isolated_nodes.is_empty() {
            log::warn!(
                "{} node(s) without hyperedges fall back to their own projection",
                isolated_nodes.len()
            );
        }
        let type_rows = (0..types.n_types()).map(|t| types.nodes_of_type(t)).collect();
        GraphContext {
            incidence,
            edge_mask,
            isolated,
            type_rows,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.incidence.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.n_edges()
    }

    pub fn has_isolated(&self) -> bool {
        self.isolated.iter().any(|&x| x != 0.0)
    }
}

/// Attention maps and representations of one head in one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// Layer output after σ and head concatenation (`n × d`).
    pub f: Matrix,
    /// Hyperedge representations (`m × d'`).
    pub h: Matrix,
    /// Node → hyperedge coefficients (`m × n`).
    pub alpha: Matrix,
    /// Hyperedge → node coefficients (`n × m`).
    pub beta: Matrix,
}

/// Tape handles of one head's intermediate values.
#[derive(Debug, Clone, Copy)]
pub struct HeadTrace {
    pub h: Var,
    pub alpha: Var,
    pub beta: Var,
    pub out: Var,
}

/// `f_i = M_{type(i)} x_i`, stacked into an `n × d_hidden` matrix.
pub fn project_features(
    tape: &mut Tape,
    params: &ParameterSet,
    features: &[Matrix],
    proj: &ProjectionParams,
    ctx: &GraphContext,
) -> Result<Var> {
    if features.len() != proj.per_type.len() || features.len() != ctx.type_rows.len() {
        return Err(Error::Structure(format!(
            "{} feature matrices, {} projections, {} node types",
            features.len(),
            proj.per_type.len(),
            ctx.type_rows.len()
        )));
    }
    let mut parts = Vec::with_capacity(features.len());
    for ((x, &m), rows) in features.iter().zip(&proj.per_type).zip(&ctx.type_rows) {
        if rows.is_empty() {
            continue;
        }
        let mv = params.value(m);
        if mv.cols() != x.cols() {
            return Err(Error::Dimension {
                op: "project_features",
                lhs: mv.shape(),
                rhs: x.shape(),
            });
        }
        let xv = tape.constant(x.clone());
        let mvar = tape.param(params, m);
        let mt = tape.transpose(mvar);
        parts.push((tape.matmul(xv, mt)?, rows.clone()));
    }
    tape.scatter_rows(parts, ctx.n_nodes())
}

/// Node-level attention. Returns `(H, α, W_h F, LeakyReLU(W_h F))`.
pub fn node_level_attention(
    tape: &mut Tape,
    params: &ParameterSet,
    f_prev: Var,
    ctx: &GraphContext,
    head: &AttentionHeadParams,
    opts: &LayerOptions,
) -> Result<(Var, Var, Var, Var)> {
    let w_h = tape.param(params, head.w_h);
    let w_h_t = tape.transpose(w_h);
    let projected = tape.matmul(f_prev, w_h_t)?;
    let u = tape.leaky_relu(projected, opts.leaky_slope);
    let a1 = tape.param(params, head.a1);
    let scores = tape.matmul(u, a1)?;
    let logits = tape.broadcast_rows(scores, ctx.n_edges())?;
    let alpha = tape.masked_softmax(logits, &ctx.edge_mask, false)?;
    let agg = tape.attend(alpha, projected)?;
    let h = opts.apply_sigma(tape, agg);
    Ok((h, alpha, projected, u))
}

/// Hyperedge-level attention. Takes `W_h F` and `LeakyReLU(W_h F)` from the
/// node-level stage of the same head. Returns `(F_new, β)`.
#[allow(clippy::too_many_arguments)]
pub fn hyperedge_level_attention(
    tape: &mut Tape,
    params: &ParameterSet,
    projected: Var,
    u: Var,
    h: Var,
    ctx: &GraphContext,
    head: &AttentionHeadParams,
    opts: &LayerOptions,
) -> Result<(Var, Var)> {
    let width = head.out_dim(params);
    let a2_len = params.value(head.a2).rows();
    if a2_len != 2 * width {
        return Err(Error::Dimension {
            op: "hyperedge_level_attention a2",
            lhs: (a2_len, 1),
            rhs: (2 * width, 1),
        });
    }
    let w_e = tape.param(params, head.w_e);
    let w_e_t = tape.transpose(w_e);
    let edge_msg = tape.matmul(h, w_e_t)?;
    let g = tape.leaky_relu(edge_msg, opts.leaky_slope);
    let a2 = tape.param(params, head.a2);
    let a2_node = tape.row_block(a2, 0, width)?;
    let a2_edge = tape.row_block(a2, width, width)?;
    let node_scores = tape.matmul(u, a2_node)?;
    let edge_scores = tape.matmul(g, a2_edge)?;
    let logits = tape.outer_sum(node_scores, edge_scores)?;
    let beta = tape.masked_softmax(logits, ctx.incidence.matrix(), true)?;
    let mut agg = tape.attend(beta, edge_msg)?;
    if ctx.has_isolated() {
        let fallback = tape.row_scale(projected, ctx.isolated.clone())?;
        agg = tape.add(agg, fallback)?;
    }
    Ok((tape.leaky_relu(agg, opts.leaky_slope), beta))
}

/// One head: node-level then hyperedge-level attention, then σ.
pub fn hat_head(
    tape: &mut Tape,
    params: &ParameterSet,
    f_prev: Var,
    ctx: &GraphContext,
    head: &AttentionHeadParams,
    opts: &LayerOptions,
) -> Result<HeadTrace> {
    let (h, alpha, projected, u) = node_level_attention(tape, params, f_prev, ctx, head, opts)?;
    let (f_new, beta) = hyperedge_level_attention(tape, params, projected, u, h, ctx, head, opts)?;
    let out = opts.apply_sigma(tape, f_new);
    Ok(HeadTrace { h, alpha, beta, out })
}

/// Multi-head layer: σ(HAT_i(F, I)) concatenated over heads.
pub fn mh_hat(
    tape: &mut Tape,
    params: &ParameterSet,
    f_prev: Var,
    ctx: &GraphContext,
    heads: &[AttentionHeadParams],
    opts: &LayerOptions,
) -> Result<(Var, Vec<HeadTrace>)> {
    let Some(first) = heads.first() else {
        return Err(Error::Config("a layer needs at least one head".into()));
    };
    let width = first.out_dim(params);
    if let Some(bad) = heads.iter().find(|h| h.out_dim(params) != width) {
        return Err(Error::Dimension {
            op: "mh_hat head widths",
            lhs: (width, 0),
            rhs: (bad.out_dim(params), 0),
        });
    }
    let traces = heads
        .iter()
        .map(|h| hat_head(tape, params, f_prev, ctx, h, opts))
        .collect::<Result<Vec<_>>>()?;
    if traces.len() == 1 {
        return Ok((traces[0].out, traces));
    }
    let outs: Vec<Var> = traces.iter().map(|t| t.out).collect();
    Ok((tape.concat_cols(&outs)?, traces))
}

/// Per-layer record of a forward pass on the tape.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub output: Var,
    pub heads: Vec<HeadTrace>,
}

/// Hook applied to each layer's input during training (dropout).
pub type InputHook<'a> = &'a mut dyn FnMut(&mut Tape, Var) -> Result<Var>;

/// Projection followed by `layers.len()` stacked multi-head layers. Returns the
/// projected features, and each layer's output and head traces.
#[allow(clippy::too_many_arguments)]
pub fn forward_layers(
    tape: &mut Tape,
    params: &ParameterSet,
    features: &[Matrix],
    proj: &ProjectionParams,
    layers: &[Vec<AttentionHeadParams>],
    ctx: &GraphContext,
    opts: &LayerOptions,
    mut dropout: Option<InputHook<'_>>,
) -> Result<(Var, Vec<LayerTrace>)> {
    let projected = project_features(tape, params, features, proj, ctx)?;
    let mut f = projected;
    let mut traces = Vec::with_capacity(layers.len());
    for heads in layers {
        if let Some(drop) = dropout.as_mut() {
            f = drop(tape, f)?;
        }
        let (out, head_traces) = mh_hat(tape, params, f, ctx, heads, opts)?;
        traces.push(LayerTrace {
            output: out,
            heads: head_traces,
        });
        f = out;
    }
    Ok((projected, traces))
}

/// Copies attention maps and representations of one head out of the tape.
pub fn layer_state(tape: &Tape, layer: &LayerTrace, head: usize) -> LayerState {
    let h = &layer.heads[head];
    LayerState {
        f: tape.value(layer.output).clone(),
        h: tape.value(h.h).clone(),
        alpha: tape.value(h.alpha).clone(),
        beta: tape.value(h.beta).clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Hypergraph;
    use crate::numeric::ops::leaky_relu_scalar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SLOPE: f64 = 0.01;

    fn ctx(n: usize, edges: Vec<Vec<usize>>, node_type: Vec<usize>) -> GraphContext {
        let n_types = node_type.iter().max().unwrap() + 1;
        let names = (0..n_types.max(2)).map(|t| format!("t{t}")).collect();
        let g = Hypergraph::new(n, edges, NodeTypeTable::new(names, node_type.clone()));
        let inc = g.build_incidence().unwrap();
        GraphContext::new(inc, &g.types)
    }

    fn toy6() -> GraphContext {
        ctx(6, vec![vec![0, 1, 4, 5], vec![2, 3, 5]], vec![0, 0, 0, 0, 1, 2])
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn head(params: &mut ParameterSet, d: usize, w: usize, rng: &mut ChaCha8Rng) -> AttentionHeadParams {
        let p = params.len();
        AttentionHeadParams {
            w_h: params.add(format!("{p}.w_h"), random(w, d, rng)),
            a1: params.add(format!("{p}.a1"), random(w, 1, rng)),
            w_e: params.add(format!("{p}.w_e"), random(w, w, rng)),
            a2: params.add(format!("{p}.a2"), random(2 * w, 1, rng)),
        }
    }

    fn run_head(params: &ParameterSet, f: &Matrix, ctx: &GraphContext, h: &AttentionHeadParams) -> (Tape, HeadTrace) {
        let mut tape = Tape::new();
        let fv = tape.constant(f.clone());
        let trace = hat_head(&mut tape, params, fv, ctx, h, &LayerOptions::default()).unwrap();
        (tape, trace)
    }

    fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
        (0..m.rows())
            .map(|i| (0..m.cols()).map(|j| m.get(i, j) * x[j]).sum())
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn lrelu(v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| leaky_relu_scalar(x, SLOPE)).collect()
    }

    /// Per-edge and per-node loops; returns (H, head output after σ).
    fn oracle(params: &ParameterSet, f: &Matrix, edges: &[Vec<usize>], h: &AttentionHeadParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (w_h, a1, w_e, a2) = (
            params.value(h.w_h),
            params.value(h.a1).as_slice(),
            params.value(h.w_e),
            params.value(h.a2).as_slice(),
        );
        let w = w_h.rows();
        let p: Vec<Vec<f64>> = (0..f.rows()).map(|k| matvec(w_h, f.row(k))).collect();
        let u: Vec<Vec<f64>> = p.iter().map(|x| lrelu(x)).collect();
        let mut hs = Vec::new();
        for e in edges {
            let z: f64 = e.iter().map(|&k| dot(a1, &u[k]).exp()).sum();
            let mut acc = vec![0.0; w];
            for &k in e {
                let alpha = dot(a1, &u[k]).exp() / z;
                for t in 0..w {
                    acc[t] += alpha * p[k][t];
                }
            }
            hs.push(lrelu(&acc));
        }
        let q: Vec<Vec<f64>> = hs.iter().map(|x| matvec(w_e, x)).collect();
        let g: Vec<Vec<f64>> = q.iter().map(|x| lrelu(x)).collect();
        let mut out = Vec::new();
        for i in 0..f.rows() {
            let incident: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].contains(&i)).collect();
            let agg = if incident.is_empty() {
                p[i].clone()
            } else {
                let logit = |k: usize| dot(&a2[..w], &u[i]) + dot(&a2[w..], &g[k]);
                let z: f64 = incident.iter().map(|&k| logit(k).exp()).sum();
                let mut acc = vec![0.0; w];
                for &k in &incident {
                    let beta = logit(k).exp() / z;
                    for t in 0..w {
                        acc[t] += beta * q[k][t];
                    }
                }
                acc
            };
            out.push(lrelu(&lrelu(&agg)));
        }
        (hs, out)
    }

    #[test]
    fn identical_pair_gets_equal_attention() {
        let c = ctx(3, vec![vec![0, 1], vec![1, 2]], vec![0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 4, 4, &mut rng);
        let row = random(1, 4, &mut rng);
        let f = Matrix::from_fn(3, 4, |_, j| row.get(0, j));
        let (tape, trace) = run_head(&params, &f, &c, &h);
        let alpha = tape.value(trace.alpha);
        assert_eq!(alpha.row(0), &[0.5, 0.5, 0.0]);
        // node 1 sits in two edges with identical h, hence identical logits
        assert_eq!(tape.value(trace.beta).row(1), &[0.5, 0.5]);
    }

    #[test]
    fn identical_members_collapse_to_one_vector() {
        let c = ctx(3, vec![vec![0, 1, 2]], vec![0, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 3, 5, &mut rng);
        let row = [0.4, -1.2, 0.7];
        let f = Matrix::from_fn(3, 3, |_, j| row[j]);
        let (tape, trace) = run_head(&params, &f, &c, &h);
        let expected = lrelu(&matvec(params.value(h.w_h), &row));
        for (a, b) in tape.value(trace.h).row(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_incident_edge_passes_straight_through() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 4, 4, &mut rng);
        let f = random(6, 4, &mut rng);
        let (tape, trace) = run_head(&params, &f, &c, &h);
        let beta = tape.value(trace.beta);
        assert_eq!(beta.row(0), &[1.0, 0.0]);
        assert_eq!(beta.row(3), &[0.0, 1.0]);
        let q = matvec(params.value(h.w_e), tape.value(trace.h).row(0));
        let expected = lrelu(&lrelu(&q));
        assert_eq!(tape.value(trace.out).row(0), expected.as_slice());
    }

    #[test]
    fn head_matches_loop_oracle() {
        let c = toy6();
        let edges = vec![vec![0, 1, 4, 5], vec![2, 3, 5]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut params = ParameterSet::new();
            let h = head(&mut params, 5, 3, &mut rng);
            let f = random(6, 5, &mut rng);
            let (tape, trace) = run_head(&params, &f, &c, &h);
            let (hs, out) = oracle(&params, &f, &edges, &h);
            for (j, row) in hs.iter().enumerate() {
                for (a, b) in tape.value(trace.h).row(j).iter().zip(row) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            for (i, row) in out.iter().enumerate() {
                for (a, b) in tape.value(trace.out).row(i).iter().zip(row) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn isolated_node_keeps_its_projection() {
        let c = ctx(4, vec![vec![0, 1, 2]], vec![0, 0, 1, 1]);
        assert!(c.has_isolated());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 3, 3, &mut rng);
        let f = random(4, 3, &mut rng);
        let (tape, trace) = run_head(&params, &f, &c, &h);
        assert_eq!(tape.value(trace.beta).row(3), &[0.0]);
        let (_, out) = oracle(&params, &f, &[vec![0, 1, 2]], &h);
        for (a, b) in tape.value(trace.out).row(3).iter().zip(&out[3]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(tape.value(trace.out).row(3).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn one_head_layer_is_the_head() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 4, 4, &mut rng);
        let f = random(6, 4, &mut rng);
        let (single_tape, single) = run_head(&params, &f, &c, &h);
        let mut tape = Tape::new();
        let fv = tape.constant(f);
        let (out, _) = mh_hat(&mut tape, &params, fv, &c, &[h], &LayerOptions::default()).unwrap();
        assert_eq!(tape.value(out), single_tape.value(single.out));
    }

    #[test]
    fn shared_heads_duplicate_blocks_and_widths_add() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = ParameterSet::new();
        let h = head(&mut params, 16, 8, &mut rng);
        let other = head(&mut params, 16, 8, &mut rng);
        let f = random(6, 16, &mut rng);
        let mut tape = Tape::new();
        let fv = tape.constant(f);
        let (dup, _) = mh_hat(&mut tape, &params, fv, &c, &[h, h], &LayerOptions::default()).unwrap();
        let out = tape.value(dup);
        assert_eq!(out.shape(), (6, 16));
        assert_eq!(out.col_block(0, 8), out.col_block(8, 8));
        let (mixed, _) = mh_hat(&mut tape, &params, fv, &c, &[h, other], &LayerOptions::default()).unwrap();
        assert_eq!(tape.value(mixed).shape(), (6, 16));
    }

    #[test]
    fn mismatched_head_widths_are_rejected() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = ParameterSet::new();
        let a = head(&mut params, 4, 4, &mut rng);
        let b = head(&mut params, 4, 2, &mut rng);
        let mut tape = Tape::new();
        let fv = tape.constant(random(6, 4, &mut rng));
        assert!(mh_hat(&mut tape, &params, fv, &c, &[a, b], &LayerOptions::default()).is_err());
        assert!(mh_hat(&mut tape, &params, fv, &c, &[], &LayerOptions::default()).is_err());
    }

    #[test]
    fn a2_must_cover_both_halves() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ParameterSet::new();
        let mut h = head(&mut params, 4, 4, &mut rng);
        h.a2 = params.add("short", random(4, 1, &mut rng));
        let mut tape = Tape::new();
        let fv = tape.constant(random(6, 4, &mut rng));
        assert!(hat_head(&mut tape, &params, fv, &c, &h, &LayerOptions::default()).is_err());
    }

    #[test]
    fn projection_identity_shapes_and_oracle() {
        // types: 0 has width 3, 1 has width 5; nodes 0,2 are type 0, nodes 1,3,4 type 1
        let c = ctx(5, vec![vec![0, 1, 2], vec![2, 3, 4]], vec![0, 1, 0, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x0 = random(2, 3, &mut rng);
        let x1 = random(3, 5, &mut rng);
        let mut params = ParameterSet::new();
        let m0 = params.add("m0", random(4, 3, &mut rng));
        let m1 = params.add("m1", random(4, 5, &mut rng));
        let proj = ProjectionParams { per_type: vec![m0, m1] };
        let mut tape = Tape::new();
        let out = project_features(&mut tape, &params, &[x0.clone(), x1.clone()], &proj, &c).unwrap();
        let f = tape.value(out);
        assert_eq!(f.shape(), (5, 4));
        let rows = [(0, &x0, 0, m0), (1, &x1, 0, m1), (2, &x0, 1, m0), (3, &x1, 1, m1), (4, &x1, 2, m1)];
        for (v, x, local, m) in rows {
            let expected = matvec(params.value(m), x.row(local));
            for (a, b) in f.row(v).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }

        let square = ctx(3, vec![vec![0, 1, 2]], vec![0, 1, 1]);
        let mut id = ParameterSet::new();
        let i0 = id.add("i0", Matrix::identity(2));
        let i1 = id.add("i1", Matrix::identity(2));
        let xa = random(1, 2, &mut rng);
        let xb = random(2, 2, &mut rng);
        let mut tape = Tape::new();
        let proj = ProjectionParams { per_type: vec![i0, i1] };
        let out = project_features(&mut tape, &id, &[xa.clone(), xb.clone()], &proj, &square).unwrap();
        assert_eq!(tape.value(out).row(0), xa.row(0));
        assert_eq!(tape.value(out).row(2), xb.row(1));
    }

    #[test]
    fn projection_width_mismatch_is_an_error() {
        let c = ctx(3, vec![vec![0, 1, 2]], vec![0, 1, 1]);
        let mut params = ParameterSet::new();
        let m0 = params.add("m0", Matrix::zeros(4, 3));
        let m1 = params.add("m1", Matrix::zeros(4, 2));
        let proj = ProjectionParams { per_type: vec![m0, m1] };
        let mut tape = Tape::new();
        let r = project_features(&mut tape, &params, &[Matrix::zeros(1, 2), Matrix::zeros(2, 2)], &proj, &c);
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn no_layers_returns_projection() {
        let c = toy6();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParameterSet::new();
        let per_type = (0..3).map(|t| params.add(format!("m{t}"), random(4, 2, &mut rng))).collect();
        let proj = ProjectionParams { per_type };
        let feats = vec![random(4, 2, &mut rng), random(1, 2, &mut rng), random(1, 2, &mut rng)];
        let mut tape = Tape::new();
        let (projected, layers) =
            forward_layers(&mut tape, &params, &feats, &proj, &[], &c, &LayerOptions::default(), None).unwrap();
        assert!(layers.is_empty());
        assert_eq!(tape.value(projected).shape(), (6, 4));
    }
}
