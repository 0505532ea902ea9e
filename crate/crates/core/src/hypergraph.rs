//! Heterogeneous hypergraphs: typed nodes in one global index space,
//! hyperedges as node sets, and the dense incidence matrix derived from them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeTable {
    pub type_names: Vec<String>,
    /// Node index → type index.
    pub node_type: Vec<usize>,
}

impl NodeTypeTable {
    pub fn new(type_names: Vec<String>, node_type: Vec<usize>) -> Self {
        NodeTypeTable {
            type_names,
            node_type,
        }
    }

    pub fn n_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn type_of(&self, node: usize) -> usize {
        self.node_type[node]
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.type_names.iter().position(|t| t == name)
    }

    /// Global indices of nodes of type `t`, ascending. Position in this list
    /// is the node's row in its type's feature matrix.
    pub fn nodes_of_type(&self, t: usize) -> Vec<usize> {
        (0..self.node_type.len())
            .filter(|&v| self.node_type[v] == t)
            .collect()
    }

    /// For every node, its row within its type's feature matrix.
    pub fn local_indices(&self) -> Vec<usize> {
        let mut counters = vec![0usize; self.n_types()];
        self.node_type
            .iter()
            .map(|&t| {
                let i = counters[t];
                counters[t] += 1;
                i
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub n_nodes: usize,
    pub hyperedges: Vec<Vec<usize>>,
    pub types: NodeTypeTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

impl Hypergraph {
    pub fn new(n_nodes: usize, hyperedges: Vec<Vec<usize>>, types: NodeTypeTable) -> Self {
        Hypergraph {
            n_nodes,
            hyperedges,
            types,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.hyperedges.len()
    }

    /// Every broken invariant, errors and warnings alike. Isolated nodes are
    /// warnings; everything else is an error.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut err = |message: String| {
            out.push(Violation {
                severity: Severity::Error,
                message,
            })
        };
        if self.types.node_type.len() != self.n_nodes {
            err(format!(
                "type table covers {} nodes, graph has {}",
                self.types.node_type.len(),
                self.n_nodes
            ));
        }
        for (v, &t) in self.types.node_type.iter().enumerate() {
            if t >= self.types.n_types() {
                err(format!("node {v} has undeclared type index {t}"));
            }
        }
        if self.types.n_types() < 2 {
            err(format!(
                "{} node type(s); a heterogeneous hypergraph needs at least 2",
                self.types.n_types()
            ));
        }
        for (e, members) in self.hyperedges.iter().enumerate() {
            if members.len() < 2 {
                err(format!("hyperedge {e} has <2 nodes"));
            }
            let mut seen = BTreeSet::new();
            for &v in members {
                if v >= self.n_nodes {
                    err(format!(
                        "hyperedge {e} member {v} out of range (n_nodes = {})",
                        self.n_nodes
                    ));
                } else if !seen.insert(v) {
                    err(format!("hyperedge {e} lists node {v} more than once"));
                }
            }
        }
        let mut covered = vec![false; self.n_nodes];
        for &v in self.hyperedges.iter().flatten() {
            if v < self.n_nodes {
                covered[v] = true;
            }
        }
        for (v, c) in covered.iter().enumerate() {
            if !c {
                out.push(Violation {
                    severity: Severity::Warning,
                    message: format!("node {v} belongs to no hyperedge"),
                });
            }
        }
        out
    }

    /// Errors only; `Ok` when the graph is usable.
    pub fn check(&self) -> Result<()> {
        let errors: Vec<String> = self
            .validate()
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .map(|v| v.message)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Structure(errors.join("; ")))
        }
    }

    pub fn build_incidence(&self) -> Result<IncidenceMatrix> {
        if self.hyperedges.is_empty() {
            return Err(Error::Structure("hypergraph has no hyperedges".into()));
        }
        self.check()?;
        let m = self.hyperedges.len();
        let mut incidence = Matrix::zeros(self.n_nodes, m);
        for (e, members) in self.hyperedges.iter().enumerate() {
            for &v in members {
                incidence.set(v, e, 1.0);
            }
        }
        let degree = self.hyperedges.iter().map(Vec::len).collect();
        let node_edges = (0..self.n_nodes)
            .map(|v| (0..m).filter(|&e| incidence.get(v, e) != 0.0).collect())
            .collect();
        Ok(IncidenceMatrix {
            incidence,
            degree,
            node_edges,
        })
    }
}

/// `I(v, e) = 1` iff `v ∈ e`, with hyperedge degrees (column sums).
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    incidence: Matrix,
    degree: Vec<usize>,
    node_edges: Vec<Vec<usize>>,
}

impl IncidenceMatrix {
    /// Wraps a raw 0/1 matrix without the hypergraph rules (edges of size 1
    /// are accepted). Every column must have at least one member.
    pub fn from_dense(incidence: Matrix) -> Result<Self> {
        if let Some(bad) = incidence.as_slice().iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(Error::Structure(format!("incidence entry {bad} is not 0 or 1")));
        }
        let degree: Vec<usize> = incidence.col_sums().iter().map(|&s| s as usize).collect();
        if let Some(e) = degree.iter().position(|&d| d == 0) {
            return Err(Error::Structure(format!("hyperedge {e} has degree 0")));
        }
        let node_edges = (0..incidence.rows())
            .map(|v| (0..incidence.cols()).filter(|&e| incidence.get(v, e) != 0.0).collect())
            .collect();
        Ok(IncidenceMatrix {
            incidence,
            degree,
            node_edges,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.incidence
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    pub fn n_nodes(&self) -> usize {
        self.incidence.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.cols()
    }

    /// Hyperedges containing `v`, ascending.
    pub fn incident_hyperedges(&self, v: usize) -> Result<&[usize]> {
        self.node_edges
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: v,
                len: self.n_nodes(),
            })
    }

    /// Members of hyperedge `e`, ascending.
    pub fn members(&self, e: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&v| self.incidence.get(v, e) != 0.0)
            .collect()
    }

    /// Nodes with no incident hyperedge.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&v| self.node_edges[v].is_empty())
            .collect()
    }
}
