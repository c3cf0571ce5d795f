//! Weighted leader-follower digraphs: node 0 is the exosystem, nodes
//! `1..=N` are the agents.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

/// Directed edge from `tail` to `head`; the head node can read the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// Weighted digraph over nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl Digraph {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &edges {
            if e.tail >= node_count || e.head >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 0..{node_count}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.tail)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.tail, e.head, e.weight
                )));
            }
            if !seen.insert((e.tail, e.head)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.tail, e.head
                )));
            }
        }
        Ok(Digraph { node_count, edges })
    }

    /// Builds the digraph whose Laplacian is `lap` (off-diagonal entries
    /// `-a_ij`). Diagonal entries are ignored.
    pub fn from_laplacian(lap: &Matrix) -> Result<Self> {
        if !lap.is_square() {
            return Err(Error::NonSquare {
                rows: lap.nrows(),
                cols: lap.ncols(),
            });
        }
        let mut edges = Vec::new();
        for i in 0..lap.nrows() {
            for j in 0..lap.ncols() {
                if i != j && lap[(i, j)] != 0.0 {
                    edges.push(Edge {
                        tail: j,
                        head: i,
                        weight: -lap[(i, j)],
                    });
                }
            }
        }
        Digraph::new(lap.nrows(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn agent_count(&self) -> usize {
        self.node_count.saturating_sub(1)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// In-neighbours of `node`.
    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.head == node)
    }
}

/// Weighted adjacency matrix: entry `(i, j)` is `a_ij` when `j → i` is an edge.
pub fn adjacency(g: &Digraph) -> Matrix {
    let n = g.node_count;
    let mut a = Matrix::zeros(n, n);
    for e in &g.edges {
        a[(e.head, e.tail)] = e.weight;
    }
    a
}

/// Graph Laplacian `D − A` with `D` the diagonal of in-degrees.
pub fn laplacian(g: &Digraph) -> Matrix {
    let mut lap = -adjacency(g);
    for e in &g.edges {
        lap[(e.head, e.head)] += e.weight;
    }
    lap
}

/// Laplacian blocks below the (zero) exosystem row, split after the first
/// `l` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPartition {
    pub l: usize,
    pub l21: Matrix,
    pub l22: Matrix,
    pub l23: Matrix,
    pub l31: Matrix,
    pub l32: Matrix,
    pub l33: Matrix,
}

pub fn partition(lap: &Matrix, l: usize) -> Result<LaplacianPartition> {
    if !lap.is_square() || lap.nrows() == 0 {
        return Err(Error::NonSquare {
            rows: lap.nrows(),
            cols: lap.ncols(),
        });
    }
    let n = lap.nrows() - 1;
    if l > n {
        return Err(Error::DimensionMismatch(format!(
            "informed count {l} exceeds agent count {n}"
        )));
    }
    if lap.row(0).iter().any(|&v| v != 0.0) {
        return Err(Error::NonzeroLeaderRow);
    }
    let u = n - l;
    let block = |r0, nr, c0, nc| lap.view((r0, c0), (nr, nc)).into_owned();
    Ok(LaplacianPartition {
        l,
        l21: block(1, l, 0, 1),
        l22: block(1, l, 1, l),
        l23: block(1, l, 1 + l, u),
        l31: block(1 + l, u, 0, 1),
        l32: block(1 + l, u, 1, l),
        l33: block(1 + l, u, 1 + l, u),
    })
}

/// True when every node is reachable from node 0 along directed edges.
pub fn rooted_spanning_tree_exists(g: &Digraph) -> bool {
    if g.node_count == 0 {
        return false;
    }
    let mut reached = vec![false; g.node_count];
    reached[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for e in g.edges.iter().filter(|e| e.tail == u) {
            if !reached[e.head] {
                reached[e.head] = true;
                queue.push_back(e.head);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

/// Diagnostics relating the follower block `L33` to reachability from node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub l33_nonsingular: bool,
    /// Minimum real part of the eigenvalues of `L33`; `None` when there are no
    /// uninformed agents.
    pub l33_min_re: Option<f64>,
    pub reachable: bool,
    /// Set when the nonsingularity test and graph search disagree.
    pub warning: Option<String>,
}

pub fn check_lemma1(part: &LaplacianPartition, g: &Digraph) -> Result<Lemma1Report> {
    let l33 = &part.l33;
    let nonsingular = l33.nrows() == 0 || numerics::rank(l33, 1e-9) == l33.nrows();
    let spec = numerics::spectrum(l33)?;
    let reachable = rooted_spanning_tree_exists(g);
    let warning = (nonsingular != reachable).then(|| {
        format!(
            "L33 is {} but node 0 {} every agent; reachability is authoritative",
            if nonsingular { "nonsingular" } else { "singular" },
            if reachable { "reaches" } else { "does not reach" }
        )
    });
    Ok(Lemma1Report {
        l33_nonsingular: nonsingular,
        l33_min_re: spec.min_re(),
        reachable,
        warning,
    })
}
