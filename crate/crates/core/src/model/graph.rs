use serde::{Deserialize, Serialize};

use super::{to_standard_form, MbqpInstance, RawConstraint, RawProblem, Relation};
use crate::error::{Error, Result};

/// Simple undirected graph; edges are stored as `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a simple graph from 0-based edges, rejecting loops,
    /// duplicates and out-of-range endpoints.
    pub fn new(num_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut out = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) has an endpoint outside 1..={num_vertices}",
                    u + 1,
                    v + 1
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("loop at vertex {}", u + 1)));
            }
            let e = (u.min(v), u.max(v));
            if out.contains(&e) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge ({}, {})",
                    e.0 + 1,
                    e.1 + 1
                )));
            }
            out.push(e);
        }
        Ok(Graph {
            num_vertices,
            edges: out,
        })
    }

    pub fn complete(k: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..k {
            for v in u + 1..k {
                edges.push((u, v));
            }
        }
        Graph {
            num_vertices: k,
            edges,
        }
    }

    pub fn path(k: usize) -> Self {
        let edges = (1..k).map(|v| (v - 1, v)).collect();
        Graph {
            num_vertices: k,
            edges,
        }
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Graph::new(10, &edges).expect("Petersen graph is simple")
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_vertices).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Pairs of distinct edges sharing an endpoint, as edge indices `(e, f)`
    /// with `e < f`.
    pub fn incident_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for e in 0..self.edges.len() {
            for f in e + 1..self.edges.len() {
                let (a, b) = self.edges[e];
                let (c, d) = self.edges[f];
                if a == c || a == d || b == c || b == d {
                    pairs.push((e, f));
                }
            }
        }
        pairs
    }
}

/// Edge-coloring program with `colors` colors:
/// `min Σ_i w_i  s.t.  Σ_i x_{e,i} = 1 per edge,  x_{e,i} + x_{f,i} ≤ w_i for
/// incident edges e, f and every color i,  Σ_i −w_i ≤ −rhs`, all binary.
///
/// Variables are ordered `x_{e,i}` (edge-major) then `w_i`. The cardinality
/// row is the last raw constraint.
pub fn reduce_edge_coloring(g: &Graph, colors: usize, rhs: f64) -> Result<MbqpInstance> {
    if colors == 0 {
        return Err(Error::InvalidArgument("need at least one color".into()));
    }
    let ne = g.edges().len();
    let n = ne * colors + colors;
    let color_var = |i: usize| ne * colors + i;
    let mut constraints = Vec::new();
    for e in 0..ne {
        let mut row = vec![0.0; n];
        for i in 0..colors {
            row[e * colors + i] = 1.0;
        }
        constraints.push(RawConstraint::new(row, Relation::Eq, 1.0));
    }
    for (e, f) in g.incident_pairs() {
        for i in 0..colors {
            let mut row = vec![0.0; n];
            row[e * colors + i] = 1.0;
            row[f * colors + i] = 1.0;
            row[color_var(i)] = -1.0;
            constraints.push(RawConstraint::new(row, Relation::Le, 0.0));
        }
    }
    let mut row = vec![0.0; n];
    for i in 0..colors {
        row[color_var(i)] = -1.0;
    }
    constraints.push(RawConstraint::new(row, Relation::Le, -rhs));
    let mut linear = vec![0.0; n];
    for i in 0..colors {
        linear[color_var(i)] = 0.5;
    }
    to_standard_form(&RawProblem::linear(linear, constraints, (0..n).collect()))
}
