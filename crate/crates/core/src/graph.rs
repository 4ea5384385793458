//! Immutable weighted undirected graphs in compressed sparse row layout.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Sparse undirected graph without self-loops or parallel edges.
///
/// Every edge is stored twice as a pair of directed arcs so that iterating
/// over the neighbors of a vertex touches one contiguous slice. Arcs of a
/// vertex are sorted by target id. `arc_edge` maps each arc to the index of
/// its undirected edge in [`Graph::edges`].
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    arc_edge: Vec<usize>,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            offsets: vec![0; n + 1],
            targets: Vec::new(),
            weights: Vec::new(),
            arc_edge: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Builds a graph from an edge list, rejecting self-loops, duplicates,
    /// out-of-range endpoints and zero or non-finite weights.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut list: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::VertexOutOfRange { vertex: a.max(b), n });
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            if !w.is_finite() || w == 0.0 {
                return Err(Error::InvalidWeight { u: a, v: b, weight: w });
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            list.push(Edge { u, v, weight: w });
        }
        list.sort_by(|x, y| (x.u, x.v).cmp(&(y.u, y.v)));
        for pair in list.windows(2) {
            if pair[0].u == pair[1].u && pair[0].v == pair[1].v {
                return Err(Error::DuplicateEdge(pair[0].u, pair[0].v));
            }
        }
        Ok(Self::from_sorted_edges(n, list))
    }

    /// `edges` must be sorted by `(u, v)`, with `u < v` and no duplicates.
    pub(crate) fn from_sorted_edges(n: usize, edges: Vec<Edge>) -> Self {
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let arcs = offsets[n];
        let mut targets = vec![0usize; arcs];
        let mut weights = vec![0.0; arcs];
        let mut arc_edge = vec![0usize; arcs];
        let mut cursor = offsets[..n].to_vec();
        // Lower-id neighbors first, then higher-id ones; both passes visit
        // them in increasing order because `edges` is sorted.
        for (id, e) in edges.iter().enumerate() {
            let slot = cursor[e.v];
            targets[slot] = e.u;
            weights[slot] = e.weight;
            arc_edge[slot] = id;
            cursor[e.v] += 1;
        }
        for (id, e) in edges.iter().enumerate() {
            let slot = cursor[e.u];
            targets[slot] = e.v;
            weights[slot] = e.weight;
            arc_edge[slot] = id;
            cursor[e.u] += 1;
        }
        Self {
            n,
            offsets,
            targets,
            weights,
            arc_edge,
            edges,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn neighbor_ids(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn neighbor_weights(&self, v: usize) -> &[f64] {
        &self.weights[self.offsets[v]..self.offsets[v + 1]]
    }

    /// `(neighbor, weight)` pairs of `v` in increasing neighbor order.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbor_ids(v)
            .iter()
            .copied()
            .zip(self.neighbor_weights(v).iter().copied())
    }

    /// Range of arc ids leaving `v`.
    pub fn arc_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn arc_target(&self, arc: usize) -> usize {
        self.targets[arc]
    }

    pub fn arc_weight(&self, arc: usize) -> f64 {
        self.weights[arc]
    }

    pub fn arc_edge(&self, arc: usize) -> usize {
        self.arc_edge[arc]
    }

    pub fn num_arcs(&self) -> usize {
        self.targets.len()
    }

    /// Arc id of `u -> v`, if the edge exists.
    pub fn arc_id(&self, u: usize, v: usize) -> Option<usize> {
        let ids = self.neighbor_ids(u);
        ids.binary_search(&v).ok().map(|k| self.offsets[u] + k)
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.arc_id(u, v).map(|a| self.weights[a])
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.arc_id(u, v).is_some()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.edges.iter().all(|e| e.weight == 1.0)
    }

    /// Vertices with at least one incident edge.
    pub fn non_isolated(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.degree(v) > 0).collect()
    }

    /// Same topology, weights replaced by `f(edge)`.
    pub fn map_weights(&self, mut f: impl FnMut(&Edge) -> f64) -> Result<Self> {
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge {
                weight: f(e),
                ..*e
            })
            .collect();
        for e in &edges {
            if !e.weight.is_finite() || e.weight == 0.0 {
                return Err(Error::InvalidWeight {
                    u: e.u,
                    v: e.v,
                    weight: e.weight,
                });
            }
        }
        Ok(Self::from_sorted_edges(self.n, edges))
    }

    /// All edge weights multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        self.map_weights(|e| e.weight * scale)
    }

    /// Spanning subgraph on the same vertex set keeping edges with `keep[id]`.
    pub fn edge_subgraph(&self, keep: &[bool]) -> Self {
        let edges = self
            .edges
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(e, _)| *e)
            .collect();
        Self::from_sorted_edges(self.n, edges)
    }

    /// Induced subgraph on `vertices`, relabelled `0..vertices.len()` in the
    /// given order. Returns the subgraph and nothing else; the caller owns
    /// the local-to-global map (`vertices` itself).
    pub fn induced_subgraph(&self, vertices: &[usize]) -> Self {
        let mut local = std::collections::HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i);
        }
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for (w, wt) in self.neighbors(v) {
                if let Some(&j) = local.get(&w) {
                    if i < j {
                        edges.push(Edge { u: i, v: j, weight: wt });
                    }
                }
            }
        }
        edges.sort_by(|x, y| (x.u, x.v).cmp(&(y.u, y.v)));
        Self::from_sorted_edges(vertices.len(), edges)
    }

    /// Weighted adjacency `y = A x`.
    pub fn adjacency_matvec(&self, x: &[f64], y: &mut [f64]) {
        for v in 0..self.n {
            let mut acc = 0.0;
            for (w, wt) in self.neighbors(v) {
                acc += wt * x[w];
            }
            y[v] = acc;
        }
    }

    /// Dense weighted adjacency matrix (intended for small graphs).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.u, e.v)] = e.weight;
            a[(e.v, e.u)] = e.weight;
        }
        a
    }

    /// Dense 0/1 adjacency pattern.
    pub fn to_dense_pattern(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.u, e.v)] = 1.0;
            a[(e.v, e.u)] = 1.0;
        }
        a
    }

    /// Writes the `n m` header followed by one `u v w` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n, self.m())?;
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.u, e.v, e.weight)?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let (line_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let mut it = header.split_whitespace();
        let n = parse_field::<usize>(it.next(), line_no, "n")?;
        let m = parse_field::<usize>(it.next(), line_no, "m")?;
        let mut edges = Vec::with_capacity(m);
        for (line_no, line) in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let u = parse_field::<usize>(it.next(), line_no, "u")?;
            let v = parse_field::<usize>(it.next(), line_no, "v")?;
            let w = match it.next() {
                Some(_) => parse_field::<f64>(line.split_whitespace().nth(2), line_no, "w")?,
                None => 1.0,
            };
            edges.push((u, v, w));
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::from_edges(n, edges)
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing field `{name}`"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{name}` from {tok:?}"),
    })
}

/// Planted community signs, one per vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityLabels {
    sigma: Vec<i8>,
}

impl CommunityLabels {
    pub fn new(sigma: Vec<i8>) -> Result<Self> {
        if let Some(bad) = sigma.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!(
                "community label at {bad} is {}, expected ±1",
                sigma[bad]
            )));
        }
        Ok(Self { sigma })
    }

    pub fn all_plus(n: usize) -> Self {
        Self { sigma: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.sigma
    }

    pub fn get(&self, v: usize) -> i8 {
        self.sigma[v]
    }
}
