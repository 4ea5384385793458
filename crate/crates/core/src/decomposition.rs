//! Excision of heavy neighborhoods: heaviness radii, the near-forest / bulk
//! split, pseudorandomness certificates, the cluster graph and component
//! statistics.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::neighborhood::{connected_components, BfsWorkspace, Components};

/// Growth base `d(1+ε)`.
pub fn growth_base(d: f64, epsilon: f64) -> f64 {
    d * (1.0 + epsilon)
}

/// Smallest `ε` for which the asymptotic excision guarantee is stated.
pub fn epsilon_floor(d: f64) -> f64 {
    1500.0 * ((100.0 + d.ln()) / d).cbrt()
}

fn check_params(d: f64, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !(d >= 1.0) || !d.is_finite() || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "excision needs ε > 0 and d ≥ 1, got ε={epsilon}, d={d}"
        )));
    }
    Ok(())
}

/// Smallest `L ≥ 0` with `base^L ≥ size`.
fn saturation_radius(base: f64, size: usize) -> usize {
    let mut l = 0;
    let mut p = 1.0;
    while p < size as f64 {
        p *= base;
        l += 1;
    }
    l
}

/// Arc id of the reverse arc for every arc.
pub(crate) fn twin_arcs(g: &Graph) -> Vec<usize> {
    let mut twin = vec![0usize; g.num_arcs()];
    for u in 0..g.n() {
        for a in g.arc_range(u) {
            let w = g.arc_target(a);
            twin[a] = g.arc_id(w, u).expect("symmetric adjacency");
        }
    }
    twin
}

/// Upper bounds on ball sizes from nonbacktracking walk counts.
///
/// Every vertex at distance exactly `k` from `v` is the endpoint of a shortest
/// path, which is a nonbacktracking walk, so `|B_r(v)| ≤ 1 + Σ_{k≤r} NB_k(v)`.
/// Walk counts per arc obey `N_k(u→w) = S_{k−1}(w) − N_{k−1}(w→u)`, where
/// `S_j(w)` sums `N_j` over arcs leaving `w`. Row `r` of the result holds the
/// bound for radius `r`, flattened as `bounds[v * (depth + 1) + r]`.
struct WalkBounds {
    depth: usize,
    bounds: Vec<f64>,
}

impl WalkBounds {
    fn new(g: &Graph, depth: usize) -> Self {
        let n = g.n();
        let twin = twin_arcs(g);
        let stride = depth + 1;
        let mut bounds = vec![1.0; n * stride];
        let mut walks = vec![1.0f64; g.num_arcs()];
        let mut sums: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
        for r in 1..=depth {
            for v in 0..n {
                bounds[v * stride + r] = bounds[v * stride + r - 1] + sums[v];
            }
            if r == depth {
                break;
            }
            let next: Vec<f64> = (0..g.num_arcs())
                .map(|a| sums[g.arc_target(a)] - walks[twin[a]])
                .collect();
            walks = next;
            for (v, s) in sums.iter_mut().enumerate() {
                *s = g.arc_range(v).map(|a| walks[a]).sum();
            }
        }
        Self { depth, bounds }
    }

    fn get(&self, v: usize, r: usize) -> f64 {
        self.bounds[v * (self.depth + 1) + r.min(self.depth)]
    }
}

/// Per-vertex heaviness radius: the least `ℓ` such that `|B_L(v)| ≤ D^L` for
/// every `L ≥ ℓ`, with `D = d(1+ε)`.
///
/// Radii at or beyond the saturation radius of the component are light
/// automatically. Walk-count bounds rule out most vertices; the rest get one
/// exact BFS up to the largest radius the bound could not clear.
pub fn compute_heaviness_radii(g: &Graph, d: f64, epsilon: f64) -> Result<Vec<usize>> {
    check_params(d, epsilon)?;
    let base = growth_base(d, epsilon);
    let comps = connected_components(g);
    let sat: Vec<usize> = comps
        .components
        .iter()
        .map(|c| saturation_radius(base, c.size()))
        .collect();
    let depth = sat.iter().copied().max().unwrap_or(0).saturating_sub(1);
    let walk = WalkBounds::new(g, depth);
    let suspect: Vec<(usize, usize)> = (0..g.n())
        .filter_map(|v| {
            let top = sat[comps.label[v]].saturating_sub(1);
            let mut pow = 1.0;
            let mut last = 0;
            for l in 1..=top {
                pow *= base;
                if walk.get(v, l) > pow {
                    last = l;
                }
            }
            (last > 0).then_some((v, last))
        })
        .collect();
    let exact: Vec<(usize, usize)> = suspect
        .par_iter()
        .map_init(
            || BfsWorkspace::new(g.n()),
            |ws, &(v, top)| {
                let sizes = ws.ball_sizes(g, v, top);
                let mut pow = 1.0;
                let mut heavy = None;
                for (l, &s) in sizes.iter().enumerate().skip(1) {
                    pow *= base;
                    if s as f64 > pow {
                        heavy = Some(l);
                    }
                }
                (v, heavy.map_or(0, |l| l + 1))
            },
        )
        .collect();
    let mut ell = vec![0usize; g.n()];
    for (v, l) in exact {
        ell[v] = l;
    }
    Ok(ell)
}

/// Bulk / near-forest split of a graph.
#[derive(Clone, Debug)]
pub struct ExcisionResult {
    pub ell: Vec<usize>,
    /// Union of the induced balls `B_{ℓ(v)}(v)`, on the full vertex set.
    pub near_forest: Graph,
    /// Remaining edges, on the full vertex set.
    pub bulk: Graph,
    /// Vertices incident to both a bulk and a near-forest edge, sorted.
    pub boundary: Vec<usize>,
    /// `in_near_forest[e]` for every edge id of the source graph.
    pub in_near_forest: Vec<bool>,
    pub epsilon: f64,
    pub d: f64,
}

impl ExcisionResult {
    pub fn growth_base(&self) -> f64 {
        growth_base(self.d, self.epsilon)
    }

    pub fn n(&self) -> usize {
        self.ell.len()
    }

    /// Vertices of the near-forest that are not on the boundary.
    pub fn interior_mask(&self) -> Vec<bool> {
        let mut mask: Vec<bool> = (0..self.n()).map(|v| self.near_forest.degree(v) > 0).collect();
        for &b in &self.boundary {
            mask[b] = false;
        }
        mask
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        for &b in &self.boundary {
            mask[b] = true;
        }
        mask
    }

    /// `ℓ` value counts: entry `k` is the number of vertices with `ℓ(v) = k`.
    pub fn ell_histogram(&self) -> Vec<usize> {
        let top = self.ell.iter().copied().max().unwrap_or(0);
        let mut h = vec![0usize; top + 1];
        for &l in &self.ell {
            h[l] += 1;
        }
        h
    }
}

/// Removes the union of heavy balls. Logs a warning when `ε` is below the
/// range covered by the asymptotic guarantee.
pub fn excise(g: &Graph, d: f64, epsilon: f64) -> Result<ExcisionResult> {
    let ell = compute_heaviness_radii(g, d, epsilon)?;
    if epsilon < epsilon_floor(d) {
        log::warn!(
            "ε = {epsilon} is below {:.1}, the range where excision is guaranteed to yield a near-forest",
            epsilon_floor(d)
        );
    }
    let mut marked = vec![false; g.m()];
    let mut ws = BfsWorkspace::new(g.n());
    for v in (0..g.n()).filter(|&v| ell[v] > 0) {
        ws.run(g, v, ell[v]);
        let members = ws.last_order().to_vec();
        for u in members {
            for a in g.arc_range(u) {
                if ws.visited(g.arc_target(a)) {
                    marked[g.arc_edge(a)] = true;
                }
            }
        }
    }
    let near_forest = g.edge_subgraph(&marked);
    let keep: Vec<bool> = marked.iter().map(|m| !m).collect();
    let bulk = g.edge_subgraph(&keep);
    let boundary = (0..g.n())
        .filter(|&v| bulk.degree(v) > 0 && near_forest.degree(v) > 0)
        .collect();
    Ok(ExcisionResult {
        ell,
        near_forest,
        bulk,
        boundary,
        in_near_forest: marked,
        epsilon,
        d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentExcess {
    pub size: usize,
    pub edges: usize,
    pub excess: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearForestReport {
    pub pass: bool,
    pub max_excess: usize,
    /// Components with at least one edge.
    pub components: Vec<ComponentExcess>,
}

/// Passes iff every connected component has at most one cycle.
pub fn verify_near_forest(h: &Graph) -> NearForestReport {
    let comps = connected_components(h);
    let components: Vec<ComponentExcess> = comps
        .components
        .iter()
        .filter(|c| c.edges > 0)
        .map(|c| ComponentExcess {
            size: c.size(),
            edges: c.edges,
            excess: c.excess,
        })
        .collect();
    let max_excess = components.iter().map(|c| c.excess).max().unwrap_or(0);
    NearForestReport {
        pass: max_excess <= 1,
        max_excess,
        components,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// `|B_r(u)| > D^{r−1}Δ`.
    Ball,
    /// More than `D^r` designated vertices within distance `r`.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub vertex: usize,
    pub radius: usize,
    pub observed: usize,
    pub bound: f64,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudorandomCertificate {
    pub delta: f64,
    pub growth: f64,
    pub violations: Vec<Violation>,
}

impl PseudorandomCertificate {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|B_r(u)| ≤ D^{r−1}Δ` for `r ≥ 1` and `|B_r(u) ∩ S| ≤ D^r` for
/// `r ≥ 0`, for every non-isolated `u`.
///
/// Radii where a bound already exceeds the component (or its share of `S`)
/// cannot fail and are skipped, as are vertices whose walk-count bounds clear
/// every remaining radius.
pub fn verify_pseudorandom(h: &Graph, boundary: &[usize], delta: f64, growth: f64) -> PseudorandomCertificate {
    let comps = connected_components(h);
    let mut in_s = vec![false; h.n()];
    for &s in boundary {
        in_s[s] = true;
    }
    let mut s_count = vec![0usize; comps.components.len()];
    for &s in boundary {
        s_count[comps.label[s]] += 1;
    }
    // Largest radius at which each condition can still fail, per component.
    let limits: Vec<(usize, usize)> = comps
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut ball_r = 0;
            let mut bound = delta;
            let mut r = 1;
            while bound < c.size() as f64 && r <= c.size() {
                ball_r = r;
                bound *= growth;
                r += 1;
            }
            let mut bnd_r = 0;
            let mut bound = 1.0;
            let mut r = 0;
            while bound < s_count[i] as f64 && r <= c.size() {
                bnd_r = r;
                bound *= growth;
                r += 1;
            }
            (ball_r, bnd_r)
        })
        .collect();
    let depth = limits.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
    let walk = WalkBounds::new(h, depth);
    let todo: Vec<(usize, usize)> = (0..h.n())
        .filter(|&u| h.degree(u) > 0)
        .filter_map(|u| {
            let (ball_r, bnd_r) = limits[comps.label[u]];
            let mut need = 0;
            let mut pow = 1.0;
            for r in 0..=ball_r.max(bnd_r) {
                let ub = walk.get(u, r);
                if r >= 1 && r <= ball_r && ub > pow / growth * delta {
                    need = need.max(r);
                }
                if r <= bnd_r && ub > pow {
                    need = need.max(r);
                }
                pow *= growth;
            }
            (need > 0).then_some((u, need))
        })
        .collect();
    let per_vertex: Vec<Vec<Violation>> = todo
        .par_iter()
        .map_init(
            || BfsWorkspace::new(h.n()),
            |ws, &(u, need)| {
                ws.run(h, u, need);
                let mut sizes = vec![0usize; need + 1];
                let mut s_sizes = vec![0usize; need + 1];
                for &v in ws.last_order() {
                    sizes[ws.dist(v)] += 1;
                    if in_s[v] {
                        s_sizes[ws.dist(v)] += 1;
                    }
                }
                let mut out = Vec::new();
                let (mut ball, mut sball, mut pow) = (0usize, 0usize, 1.0f64);
                for r in 0..=need {
                    ball += sizes[r];
                    sball += s_sizes[r];
                    if r >= 1 {
                        let bound = pow / growth * delta;
                        if ball as f64 > bound {
                            out.push(Violation {
                                vertex: u,
                                radius: r,
                                observed: ball,
                                bound,
                                kind: ViolationKind::Ball,
                            });
                        }
                    }
                    if sball as f64 > pow {
                        out.push(Violation {
                            vertex: u,
                            radius: r,
                            observed: sball,
                            bound: pow,
                            kind: ViolationKind::Boundary,
                        });
                    }
                    pow *= growth;
                }
                out
            },
        )
        .collect();
    PseudorandomCertificate {
        delta,
        growth,
        violations: per_vertex.into_iter().flatten().collect(),
    }
}

/// Observed `Δ = max_{u, r≥1} |B_r(u)| / D^{r−1}` over non-isolated vertices.
///
/// Vertices are visited in decreasing order of their walk-count ratio bound
/// and the scan stops once no remaining vertex can beat the running maximum.
pub fn observed_delta(h: &Graph, growth: f64) -> f64 {
    let comps = connected_components(h);
    let comp_size = |u: usize| comps.components[comps.label[u]].size() as f64;
    let biggest = comps.components.iter().map(|c| c.size()).max().unwrap_or(0);
    let depth = saturation_radius(growth, biggest) + 1;
    let walk = WalkBounds::new(h, depth);
    let mut cands: Vec<(f64, usize)> = (0..h.n())
        .filter(|&u| h.degree(u) > 0)
        .map(|u| {
            let c = comp_size(u);
            let mut pow = 1.0;
            let mut best: f64 = 0.0;
            for r in 1..=depth {
                best = best.max(walk.get(u, r).min(c) / pow);
                pow *= growth;
            }
            // Radii beyond `depth` contribute at most c / D^depth.
            (best.max(c / pow), u)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut ws = BfsWorkspace::new(h.n());
    let mut best = 0.0f64;
    for (ub, u) in cands {
        if ub <= best {
            break;
        }
        let c = comp_size(u);
        // Radius past which c / D^{r−1} cannot exceed the running maximum.
        let mut reach = 1;
        let mut pow = 1.0;
        while c / pow > best && reach <= c as usize {
            pow *= growth;
            reach += 1;
        }
        let sizes = ws.ball_sizes(h, u, reach);
        let mut pow = 1.0;
        for &s in sizes.iter().skip(1) {
            best = best.max(s as f64 / pow);
            pow *= growth;
        }
    }
    best
}

/// Heavy vertices joined when their balls intersect.
#[derive(Clone, Debug)]
pub struct ClusterGraph {
    /// Graph vertex of each cluster node, increasing.
    pub nodes: Vec<usize>,
    /// `(1+ε)^{ℓ(u)}` per node.
    pub node_weight: Vec<f64>,
    /// Edges on node indices weighted by `ℓ(u) + ℓ(v)`.
    pub graph: Graph,
}

/// Cluster graph over vertices with positive radius.
///
/// Intersections are found through an inverted index from graph vertices to
/// the heavy balls that contain them, so the cost is the number of
/// (vertex, ball, ball) incidences rather than all pairs of balls.
pub fn build_cluster_graph(g: &Graph, excision: &ExcisionResult) -> ClusterGraph {
    let nodes: Vec<usize> = (0..g.n()).filter(|&v| excision.ell[v] > 0).collect();
    let mut containing: Vec<Vec<u32>> = vec![Vec::new(); g.n()];
    let mut ws = BfsWorkspace::new(g.n());
    for (k, &v) in nodes.iter().enumerate() {
        for &u in ws.run(g, v, excision.ell[v]) {
            containing[u].push(k as u32);
        }
    }
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for list in &containing {
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs
        .into_iter()
        .map(|(a, b)| Edge {
            u: a as usize,
            v: b as usize,
            weight: (excision.ell[nodes[a as usize]] + excision.ell[nodes[b as usize]]) as f64,
        })
        .collect();
    let node_weight = nodes
        .iter()
        .map(|&v| (1.0 + excision.epsilon).powi(excision.ell[v] as i32))
        .collect();
    ClusterGraph {
        graph: Graph::from_sorted_edges(nodes.len(), edges),
        nodes,
        node_weight,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub size: usize,
    pub excess: usize,
    pub diameter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    /// Components with at least one edge, in order of smallest vertex.
    pub components: Vec<ComponentSummary>,
    pub max_component_size: usize,
    /// `Σ |C|²` over components with more than one vertex.
    pub sum_sq_nontrivial: usize,
    /// Largest weighted shortest-path distance within a cluster component.
    pub cluster_weighted_diameter: f64,
}

fn farthest(g: &Graph, ws: &mut BfsWorkspace, src: usize) -> (usize, usize) {
    let order = ws.run(g, src, usize::MAX);
    let last = *order.last().expect("source is visited");
    (last, ws.dist(last))
}

/// Double-sweep BFS diameter: exact on trees, a lower bound otherwise.
pub fn sweep_diameter(g: &Graph, ws: &mut BfsWorkspace, start: usize) -> usize {
    let (a, _) = farthest(g, ws, start);
    farthest(g, ws, a).1
}

fn dijkstra_farthest(g: &Graph, src: usize, dist: &mut [u64], touched: &mut Vec<usize>) -> (usize, u64) {
    for &t in touched.iter() {
        dist[t] = u64::MAX;
    }
    touched.clear();
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    touched.push(src);
    heap.push(Reverse((0u64, src)));
    let mut best = (src, 0u64);
    while let Some(Reverse((du, u))) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        if du > best.1 || (du == best.1 && u < best.0) {
            best = (u, du);
        }
        for (w, wt) in g.neighbors(u) {
            let nd = du + wt as u64;
            if nd < dist[w] {
                if dist[w] == u64::MAX {
                    touched.push(w);
                }
                dist[w] = nd;
                heap.push(Reverse((nd, w)));
            }
        }
    }
    best
}

pub fn component_stats(h: &Graph, cluster: &ClusterGraph) -> ComponentStats {
    let comps: Components = connected_components(h);
    let mut ws = BfsWorkspace::new(h.n());
    let components: Vec<ComponentSummary> = comps
        .components
        .iter()
        .filter(|c| c.edges > 0)
        .map(|c| ComponentSummary {
            size: c.size(),
            excess: c.excess,
            diameter: sweep_diameter(h, &mut ws, c.vertices[0]),
        })
        .collect();
    let max_component_size = components.iter().map(|c| c.size).max().unwrap_or(0);
    let sum_sq_nontrivial = components.iter().map(|c| c.size * c.size).sum();
    let cg = &cluster.graph;
    let ccomps = connected_components(cg);
    let mut dist = vec![u64::MAX; cg.n()];
    let mut touched = Vec::new();
    let mut cluster_weighted_diameter = 0u64;
    for c in ccomps.components.iter().filter(|c| c.edges > 0) {
        let (a, _) = dijkstra_farthest(cg, c.vertices[0], &mut dist, &mut touched);
        let (_, da) = dijkstra_farthest(cg, a, &mut dist, &mut touched);
        cluster_weighted_diameter = cluster_weighted_diameter.max(da);
    }
    ComponentStats {
        components,
        max_component_size,
        sum_sq_nontrivial,
        cluster_weighted_diameter: cluster_weighted_diameter as f64,
    }
}

/// Near-forest component paired with its local certificate.
#[derive(Clone, Debug)]
pub struct CertifiedComponent {
    /// Global vertex ids, sorted; local index `i` is `vertices[i]`.
    pub vertices: Vec<usize>,
    pub graph: Graph,
    /// Local indices of boundary vertices.
    pub boundary: Vec<usize>,
    pub excess: usize,
    pub certificate: PseudorandomCertificate,
}

impl CertifiedComponent {
    pub fn is_tree(&self) -> bool {
        self.excess == 0
    }

    /// Near-forest component with a valid certificate.
    pub fn is_certified(&self) -> bool {
        self.excess <= 1 && self.certificate.is_valid()
    }
}

/// Splits the near-forest into components with at least one edge and checks
/// each against `(delta, D)` with the boundary restricted to the component.
/// Components larger than `max_size` are skipped.
pub fn certify_components(excision: &ExcisionResult, delta: f64, max_size: usize) -> Vec<CertifiedComponent> {
    let h = &excision.near_forest;
    let growth = excision.growth_base();
    let bmask = excision.boundary_mask();
    connected_components(h)
        .components
        .into_iter()
        .filter(|c| c.edges > 0 && c.size() <= max_size)
        .map(|c| {
            let graph = h.induced_subgraph(&c.vertices);
            let boundary: Vec<usize> = c
                .vertices
                .iter()
                .enumerate()
                .filter(|(_, &v)| bmask[v])
                .map(|(i, _)| i)
                .collect();
            let certificate = verify_pseudorandom(&graph, &boundary, delta, growth);
            CertifiedComponent {
                excess: c.excess,
                vertices: c.vertices,
                graph,
                boundary,
                certificate,
            }
        })
        .collect()
}
