//! Breadth-first balls, exact-distance matrices and connected components.

use crate::graph::Graph;
use crate::sparse::CsrMatrix;

/// Reusable BFS scratch space; resetting is O(1) via epoch stamps.
#[derive(Clone, Debug)]
pub struct BfsWorkspace {
    stamp: Vec<u32>,
    dist: Vec<u32>,
    epoch: u32,
    order: Vec<usize>,
}

impl BfsWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            dist: vec![0; n],
            epoch: 0,
            order: Vec::new(),
        }
    }

    fn next_epoch(&mut self) {
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.order.clear();
    }

    /// BFS from `src` up to `max_depth` hops. Returns visited vertices in BFS
    /// order (nondecreasing distance).
    pub fn run(&mut self, g: &Graph, src: usize, max_depth: usize) -> &[usize] {
        self.run_capped(g, src, max_depth, usize::MAX)
    }

    /// As [`run`](Self::run) but stops once `cap` vertices have been reached.
    /// The last layer may then be partial.
    pub fn run_capped(&mut self, g: &Graph, src: usize, max_depth: usize, cap: usize) -> &[usize] {
        self.next_epoch();
        let ep = self.epoch;
        self.stamp[src] = ep;
        self.dist[src] = 0;
        self.order.push(src);
        let mut head = 0;
        'outer: while head < self.order.len() {
            let u = self.order[head];
            head += 1;
            let du = self.dist[u];
            if du as usize >= max_depth {
                continue;
            }
            for &w in g.neighbor_ids(u) {
                if self.stamp[w] != ep {
                    self.stamp[w] = ep;
                    self.dist[w] = du + 1;
                    self.order.push(w);
                    if self.order.len() >= cap {
                        break 'outer;
                    }
                }
            }
        }
        &self.order
    }

    /// Whether `v` was reached by the last run.
    pub fn visited(&self, v: usize) -> bool {
        self.stamp[v] == self.epoch
    }

    /// Hop distance of `v` from the last source; only meaningful if visited.
    pub fn dist(&self, v: usize) -> usize {
        self.dist[v] as usize
    }

    pub fn last_order(&self) -> &[usize] {
        &self.order
    }

    /// Cumulative ball sizes `|B_r(src)|` for `r = 0..=max_depth`.
    pub fn ball_sizes(&mut self, g: &Graph, src: usize, max_depth: usize) -> Vec<usize> {
        self.run(g, src, max_depth);
        let mut sizes = vec![0usize; max_depth + 1];
        for &v in &self.order {
            sizes[self.dist[v] as usize] += 1;
        }
        for r in 1..=max_depth {
            sizes[r] += sizes[r - 1];
        }
        sizes
    }
}

/// Vertices within `r` hops of `v` with their distances, sorted by vertex id.
pub fn ball(g: &Graph, v: usize, r: usize) -> Vec<(usize, usize)> {
    let mut ws = BfsWorkspace::new(g.n());
    ws.run(g, v, r);
    let mut out: Vec<(usize, usize)> = ws.last_order().iter().map(|&u| (u, ws.dist(u))).collect();
    out.sort_unstable();
    out
}

/// Symmetric 0/1 matrix marking pairs at hop distance exactly `ell`.
pub fn distance_matrix(g: &Graph, ell: usize) -> CsrMatrix {
    let mut ws = BfsWorkspace::new(g.n());
    let mut trips = Vec::new();
    for v in 0..g.n() {
        ws.run(g, v, ell);
        for &u in ws.last_order() {
            if ws.dist(u) == ell {
                trips.push((v, u, 1.0));
            }
        }
    }
    CsrMatrix::from_triplets(g.n(), g.n(), trips)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentInfo {
    /// Sorted vertex ids.
    pub vertices: Vec<usize>,
    pub edges: usize,
    /// `|E| − |V| + 1`.
    pub excess: usize,
}

impl ComponentInfo {
    pub fn size(&self) -> usize {
        self.vertices.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    /// Component index of every vertex.
    pub label: Vec<usize>,
    /// Ordered by smallest vertex id.
    pub components: Vec<ComponentInfo>,
}

pub fn connected_components(g: &Graph) -> Components {
    let n = g.n();
    let mut label = vec![usize::MAX; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = components.len();
        label[s] = id;
        stack.push(s);
        let mut vertices = Vec::new();
        let mut degree_sum = 0usize;
        while let Some(u) = stack.pop() {
            vertices.push(u);
            degree_sum += g.degree(u);
            for &w in g.neighbor_ids(u) {
                if label[w] == usize::MAX {
                    label[w] = id;
                    stack.push(w);
                }
            }
        }
        vertices.sort_unstable();
        let edges = degree_sum / 2;
        components.push(ComponentInfo {
            excess: edges + 1 - vertices.len(),
            edges,
            vertices,
        });
    }
    Components { label, components }
}
