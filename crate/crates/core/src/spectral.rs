//! Bethe Hessian, nonbacktracking operator, operator-norm checks on bulk
//! graphs and pseudorandom trees.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::centered::CenteredInteraction;
use crate::decomposition::twin_arcs;
use crate::error::{Error, Result};
use crate::graph::{CommunityLabels, Graph};
use crate::ising::tree_covariance_closed_form;
use crate::linalg::{lanczos_extremes, spectral_norm, spectral_radius, sym_sqrt, FnOperator, LinearOperator};
use crate::neighborhood::{connected_components, BfsWorkspace};
use crate::rng::RngSeed;
use crate::sparse::CsrMatrix;

/// Largest dimension handled by dense eigensolvers in this module.
pub const DENSE_NORM_LIMIT: usize = 500;
/// Largest tree accepted by the inverse-series check.
pub const SERIES_LIMIT: usize = 2000;
/// Default tolerance ratio applied to asymptotic spectral bounds.
pub const DEFAULT_SLACK: f64 = 1.2;

const LANCZOS_STEPS: usize = 400;
const LANCZOS_TOL: f64 = 1e-8;

pub(crate) fn is_forest(g: &Graph) -> bool {
    connected_components(g).components.iter().all(|c| c.excess == 0)
}

fn require_forest(g: &Graph) -> Result<()> {
    if is_forest(g) {
        Ok(())
    } else {
        Err(Error::NotATree("graph has a cycle".into()))
    }
}

/// `((D − I)t² − At + I)/(1 − t²)` with `D` the unweighted degree matrix and
/// `A` the weighted adjacency.
#[derive(Clone, Debug)]
pub struct BetheHessian {
    pub t: f64,
    pub matrix: CsrMatrix,
}

impl BetheHessian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }
}

impl LinearOperator for BetheHessian {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y)
    }
}

pub fn bethe_hessian(g: &Graph, t: f64) -> Result<BetheHessian> {
    if !(t.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("Bethe Hessian needs |t| < 1, got {t}")));
    }
    let denom = 1.0 - t * t;
    let mut trips = Vec::with_capacity(g.n() + g.num_arcs());
    for v in 0..g.n() {
        let deg = g.degree(v) as f64;
        trips.push((v, v, ((deg - 1.0) * t * t + 1.0) / denom));
        for (u, w) in g.neighbors(v) {
            trips.push((v, u, -t * w / denom));
        }
    }
    Ok(BetheHessian {
        t,
        matrix: CsrMatrix::from_triplets(g.n(), g.n(), trips),
    })
}

/// Max-abs entry of `BH(t)·Σ_s t^s A^{(s)} − I` on a forest, where `A^{(s)}`
/// marks pairs at distance `s`. Zero up to rounding.
pub fn bethe_inverse_series_check(tree: &Graph, t: f64) -> Result<f64> {
    require_forest(tree)?;
    let n = tree.n();
    if n > SERIES_LIMIT {
        return Err(Error::TooLarge {
            what: "series check",
            size: n,
            limit: SERIES_LIMIT,
        });
    }
    let bh = bethe_hessian(tree, t)?;
    let mut series = DMatrix::<f64>::zeros(n, n);
    let mut ws = BfsWorkspace::new(n);
    for v in 0..n {
        ws.run(tree, v, usize::MAX);
        for &u in ws.last_order() {
            series[(u, v)] = t.powi(ws.dist(u) as i32);
        }
    }
    let mut worst = 0.0f64;
    let mut col = vec![0.0; n];
    for c in 0..n {
        bh.matvec(series.column(c).as_slice(), &mut col);
        col[c] -= 1.0;
        worst = col.iter().fold(worst, |m, x| m.max(x.abs()));
    }
    Ok(worst)
}

/// `B[uv, xy] = c(xy)` when `v = x` and `u ≠ y`, over the `2m` arcs of a graph
/// with arc weights `c` taken from the edge weights.
#[derive(Clone, Debug)]
pub struct NonbacktrackingMatrix {
    graph: Graph,
    twin: Vec<usize>,
    source: Vec<usize>,
}

impl NonbacktrackingMatrix {
    pub fn new(g: &Graph) -> Self {
        let mut source = vec![0; g.num_arcs()];
        for v in 0..g.n() {
            for a in g.arc_range(v) {
                source[a] = v;
            }
        }
        Self {
            twin: twin_arcs(g),
            graph: g.clone(),
            source,
        }
    }

    pub fn dim(&self) -> usize {
        self.twin.len()
    }

    /// Arc id `a` runs from `arc_source(a)` to `graph.arc_target(a)`.
    pub fn arc_source(&self, a: usize) -> usize {
        self.source[a]
    }

    pub fn twin(&self, a: usize) -> usize {
        self.twin[a]
    }

    /// `(Bx)[u→v] = Σ_{y∼v} c(vy) x[v→y] − c(vu) x[v→u]`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.graph;
        let out: Vec<f64> = (0..g.n())
            .map(|v| g.arc_range(v).map(|a| g.arc_weight(a) * x[a]).sum())
            .collect();
        for (a, ya) in y.iter_mut().enumerate() {
            let v = g.arc_target(a);
            let back = self.twin[a];
            *ya = out[v] - g.arc_weight(back) * x[back];
        }
    }

    /// `(Bᵀx)[x→y] = c(xy)(Σ_{u∼x} x[u→x] − x[y→x])`.
    pub fn transpose_matvec(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.graph;
        let incoming: Vec<f64> = (0..g.n())
            .map(|v| g.arc_range(v).map(|a| x[self.twin[a]]).sum())
            .collect();
        for (a, ya) in y.iter_mut().enumerate() {
            let u = self.source[a];
            *ya = g.arc_weight(a) * (incoming[u] - x[self.twin[a]]);
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.matvec(&e, &mut col);
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        m
    }

    /// Smallest `k ≤ max_power` with `|B|^k 𝟙 = 0`, where `|B|` replaces weights
    /// by their moduli; for nonnegative matrices this is the nilpotency index.
    pub fn nilpotency_index(&self, max_power: usize) -> Option<usize> {
        let abs = Self {
            graph: self.graph.map_weights(|e| e.weight.abs().max(f64::MIN_POSITIVE)).ok()?,
            twin: self.twin.clone(),
            source: self.source.clone(),
        };
        let mut x = vec![1.0; self.dim()];
        let mut y = vec![0.0; self.dim()];
        for k in 0..=max_power {
            if x.iter().all(|&v| v == 0.0) {
                return Some(k);
            }
            abs.matvec(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        None
    }

    pub fn spectral_radius(&self, tol: f64, max_iter: usize) -> crate::linalg::SpectralEstimate {
        let op = FnOperator {
            dim: self.dim(),
            f: |x: &[f64], y: &mut [f64]| self.matvec(x, y),
        };
        spectral_radius(&op, false, tol, max_iter)
    }
}

/// Spectral norm of a symmetric operator: dense eigensolver up to
/// [`DENSE_NORM_LIMIT`], Lanczos beyond.
fn symmetric_norm(op: &dyn LinearOperator) -> (f64, usize, bool) {
    let n = op.dim();
    if n == 0 {
        return (0.0, 0, true);
    }
    if n <= DENSE_NORM_LIMIT {
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        return (spectral_norm(&crate::linalg::symmetrize(&m)), n, true);
    }
    let e = lanczos_extremes(op, LANCZOS_STEPS, LANCZOS_TOL, RngSeed::new(0xb0b), &[]);
    (e.abs_max(), e.iterations, e.converged)
}

/// Outcome of comparing a measured spectral norm with `2√d(1+ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkSpectralReport {
    pub norm: f64,
    /// `2√d(1+ε)` before slack.
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
    pub max_degree: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn check_bulk_degree(bulk: &Graph, d: f64, epsilon: f64) -> Result<usize> {
    let max_degree = bulk.max_degree();
    if max_degree as f64 > (1.0 + epsilon) * d {
        return Err(Error::Precondition(format!(
            "bulk max degree {max_degree} exceeds (1+ε)d = {}",
            (1.0 + epsilon) * d
        )));
    }
    Ok(max_degree)
}

fn bulk_report(op: &dyn LinearOperator, max_degree: usize, d: f64, epsilon: f64, slack: f64) -> BulkSpectralReport {
    let (norm, iterations, converged) = symmetric_norm(op);
    let bound = 2.0 * d.sqrt() * (1.0 + epsilon);
    BulkSpectralReport {
        norm,
        bound,
        slack,
        pass: norm <= slack * bound,
        max_degree,
        iterations,
        converged,
    }
}

/// Norm of the weighted bulk adjacency against `slack · 2√d(1+ε)`.
pub fn bulk_spectral_check(bulk: &Graph, d: f64, epsilon: f64, slack: f64) -> Result<BulkSpectralReport> {
    let max_degree = check_bulk_degree(bulk, d, epsilon)?;
    Ok(bulk_report(bulk, max_degree, d, epsilon, slack))
}

/// Norm of the centered bulk adjacency `A − E[A | σ]` against the same bound.
pub fn centered_bulk_spectral_check(
    bulk: &Graph,
    labels: &CommunityLabels,
    d: f64,
    lambda: f64,
    epsilon: f64,
    slack: f64,
) -> Result<BulkSpectralReport> {
    let max_degree = check_bulk_degree(bulk, d, epsilon)?;
    let c = CenteredInteraction::new(bulk, labels, d, lambda, d.sqrt())?;
    let op = FnOperator {
        dim: c.n(),
        f: |x: &[f64], y: &mut [f64]| c.matvec(x, y),
    };
    Ok(bulk_report(&op, max_degree, d, epsilon, slack))
}

/// One distance `ℓ` of the trace-method comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceNormRow {
    pub ell: usize,
    pub norm_full: f64,
    pub norm_restricted: f64,
    pub norm_times_adjacency: f64,
    /// `D^{ℓ/2}(ℓ+1)Δ/D`.
    pub bound_full: f64,
    /// `D^{ℓ/2}(ℓ+1)`.
    pub bound_restricted: f64,
    /// `D^{ℓ/2}(ℓ+1)·2Δ/√D`.
    pub bound_times_adjacency: f64,
    /// `None` at `ℓ = 0`, where the full and product bounds are not claimed.
    pub pass_full: Option<bool>,
    pub pass_restricted: bool,
    pub pass_times_adjacency: Option<bool>,
}

impl DistanceNormRow {
    pub fn pass(&self) -> bool {
        self.pass_restricted && self.pass_full != Some(false) && self.pass_times_adjacency != Some(false)
    }
}

const NORM_RTOL: f64 = 1e-9;

fn general_norm(a: &CsrMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows() <= DENSE_NORM_LIMIT {
        return spectral_norm(&a.to_dense());
    }
    let n = a.nrows();
    let op = FnOperator {
        dim: n,
        f: |x: &[f64], y: &mut [f64]| {
            let mut t = vec![0.0; a.nrows()];
            a.matvec(x, &mut t);
            a.transpose_matvec(&t, y);
        },
    };
    let e = lanczos_extremes(&op, LANCZOS_STEPS, LANCZOS_TOL, RngSeed::new(0xb0b), &[]);
    e.max.max(0.0).sqrt()
}

/// Norms of the distance-`ℓ` matrices of a forest for `ℓ = 0..=ell_max`,
/// compared with the trace-method bounds for a `(Δ, D)`-pseudorandom tree
/// with distinguished set `s`.
pub fn distance_norm_check(
    tree: &Graph,
    s: &[usize],
    delta: f64,
    big_d: f64,
    ell_max: usize,
) -> Result<Vec<DistanceNormRow>> {
    require_forest(tree)?;
    let n = tree.n();
    if let Some(&v) = s.iter().find(|&&v| v >= n) {
        return Err(Error::VertexOutOfRange { vertex: v, n });
    }
    let adjacency = CsrMatrix::from_triplets(n, n, tree.edges().iter().flat_map(|e| [(e.u, e.v, 1.0), (e.v, e.u, 1.0)]).collect());
    let mut ws = BfsWorkspace::new(n);
    let mut by_ell: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); ell_max + 1];
    for v in 0..n {
        ws.run(tree, v, ell_max);
        for &u in ws.last_order() {
            by_ell[ws.dist(u)].push((v, u, 1.0));
        }
    }
    let mut keep = s.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let rows = by_ell
        .into_iter()
        .enumerate()
        .map(|(ell, trips)| {
            let a_ell = CsrMatrix::from_triplets(n, n, trips);
            let norm_full = symmetric_norm(&a_ell).0;
            let norm_restricted = symmetric_norm(&a_ell.principal_submatrix(&keep)).0;
            let norm_times_adjacency = general_norm(&a_ell.matmul(&adjacency));
            let base = big_d.powf(ell as f64 / 2.0) * (ell + 1) as f64;
            let bound_full = base * delta / big_d;
            let bound_restricted = base;
            let bound_times_adjacency = base * 2.0 * delta / big_d.sqrt();
            let within = |v: f64, b: f64| v <= b * (1.0 + NORM_RTOL);
            DistanceNormRow {
                ell,
                norm_full,
                norm_restricted,
                norm_times_adjacency,
                bound_full,
                bound_restricted,
                bound_times_adjacency,
                pass_full: (ell > 0).then(|| within(norm_full, bound_full)),
                pass_restricted: within(norm_restricted, bound_restricted),
                pass_times_adjacency: (ell > 0).then(|| within(norm_times_adjacency, bound_times_adjacency)),
            }
        })
        .collect();
    Ok(rows)
}

/// `C² = (1 − s₀²)·BH(−s₀)` on a forest, `s₀ = γ/√D`; entrywise
/// `diag = (deg − 1)s₀² + 1`, `offdiag = s₀·w`.
pub fn control_matrix_tree(tree: &Graph, gamma: f64, big_d: f64) -> Result<CsrMatrix> {
    require_forest(tree)?;
    if !(0.0..1.0).contains(&gamma) || !(big_d > 0.0) {
        return Err(Error::InvalidParameter(format!("need γ ∈ [0,1) and D > 0, got γ={gamma}, D={big_d}")));
    }
    let s0 = gamma / big_d.sqrt();
    let bh = bethe_hessian(tree, -s0)?;
    let scale = 1.0 - s0 * s0;
    let trips = bh.matrix.triplets().map(|(i, j, v)| (i, j, v * scale)).collect();
    Ok(CsrMatrix::from_triplets(tree.n(), tree.n(), trips))
}

/// PSD square root of a sparse symmetric matrix, eigenvalues clamped at
/// `1e−12`.
pub fn dense_sqrt(m: &CsrMatrix) -> Result<DMatrix<f64>> {
    if m.nrows() > DENSE_NORM_LIMIT {
        return Err(Error::TooLarge {
            what: "dense square root",
            size: m.nrows(),
            limit: DENSE_NORM_LIMIT,
        });
    }
    Ok(sym_sqrt(&m.to_dense(), 1e-12))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationNormReport {
    /// `‖C·Cov·C‖` for the zero-field model with uniform couplings `γ/√D`.
    pub value: f64,
    /// `1 + 8Δ/((1−γ)²D)`.
    pub bound: f64,
    pub pass: bool,
}

/// Weighted covariance norm along the annealing path on a forest.
pub fn localization_norm_tree_check(tree: &Graph, gamma: f64, big_d: f64, delta: f64) -> Result<LocalizationNormReport> {
    let c2 = control_matrix_tree(tree, gamma, big_d)?;
    let c = dense_sqrt(&c2)?;
    let coupling = gamma / big_d.sqrt();
    let uniform = tree.map_weights(|_| coupling)?;
    let cov = tree_covariance_closed_form(&uniform)?;
    let value = spectral_norm(&crate::linalg::symmetrize(&(&c * cov * &c)));
    let bound = 1.0 + 8.0 * delta / ((1.0 - gamma).powi(2) * big_d);
    Ok(LocalizationNormReport {
        value,
        bound,
        pass: value <= bound,
    })
}
