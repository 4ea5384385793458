//! Centered block-model interactions: a sparse part plus a rank-two correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{CommunityLabels, Graph};

/// Largest dimension for which a dense copy is ever built.
pub const DENSE_LIMIT: usize = 500;

/// `(β/√d)(A − (d/n)𝟙𝟙ᵀ − (λ√d/n)σσᵀ)` with zero diagonal, never stored densely.
///
/// The sparse part holds `(β/√d)·A`. The correction is `−a·𝟙𝟙ᵀ − b·σσᵀ` with
/// `a = βd/(n√d)` and `b = βλ/n`, with its diagonal removed.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredInteraction {
    sparse: Graph,
    sigma: CommunityLabels,
    scale: f64,
    a: f64,
    b: f64,
}

impl CenteredInteraction {
    pub fn new(g: &Graph, sigma: &CommunityLabels, d: f64, lambda: f64, beta: f64) -> Result<Self> {
        if g.n() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: g.n(),
                got: sigma.len(),
            });
        }
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("d must be positive, got {d}")));
        }
        let n = g.n() as f64;
        let scale = beta / d.sqrt();
        let sparse = if scale == 0.0 {
            Graph::empty(g.n())
        } else {
            g.scaled(scale)?
        };
        Ok(Self {
            sparse,
            sigma: sigma.clone(),
            scale,
            a: scale * d / n,
            b: scale * lambda * d.sqrt() / n,
        })
    }

    pub fn n(&self) -> usize {
        self.sparse.n()
    }

    /// Sparse part `(β/√d)·A`.
    pub fn sparse_part(&self) -> &Graph {
        &self.sparse
    }

    pub fn labels(&self) -> &CommunityLabels {
        &self.sigma
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Coefficients `(a, b)` of the rank-two correction.
    pub fn rank2_coefficients(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Off-diagonal entry; the diagonal is zero.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let s = f64::from(self.sigma.get(i) * self.sigma.get(j));
        self.sparse.weight(i, j).unwrap_or(0.0) - self.a - self.b * s
    }

    /// Contribution `Σ_{j≠i} J_ij x_j` given the cached sums
    /// `s1 = Σ x_j` and `s_sigma = Σ σ_j x_j`.
    pub fn row_dot_cached(&self, i: usize, x: &[i8], s1: i64, s_sigma: i64) -> f64 {
        let mut acc = 0.0;
        for (j, w) in self.sparse.neighbors(i) {
            acc += w * f64::from(x[j]);
        }
        let xi = i64::from(x[i]);
        let si = i64::from(self.sigma.get(i));
        acc - self.a * (s1 - xi) as f64 - self.b * si as f64 * (s_sigma - si * xi) as f64
    }

    /// `y = J x` in `O(m + n)`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.sparse.adjacency_matvec(x, y);
        let s1: f64 = x.iter().sum();
        let ss: f64 = x
            .iter()
            .zip(self.sigma.as_slice())
            .map(|(v, &s)| v * f64::from(s))
            .sum();
        for i in 0..self.n() {
            let si = f64::from(self.sigma.get(i));
            y[i] -= self.a * (s1 - x[i]) + self.b * si * (ss - si * x[i]);
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                what: "dense centered interaction",
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.entry(i, j)))
    }
}
