//! Linear operators, Lanczos and power iteration, and small dense helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::rng::RngSeed;
use crate::sparse::CsrMatrix;

/// Square operator exposing only `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
}

/// Weighted adjacency of a graph.
impl LinearOperator for Graph {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.adjacency_matvec(x, y)
    }
}

/// Adapter turning a closure into an operator.
pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Dominant-modulus estimate with its convergence record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Extreme eigenvalues of a symmetric operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Extremes {
    pub fn abs_max(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn random_unit(n: usize, seed: RngSeed, deflate: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut rng = seed.rng();
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for _ in 0..2 {
        for q in deflate {
            let c = dot(&v, q);
            axpy(-c, q, &mut v);
        }
    }
    let nv = norm(&v);
    if nv < 1e-300 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    Some(v)
}

/// Lanczos with full reorthogonalization for the extreme eigenvalues of a
/// symmetric operator, optionally restricted to the orthogonal complement of
/// the orthonormal vectors in `deflate`.
pub fn lanczos_extremes(
    op: &dyn LinearOperator,
    max_steps: usize,
    tol: f64,
    seed: RngSeed,
    deflate: &[Vec<f64>],
) -> Extremes {
    let n = op.dim();
    let room = n.saturating_sub(deflate.len());
    let Some(mut v) = random_unit(n, seed, deflate).filter(|_| room > 0) else {
        return Extremes {
            min: 0.0,
            max: 0.0,
            iterations: 0,
            converged: true,
        };
    };
    let steps = max_steps.min(room).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut w = vec![0.0; n];
    let mut result = Extremes {
        min: 0.0,
        max: 0.0,
        iterations: 0,
        converged: false,
    };
    for k in 0..steps {
        op.apply(&v, &mut w);
        let alpha = dot(&w, &v);
        axpy(-alpha, &v, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-betas[k - 1], prev, &mut w);
        }
        basis.push(std::mem::take(&mut v));
        alphas.push(alpha);
        for _ in 0..2 {
            for q in basis.iter().chain(deflate) {
                let c = dot(&w, q);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm(&w);
        let m = k + 1;
        let check = m % 5 == 0 || m == steps || beta < 1e-300;
        if check {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j || j + 1 == i {
                    betas[i.min(j)]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (imin, imax) = argminmax(eig.eigenvalues.as_slice());
            let lo = eig.eigenvalues[imin];
            let hi = eig.eigenvalues[imax];
            let scale = lo.abs().max(hi.abs()).max(1e-300);
            let r_lo = (beta * eig.eigenvectors[(m - 1, imin)]).abs();
            let r_hi = (beta * eig.eigenvectors[(m - 1, imax)]).abs();
            result = Extremes {
                min: lo,
                max: hi,
                iterations: m,
                converged: r_lo <= tol * scale && r_hi <= tol * scale,
            };
            if result.converged || beta <= 1e-12 * scale {
                result.converged = true;
                return result;
            }
        }
        betas.push(beta);
        v = w.iter().map(|x| x / beta).collect();
    }
    result
}

fn argminmax(xs: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[lo] {
            lo = i;
        }
        if x > xs[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Spectral radius estimate.
///
/// Symmetric operators use Lanczos extremes. Nonsymmetric ones use power
/// iteration with the two-step growth ratio `sqrt(|A²x|/|x|)`, which also
/// settles when the dominant eigenvalues come in a `±ρ` pair.
pub fn spectral_radius(op: &dyn LinearOperator, symmetric: bool, tol: f64, max_iter: usize) -> SpectralEstimate {
    if symmetric {
        let e = lanczos_extremes(op, max_iter, tol, RngSeed::new(0x5eed), &[]);
        return SpectralEstimate {
            value: e.abs_max(),
            iterations: e.iterations,
            converged: e.converged,
        };
    }
    let n = op.dim();
    if n == 0 {
        return SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = RngSeed::new(0x5eed).rng();
    let mut x: Vec<f64> = (0..n).map(|_| 1.0 + rng.gen::<f64>()).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut prev = f64::NAN;
    for it in 1..=max_iter {
        op.apply(&x, &mut y);
        op.apply(&y, &mut z);
        let nz = norm(&z);
        if nz == 0.0 {
            return SpectralEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        let r = nz.sqrt();
        z.iter().zip(x.iter_mut()).for_each(|(zi, xi)| *xi = zi / nz);
        if (r - prev).abs() <= tol * r {
            return SpectralEstimate {
                value: r,
                iterations: it,
                converged: true,
            };
        }
        prev = r;
    }
    SpectralEstimate {
        value: prev,
        iterations: max_iter,
        converged: false,
    }
}

/// `(λ_min, λ_max)` of a dense symmetric matrix.
pub fn sym_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let (lo, hi) = argminmax(eig.eigenvalues.as_slice());
    (eig.eigenvalues[lo], eig.eigenvalues[hi])
}

/// Operator 2-norm of a dense matrix (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.is_square() && (m - m.transpose()).abs().max() == 0.0 {
        let (lo, hi) = sym_extremes(m);
        return lo.abs().max(hi.abs());
    }
    m.singular_values().max()
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// PSD square root with eigenvalues below `clamp` raised to `clamp`.
pub fn sym_sqrt(m: &DMatrix<f64>, clamp: f64) -> DMatrix<f64> {
    sym_apply(m, |l| l.max(clamp).sqrt())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let id = CsrMatrix::identity(7);
        let est = spectral_radius(&id, true, 1e-10, 100);
        assert!((est.value - 1.0).abs() < 1e-12 && est.converged);
        let d = CsrMatrix::from_diagonal(&[3.0, -5.0]);
        let est = spectral_radius(&d, true, 1e-10, 100);
        assert!((est.value - 5.0).abs() < 1e-12);
        let e = lanczos_extremes(&d, 10, 1e-10, RngSeed::new(1), &[]);
        assert!((e.min + 5.0).abs() < 1e-12 && (e.max - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonsymmetric_power_iteration() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let est = spectral_radius(&m, false, 1e-12, 10_000);
        assert!((est.value - 2.0).abs() < 1e-8);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(spectral_radius(&nil, false, 1e-12, 10).value, 0.0);
    }

    #[test]
    fn deflation_skips_known_vector() {
        let d = CsrMatrix::from_diagonal(&[1.0, 0.5, 0.25]);
        let e = lanczos_extremes(&d, 10, 1e-12, RngSeed::new(4), &[vec![1.0, 0.0, 0.0]]);
        assert!((e.max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = sym_sqrt(&m, 1e-12);
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }
}
