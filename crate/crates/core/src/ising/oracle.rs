//! Exhaustive enumeration over `{±1}ⁿ` for small models.
//!
//! State `s` encodes spin `i` as `+1` when bit `i` is set.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::IsingModel;
use crate::error::{Error, Result};

/// Largest `n` for distribution tables and covariances.
pub const ORACLE_LIMIT: usize = 20;
/// Largest `n` for explicit transition matrices.
pub const CHAIN_LIMIT: usize = 12;

#[inline]
pub fn spin_at(state: usize, i: usize) -> f64 {
    if state >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn state_index(spins: &[i8]) -> usize {
    spins
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .fold(0, |acc, (i, _)| acc | 1 << i)
}

fn exact_log_weight(j: &DMatrix<f64>, h: &[f64], state: usize) -> f64 {
    let n = h.len();
    let mut lw = 0.0;
    for i in 0..n {
        let xi = spin_at(state, i);
        lw += h[i] * xi + 0.5 * j[(i, i)];
        for k in i + 1..n {
            lw += j[(i, k)] * xi * spin_at(state, k);
        }
    }
    lw
}

/// `½xᵀJx + ⟨h,x⟩` for every state, indexed by state bits.
///
/// States are visited in Gray-code order so each step flips one spin and
/// costs `O(n)`; the running value is re-anchored every 4096 steps.
pub fn enumerate_log_weights(j: &DMatrix<f64>, h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let total = 1usize << n;
    let mut out = vec![0.0; total];
    let mut state = 0usize;
    let mut fields: Vec<f64> = (0..n)
        .map(|i| h[i] - (0..n).filter(|&k| k != i).map(|k| j[(i, k)]).sum::<f64>())
        .collect();
    let mut lw = exact_log_weight(j, h, 0);
    out[0] = lw;
    for step in 1..total {
        let i = step.trailing_zeros() as usize;
        let old = spin_at(state, i);
        lw -= 2.0 * old * fields[i];
        state ^= 1 << i;
        let new = -old;
        for (k, f) in fields.iter_mut().enumerate() {
            if k != i {
                *f += 2.0 * j[(k, i)] * new;
            }
        }
        if step % 4096 == 0 {
            lw = exact_log_weight(j, h, state);
        }
        out[state] = lw;
    }
    out
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Full distribution, moments and `log Z` of a model with `n ≤ 20`.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    n: usize,
    log_z: f64,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

impl ExactOracle {
    pub fn build(model: &IsingModel) -> Result<Self> {
        let n = model.n();
        if n > ORACLE_LIMIT {
            return Err(Error::TooLarge {
                what: "exact oracle",
                size: n,
                limit: ORACLE_LIMIT,
            });
        }
        let j = model.coupling_matrix()?;
        Ok(Self::from_parts(&j, model.field()))
    }

    pub(crate) fn from_parts(j: &DMatrix<f64>, h: &[f64]) -> Self {
        let n = h.len();
        let log_weights = enumerate_log_weights(j, h);
        let log_z = log_sum_exp(&log_weights);
        let probs: Vec<f64> = log_weights.iter().map(|lw| (lw - log_z).exp()).collect();
        let (mean, second) = moments(n, &probs);
        let mut cov = second;
        for a in 0..n {
            for b in 0..n {
                cov[(a, b)] -= mean[a] * mean[b];
            }
        }
        Self {
            n,
            log_z,
            log_weights,
            probs,
            mean,
            cov,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn prob(&self, spins: &[i8]) -> f64 {
        self.probs[state_index(spins)]
    }

    /// `E[x_i]`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `P(x_i = +1)`.
    pub fn marginals_plus(&self) -> Vec<f64> {
        self.mean.iter().map(|m| 0.5 * (1.0 + m)).collect()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest state probability.
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Heat-bath Glauber kernel, `n ≤ 12`.
    pub fn transition_matrix(&self) -> Result<TransitionMatrix> {
        TransitionMatrix::from_log_weights(self.n, &self.log_weights)
    }
}

/// Means and raw second moments `E[x_a x_b]`.
fn moments(n: usize, probs: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    const CHUNK: usize = 1 << 12;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = probs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut m = vec![0.0; n];
            let mut s = vec![0.0; n * n];
            let mut x = vec![0.0; n];
            for (k, &p) in chunk.iter().enumerate() {
                let state = c * CHUNK + k;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = spin_at(state, i);
                }
                for a in 0..n {
                    let pa = p * x[a];
                    m[a] += pa;
                    for b in a + 1..n {
                        s[a * n + b] += pa * x[b];
                    }
                }
            }
            (m, s)
        })
        .collect();
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::identity(n, n);
    for (m, s) in partials {
        for a in 0..n {
            mean[a] += m[a];
            for b in a + 1..n {
                second[(a, b)] += s[a * n + b];
            }
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            second[(b, a)] = second[(a, b)];
        }
    }
    (mean, second)
}

/// Heat-bath single-site kernel stored row-sparse: `n` flip entries plus the
/// holding probability per state.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    n: usize,
    flip: Vec<f64>,
    stay: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_log_weights(n: usize, log_weights: &[f64]) -> Result<Self> {
        if n > CHAIN_LIMIT {
            return Err(Error::TooLarge {
                what: "transition matrix",
                size: n,
                limit: CHAIN_LIMIT,
            });
        }
        let dim = 1usize << n;
        let mut flip = vec![0.0; dim * n];
        let mut stay = vec![0.0; dim];
        let inv_n = 1.0 / n.max(1) as f64;
        for s in 0..dim {
            let mut out = 0.0;
            for i in 0..n {
                let t = s ^ (1 << i);
                let p = inv_n / (1.0 + (log_weights[s] - log_weights[t]).exp());
                flip[s * n + i] = p;
                out += p;
            }
            stay[s] = 1.0 - out;
        }
        Ok(Self { n, flip, stay })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.stay.len()
    }

    /// `P(x, y)`.
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.stay[x];
        }
        let diff = x ^ y;
        if diff.count_ones() == 1 {
            self.flip[x * self.n + diff.trailing_zeros() as usize]
        } else {
            0.0
        }
    }

    /// Row vector times kernel: `(pP)(y) = Σ_x p(x) P(x, y)`.
    pub fn step(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..self.dim())
            .map(|y| {
                let mut acc = p[y] * self.stay[y];
                for i in 0..n {
                    let x = y ^ (1 << i);
                    acc += p[x] * self.flip[x * n + i];
                }
                acc
            })
            .collect()
    }

    /// `max |π(x)P(x,y) − π(y)P(y,x)|` over all pairs.
    pub fn detailed_balance_residual(&self, pi: &[f64]) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for x in 0..self.dim() {
            for i in 0..n {
                let y = x ^ (1 << i);
                let r = pi[x] * self.flip[x * n + i] - pi[y] * self.flip[y * n + i];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// `max |πP − π|`.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        self.step(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `y = D^{1/2} P D^{−1/2} x` with `D = diag(π)`, symmetric for reversible `P`.
    pub fn symmetrized_apply(&self, sqrt_pi: &[f64], x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for s in 0..self.dim() {
            let mut acc = self.stay[s] * x[s];
            for i in 0..n {
                let t = s ^ (1 << i);
                acc += sqrt_pi[s] * self.flip[s * n + i] / sqrt_pi[t] * x[t];
            }
            y[s] = acc;
        }
    }
}

/// `½ Σ |p − q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    for t in [p, q] {
        let total: f64 = t.iter().sum();
        if (total - 1.0).abs() > 1e-9 || t.iter().any(|&v| v < -1e-12) {
            return Err(Error::NotNormalized(total));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn single_free_spin() {
        let m = IsingModel::sparse(Graph::empty(1), vec![0.0]).unwrap();
        let o = ExactOracle::build(&m).unwrap();
        assert!((o.log_z() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(o.mean(), &[0.0]);
        assert!((o.covariance()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_spin_partition_function() {
        let beta = 0.7f64;
        let g = Graph::from_edges(2, [(0, 1, beta)]).unwrap();
        let o = ExactOracle::build(&IsingModel::sparse(g, vec![0.0; 2]).unwrap()).unwrap();
        let z = 2.0 * beta.exp() + 2.0 * (-beta).exp();
        assert!((o.log_z() - z.ln()).abs() < 1e-14);
        assert!((o.covariance()[(0, 1)] - beta.tanh()).abs() < 1e-14);
    }

    #[test]
    fn gray_code_matches_direct() {
        let n = 7;
        let j = DMatrix::from_fn(n, n, |a, b| ((a * 7 + b * 7 + a * b) % 5) as f64 * 0.1 - 0.2);
        let j = (&j + j.transpose()) * 0.5;
        let h: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.3).collect();
        let lw = enumerate_log_weights(&j, &h);
        for s in 0..1 << n {
            assert!((lw[s] - exact_log_weight(&j, &h, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(tv_distance(&[0.5, 0.4], &[0.5, 0.5]), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn state_index_round_trip() {
        let spins = [1i8, -1, -1, 1, 1];
        let s = state_index(&spins);
        for (i, &x) in spins.iter().enumerate() {
            assert_eq!(spin_at(s, i), f64::from(x));
        }
    }
}
