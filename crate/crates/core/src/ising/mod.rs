//! Ising models `μ(x) ∝ exp(½xᵀJx + ⟨h,x⟩)` on `{±1}ⁿ`.

mod gauge;
mod glauber;
mod oracle;
mod tree;

pub use gauge::{forest_gauge, gauge_transform, spanning_gauge, tree_gauge};
pub use glauber::{
    block_glauber_step, conditional_field, glauber_step, heat_bath_plus, run_chain, run_chains, BlockPartition,
    ChainTrace, Observation, Observers,
};
pub use oracle::{
    enumerate_log_weights, spin_at, state_index, tv_distance, ExactOracle, TransitionMatrix, CHAIN_LIMIT,
    ORACLE_LIMIT,
};
pub use tree::tree_covariance_closed_form;

use nalgebra::DMatrix;
use rand::Rng;

use crate::centered::CenteredInteraction;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest dimension for which a dense interaction matrix is materialized.
pub const DENSE_COUPLING_LIMIT: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub enum Interaction {
    /// Weighted edges of a sparse graph; zero diagonal.
    Sparse(Graph),
    /// Centered block-model interaction; zero diagonal.
    Centered(CenteredInteraction),
    /// Symmetric dense matrix. The diagonal only shifts `log Z`.
    Dense(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    interaction: Interaction,
    field: Vec<f64>,
}

impl IsingModel {
    pub fn new(interaction: Interaction, field: Vec<f64>) -> Result<Self> {
        let n = match &interaction {
            Interaction::Sparse(g) => g.n(),
            Interaction::Centered(c) => c.n(),
            Interaction::Dense(j) => {
                if !j.is_square() {
                    return Err(Error::DimensionMismatch {
                        expected: j.nrows(),
                        got: j.ncols(),
                    });
                }
                if j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite interaction entry".into()));
                }
                let asym = (j - j.transpose()).abs().max();
                if asym > 1e-12 * (1.0 + j.abs().max()) {
                    return Err(Error::InvalidParameter(format!("interaction not symmetric ({asym:e})")));
                }
                j.nrows()
            }
        };
        if field.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: field.len(),
            });
        }
        if field.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter("non-finite external field".into()));
        }
        Ok(Self { interaction, field })
    }

    pub fn sparse(g: Graph, field: Vec<f64>) -> Result<Self> {
        Self::new(Interaction::Sparse(g), field)
    }

    pub fn centered(c: CenteredInteraction, field: Vec<f64>) -> Result<Self> {
        Self::new(Interaction::Centered(c), field)
    }

    pub fn dense(j: DMatrix<f64>, field: Vec<f64>) -> Result<Self> {
        Self::new(Interaction::Dense(j), field)
    }

    pub fn n(&self) -> usize {
        self.field.len()
    }

    pub fn interaction(&self) -> &Interaction {
        &self.interaction
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn with_field(&self, field: Vec<f64>) -> Result<Self> {
        Self::new(self.interaction.clone(), field)
    }

    /// Community labels when the interaction is centered.
    pub fn labels(&self) -> Option<&[i8]> {
        match &self.interaction {
            Interaction::Centered(c) => Some(c.labels().as_slice()),
            _ => None,
        }
    }

    /// `J_ij`, including the diagonal for dense interactions.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        match &self.interaction {
            Interaction::Sparse(g) => {
                if i == j {
                    0.0
                } else {
                    g.weight(i, j).unwrap_or(0.0)
                }
            }
            Interaction::Centered(c) => c.entry(i, j),
            Interaction::Dense(m) => m[(i, j)],
        }
    }

    pub fn coupling_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        match &self.interaction {
            Interaction::Dense(m) => Ok(m.clone()),
            Interaction::Centered(c) => c.to_dense(),
            Interaction::Sparse(g) => {
                if n > DENSE_COUPLING_LIMIT {
                    return Err(Error::TooLarge {
                        what: "dense coupling matrix",
                        size: n,
                        limit: DENSE_COUPLING_LIMIT,
                    });
                }
                Ok(g.to_dense())
            }
        }
    }

    /// `y = J x` (diagonal included for dense interactions).
    pub fn interaction_matvec(&self, x: &[f64], y: &mut [f64]) {
        match &self.interaction {
            Interaction::Sparse(g) => g.adjacency_matvec(x, y),
            Interaction::Centered(c) => c.matvec(x, y),
            Interaction::Dense(m) => {
                let v = m * nalgebra::DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            }
        }
    }

    /// `h_i + Σ_{j≠i} J_ij x_j`.
    pub fn local_field(&self, i: usize, state: &SpinConfig) -> f64 {
        let x = state.spins();
        let inner = match &self.interaction {
            Interaction::Sparse(g) => g.neighbors(i).map(|(j, w)| w * f64::from(x[j])).sum(),
            Interaction::Centered(c) => {
                let s_sigma = state
                    .label_sum
                    .unwrap_or_else(|| overlap_sum(x, c.labels().as_slice()));
                c.row_dot_cached(i, x, state.sum, s_sigma)
            }
            Interaction::Dense(m) => (0..self.n())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)] * f64::from(x[j]))
                .sum(),
        };
        self.field[i] + inner
    }

    /// `½xᵀJx + ⟨h,x⟩`, the unnormalized log-probability (diagonal included).
    pub fn log_weight(&self, x: &[i8]) -> f64 {
        let xf: Vec<f64> = x.iter().map(|&s| f64::from(s)).collect();
        let mut jx = vec![0.0; x.len()];
        self.interaction_matvec(&xf, &mut jx);
        let quad: f64 = xf.iter().zip(&jx).map(|(a, b)| a * b).sum();
        let lin: f64 = xf.iter().zip(&self.field).map(|(a, b)| a * b).sum();
        0.5 * quad + lin
    }

    /// Spin configuration with the caches this model needs.
    pub fn state(&self, spins: Vec<i8>) -> Result<SpinConfig> {
        let mut s = SpinConfig::new(spins)?;
        if s.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: s.len(),
            });
        }
        if let Some(l) = self.labels() {
            s.attach_labels(l);
        }
        Ok(s)
    }

    pub fn random_state<R: Rng>(&self, rng: &mut R) -> SpinConfig {
        let spins = (0..self.n()).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        self.state(spins).expect("valid random spins")
    }
}

fn overlap_sum(x: &[i8], labels: &[i8]) -> i64 {
    x.iter().zip(labels).map(|(&a, &b)| i64::from(a * b)).sum()
}

/// Spins in `{±1}ⁿ` with cached `Σx_i` and, for centered models, `Σσ_i x_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
    sum: i64,
    label_sum: Option<i64>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!("spin {i} is {}, expected ±1", spins[i])));
        }
        let sum = spins.iter().map(|&s| i64::from(s)).sum();
        Ok(Self {
            spins,
            sum,
            label_sum: None,
        })
    }

    pub fn all_plus(n: usize) -> Self {
        Self::new(vec![1; n]).unwrap()
    }

    pub fn all_minus(n: usize) -> Self {
        Self::new(vec![-1; n]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, i: usize) -> i8 {
        self.spins[i]
    }

    /// Cached `Σ x_i`.
    pub fn sum(&self) -> i64 {
        self.sum
    }

    /// Cached `Σ σ_i x_i` when labels are attached.
    pub fn label_sum(&self) -> Option<i64> {
        self.label_sum
    }

    pub fn attach_labels(&mut self, labels: &[i8]) {
        self.label_sum = Some(overlap_sum(&self.spins, labels));
    }

    /// Sets spin `i`, keeping the caches exact.
    pub fn set(&mut self, i: usize, s: i8, labels: Option<&[i8]>) {
        let old = self.spins[i];
        if old == s {
            return;
        }
        self.spins[i] = s;
        let delta = i64::from(s - old);
        self.sum += delta;
        if let (Some(ls), Some(l)) = (self.label_sum.as_mut(), labels) {
            *ls += delta * i64::from(l[i]);
        }
    }

    /// Whether the caches equal freshly recomputed sums.
    pub fn caches_consistent(&self, labels: Option<&[i8]>) -> bool {
        let sum: i64 = self.spins.iter().map(|&s| i64::from(s)).sum();
        let lab_ok = match (self.label_sum, labels) {
            (Some(c), Some(l)) => c == overlap_sum(&self.spins, l),
            (None, _) => true,
            (Some(_), None) => false,
        };
        sum == self.sum && lab_ok
    }
}
