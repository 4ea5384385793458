//! Gaussian (Hubbard–Stratonovich) decomposition of Ising measures, control
//! matrices for the bulk annealing path, and covariance diagnostics along it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::ExcisionResult;
use crate::diagnostics::mc_covariance;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ising::{enumerate_log_weights, spin_at, ExactOracle, IsingModel, SpinConfig, ORACLE_LIMIT};
use crate::linalg::{lanczos_extremes, spectral_norm, sym_extremes, sym_sqrt, symmetrize, FnOperator};
use crate::rng::{RngSeed, SimRng};
use crate::sparse::CsrMatrix;

/// Eigenvalues at or below this are treated as the kernel.
pub const EIGEN_CLAMP: f64 = 1e-12;
/// Tolerance on negative eigenvalues when testing positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Largest model for the mixture and path checks.
pub const MIXTURE_LIMIT: usize = 14;

/// Inputs of the control matrix and the parameter condition it relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Path time in `[0, 1]`.
    pub t: f64,
    pub eta: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub d: f64,
    /// Near-forest coupling scale: interactions lie in `[−γ/√D, γ/√D]`.
    pub gamma: f64,
    pub big_d: f64,
    /// Pseudorandomness constant of the near-forest.
    pub big_delta: f64,
    /// Margin in `K·f(γ) ≤ 1 − δ`.
    pub delta: f64,
    /// Turn a failed parameter condition into an error.
    pub strict: bool,
}

impl ControlParams {
    /// Defaults tied to `(d, ε, β)`: `D = d(1+ε)`, `γ = β√(1+ε)` (so that
    /// `β/√d = γ/√D`), `η = 0.01`, `δ = 0.05`, `Δ = 1`, `t = 0`.
    pub fn new(d: f64, epsilon: f64, beta: f64) -> Self {
        Self {
            t: 0.0,
            eta: 0.01,
            beta,
            epsilon,
            d,
            gamma: beta * (1.0 + epsilon).sqrt(),
            big_d: d * (1.0 + epsilon),
            big_delta: 1.0,
            delta: 0.05,
            strict: false,
        }
    }

    /// `e^{2γ/√D}/(1−γ)²`.
    pub fn f_gamma(&self) -> f64 {
        (2.0 * self.gamma / self.big_d.sqrt()).exp() / (1.0 - self.gamma).powi(2)
    }

    /// `K = η + 4β(1+ε)`.
    pub fn k(&self) -> f64 {
        self.eta + 4.0 * self.beta * (1.0 + self.epsilon)
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta / 2.0
    }

    /// `ρ = D / (2 f(γ) (1 + 1/δ′))`.
    pub fn rho(&self) -> f64 {
        self.big_d / (2.0 * self.f_gamma() * (1.0 + 1.0 / self.delta_prime()))
    }

    /// Bulk diagonal shift `t/2 + η + 2β(1+ε)`.
    pub fn theta(&self) -> f64 {
        self.t / 2.0 + self.eta + 2.0 * self.beta * (1.0 + self.epsilon)
    }

    /// Whether `K·f(γ) ≤ 1 − δ`.
    pub fn condition_holds(&self) -> bool {
        self.gamma < 1.0 && self.k() * self.f_gamma() <= 1.0 - self.delta
    }

    fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.t)
            && self.eta >= 0.0
            && self.beta >= 0.0
            && self.epsilon > 0.0
            && self.d > 0.0
            && (0.0..1.0).contains(&self.gamma)
            && self.big_d > 0.0
            && self.big_delta > 0.0
            && self.delta > 0.0
            && self.delta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid control parameters {self:?}")))
        }
    }
}

/// Closed-form largest `β` for which the parameter condition can be met as
/// `η, δ → 0`: `min{1, (1 + 2e^{2/√d} − √(4e^{4/√d} + 4e^{2/√d}))/(1+ε)}`.
pub fn beta_threshold(d: f64, epsilon: f64) -> f64 {
    let e = (2.0 / d.sqrt()).exp();
    let v = (1.0 + 2.0 * e - (4.0 * e * e + 4.0 * e).sqrt()) / (1.0 + epsilon);
    v.min(1.0)
}

/// `M₁ = (1−t)J_B + θ·I_B + (ρ/Δ)·I_{H∖∂H}` with the parameters it was built
/// from. Every vertex outside the near-forest interior counts as bulk.
#[derive(Clone, Debug)]
pub struct ControlMatrix {
    pub matrix: CsrMatrix,
    pub params: ControlParams,
    pub rho: f64,
    pub theta: f64,
    pub k: f64,
    pub condition_value: f64,
    pub condition_holds: bool,
}

impl ControlMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Smallest eigenvalue: dense up to 500 dimensions, Lanczos beyond.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.n() <= 500 {
            return sym_extremes(&self.to_dense()).0;
        }
        let op = FnOperator {
            dim: self.n(),
            f: |x: &[f64], y: &mut [f64]| self.matrix.matvec(x, y),
        };
        lanczos_extremes(&op, 300, 1e-8, RngSeed::new(0xc0), &[]).min
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL
    }
}

/// Assembles the control matrix from a bulk interaction and an interior mask.
pub fn control_matrix_from_parts(j_bulk: &Graph, interior: &[bool], params: &ControlParams) -> Result<ControlMatrix> {
    params.validate()?;
    let n = j_bulk.n();
    if interior.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: interior.len(),
        });
    }
    let condition_value = params.k() * params.f_gamma();
    let condition_holds = params.condition_holds();
    if !condition_holds {
        let msg = format!(
            "K·f(γ) = {condition_value:.4} exceeds 1 − δ = {:.4} at β = {}",
            1.0 - params.delta,
            params.beta
        );
        if params.strict {
            return Err(Error::Precondition(msg));
        }
        log::warn!("{msg}");
    }
    let (rho, theta) = (params.rho(), params.theta());
    let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(n + j_bulk.num_arcs());
    for v in 0..n {
        let diag = if interior[v] { rho / params.big_delta } else { theta };
        trips.push((v, v, diag));
        if params.t < 1.0 {
            for (u, w) in j_bulk.neighbors(v) {
                trips.push((v, u, (1.0 - params.t) * w));
            }
        }
    }
    Ok(ControlMatrix {
        matrix: CsrMatrix::from_triplets(n, n, trips),
        params: params.clone(),
        rho,
        theta,
        k: params.k(),
        condition_value,
        condition_holds,
    })
}

/// Control matrix on an excision, with the bulk interaction `j_bulk` given
/// on the full vertex set.
pub fn build_control_matrix(excision: &ExcisionResult, j_bulk: &Graph, params: &ControlParams) -> Result<ControlMatrix> {
    if j_bulk.n() != excision.n() {
        return Err(Error::DimensionMismatch {
            expected: excision.n(),
            got: j_bulk.n(),
        });
    }
    control_matrix_from_parts(j_bulk, &excision.interior_mask(), params)
}

/// A draw `z` of the Gaussian-smoothed configuration and the Ising model
/// `μ_{J−C, Cz+h}` it selects.
#[derive(Clone, Debug)]
pub struct HsSample {
    pub z: Vec<f64>,
    pub conditional: IsingModel,
}

/// `μ_{J,h} = E_z μ_{J−C, Cz+h}` with `z = x + C^{−1/2}g`, `x ∼ μ_{J,h}` and `g`
/// standard normal on the range of `C`.
#[derive(Clone, Debug)]
pub struct HsDecomposition {
    field: Vec<f64>,
    c: DMatrix<f64>,
    /// `C^{−1/2}` on the range of `C`, zero on its kernel.
    noise: DMatrix<f64>,
    reduced: DMatrix<f64>,
}

fn psd_parts(c: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(symmetrize(c));
    let scale = 1.0 + eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if c.nrows() > 0 && min < -PSD_TOL * scale {
        return Err(Error::NotPsd(min));
    }
    Ok(eig)
}

impl HsDecomposition {
    pub fn new(model: &IsingModel, c: &DMatrix<f64>) -> Result<Self> {
        let n = model.n();
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.nrows(),
            });
        }
        let eig = psd_parts(c)?;
        let inv_sqrt = DVector::from_iterator(
            n,
            eig.eigenvalues
                .iter()
                .map(|&l| if l > EIGEN_CLAMP { 1.0 / l.sqrt() } else { 0.0 }),
        );
        let noise = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        let j = model.coupling_matrix()?;
        Ok(Self {
            field: model.field().to_vec(),
            reduced: j - c,
            c: c.clone(),
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.field.len()
    }

    pub fn control(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `J − C`.
    pub fn reduced_interaction(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// `C^{−1/2}` restricted to the range of `C`.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise
    }

    /// `h + C z`.
    pub fn conditional_field(&self, z: &[f64]) -> Vec<f64> {
        let cz = &self.c * DVector::from_column_slice(z);
        self.field.iter().zip(cz.iter()).map(|(h, v)| h + v).collect()
    }

    pub fn conditional(&self, z: &[f64]) -> Result<IsingModel> {
        IsingModel::dense(self.reduced.clone(), self.conditional_field(z))
    }

    /// `z = x + C^{−1/2} g`.
    pub fn smooth<R: Rng>(&self, x: &[i8], rng: &mut R) -> Vec<f64> {
        let g = DVector::from_iterator(self.n(), (0..self.n()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise = &self.noise * g;
        x.iter().zip(noise.iter()).map(|(&s, e)| f64::from(s) + e).collect()
    }

    pub fn sample<R: Rng>(&self, x: &SpinConfig, rng: &mut R) -> Result<HsSample> {
        let z = self.smooth(x.spins(), rng);
        let conditional = self.conditional(&z)?;
        Ok(HsSample { z, conditional })
    }
}

/// One decomposition draw from a fixed configuration `x`.
pub fn hs_sample(model: &IsingModel, c: &DMatrix<f64>, x: &SpinConfig, rng: &mut SimRng) -> Result<HsSample> {
    HsDecomposition::new(model, c)?.sample(x, rng)
}

/// Index of the first cumulative weight exceeding `u`.
fn draw_state(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

fn split_draws(total: usize, chunks: usize) -> Vec<usize> {
    (0..chunks)
        .map(|k| total / chunks + usize::from(k < total % chunks))
        .collect()
}

const CHUNKS: usize = 64;

/// Per-state comparison of the Monte Carlo mixture with the exact table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub draws: usize,
    pub exact: Vec<f64>,
    pub mixture: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Largest `|mixture − exact| / std_err` over states.
    pub max_z: f64,
    pub worst_state: usize,
    pub sigmas: f64,
    pub pass: bool,
}

/// Averages the conditional tables `μ_{J−C, Cz+h}` over `draws` draws of `z`
/// and compares each state with `μ_{J,h}` at `sigmas` standard errors.
pub fn hs_mixture_check(
    model: &IsingModel,
    c: &DMatrix<f64>,
    draws: usize,
    sigmas: f64,
    seed: RngSeed,
) -> Result<MixtureReport> {
    let n = model.n();
    if n > MIXTURE_LIMIT {
        return Err(Error::TooLarge {
            what: "mixture check",
            size: n,
            limit: MIXTURE_LIMIT,
        });
    }
    if draws < 2 {
        return Err(Error::InvalidParameter("mixture check needs at least 2 draws".into()));
    }
    let hs = HsDecomposition::new(model, c)?;
    let oracle = ExactOracle::build(model)?;
    let cdf = cumulative(oracle.probs());
    let dim = 1usize << n;
    let base_log = enumerate_log_weights(hs.reduced_interaction(), model.field());
    let top = base_log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base: Vec<f64> = base_log.iter().map(|l| (l - top).exp()).collect();

    let partials: Vec<(Vec<f64>, Vec<f64>)> = split_draws(draws, CHUNKS)
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = seed.derive(k as u64).rng();
            let mut sum = vec![0.0; dim];
            let mut sumsq = vec![0.0; dim];
            let mut table = vec![0.0; dim];
            let mut x = vec![0i8; n];
            for _ in 0..count {
                let s = draw_state(&cdf, rng.gen::<f64>());
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = spin_at(s, i) as i8;
                }
                let z = hs.smooth(&x, &mut rng);
                let w = &hs.c * DVector::from_column_slice(&z);
                table[0] = 1.0;
                for (i, &wi) in w.iter().enumerate() {
                    let plus = (wi - wi.abs()).exp();
                    let minus = (-wi - wi.abs()).exp();
                    let half = 1usize << i;
                    for s in 0..half {
                        table[s | half] = table[s] * plus;
                        table[s] *= minus;
                    }
                }
                let mut total = 0.0;
                for (t, b) in table.iter_mut().zip(&base) {
                    *t *= b;
                    total += *t;
                }
                for s in 0..dim {
                    let p = table[s] / total;
                    sum[s] += p;
                    sumsq[s] += p * p;
                }
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = vec![0.0; dim];
    let mut sumsq = vec![0.0; dim];
    for (s, q) in partials {
        for i in 0..dim {
            sum[i] += s[i];
            sumsq[i] += q[i];
        }
    }
    let nd = draws as f64;
    let mixture: Vec<f64> = sum.iter().map(|s| s / nd).collect();
    let std_err: Vec<f64> = (0..dim)
        .map(|i| {
            let var = ((sumsq[i] - nd * mixture[i] * mixture[i]) / (nd - 1.0)).max(0.0);
            (var / nd).sqrt()
        })
        .collect();
    let exact = oracle.probs().to_vec();
    let (mut max_z, mut worst_state) = (0.0f64, 0usize);
    for i in 0..dim {
        let diff = (mixture[i] - exact[i]).abs();
        let z = if std_err[i] > 0.0 {
            diff / std_err[i]
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > max_z {
            max_z = z;
            worst_state = i;
        }
    }
    Ok(MixtureReport {
        draws,
        exact,
        mixture,
        std_err,
        max_z,
        worst_state,
        sigmas,
        pass: max_z <= sigmas,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceIdentityReport {
    pub samples: usize,
    /// `‖Ĉov(z) − Cov(μ) − C^{−1}‖ / ‖Cov(μ) + C^{−1}‖`.
    pub relative_residual: f64,
    pub estimate: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Monte Carlo check of `Cov(z) = Cov(μ) + C^{−1}` for positive definite `C`.
pub fn hs_covariance_identity_check(
    model: &IsingModel,
    c: &DMatrix<f64>,
    samples: usize,
    seed: RngSeed,
) -> Result<CovarianceIdentityReport> {
    let n = model.n();
    if n > MIXTURE_LIMIT {
        return Err(Error::TooLarge {
            what: "covariance identity check",
            size: n,
            limit: MIXTURE_LIMIT,
        });
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("covariance check needs at least 2 samples".into()));
    }
    let eig = psd_parts(c)?;
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && min <= EIGEN_CLAMP {
        return Err(Error::NotPsd(min));
    }
    let hs = HsDecomposition::new(model, c)?;
    let oracle = ExactOracle::build(model)?;
    let cdf = cumulative(oracle.probs());
    let partials: Vec<(DVector<f64>, DMatrix<f64>)> = split_draws(samples, CHUNKS)
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = seed.derive(k as u64).rng();
            let mut sum = DVector::zeros(n);
            let mut outer = DMatrix::zeros(n, n);
            let mut x = vec![0i8; n];
            for _ in 0..count {
                let s = draw_state(&cdf, rng.gen::<f64>());
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = spin_at(s, i) as i8;
                }
                let z = DVector::from_vec(hs.smooth(&x, &mut rng));
                outer.ger(1.0, &z, &z, 1.0);
                sum += z;
            }
            (sum, outer)
        })
        .collect();
    let mut sum = DVector::zeros(n);
    let mut outer = DMatrix::zeros(n, n);
    for (s, o) in partials {
        sum += s;
        outer += o;
    }
    let ns = samples as f64;
    let mean = &sum / ns;
    let estimate = (outer - &mean * mean.transpose() * ns) / (ns - 1.0);
    let c_inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let expected = oracle.covariance() + c_inv;
    let relative_residual = spectral_norm(&symmetrize(&(&estimate - &expected))) / spectral_norm(&expected).max(1e-300);
    Ok(CovarianceIdentityReport {
        samples,
        relative_residual,
        estimate: rows(&estimate),
        expected: rows(&expected),
    })
}

/// Checks the decomposition covariance bound: with `Γ = γ·I` where `γ` is the
/// smallest eigenvalue of `M₁ − M₁·Cov(μ_{M₂, M₁z+h})·M₁` over the sampled
/// `z`, `Cov(μ_{M₁+M₂,h}) ⪯ Γ^{−1}` should follow whenever `γ > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionBoundReport {
    pub draws: usize,
    pub gamma: f64,
    pub cov_max_eigenvalue: f64,
    /// `None` when the hypothesis fails (`γ ≤ 0`).
    pub pass: Option<bool>,
}

pub fn decomposition_bound_check(
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    h: &[f64],
    draws: usize,
    seed: RngSeed,
) -> Result<DecompositionBoundReport> {
    let full = IsingModel::dense(symmetrize(&(m1 + m2)), h.to_vec())?;
    if full.n() > MIXTURE_LIMIT {
        return Err(Error::TooLarge {
            what: "decomposition bound check",
            size: full.n(),
            limit: MIXTURE_LIMIT,
        });
    }
    let hs = HsDecomposition::new(&full, m1)?;
    let oracle = ExactOracle::build(&full)?;
    let cdf = cumulative(oracle.probs());
    let n = full.n();
    let gammas: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = seed.derive(k as u64).rng();
            let s = draw_state(&cdf, rng.gen::<f64>());
            let x: Vec<i8> = (0..n).map(|i| spin_at(s, i) as i8).collect();
            let z = hs.smooth(&x, &mut rng);
            let cond = ExactOracle::build(&hs.conditional(&z)?)?;
            let gap = m1 - m1 * cond.covariance() * m1;
            Ok(sym_extremes(&symmetrize(&gap)).0)
        })
        .collect::<Result<_>>()?;
    let gamma = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let cov_max_eigenvalue = sym_extremes(oracle.covariance()).1;
    let pass = (gamma > 0.0).then(|| cov_max_eigenvalue <= (1.0 / gamma) * (1.0 + 1e-9));
    Ok(DecompositionBoundReport {
        draws,
        gamma,
        cov_max_eigenvalue,
        pass,
    })
}

/// Smallest eigenvalue of `L − LML − η₁η₂·I`; nonnegative whenever
/// `‖M‖ ≤ α` and `η₁ ⪯ L ⪯ (1−η₂)/α`. Returns `None` when the hypotheses fail.
pub fn sandwich_margin(m: &DMatrix<f64>, l: &DMatrix<f64>, alpha: f64, eta1: f64, eta2: f64) -> Option<f64> {
    let (lmin, lmax) = sym_extremes(&symmetrize(l));
    if spectral_norm(&symmetrize(m)) > alpha * (1.0 + 1e-12) || lmin < eta1 - 1e-12 || lmax > (1.0 - eta2) / alpha + 1e-12 {
        return None;
    }
    let n = l.nrows();
    let lhs = l - l * m * l - DMatrix::identity(n, n) * (eta1 * eta2);
    Some(sym_extremes(&symmetrize(&lhs)).0)
}

/// External fields used to probe claims quantified over all fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: String,
    pub field: Vec<f64>,
}

/// `0`, `±saturating·𝟙` and `gaussian` standard normal fields.
pub fn standard_probes(n: usize, saturating: f64, gaussian: usize, seed: RngSeed) -> Vec<Probe> {
    let mut probes = vec![
        Probe {
            name: "zero".into(),
            field: vec![0.0; n],
        },
        Probe {
            name: "plus".into(),
            field: vec![saturating; n],
        },
        Probe {
            name: "minus".into(),
            field: vec![-saturating; n],
        },
    ];
    for k in 0..gaussian {
        let mut rng = seed.derive(k as u64).rng();
        probes.push(Probe {
            name: format!("gaussian{k}"),
            field: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        });
    }
    probes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Exact,
    Mc,
}

/// Glauber budget for Monte Carlo covariance estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub sweeps_per_batch: usize,
    pub batches: usize,
    pub burn_in_sweeps: usize,
    /// Largest acceptable standard error on a covariance entry.
    pub tolerance: f64,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            sweeps_per_batch: 2000,
            batches: 20,
            burn_in_sweeps: 500,
            tolerance: 0.02,
        }
    }
}

/// One `(t, probe)` point on the annealing path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub probe: String,
    /// `‖M₁^{1/2}·Cov·M₁^{1/2}‖`.
    pub norm: f64,
    /// Smallest `c` with `Cov ⪯ c·(I_B + Δ·I_{H∖∂H})`.
    pub fitted_c: f64,
    /// Comparison with the supplied constant, if any.
    pub psd_pass: Option<bool>,
    /// Monte Carlo points whose error bars exceed the tolerance.
    pub flagged: bool,
}

/// Model on the annealing path with bulk and near-forest parts on the same
/// vertex set.
#[derive(Clone, Debug)]
pub struct PathSetup {
    pub j_bulk: Graph,
    pub j_forest: Graph,
    pub interior: Vec<bool>,
    pub params: ControlParams,
}

fn merge_graphs(a: &Graph, wa: f64, b: &Graph) -> Result<Graph> {
    let mut map = std::collections::BTreeMap::new();
    for e in a.edges() {
        *map.entry((e.u, e.v)).or_insert(0.0) += wa * e.weight;
    }
    for e in b.edges() {
        *map.entry((e.u, e.v)).or_insert(0.0) += e.weight;
    }
    Graph::from_edges(a.n(), map.into_iter().filter(|(_, w)| *w != 0.0).map(|((u, v), w)| (u, v, w)))
}

/// Covariance along `J_t = (1−t)J_B + J_H` for each `t` and probe field,
/// weighted by the control matrix at `t`.
pub fn path_covariance_norm(
    setup: &PathSetup,
    t_grid: &[f64],
    probes: &[Probe],
    mode: CovarianceMode,
    budget: McBudget,
    c_bound: Option<f64>,
    seed: RngSeed,
) -> Result<Vec<PathPoint>> {
    let n = setup.j_bulk.n();
    if setup.j_forest.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: setup.j_forest.n(),
        });
    }
    if mode == CovarianceMode::Exact && n > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            what: "exact path covariance",
            size: n,
            limit: ORACLE_LIMIT,
        });
    }
    if mode == CovarianceMode::Mc && n > 500 {
        return Err(Error::TooLarge {
            what: "dense path covariance",
            size: n,
            limit: 500,
        });
    }
    let weight_inv_sqrt = DVector::from_iterator(
        n,
        setup
            .interior
            .iter()
            .map(|&i| if i { 1.0 / setup.params.big_delta.sqrt() } else { 1.0 }),
    );
    let w = DMatrix::from_diagonal(&weight_inv_sqrt);
    let mut out = Vec::with_capacity(t_grid.len() * probes.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let params = ControlParams { t, ..setup.params.clone() };
        let m1 = control_matrix_from_parts(&setup.j_bulk, &setup.interior, &params)?;
        let root = sym_sqrt(&m1.to_dense(), EIGEN_CLAMP);
        let coupling = merge_graphs(&setup.j_bulk, 1.0 - t, &setup.j_forest)?;
        for (pi, probe) in probes.iter().enumerate() {
            let model = IsingModel::sparse(coupling.clone(), probe.field.clone())?;
            let (cov, flagged) = match mode {
                CovarianceMode::Exact => (ExactOracle::build(&model)?.covariance().clone(), false),
                CovarianceMode::Mc => {
                    let est = mc_covariance(&model, budget, seed.derive((ti * probes.len() + pi) as u64))?;
                    let worst = est.std_err.iter().copied().fold(0.0, f64::max);
                    (est.cov, worst > budget.tolerance)
                }
            };
            let norm = spectral_norm(&symmetrize(&(&root * &cov * &root)));
            let fitted_c = sym_extremes(&symmetrize(&(&w * &cov * &w))).1;
            out.push(PathPoint {
                t,
                probe: probe.name.clone(),
                norm,
                fitted_c,
                psd_pass: c_bound.map(|c| fitted_c <= c),
                flagged,
            });
        }
    }
    Ok(out)
}

/// Euler–Maruyama path `J_{k+1} = J_k − C²dt`,
/// `h_{k+1} = h_k + C√dt·g_k + C²·mean(μ_k)·dt` with `dt = 1/steps`.
pub fn discretized_localization_path(
    model: &IsingModel,
    c: &DMatrix<f64>,
    steps: usize,
    rng: &mut SimRng,
) -> Result<Vec<(DMatrix<f64>, Vec<f64>)>> {
    let n = model.n();
    if n > MIXTURE_LIMIT {
        return Err(Error::TooLarge {
            what: "localization path",
            size: n,
            limit: MIXTURE_LIMIT,
        });
    }
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.nrows(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("path needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let c2 = c * c;
    let mut j = model.coupling_matrix()?;
    let mut h = DVector::from_column_slice(model.field());
    let mut path = Vec::with_capacity(steps + 1);
    path.push((j.clone(), h.as_slice().to_vec()));
    for _ in 0..steps {
        let oracle = ExactOracle::from_parts(&j, h.as_slice());
        let mean = DVector::from_column_slice(oracle.mean());
        let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        h += c * g * dt.sqrt() + &c2 * mean * dt;
        j -= &c2 * dt;
        path.push((j.clone(), h.as_slice().to_vec()));
    }
    Ok(path)
}
