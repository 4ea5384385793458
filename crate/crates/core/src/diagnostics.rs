//! Mixing measurements, brute-force functional-inequality estimates,
//! influence matrices, ball-growth tails and covariance-bound verdicts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ising::{
    glauber_step, spin_at, tv_distance, BlockPartition, ExactOracle, IsingModel, TransitionMatrix, CHAIN_LIMIT,
    ORACLE_LIMIT,
};
use crate::linalg::{lanczos_extremes, spectral_norm, symmetrize, FnOperator};
use crate::localization::{McBudget, Probe};
use crate::neighborhood::BfsWorkspace;
use crate::rng::RngSeed;

/// Largest state space diagonalized densely for the spectral gap.
const DENSE_GAP_DIM: usize = 256;

/// `1 − λ₂` of the heat-bath Glauber kernel, `n ≤ 12`.
pub fn spectral_gap_exact(model: &IsingModel) -> Result<f64> {
    if model.n() > CHAIN_LIMIT {
        return Err(Error::TooLarge {
            what: "spectral gap",
            size: model.n(),
            limit: CHAIN_LIMIT,
        });
    }
    let oracle = ExactOracle::build(model)?;
    let p = oracle.transition_matrix()?;
    Ok(gap_of(&p, oracle.probs()))
}

fn gap_of(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    let dim = p.dim();
    if dim < 2 {
        return 1.0;
    }
    let sqrt_pi: Vec<f64> = pi.iter().map(|x| x.sqrt()).collect();
    if dim <= DENSE_GAP_DIM {
        let s = DMatrix::from_fn(dim, dim, |x, y| sqrt_pi[x] * p.entry(x, y) / sqrt_pi[y]);
        let mut eig: Vec<f64> = SymmetricEigen::new(symmetrize(&s)).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        return 1.0 - eig[1];
    }
    let op = FnOperator {
        dim,
        f: |x: &[f64], y: &mut [f64]| p.symmetrized_apply(&sqrt_pi, x, y),
    };
    let e = lanczos_extremes(&op, 600, 1e-10, RngSeed::new(0x6a9), &[sqrt_pi.clone()]);
    1.0 - e.max
}

/// `ℰ(f, g) = E_{x∼μ, y∼P_x}[(f(x) − f(y))(g(x) − g(y))]`.
pub fn dirichlet_form(p: &TransitionMatrix, pi: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let n = p.n();
    let mut acc = 0.0;
    for x in 0..p.dim() {
        for i in 0..n {
            let y = x ^ (1 << i);
            acc += pi[x] * p.entry(x, y) * (f[x] - f[y]) * (g[x] - g[y]);
        }
    }
    acc
}

/// `Ent[f] = E[f log f] − E[f] log E[f]` for positive `f`.
pub fn entropy(pi: &[f64], f: &[f64]) -> f64 {
    let mean: f64 = pi.iter().zip(f).map(|(p, v)| p * v).sum();
    let flogf: f64 = pi.iter().zip(f).map(|(p, v)| p * v * v.ln()).sum();
    flogf - mean * mean.ln()
}

/// Probe functions with entropy below this are discarded.
pub const ENTROPY_FLOOR: f64 = 1e-12;

/// `ℰ(f, log f) / Ent[f]`, or `None` when the entropy is negligible.
pub fn mlsi_ratio(p: &TransitionMatrix, pi: &[f64], f: &[f64]) -> Option<f64> {
    let scale = f.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) || f.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let g: Vec<f64> = f.iter().map(|v| v / scale).collect();
    let ent = entropy(pi, &g);
    if !(ent > ENTROPY_FLOOR) {
        return None;
    }
    let logs: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    Some(dirichlet_form(p, pi, &g, &logs) / ent)
}

/// Named positive function on `{±1}ⁿ` indexed by state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlsiProbe {
    pub name: String,
    pub values: Vec<f64>,
}

/// `exp(⟨a, x⟩)` for Gaussian `a` at several scales, plus `exp(τ·𝟙[x_i = s])`
/// and `exp(τ·𝟙[x = x₀])` tilts.
pub fn probe_family(n: usize, count: usize, seed: RngSeed) -> Vec<MlsiProbe> {
    let dim = 1usize << n;
    let mut rng = seed.rng();
    let mut probes = Vec::new();
    for k in 0..count {
        let scale = [0.1, 0.5, 1.0, 2.0][k % 4];
        let a: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let values = (0..dim)
            .map(|s| (0..n).map(|i| a[i] * spin_at(s, i)).sum::<f64>().exp())
            .collect();
        probes.push(MlsiProbe {
            name: format!("field{k}@{scale}"),
            values,
        });
    }
    for tau in [-3.0, -1.0, 1.0, 3.0] {
        for i in 0..n {
            probes.push(MlsiProbe {
                name: format!("site{i}@{tau}"),
                values: (0..dim).map(|s| if spin_at(s, i) > 0.0 { f64::exp(tau) } else { 1.0 }).collect(),
            });
        }
        for target in [0, dim - 1] {
            probes.push(MlsiProbe {
                name: format!("state{target}@{tau}"),
                values: (0..dim).map(|s| if s == target { f64::exp(tau) } else { 1.0 }).collect(),
            });
        }
    }
    probes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub name: String,
    /// `None` when the probe was discarded for negligible entropy.
    pub ratio: Option<f64>,
}

/// Minimum probe ratio: an upper bound on the best MLSI constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlsiEstimate {
    pub value: f64,
    pub best_probe: String,
    pub refined: bool,
    pub inventory: Vec<ProbeRecord>,
}

/// Gradient of `φ ↦ ℰ(e^φ, φ) / Ent[e^φ]`.
fn ratio_gradient(p: &TransitionMatrix, pi: &[f64], phi: &[f64]) -> Option<(f64, Vec<f64>)> {
    let top = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = phi.iter().map(|v| (v - top).exp()).collect();
    let shifted: Vec<f64> = phi.iter().map(|v| v - top).collect();
    let ent = entropy(pi, &f);
    if !(ent > ENTROPY_FLOOR) {
        return None;
    }
    let dir = dirichlet_form(p, pi, &f, &shifted);
    let ratio = dir / ent;
    let mass: f64 = pi.iter().zip(&f).map(|(a, b)| a * b).sum();
    let log_mass = mass.ln();
    let n = p.n();
    let grad = (0..p.dim())
        .map(|z| {
            let mut d_dir = 0.0;
            for i in 0..n {
                let y = z ^ (1 << i);
                let q = pi[z] * p.entry(z, y);
                d_dir += 2.0 * q * (f[z] * (shifted[z] - shifted[y]) + f[z] - f[y]);
            }
            let d_ent = pi[z] * f[z] * (shifted[z] - log_mass);
            (d_dir - ratio * d_ent) / ent
        })
        .collect();
    Some((ratio, grad))
}

/// Backtracking gradient descent on `log f` from a starting probe.
fn refine(p: &TransitionMatrix, pi: &[f64], start: &[f64], iterations: usize) -> Option<f64> {
    let mut phi: Vec<f64> = start.iter().map(|v| v.ln()).collect();
    let (mut best, mut grad) = ratio_gradient(p, pi, &phi)?;
    let mut step = 1.0;
    for _ in 0..iterations {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let trial: Vec<f64> = phi.iter().zip(&grad).map(|(x, g)| x - step * g / gnorm).collect();
            match ratio_gradient(p, pi, &trial) {
                Some((r, g)) if r < best => {
                    phi = trial;
                    best = r;
                    grad = g;
                    improved = true;
                    step *= 2.0;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !improved {
            break;
        }
    }
    Some(best)
}

/// Upper estimate of the MLSI constant from explicit probes, optionally
/// refining the best probe by gradient descent.
pub fn mlsi_upper_estimate_from(model: &IsingModel, probes: &[MlsiProbe], refine_steps: usize) -> Result<MlsiEstimate> {
    if model.n() > CHAIN_LIMIT {
        return Err(Error::TooLarge {
            what: "MLSI estimate",
            size: model.n(),
            limit: CHAIN_LIMIT,
        });
    }
    let oracle = ExactOracle::build(model)?;
    let p = oracle.transition_matrix()?;
    let pi = oracle.probs();
    let inventory: Vec<ProbeRecord> = probes
        .par_iter()
        .map(|pr| {
            if pr.values.len() != pi.len() {
                return ProbeRecord {
                    name: pr.name.clone(),
                    ratio: None,
                };
            }
            ProbeRecord {
                name: pr.name.clone(),
                ratio: mlsi_ratio(&p, pi, &pr.values),
            }
        })
        .collect();
    let best = inventory
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.ratio.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((k, mut value)) = best else {
        return Err(Error::InvalidParameter("every probe had negligible entropy".into()));
    };
    let mut best_probe = inventory[k].name.clone();
    let mut refined = false;
    if refine_steps > 0 {
        if let Some(r) = refine(&p, pi, &probes[k].values, refine_steps) {
            if r < value {
                value = r;
                best_probe = format!("{best_probe}+descent");
                refined = true;
            }
        }
    }
    Ok(MlsiEstimate {
        value,
        best_probe,
        refined,
        inventory,
    })
}

pub fn mlsi_upper_estimate(model: &IsingModel, probes: usize, seed: RngSeed) -> Result<MlsiEstimate> {
    mlsi_upper_estimate_from(model, &probe_family(model.n(), probes, seed), 200)
}

/// `(1/c)(log log(1/μ*) + log(1/ε))`.
pub fn mixing_time_bound(mlsi: f64, min_prob: f64, epsilon: f64) -> f64 {
    ((1.0 / min_prob).ln().ln() + (1.0 / epsilon).ln()) / mlsi
}

/// All-plus, all-minus and `random` uniformly random starts.
pub fn proxy_initializations(n: usize, random: usize, seed: RngSeed) -> Vec<(String, Vec<i8>)> {
    let mut out = vec![("all_plus".to_string(), vec![1i8; n]), ("all_minus".to_string(), vec![-1i8; n])];
    let mut rng = seed.rng();
    for k in 0..random {
        out.push((
            format!("random{k}"),
            (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect(),
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitCurve {
    pub name: String,
    pub checkpoints: Vec<u64>,
    pub tv: Vec<f64>,
    /// First step with distance below `ε`; `None` when the horizon was hit.
    pub t_mix: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingMode {
    Exact,
    Mc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub mode: MixingMode,
    pub n: usize,
    pub epsilon: f64,
    pub horizon: u64,
    pub curves: Vec<InitCurve>,
    /// Worst `t_mix` over starts; `None` means at least `horizon`.
    pub t_mix: Option<u64>,
    pub spectral_gap: Option<f64>,
    /// Integrated autocorrelation time of the magnetization, in sweeps.
    pub autocorrelation_time: Option<f64>,
}

/// Exact distance to stationarity from each start, every step up to `horizon`.
pub fn tv_mixing_curve(model: &IsingModel, inits: &[(String, Vec<i8>)], horizon: u64, epsilon: f64) -> Result<MixingReport> {
    let n = model.n();
    if n > CHAIN_LIMIT {
        return Err(Error::TooLarge {
            what: "exact mixing curve",
            size: n,
            limit: CHAIN_LIMIT,
        });
    }
    let oracle = ExactOracle::build(model)?;
    let p = oracle.transition_matrix()?;
    let pi = oracle.probs();
    let curves = inits
        .par_iter()
        .map(|(name, x)| -> Result<InitCurve> {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
            let mut dist = vec![0.0; p.dim()];
            dist[crate::ising::state_index(x)] = 1.0;
            let mut tv = vec![tv_distance(&dist, pi)?];
            let mut t_mix = (tv[0] < epsilon).then_some(0);
            for t in 1..=horizon {
                dist = p.step(&dist);
                let d = tv_distance(&dist, pi)?;
                tv.push(d);
                if t_mix.is_none() && d < epsilon {
                    t_mix = Some(t);
                }
            }
            Ok(InitCurve {
                name: name.clone(),
                checkpoints: (0..=horizon).collect(),
                tv,
                t_mix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let t_mix = curves.iter().map(|c| c.t_mix).collect::<Option<Vec<_>>>().map(|v| v.into_iter().max().unwrap_or(0));
    Ok(MixingReport {
        mode: MixingMode::Exact,
        n,
        epsilon,
        horizon,
        curves,
        t_mix,
        spectral_gap: Some(gap_of(&p, pi)),
        autocorrelation_time: None,
    })
}

fn magnetization_bin(state: &crate::ising::SpinConfig) -> usize {
    ((state.sum() + state.len() as i64) / 2) as usize
}

/// Integrated autocorrelation time with Sokal's adaptive window (`c = 5`).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n {
        let c = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Monte Carlo counterpart: distance between the magnetization histograms of
/// `chains` chains per start and of a long-run reference ensemble, recorded
/// every `stride` steps.
pub fn tv_mixing_curve_mc(
    model: &IsingModel,
    inits: &[(String, Vec<i8>)],
    horizon: u64,
    epsilon: f64,
    chains: usize,
    stride: u64,
    seed: RngSeed,
) -> Result<MixingReport> {
    let n = model.n();
    if chains == 0 || stride == 0 {
        return Err(Error::InvalidParameter("need chains > 0 and stride > 0".into()));
    }
    let bins = n + 1;
    let reference: Vec<usize> = (0..chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed.derive(1 << 40 | k as u64).rng();
            let mut state = model.random_state(&mut rng);
            for _ in 0..2 * horizon.max(n as u64 * 50) {
                glauber_step(model, &mut state, &mut rng);
            }
            magnetization_bin(&state)
        })
        .collect();
    let mut ref_hist = vec![0.0; bins];
    for b in reference {
        ref_hist[b] += 1.0 / chains as f64;
    }
    let checkpoints: Vec<u64> = (0..=horizon / stride).map(|c| c * stride).collect();
    let mut curves = Vec::with_capacity(inits.len());
    for (ii, (name, x)) in inits.iter().enumerate() {
        let start = model.state(x.clone())?;
        let per_chain: Vec<Vec<usize>> = (0..chains)
            .into_par_iter()
            .map(|k| {
                let mut rng = seed.derive((ii as u64) << 32 | k as u64).rng();
                let mut state = start.clone();
                let mut out = vec![magnetization_bin(&state)];
                for t in 1..=horizon {
                    glauber_step(model, &mut state, &mut rng);
                    if t % stride == 0 {
                        out.push(magnetization_bin(&state));
                    }
                }
                out
            })
            .collect();
        let mut tv = Vec::with_capacity(checkpoints.len());
        let mut t_mix = None;
        for (c, &t) in checkpoints.iter().enumerate() {
            let mut hist = vec![0.0; bins];
            for chain in &per_chain {
                hist[chain[c]] += 1.0 / chains as f64;
            }
            let d = 0.5 * hist.iter().zip(&ref_hist).map(|(a, b)| (a - b).abs()).sum::<f64>();
            if t_mix.is_none() && d < epsilon {
                t_mix = Some(t);
            }
            tv.push(d);
        }
        curves.push(InitCurve {
            name: name.clone(),
            checkpoints: checkpoints.clone(),
            tv,
            t_mix,
        });
    }
    let mut rng = seed.derive(1 << 41).rng();
    let mut state = model.random_state(&mut rng);
    let sweeps = 2000usize;
    let mut series = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        for _ in 0..n.max(1) {
            glauber_step(model, &mut state, &mut rng);
        }
        series.push(state.sum() as f64);
    }
    let t_mix = curves.iter().map(|c| c.t_mix).collect::<Option<Vec<_>>>().map(|v| v.into_iter().max().unwrap_or(0));
    Ok(MixingReport {
        mode: MixingMode::Mc,
        n,
        epsilon,
        horizon,
        curves,
        t_mix,
        spectral_gap: None,
        autocorrelation_time: Some(integrated_autocorrelation(&series)),
    })
}

/// Largest model for the influence brute force.
pub const INFLUENCE_SPIN_LIMIT: usize = 14;
pub const INFLUENCE_BLOCK_LIMIT: usize = 4;

/// `R[i, j]`: the largest total-variation distance between the conditional
/// laws of block `i` given two outside configurations that differ only on
/// block `j`. The diagonal is zero.
pub fn influence_matrix_bruteforce(model: &IsingModel, partition: &BlockPartition) -> Result<DMatrix<f64>> {
    let n = model.n();
    if n > INFLUENCE_SPIN_LIMIT {
        return Err(Error::TooLarge {
            what: "influence matrix spins",
            size: n,
            limit: INFLUENCE_SPIN_LIMIT,
        });
    }
    let blocks = partition.blocks();
    if blocks.len() > INFLUENCE_BLOCK_LIMIT {
        return Err(Error::TooLarge {
            what: "influence matrix blocks",
            size: blocks.len(),
            limit: INFLUENCE_BLOCK_LIMIT,
        });
    }
    let k = blocks.len();
    let j = model.coupling_matrix()?;
    let h = model.field();
    let mut r = DMatrix::zeros(k, k);
    for bi in 0..k {
        let inside = &blocks[bi];
        let inner_states = 1usize << inside.len();
        // Log-weights of block `bi` without outside contributions.
        let base: Vec<f64> = (0..inner_states)
            .map(|s| {
                let x: Vec<f64> = (0..inside.len()).map(|a| spin_at(s, a)).collect();
                let mut lw = 0.0;
                for a in 0..inside.len() {
                    lw += h[inside[a]] * x[a];
                    for b in a + 1..inside.len() {
                        lw += j[(inside[a], inside[b])] * x[a] * x[b];
                    }
                }
                lw
            })
            .collect();
        let law = |ext: &[f64]| -> Vec<f64> {
            let lw: Vec<f64> = (0..inner_states)
                .map(|s| base[s] + (0..inside.len()).map(|a| ext[a] * spin_at(s, a)).sum::<f64>())
                .collect();
            let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        };
        for bj in (0..k).filter(|&b| b != bi) {
            let varying = &blocks[bj];
            let rest: Vec<usize> = (0..k)
                .filter(|&b| b != bi && b != bj)
                .flat_map(|b| blocks[b].iter().copied())
                .collect();
            let field_from = |verts: &[usize], s: usize| -> Vec<f64> {
                inside
                    .iter()
                    .map(|&u| verts.iter().enumerate().map(|(c, &v)| j[(u, v)] * spin_at(s, c)).sum())
                    .collect()
            };
            let varying_fields: Vec<Vec<f64>> = (0..1usize << varying.len()).map(|s| field_from(varying, s)).collect();
            let mut worst = 0.0f64;
            for rs in 0..1usize << rest.len() {
                let rest_field = field_from(&rest, rs);
                let laws: Vec<Vec<f64>> = varying_fields
                    .iter()
                    .map(|vf| law(&rest_field.iter().zip(vf).map(|(a, b)| a + b).collect::<Vec<_>>()))
                    .collect();
                for a in 0..laws.len() {
                    for b in a + 1..laws.len() {
                        let d = 0.5 * laws[a].iter().zip(&laws[b]).map(|(x, y)| (x - y).abs()).sum::<f64>();
                        worst = worst.max(d);
                    }
                }
            }
            r[(bi, bj)] = worst;
        }
    }
    Ok(r)
}

/// `1 − exp(−η|C_i||C_j|)`.
pub fn influence_bound(eta: f64, size_i: usize, size_j: usize) -> f64 {
    1.0 - (-eta * (size_i * size_j) as f64).exp()
}

/// Per-radius exceedance frequencies of `|B_r(v)| ≥ (s·d)^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailHistogram {
    pub d: f64,
    pub radii: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub samples: usize,
    /// `exceed[r][s]` counts samples at radius `radii[r]` and threshold
    /// multiplier `thresholds[s]`.
    pub exceed: Vec<Vec<usize>>,
}

impl TailHistogram {
    pub fn frequency(&self, r: usize, s: usize) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.exceed[r][s] as f64 / self.samples as f64
        }
    }

    /// Binomial standard error of [`Self::frequency`].
    pub fn std_err(&self, r: usize, s: usize) -> f64 {
        let p = self.frequency(r, s);
        if self.samples == 0 {
            0.0
        } else {
            (p * (1.0 - p) / self.samples as f64).sqrt()
        }
    }
}

fn threshold_size(s: f64, d: f64, r: usize) -> f64 {
    (s * d).powi(r as i32)
}

fn count_exceedances(sizes: &[usize], radii: &[usize], thresholds: &[f64], d: f64, exceed: &mut [Vec<usize>]) {
    for (ri, &r) in radii.iter().enumerate() {
        for (si, &s) in thresholds.iter().enumerate() {
            if sizes[ri] as f64 >= threshold_size(s, d, r) {
                exceed[ri][si] += 1;
            }
        }
    }
}

/// Ball sizes at uniformly sampled vertices (with replacement).
pub fn ball_tail_histogram(g: &Graph, d: f64, radii: &[usize], thresholds: &[f64], sample: usize, seed: RngSeed) -> TailHistogram {
    let mut exceed = vec![vec![0usize; thresholds.len()]; radii.len()];
    if g.n() > 0 {
        let max_r = radii.iter().copied().max().unwrap_or(0);
        let mut rng = seed.rng();
        let picks: Vec<usize> = (0..sample).map(|_| rng.gen_range(0..g.n())).collect();
        let cap = radii
            .iter()
            .flat_map(|&r| thresholds.iter().map(move |&s| threshold_size(s, d, r)))
            .fold(1.0, f64::max)
            .ceil() as usize
            + 1;
        let mut ws = BfsWorkspace::new(g.n());
        for v in picks {
            ws.run_capped(g, v, max_r, cap);
            let mut sizes = vec![0usize; radii.len()];
            for &u in ws.last_order() {
                let du = ws.dist(u);
                for (ri, &r) in radii.iter().enumerate() {
                    if du <= r {
                        sizes[ri] += 1;
                    }
                }
            }
            count_exceedances(&sizes, radii, thresholds, d, &mut exceed);
        }
    }
    TailHistogram {
        d,
        radii: radii.to_vec(),
        thresholds: thresholds.to_vec(),
        samples: if g.n() > 0 { sample } else { 0 },
        exceed,
    }
}

/// Cumulative ball sizes `|B_r|`, `r = 0..=depth`, of Poisson(`d`)
/// Galton–Watson trees; one row per trial.
pub fn gw_ball_simulator(d: f64, depth: usize, trials: usize, seed: RngSeed) -> Result<Vec<Vec<u64>>> {
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("offspring mean must be positive, got {d}")));
    }
    Ok((0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed.derive(k as u64).rng();
            let mut sizes = Vec::with_capacity(depth + 1);
            let mut generation = 1u64;
            let mut total = 1u64;
            sizes.push(total);
            for _ in 0..depth {
                generation = if generation == 0 {
                    0
                } else {
                    Poisson::new(d * generation as f64).map(|p| p.sample(&mut rng) as u64).unwrap_or(0)
                };
                total += generation;
                sizes.push(total);
            }
            sizes
        })
        .collect())
}

/// Exceedance histogram of simulated Galton–Watson balls.
pub fn gw_tail_histogram(d: f64, radii: &[usize], thresholds: &[f64], trials: usize, seed: RngSeed) -> Result<TailHistogram> {
    let depth = radii.iter().copied().max().unwrap_or(0);
    let sims = gw_ball_simulator(d, depth, trials, seed)?;
    let mut exceed = vec![vec![0usize; thresholds.len()]; radii.len()];
    for row in &sims {
        let sizes: Vec<usize> = radii.iter().map(|&r| row[r] as usize).collect();
        count_exceedances(&sizes, radii, thresholds, d, &mut exceed);
    }
    Ok(TailHistogram {
        d,
        radii: radii.to_vec(),
        thresholds: thresholds.to_vec(),
        samples: trials,
        exceed,
    })
}

/// Least-squares slope of `log frequency` against `(1 + ε/4)^r` over the
/// radii with nonzero frequency at threshold index `s`.
pub fn tail_decay_slope(hist: &TailHistogram, s: usize, epsilon: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hist
        .radii
        .iter()
        .enumerate()
        .filter(|(ri, _)| hist.exceed[*ri][s] > 0)
        .map(|(ri, &r)| ((1.0 + epsilon / 4.0).powi(r as i32), hist.frequency(ri, s).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Batch-means covariance estimate from one Glauber run.
#[derive(Clone, Debug)]
pub struct McCovariance {
    pub cov: DMatrix<f64>,
    /// Standard error of each entry across batches.
    pub std_err: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub samples: usize,
}

/// One sample per sweep (`n` single-site steps); the covariance of each batch
/// is averaged and its spread across batches gives the error bars.
pub fn mc_covariance(model: &IsingModel, budget: McBudget, seed: RngSeed) -> Result<McCovariance> {
    let n = model.n();
    if budget.batches < 2 || budget.sweeps_per_batch < 2 {
        return Err(Error::InvalidParameter("need at least 2 batches of at least 2 sweeps".into()));
    }
    let mut rng = seed.rng();
    let mut state = model.random_state(&mut rng);
    let steps_per_sweep = n.max(1);
    for _ in 0..budget.burn_in_sweeps * steps_per_sweep {
        glauber_step(model, &mut state, &mut rng);
    }
    let mut batch_covs = Vec::with_capacity(budget.batches);
    let mut grand_mean = DVector::zeros(n);
    for _ in 0..budget.batches {
        let mut sum = DVector::zeros(n);
        let mut outer = DMatrix::zeros(n, n);
        for _ in 0..budget.sweeps_per_batch {
            for _ in 0..steps_per_sweep {
                glauber_step(model, &mut state, &mut rng);
            }
            let x = DVector::from_iterator(n, state.spins().iter().map(|&s| f64::from(s)));
            outer.ger(1.0, &x, &x, 1.0);
            sum += x;
        }
        let m = budget.sweeps_per_batch as f64;
        let mean = &sum / m;
        batch_covs.push(outer / m - &mean * mean.transpose());
        grand_mean += mean;
    }
    let b = budget.batches as f64;
    let cov = batch_covs.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + c) / b;
    let var = batch_covs
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, c| acc + (c - &cov).map(|v| v * v))
        / (b - 1.0);
    Ok(McCovariance {
        cov,
        std_err: var.map(|v| (v / b).sqrt()),
        mean: (grand_mean / b).as_slice().to_vec(),
        samples: budget.batches * budget.sweeps_per_batch,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A measured norm against its bound; `std_err` is zero for exact values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub value: f64,
    pub std_err: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl BoundCheck {
    fn new(value: f64, std_err: f64, bound: f64, sigmas: f64) -> Self {
        let verdict = if value + sigmas * std_err <= bound {
            Verdict::Pass
        } else if value - sigmas * std_err > bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        Self {
            value,
            std_err,
            bound,
            verdict,
        }
    }
}

/// Near-forest component with couplings on its edges and a distinguished
/// vertex set (local indices).
#[derive(Clone, Debug)]
pub struct CovarianceTarget {
    pub graph: Graph,
    pub boundary: Vec<usize>,
    /// Pseudorandomness constant used in the full-norm bounds.
    pub big_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentVerdict {
    pub component: usize,
    pub size: usize,
    pub excess: usize,
    pub probe: String,
    pub exact: bool,
    /// `‖Cov_S‖ ≤ e^{2γ/√D}/(1−γ)²`.
    pub restricted: BoundCheck,
    /// `‖Cov‖ ≤ e^{2γ/√D}/(1−γ)²·Δ/D`.
    pub full: BoundCheck,
    /// `‖Cov·A‖ ≤ 2Δ/((1−γ)²√D)`, for trees with nonnegative couplings.
    pub times_adjacency: Option<BoundCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceVerdicts {
    pub gamma: f64,
    pub big_d: f64,
    pub verdicts: Vec<ComponentVerdict>,
    pub passes: usize,
    pub failures: usize,
    pub inconclusive: usize,
}

fn restrict(m: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |a, b| m[(keep[a], keep[b])])
}

/// Per-component, per-probe comparison of covariance norms with the
/// near-forest bounds. Components with at most 20 spins are solved exactly;
/// larger ones use batch means and can come out inconclusive.
pub fn covariance_bound_verdicts(
    targets: &[CovarianceTarget],
    gamma: f64,
    big_d: f64,
    probes: &[Probe],
    budget: McBudget,
    seed: RngSeed,
) -> Result<CovarianceVerdicts> {
    if !(0.0..1.0).contains(&gamma) || !(big_d > 0.0) {
        return Err(Error::InvalidParameter(format!("need γ ∈ [0,1) and D > 0, got γ={gamma}, D={big_d}")));
    }
    let f = (2.0 * gamma / big_d.sqrt()).exp() / (1.0 - gamma).powi(2);
    let jobs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|c| (0..probes.len()).map(move |p| (c, p)))
        .collect();
    let verdicts = jobs
        .into_par_iter()
        .map(|(ci, pi)| -> Result<ComponentVerdict> {
            let target = &targets[ci];
            let g = &target.graph;
            let n = g.n();
            let probe = &probes[pi];
            let field: Vec<f64> = probe.field.iter().copied().take(n).chain(std::iter::repeat(0.0)).take(n).collect();
            let model = IsingModel::sparse(g.clone(), field)?;
            let exact = n <= ORACLE_LIMIT;
            let (cov, err) = if exact {
                (ExactOracle::build(&model)?.covariance().clone(), DMatrix::zeros(n, n))
            } else {
                let est = mc_covariance(&model, budget, seed.derive((ci * probes.len() + pi) as u64))?;
                (est.cov, est.std_err)
            };
            let comps = crate::neighborhood::connected_components(g);
            let excess: usize = comps.components.iter().map(|c| c.excess).sum();
            let sigmas = 3.0;
            let cov_s = restrict(&cov, &target.boundary);
            let err_s = restrict(&err, &target.boundary);
            let restricted = BoundCheck::new(spectral_norm(&symmetrize(&cov_s)), err_s.norm(), f, sigmas);
            let full = BoundCheck::new(
                spectral_norm(&symmetrize(&cov)),
                err.norm(),
                f * target.big_delta / big_d,
                sigmas,
            );
            let ferro_tree = excess == 0 && g.edges().iter().all(|e| e.weight >= 0.0);
            let times_adjacency = ferro_tree.then(|| {
                let a = g.to_dense_pattern();
                let prod = &cov * &a;
                let prod_err = &err * &a;
                BoundCheck::new(
                    spectral_norm(&prod),
                    prod_err.norm(),
                    2.0 * target.big_delta / ((1.0 - gamma).powi(2) * big_d.sqrt()),
                    sigmas,
                )
            });
            Ok(ComponentVerdict {
                component: ci,
                size: n,
                excess,
                probe: probe.name.clone(),
                exact,
                restricted,
                full,
                times_adjacency,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = [0usize; 3];
    for v in &verdicts {
        for c in [Some(&v.restricted), Some(&v.full), v.times_adjacency.as_ref()].into_iter().flatten() {
            counts[match c.verdict {
                Verdict::Pass => 0,
                Verdict::Fail => 1,
                Verdict::Inconclusive => 2,
            }] += 1;
        }
    }
    Ok(CovarianceVerdicts {
        gamma,
        big_d,
        verdicts,
        passes: counts[0],
        failures: counts[1],
        inconclusive: counts[2],
    })
}
