//! Single-site and block heat-bath dynamics.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{enumerate_log_weights, spin_at};
use super::{Interaction, IsingModel, SpinConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::neighborhood::connected_components;
use crate::rng::{RngSeed, SimRng};

/// `P(x_i = +1 | rest) = 1 / (1 + e^{−2f})` for local field `f`.
pub fn heat_bath_plus(field: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * field).exp())
}

/// One heat-bath update at a uniformly chosen site; returns the site.
pub fn glauber_step(model: &IsingModel, state: &mut SpinConfig, rng: &mut SimRng) -> usize {
    let labels = model.labels();
    if let (Some(l), None) = (labels, state.label_sum()) {
        state.attach_labels(l);
    }
    let i = rng.gen_range(0..model.n());
    let p = heat_bath_plus(model.local_field(i, state));
    let s = if rng.gen::<f64>() < p { 1 } else { -1 };
    state.set(i, s, labels);
    i
}

/// What [`run_chain`] records, every `stride` steps (and at step 0).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observers {
    pub stride: u64,
    pub magnetization: bool,
    pub energy: bool,
    /// Reference vector for the normalized overlap `⟨r, x⟩/n`.
    pub overlap: Option<Vec<i8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub magnetization: Option<f64>,
    /// `−(½xᵀJx + ⟨h,x⟩)`.
    pub energy: Option<f64>,
    pub overlap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ChainTrace {
    pub final_state: SpinConfig,
    pub observations: Vec<Observation>,
}

fn observe(model: &IsingModel, state: &SpinConfig, step: u64, obs: &Observers) -> Observation {
    let n = model.n().max(1) as f64;
    Observation {
        step,
        magnetization: obs.magnetization.then(|| state.sum() as f64 / n),
        energy: obs.energy.then(|| -model.log_weight(state.spins())),
        overlap: obs.overlap.as_ref().map(|r| {
            r.iter()
                .zip(state.spins())
                .map(|(&a, &b)| f64::from(a * b))
                .sum::<f64>()
                / n
        }),
    }
}

pub fn run_chain(model: &IsingModel, init: SpinConfig, steps: u64, rng: &mut SimRng, observers: &Observers) -> ChainTrace {
    let mut state = init;
    let recording = observers.stride > 0 && (observers.magnetization || observers.energy || observers.overlap.is_some());
    let mut observations = Vec::new();
    if recording {
        observations.push(observe(model, &state, 0, observers));
    }
    for t in 1..=steps {
        glauber_step(model, &mut state, rng);
        if recording && t % observers.stride == 0 {
            observations.push(observe(model, &state, t, observers));
        }
    }
    ChainTrace {
        final_state: state,
        observations,
    }
}

/// Independent chains, chain `k` drawing from `seed.derive(k)`. Results do not
/// depend on the thread count.
pub fn run_chains(
    model: &IsingModel,
    inits: Vec<SpinConfig>,
    steps: u64,
    seed: RngSeed,
    observers: &Observers,
) -> Vec<ChainTrace> {
    inits
        .into_par_iter()
        .enumerate()
        .map(|(k, init)| {
            let mut rng = seed.derive(k as u64).rng();
            run_chain(model, init, steps, &mut rng, observers)
        })
        .collect()
}

/// Partition of the vertex set into blocks of at most 20 spins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl BlockPartition {
    pub const MAX_BLOCK: usize = 20;

    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidParameter(format!("block {b} is empty")));
            }
            if block.len() > Self::MAX_BLOCK {
                return Err(Error::TooLarge {
                    what: "block",
                    size: block.len(),
                    limit: Self::MAX_BLOCK,
                });
            }
            for &v in block {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
                if block_of[v] != usize::MAX {
                    return Err(Error::InvalidParameter(format!("vertex {v} appears in two blocks")));
                }
                block_of[v] = b;
            }
        }
        if let Some(v) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidParameter(format!("vertex {v} is in no block")));
        }
        Ok(Self { blocks, block_of })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|v| vec![v]).collect(),
            block_of: (0..n).collect(),
        }
    }

    /// Connected components of `g` (isolated vertices become singletons).
    pub fn from_components(g: &Graph) -> Result<Self> {
        let blocks = connected_components(g)
            .components
            .into_iter()
            .map(|c| c.vertices)
            .collect();
        Self::new(g.n(), blocks)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.block_of[v]
    }
}

/// Effective field on `block` with every other spin pinned to `outside`:
/// `h_i + Σ_{j∉block} J_ij x_j`.
pub fn conditional_field(model: &IsingModel, block: &[usize], outside: &SpinConfig) -> Vec<f64> {
    if let Interaction::Sparse(g) = model.interaction() {
        return block
            .iter()
            .map(|&i| {
                model.field()[i]
                    + g.neighbors(i)
                        .filter(|(j, _)| !block.contains(j))
                        .map(|(j, w)| w * f64::from(outside.get(j)))
                        .sum::<f64>()
            })
            .collect();
    }
    block
        .iter()
        .map(|&i| {
            let inside: f64 = block
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| model.coupling(i, j) * f64::from(outside.get(j)))
                .sum();
            model.local_field(i, outside) - inside
        })
        .collect()
}

/// Picks the block of a uniform vertex (probability `|b|/n`) and redraws it
/// exactly from its conditional law. Returns the block index.
pub fn block_glauber_step(
    model: &IsingModel,
    partition: &BlockPartition,
    state: &mut SpinConfig,
    rng: &mut SimRng,
) -> Result<usize> {
    if partition.block_of.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: partition.block_of.len(),
        });
    }
    let labels = model.labels();
    if let (Some(l), None) = (labels, state.label_sum()) {
        state.attach_labels(l);
    }
    let b = partition.block_of(rng.gen_range(0..model.n()));
    let block = &partition.blocks[b];
    let h = conditional_field(model, block, state);
    let k = block.len();
    let jb = DMatrix::from_fn(k, k, |a, c| if a == c { 0.0 } else { model.coupling(block[a], block[c]) });
    let lw = enumerate_log_weights(&jb, &h);
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut pick = w.len() - 1;
    for (s, &ws) in w.iter().enumerate() {
        if u < ws {
            pick = s;
            break;
        }
        u -= ws;
    }
    for (a, &v) in block.iter().enumerate() {
        state.set(v, spin_at(pick, a) as i8, labels);
    }
    Ok(b)
}
