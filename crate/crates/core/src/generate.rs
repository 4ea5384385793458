//! Random graph generators: Erdős–Rényi, two-community block models, signings
//! and uniform random trees.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{CommunityLabels, Edge, Graph};
use crate::rng::{RngSeed, SimRng};

/// Number of failures before the next success of a Bernoulli(p) sequence.
fn geometric_skip(rng: &mut SimRng, log_q: f64) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    (u.ln() / log_q).floor()
}

/// Emits every unordered pair of `members` independently with probability `p`.
fn sample_within(members: &[usize], p: f64, rng: &mut SimRng, out: &mut Vec<(usize, usize, f64)>) {
    let k = members.len();
    if p <= 0.0 || k < 2 {
        return;
    }
    let log_q = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, -1.0f64);
    loop {
        w += 1.0 + geometric_skip(rng, log_q);
        while w >= v as f64 && v < k {
            w -= v as f64;
            v += 1;
        }
        if v >= k {
            break;
        }
        out.push((members[v], members[w as usize], 1.0));
    }
}

/// Emits every pair in `left × right` independently with probability `p`.
fn sample_across(left: &[usize], right: &[usize], p: f64, rng: &mut SimRng, out: &mut Vec<(usize, usize, f64)>) {
    let total = left.len() as f64 * right.len() as f64;
    if p <= 0.0 || total == 0.0 {
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx = -1.0f64;
    loop {
        idx += 1.0 + geometric_skip(rng, log_q);
        if idx >= total {
            break;
        }
        let i = idx as u64;
        let r = right.len() as u64;
        out.push((left[(i / r) as usize], right[(i % r) as usize], 1.0));
    }
}

/// Two-community stochastic block model with unit weights.
///
/// Same-community pairs connect with probability `(d + λ√d)/n`, cross pairs
/// with `(d − λ√d)/n`. Labels are uniform ±1. Edges are drawn by geometric
/// skipping over each community block, so the cost is linear in the output.
pub fn gen_sbm(n: usize, d: f64, lambda: f64, seed: RngSeed) -> Result<(Graph, CommunityLabels)> {
    if !(d > 0.0) || !d.is_finite() || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("need d > 0 and finite λ, got d={d}, λ={lambda}")));
    }
    let spread = lambda.abs() * d.sqrt();
    if d - spread < 0.0 || d + spread > n as f64 {
        return Err(Error::InvalidParameter(format!(
            "edge probabilities ({} ± {})/{n} leave [0, 1]",
            d, spread
        )));
    }
    let p_in = (d + lambda * d.sqrt()) / n as f64;
    let p_out = (d - lambda * d.sqrt()) / n as f64;
    let mut rng = seed.rng();
    let sigma: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    let plus: Vec<usize> = (0..n).filter(|&v| sigma[v] == 1).collect();
    let minus: Vec<usize> = (0..n).filter(|&v| sigma[v] == -1).collect();
    let mut edges = Vec::with_capacity((n as f64 * d * 0.55) as usize + 16);
    sample_within(&plus, p_in, &mut rng, &mut edges);
    sample_within(&minus, p_in, &mut rng, &mut edges);
    sample_across(&plus, &minus, p_out, &mut rng, &mut edges);
    let g = Graph::from_edges(n, edges)?;
    Ok((g, CommunityLabels::new(sigma)?))
}

/// Erdős–Rényi graph `G(n, d/n)` with unit weights.
pub fn gen_er(n: usize, d: f64, seed: RngSeed) -> Result<Graph> {
    if !(d >= 0.0) || d > n as f64 {
        return Err(Error::InvalidParameter(format!("edge probability {d}/{n} outside [0, 1]")));
    }
    let all: Vec<usize> = (0..n).collect();
    let mut rng = seed.rng();
    let mut edges = Vec::new();
    sample_within(&all, d / n as f64, &mut rng, &mut edges);
    Graph::from_edges(n, edges)
}

/// Independent uniform ±1 weight for each edge, in edge order.
pub fn random_signing(g: &Graph, seed: RngSeed) -> Result<Graph> {
    if !g.has_unit_weights() {
        return Err(Error::Precondition("random_signing expects unit weights".into()));
    }
    let mut rng = seed.rng();
    g.map_weights(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Uniform random recursive tree on shuffled labels, unit weights.
pub fn random_tree(n: usize, seed: RngSeed) -> Graph {
    let mut rng = seed.rng();
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut rng);
    let mut edges: Vec<Edge> = (1..n)
        .map(|i| {
            let parent = rng.gen_range(0..i);
            let (a, b) = (labels[i], labels[parent]);
            Edge {
                u: a.min(b),
                v: a.max(b),
                weight: 1.0,
            }
        })
        .collect();
    edges.sort_by(|x, y| (x.u, x.v).cmp(&(y.u, y.v)));
    Graph::from_sorted_edges(n, edges)
}

/// Replaces every weight by an independent uniform draw from `[lo, hi]`,
/// redrawing exact zeros.
pub fn uniform_weights(g: &Graph, lo: f64, hi: f64, seed: RngSeed) -> Result<Graph> {
    let mut rng = seed.rng();
    g.map_weights(|_| loop {
        let w = rng.gen_range(lo..=hi);
        if w != 0.0 {
            break w;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(gen_sbm(10, 5.0, 3.0, RngSeed::new(1)).is_err());
        assert!(gen_sbm(4, 5.0, 0.0, RngSeed::new(1)).is_err());
        assert!(gen_sbm(10, -1.0, 0.0, RngSeed::new(1)).is_err());
    }

    #[test]
    fn complete_when_probability_one() {
        let (g, _) = gen_sbm(6, 6.0, 0.0, RngSeed::new(2)).unwrap();
        assert_eq!(g.m(), 15);
        let g = gen_er(5, 5.0, RngSeed::new(2)).unwrap();
        assert_eq!(g.m(), 10);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_sbm(2000, 4.0, 1.0, RngSeed::new(9)).unwrap();
        let b = gen_sbm(2000, 4.0, 1.0, RngSeed::new(9)).unwrap();
        assert_eq!(a, b);
        let c = gen_sbm(2000, 4.0, 1.0, RngSeed::new(9).with_stream(1)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn random_tree_is_spanning_tree() {
        let t = random_tree(40, RngSeed::new(3));
        assert_eq!(t.m(), 39);
        let comps = crate::neighborhood::connected_components(&t);
        assert_eq!(comps.components.len(), 1);
    }

    #[test]
    fn signing_requires_unit_weights() {
        let g = Graph::from_edges(2, [(0, 1, 2.0)]).unwrap();
        assert!(random_signing(&g, RngSeed::new(0)).is_err());
    }
}
