//! Zero-field covariance of forest Ising models in closed form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::neighborhood::connected_components;

/// `Cov[i, j] = ∏ tanh(J_e)` over the unique `i`–`j` path (zero across
/// components, one on the diagonal).
pub fn tree_covariance_closed_form(g: &Graph) -> Result<DMatrix<f64>> {
    let comps = connected_components(g);
    if let Some(c) = comps.components.iter().find(|c| c.excess > 0) {
        return Err(Error::NotATree(format!("component of vertex {} has a cycle", c.vertices[0])));
    }
    let n = g.n();
    let mut cov = DMatrix::zeros(n, n);
    let mut stack = Vec::new();
    let mut seen = vec![usize::MAX; n];
    for root in 0..n {
        cov[(root, root)] = 1.0;
        seen[root] = root;
        stack.push((root, 1.0f64));
        while let Some((u, prod)) = stack.pop() {
            for (w, wt) in g.neighbors(u) {
                if seen[w] != root {
                    seen[w] = root;
                    let p = prod * wt.tanh();
                    cov[(root, w)] = p;
                    stack.push((w, p));
                }
            }
        }
    }
    Ok(cov)
}
