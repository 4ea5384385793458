//! Gauge transforms `J → DJD`, `h → Dh` by diagonal sign matrices.

use super::{Interaction, IsingModel};
use crate::centered::DENSE_LIMIT;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::neighborhood::connected_components;

fn check_signs(signs: &[i8], n: usize) -> Result<()> {
    if signs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: signs.len(),
        });
    }
    if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidParameter(format!("sign {i} is {}, expected ±1", signs[i])));
    }
    Ok(())
}

/// The model of `Dx` when `x ~ μ_{J,h}`, with `D = diag(signs)`.
///
/// Centered interactions are not closed under gauging and come back dense,
/// which is only allowed up to the dense size limit.
pub fn gauge_transform(model: &IsingModel, signs: &[i8]) -> Result<IsingModel> {
    check_signs(signs, model.n())?;
    let s = |i: usize| f64::from(signs[i]);
    let field = model.field().iter().enumerate().map(|(i, h)| s(i) * h).collect();
    let interaction = match model.interaction() {
        Interaction::Sparse(g) => Interaction::Sparse(g.map_weights(|e| e.weight * s(e.u) * s(e.v))?),
        Interaction::Dense(j) => Interaction::Dense(j.map_with_location(|a, b, v| v * s(a) * s(b))),
        Interaction::Centered(c) => {
            if c.n() > DENSE_LIMIT {
                return Err(Error::Unsupported(format!(
                    "gauging a centered interaction on {} > {DENSE_LIMIT} vertices",
                    c.n()
                )));
            }
            Interaction::Dense(c.to_dense()?.map_with_location(|a, b, v| v * s(a) * s(b)))
        }
    };
    IsingModel::new(interaction, field)
}

/// Signs along BFS trees: `D_v` is the product of edge signs on the tree path
/// from the root of `v`'s component. Edges with `skip` set are ignored.
fn bfs_signs(g: &Graph, roots: &[usize], skip: Option<(usize, usize)>) -> (Vec<i8>, Vec<bool>) {
    let mut sign = vec![1i8; g.n()];
    let mut seen = vec![false; g.n()];
    let mut queue = std::collections::VecDeque::new();
    for &r in roots {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        queue.push_back(r);
        while let Some(u) = queue.pop_front() {
            for (w, wt) in g.neighbors(u) {
                if skip == Some((u.min(w), u.max(w))) || seen[w] {
                    continue;
                }
                seen[w] = true;
                sign[w] = if wt < 0.0 { -sign[u] } else { sign[u] };
                queue.push_back(w);
            }
        }
    }
    (sign, seen)
}

/// Signs making every tree edge nonnegative after `J → DJD`, with `D_root = +1`.
///
/// `extra` designates one edge of a unicyclic graph to leave untouched; the
/// rest must then form a spanning tree.
pub fn tree_gauge(g: &Graph, root: usize, extra: Option<(usize, usize)>) -> Result<Vec<i8>> {
    let n = g.n();
    if root >= n {
        return Err(Error::VertexOutOfRange { vertex: root, n });
    }
    let skip = extra.map(|(a, b)| (a.min(b), a.max(b)));
    if let Some((a, b)) = skip {
        if !g.has_edge(a, b) {
            return Err(Error::NotATree(format!("designated edge ({a}, {b}) is not in the graph")));
        }
    }
    let tree_edges = g.m() - usize::from(skip.is_some());
    if tree_edges + 1 != n {
        return Err(Error::NotATree(format!("{tree_edges} tree edges on {n} vertices")));
    }
    let (sign, seen) = bfs_signs(g, &[root], skip);
    if seen.iter().any(|s| !s) {
        return Err(Error::NotATree("graph is disconnected".into()));
    }
    Ok(sign)
}

/// [`tree_gauge`] on every component of a forest, rooted at its smallest vertex.
pub fn forest_gauge(g: &Graph) -> Result<Vec<i8>> {
    let comps = connected_components(g);
    if let Some(c) = comps.components.iter().find(|c| c.excess > 0) {
        return Err(Error::NotATree(format!("component of vertex {} has a cycle", c.vertices[0])));
    }
    let roots: Vec<usize> = comps.components.iter().map(|c| c.vertices[0]).collect();
    Ok(bfs_signs(g, &roots, None).0)
}

/// Signs making the edges of a BFS spanning forest nonnegative; cycle-closing
/// edges keep whatever sign they end up with.
pub fn spanning_gauge(g: &Graph) -> Vec<i8> {
    let roots: Vec<usize> = (0..g.n()).collect();
    bfs_signs(g, &roots, None).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_path_negative_edge() {
        let g = Graph::from_edges(2, [(0, 1, -0.5)]).unwrap();
        assert_eq!(tree_gauge(&g, 0, None).unwrap(), vec![1, -1]);
        let m = IsingModel::sparse(g, vec![0.0; 2]).unwrap();
        let gm = gauge_transform(&m, &[1, -1]).unwrap();
        assert_eq!(gm.coupling(0, 1), 0.5);
    }

    #[test]
    fn rejects_non_trees() {
        let tri = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, -1.0), (0, 2, 1.0)]).unwrap();
        assert!(tree_gauge(&tri, 0, None).is_err());
        assert!(forest_gauge(&tri).is_err());
        let s = tree_gauge(&tri, 0, Some((2, 0))).unwrap();
        assert_eq!(s, vec![1, 1, -1]);
        let split = Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(tree_gauge(&split, 0, None).is_err());
        assert!(forest_gauge(&split).is_ok());
    }

    #[test]
    fn identity_signs_change_nothing() {
        let g = Graph::from_edges(3, [(0, 1, -0.3), (1, 2, 0.2)]).unwrap();
        let m = IsingModel::sparse(g, vec![0.1, -0.2, 0.3]).unwrap();
        assert_eq!(gauge_transform(&m, &[1, 1, 1]).unwrap(), m);
        assert!(gauge_transform(&m, &[1, 0, 1]).is_err());
    }
}
