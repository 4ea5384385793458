use std::collections::{BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::Rng;
use sparse_ising::generate::{gen_er, gen_sbm, random_signing, random_tree, uniform_weights};
use sparse_ising::neighborhood::{ball, connected_components, distance_matrix};
use sparse_ising::{CenteredInteraction, CommunityLabels, Error, Graph, RngSeed};

fn naive_bfs(g: &Graph, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for e in g.edges() {
            let other = if e.u == u {
                e.v
            } else if e.v == u {
                e.u
            } else {
                continue;
            };
            if dist[other].is_none() {
                dist[other] = Some(du + 1);
                q.push_back(other);
            }
        }
    }
    dist
}

fn union_find_excess(g: &Graph) -> Vec<(usize, usize)> {
    let n = g.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for e in g.edges() {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a] = b;
        }
    }
    let mut verts = std::collections::BTreeMap::<usize, (usize, usize)>::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        verts.entry(r).or_default().0 += 1;
    }
    for e in g.edges() {
        let r = find(&mut parent, e.u);
        verts.get_mut(&r).unwrap().1 += 1;
    }
    let mut out: Vec<(usize, usize)> = verts.values().map(|&(v, e)| (v, e + 1 - v)).collect();
    out.sort_unstable();
    out
}

#[test]
fn graph_rejects_self_loops_duplicates_and_bad_weights() {
    assert!(matches!(Graph::from_edges(3, [(1, 1, 1.0)]), Err(Error::SelfLoop(1))));
    assert!(matches!(
        Graph::from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)]),
        Err(Error::DuplicateEdge(..))
    ));
    assert!(matches!(Graph::from_edges(3, [(0, 1, 0.0)]), Err(Error::InvalidWeight { .. })));
    assert!(matches!(Graph::from_edges(3, [(0, 1, f64::NAN)]), Err(Error::InvalidWeight { .. })));
    assert!(matches!(Graph::from_edges(3, [(0, 3, 1.0)]), Err(Error::VertexOutOfRange { .. })));
}

#[test]
fn adjacency_is_sorted_and_symmetric() {
    let g = gen_er(500, 6.0, RngSeed::new(4)).unwrap();
    for v in 0..g.n() {
        let ids = g.neighbor_ids(v);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for (u, w) in g.neighbors(v) {
            assert_eq!(g.weight(u, v), Some(w));
        }
    }
}

#[test]
fn edge_list_round_trip_is_exact() {
    let g = gen_er(300, 4.0, RngSeed::new(2)).unwrap();
    let g = uniform_weights(&g, -3.0, 3.0, RngSeed::new(9)).unwrap();
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    let back = Graph::read_edge_list(buf.as_slice()).unwrap();
    assert_eq!(back.n(), g.n());
    assert_eq!(back.edges(), g.edges());
}

#[test]
fn edge_list_reader_rejects_bad_input() {
    assert!(Graph::read_edge_list("3 1\n1 1 1.0\n".as_bytes()).is_err());
    assert!(Graph::read_edge_list("3 2\n0 1 1.0\n1 0 1.0\n".as_bytes()).is_err());
    assert!(Graph::read_edge_list("3 2\n0 1 1.0\n".as_bytes()).is_err());
    assert!(Graph::read_edge_list("3 1\n0 x 1.0\n".as_bytes()).is_err());
}

#[test]
fn community_labels_must_be_signs() {
    assert!(CommunityLabels::new(vec![1, -1, 1]).is_ok());
    assert!(CommunityLabels::new(vec![1, 0]).is_err());
}

#[test]
fn sbm_vanishing_density_is_empty() {
    for s in 0..20 {
        let (g, sigma) = gen_sbm(4, 1e-9, 0.0, RngSeed::new(s)).unwrap();
        assert_eq!(g.m(), 0);
        assert_eq!(sigma.len(), 4);
    }
}

#[test]
fn sbm_rejects_probabilities_outside_unit_interval() {
    assert!(gen_sbm(100, 4.0, 3.0, RngSeed::new(0)).is_err());
    assert!(gen_sbm(10, 9.0, 1.0, RngSeed::new(0)).is_err());
    assert!(gen_sbm(10, 0.0, 0.0, RngSeed::new(0)).is_err());
    assert!(gen_er(10, 11.0, RngSeed::new(0)).is_err());
}

#[test]
fn sbm_mean_degree_concentrates() {
    let n = 100_000;
    for d in [3.0, 5.0, 8.0] {
        let expected = d * (1.0 - 1.0 / n as f64);
        for s in 0..10 {
            let (g, _) = gen_sbm(n, d, 0.0, RngSeed::new(s)).unwrap();
            let mean = 2.0 * g.m() as f64 / n as f64;
            // Twice a Binomial edge count over n: sd is sqrt(2 expected / n).
            let sd = (2.0 * expected / n as f64).sqrt();
            assert!((mean - expected).abs() <= 3.0 * sd, "d={d} seed={s} mean={mean}");
            assert!((mean - d).abs() < 0.1);
        }
    }
}

#[test]
fn sbm_intra_fraction_matches_rate_ratio() {
    let (g, sigma) = gen_sbm(100_000, 5.0, 1.0, RngSeed::new(11)).unwrap();
    let intra = g.edges().iter().filter(|e| sigma.get(e.u) == sigma.get(e.v)).count();
    let frac = intra as f64 / g.m() as f64;
    let expected = (5.0 + 5f64.sqrt()) / 10.0;
    assert!((frac - expected).abs() < 0.01, "{frac} vs {expected}");
}

#[test]
fn generators_are_deterministic() {
    let a = gen_sbm(20_000, 5.0, 0.5, RngSeed::new(3)).unwrap();
    let b = gen_sbm(20_000, 5.0, 0.5, RngSeed::new(3)).unwrap();
    assert_eq!(a.0.edges(), b.0.edges());
    assert_eq!(a.1, b.1);
    let c = gen_sbm(20_000, 5.0, 0.5, RngSeed::new(3).with_stream(1)).unwrap();
    assert_ne!(a.0.edges(), c.0.edges());
}

#[test]
fn generation_is_identical_across_thread_pools() {
    let make = || {
        (0..4u64)
            .map(|k| gen_er(5_000, 4.0, RngSeed::new(1).derive(k)).unwrap().edges().to_vec())
            .collect::<Vec<_>>()
    };
    let serial = make();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let parallel: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        (0..4u64)
            .into_par_iter()
            .map(|k| gen_er(5_000, 4.0, RngSeed::new(1).derive(k)).unwrap().edges().to_vec())
            .collect()
    });
    assert_eq!(serial, parallel);
}

#[test]
fn signing_preserves_topology_and_is_deterministic() {
    let empty = Graph::empty(5);
    assert_eq!(random_signing(&empty, RngSeed::new(1)).unwrap().m(), 0);
    let tri = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
    let s1 = random_signing(&tri, RngSeed::new(5)).unwrap();
    let s2 = random_signing(&tri, RngSeed::new(5)).unwrap();
    assert_eq!(s1.edges(), s2.edges());
    for (a, b) in s1.edges().iter().zip(tri.edges()) {
        assert_eq!((a.u, a.v), (b.u, b.v));
        assert!(a.weight == 1.0 || a.weight == -1.0);
    }
    assert!(random_signing(&s1.scaled(2.0).unwrap(), RngSeed::new(0)).is_err());
}

#[test]
fn signing_mean_is_near_zero() {
    let g = gen_er(40_000, 5.0, RngSeed::new(8)).unwrap();
    assert!(g.m() >= 100_000 - 2_000);
    let s = random_signing(&g, RngSeed::new(8)).unwrap();
    let mean = s.edges().iter().map(|e| e.weight).sum::<f64>() / s.m() as f64;
    assert!(mean.abs() < 4.0 / (s.m() as f64).sqrt(), "{mean}");
}

#[test]
fn centered_n2_no_edges() {
    let g = Graph::empty(2);
    let sigma = CommunityLabels::new(vec![1, -1]).unwrap();
    let d: f64 = 1.5;
    let c = CenteredInteraction::new(&g, &sigma, d, 0.0, d.sqrt()).unwrap();
    let m = c.to_dense().unwrap();
    assert!((m[(0, 1)] + d / 2.0).abs() < 1e-14);
    assert_eq!(m[(0, 0)], 0.0);
}

fn explicit_centered(g: &Graph, sigma: &[i8], d: f64, lambda: f64, beta: f64) -> nalgebra::DMatrix<f64> {
    let n = g.n();
    let a = g.to_dense_pattern();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let expect = d / n as f64 + lambda * d.sqrt() / n as f64 * (sigma[i] * sigma[j]) as f64;
                m[(i, j)] = beta / d.sqrt() * (a[(i, j)] - expect);
            }
        }
    }
    m
}

#[test]
fn centered_matches_explicit_and_rows() {
    for s in 0..5 {
        let (g, sigma) = gen_sbm(6, 2.0, 0.4, RngSeed::new(s)).unwrap();
        let c = CenteredInteraction::new(&g, &sigma, 2.0, 0.4, 0.7).unwrap();
        let oracle = explicit_centered(&g, sigma.as_slice(), 2.0, 0.4, 0.7);
        assert!((c.to_dense().unwrap() - oracle).abs().max() < 1e-12);
    }
    let n = 150;
    let (g, sigma) = gen_sbm(n, 4.0, 0.0, RngSeed::new(1)).unwrap();
    let beta = 0.9;
    let c = CenteredInteraction::new(&g, &sigma, 4.0, 0.0, beta).unwrap();
    let dense = c.to_dense().unwrap();
    for v in 0..n {
        let row: f64 = dense.row(v).sum();
        let expect = beta / 2.0 * (g.degree(v) as f64 - 4.0 * (n as f64 - 1.0) / n as f64);
        assert!((row - expect).abs() < 1e-10);
    }
}

#[test]
fn centered_rejects_dimension_mismatch() {
    let g = Graph::empty(3);
    let sigma = CommunityLabels::all_plus(4);
    assert!(matches!(
        CenteredInteraction::new(&g, &sigma, 2.0, 0.0, 1.0),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn centered_matvec_is_linear_and_matches_dense() {
    let (g, sigma) = gen_sbm(200, 3.0, 0.8, RngSeed::new(2)).unwrap();
    let c = CenteredInteraction::new(&g, &sigma, 3.0, 0.8, 0.5).unwrap();
    let dense = c.to_dense().unwrap();
    let mut rng = RngSeed::new(99).rng();
    let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    let (mut cx, mut cy, mut cxy) = (vec![0.0; 200], vec![0.0; 200], vec![0.0; 200]);
    c.matvec(&x, &mut cx);
    c.matvec(&y, &mut cy);
    c.matvec(&xy, &mut cxy);
    let dx = &dense * nalgebra::DVector::from_vec(x.clone());
    for i in 0..200 {
        assert!((cxy[i] - cx[i] - cy[i]).abs() < 1e-10);
        assert!((cx[i] - dx[i]).abs() < 1e-12);
    }
}

#[test]
fn ball_small_cases() {
    let path = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    assert_eq!(ball(&path, 1, 0), vec![(1, 0)]);
    let b: BTreeSet<usize> = ball(&path, 1, 1).into_iter().map(|(v, _)| v).collect();
    assert_eq!(b, BTreeSet::from([0, 1, 2]));
}

#[test]
fn ball_matches_naive_bfs_on_er() {
    let g = gen_er(10_000, 3.0, RngSeed::new(6)).unwrap();
    for v in (0..10_000).step_by(997) {
        let dist = naive_bfs(&g, v);
        for r in 0..5 {
            let mut got = ball(&g, v, r);
            got.sort_unstable();
            let want: Vec<(usize, usize)> = dist
                .iter()
                .enumerate()
                .filter_map(|(u, d)| d.filter(|&d| d <= r).map(|d| (u, d)))
                .collect();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn distance_matrix_small_cases() {
    let path = Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
    let a0 = distance_matrix(&path, 0).to_dense();
    assert_eq!(a0, nalgebra::DMatrix::identity(4, 4));
    let a1 = distance_matrix(&path, 1).to_dense();
    assert_eq!(a1, path.to_dense_pattern());
    let a3 = distance_matrix(&path, 3);
    let entries: Vec<_> = a3.triplets().collect();
    assert_eq!(entries, vec![(0, 3, 1.0), (3, 0, 1.0)]);
}

#[test]
fn distance_matrices_partition_tree_pairs() {
    let t = random_tree(50, RngSeed::new(12));
    let mut total = nalgebra::DMatrix::<f64>::zeros(50, 50);
    for ell in 1..50 {
        total += distance_matrix(&t, ell).to_dense();
    }
    let ones = nalgebra::DMatrix::from_fn(50, 50, |i, j| if i == j { 0.0 } else { 1.0 });
    assert_eq!(total, ones);
}

#[test]
fn distance_matrix_agrees_with_ball() {
    let g = gen_er(300, 2.5, RngSeed::new(21)).unwrap();
    let mats: Vec<_> = (0..5).map(|k| distance_matrix(&g, k)).collect();
    for v in (0..300).step_by(17) {
        for (u, k) in ball(&g, v, 4) {
            for (kk, m) in mats.iter().enumerate() {
                assert_eq!(m.get(u, v) == 1.0, kk == k);
            }
        }
    }
}

#[test]
fn components_small_cases() {
    let forest = random_tree(30, RngSeed::new(1));
    assert!(connected_components(&forest).components.iter().all(|c| c.excess == 0));
    let tri = Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
    let comps = connected_components(&tri);
    let mut shape: Vec<(usize, usize)> = comps.components.iter().map(|c| (c.size(), c.excess)).collect();
    shape.sort_unstable();
    assert_eq!(shape, vec![(1, 0), (3, 1)]);
}

#[test]
fn components_match_union_find() {
    for s in 0..5 {
        let g = gen_er(1_000, 0.5, RngSeed::new(s)).unwrap();
        let mut got: Vec<(usize, usize)> = connected_components(&g)
            .components
            .iter()
            .map(|c| (c.size(), c.excess))
            .collect();
        got.sort_unstable();
        assert_eq!(got, union_find_excess(&g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_ball_distance_consistency(seed in 0u64..1_000, n in 2usize..60, d in 0.5f64..4.0) {
        let g = gen_er(n, d.min(n as f64), RngSeed::new(seed)).unwrap();
        let v = (seed as usize) % n;
        let dist = naive_bfs(&g, v);
        for (u, k) in ball(&g, v, 3) {
            prop_assert_eq!(dist[u], Some(k));
            prop_assert_eq!(distance_matrix(&g, k).get(u, v), 1.0);
        }
    }

    #[test]
    fn prop_round_trip(seed in 0u64..1_000, n in 1usize..40) {
        let g = gen_er(n, (n as f64).min(3.0), RngSeed::new(seed)).unwrap();
        let g = uniform_weights(&g, -1e3, 1e3, RngSeed::new(seed + 1)).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = Graph::read_edge_list(buf.as_slice()).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
    }
}
