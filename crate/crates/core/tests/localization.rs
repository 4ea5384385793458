use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sparse_ising::decomposition::excise;
use sparse_ising::generate::{gen_er, random_tree, uniform_weights};
use sparse_ising::ising::{ExactOracle, IsingModel, SpinConfig};
use sparse_ising::localization::{
    beta_threshold, build_control_matrix, control_matrix_from_parts, decomposition_bound_check,
    discretized_localization_path, hs_covariance_identity_check, hs_mixture_check, hs_sample,
    path_covariance_norm, sandwich_margin, standard_probes, ControlParams, CovarianceMode, HsDecomposition,
    McBudget, PathSetup, Probe,
};
use sparse_ising::{Error, Graph, RngSeed};

fn random_model(n: usize, scale: f64, seed: u64) -> IsingModel {
    let g = gen_er(n, 3.0f64.min(n as f64), RngSeed::new(seed)).unwrap();
    let g = uniform_weights(&g, -scale, scale, RngSeed::new(seed).derive(1)).unwrap();
    let mut rng = RngSeed::new(seed).derive(2).rng();
    let h = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    IsingModel::sparse(g, h).unwrap()
}

fn shifted_control(model: &IsingModel, margin: f64) -> DMatrix<f64> {
    let j = model.coupling_matrix().unwrap();
    let n = j.nrows();
    let lmin = j.clone().symmetric_eigenvalues().min();
    &j + DMatrix::identity(n, n) * (-lmin + margin).max(margin)
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

#[test]
fn parameter_formulas() {
    let mut p = ControlParams::new(4.0, 0.5, 0.0);
    p.gamma = 0.0;
    p.big_d = 4.0;
    p.delta = 0.5;
    assert!((p.f_gamma() - 1.0).abs() < 1e-15);
    assert!((p.delta_prime() - 0.25).abs() < 1e-15);
    assert!((p.rho() - 0.4).abs() < 1e-15);
    let p = ControlParams::new(5.0, 0.5, 0.1);
    assert!((p.k() - (0.01 + 0.6)).abs() < 1e-15);
    assert!((p.theta() - (0.01 + 0.3)).abs() < 1e-15);
    assert!((p.gamma - 0.1 * 1.5f64.sqrt()).abs() < 1e-15);
    assert!((p.big_d - 7.5).abs() < 1e-15);
    assert!(p.condition_holds());
    assert!(p.k() * p.f_gamma() <= 0.95);
    let th = beta_threshold(5.0, 0.5);
    assert!((th - 0.0569).abs() < 1e-3, "{th}");
    assert!(beta_threshold(1e8, 0.0) > 0.17 && beta_threshold(1e8, 0.0) < 3.0 - 8f64.sqrt());
    assert!(!ControlParams::new(5.0, 0.5, 0.3).condition_holds());
}

#[test]
fn control_matrix_structure() {
    let bulk = Graph::from_edges(6, [(0, 1, 0.2), (1, 2, -0.3), (2, 0, 0.1)]).unwrap();
    let interior = vec![false, false, false, true, true, false];
    let mut p = ControlParams::new(5.0, 0.5, 0.1);
    p.big_delta = 3.0;
    p.t = 0.25;
    let m = control_matrix_from_parts(&bulk, &interior, &p).unwrap();
    let d = m.to_dense();
    assert!((d[(0, 1)] - 0.75 * 0.2).abs() < 1e-15);
    assert!((d[(0, 0)] - p.theta()).abs() < 1e-15);
    assert!((d[(5, 5)] - p.theta()).abs() < 1e-15);
    assert!((d[(3, 3)] - p.rho() / 3.0).abs() < 1e-15);
    assert_eq!(d[(3, 4)], 0.0);
    assert!(m.is_psd());
    assert!(m.condition_holds);
    // Path end: bulk coupling vanishes, only the diagonal remains.
    p.t = 1.0;
    let m = control_matrix_from_parts(&bulk, &interior, &p).unwrap();
    let d = m.to_dense();
    assert_eq!(d.clone() - DMatrix::from_diagonal(&d.diagonal()), DMatrix::zeros(6, 6));
    assert!((d[(0, 0)] - (0.5 + p.eta + 2.0 * p.beta * 1.5)).abs() < 1e-15);
    assert!(control_matrix_from_parts(&bulk, &[false; 5], &p).is_err());
}

#[test]
fn control_matrix_condition_modes() {
    let bulk = Graph::empty(3);
    let mut p = ControlParams::new(5.0, 0.5, 0.3);
    assert!(!p.condition_holds());
    let m = control_matrix_from_parts(&bulk, &[false; 3], &p).unwrap();
    assert!(!m.condition_holds);
    p.strict = true;
    assert!(matches!(
        control_matrix_from_parts(&bulk, &[false; 3], &p),
        Err(Error::Precondition(_))
    ));
    let mut bad = ControlParams::new(5.0, 0.5, 0.1);
    bad.t = 1.5;
    assert!(control_matrix_from_parts(&bulk, &[false; 3], &bad).is_err());
}

#[test]
fn control_matrix_on_excision_is_psd() {
    for s in 0..3 {
        let g = gen_er(5_000, 5.0, RngSeed::new(s)).unwrap();
        let ex = excise(&g, 5.0, 0.5).unwrap();
        let beta = 0.05;
        let j_bulk = sparse_ising::generate::random_signing(&ex.bulk, RngSeed::new(s))
            .unwrap()
            .scaled(beta)
            .unwrap();
        let p = ControlParams::new(5.0, 0.5, beta);
        let m = build_control_matrix(&ex, &j_bulk, &p).unwrap();
        assert!(m.min_eigenvalue() >= -1e-10);
        assert!(build_control_matrix(&ex, &Graph::empty(3), &p).is_err());
    }
}

#[test]
fn hs_sample_cases() {
    let model = random_model(5, 0.5, 1);
    let j = model.coupling_matrix().unwrap();
    let x = SpinConfig::new(vec![1, -1, 1, 1, -1]).unwrap();
    let mut rng = RngSeed::new(3).rng();

    // C = 0: nothing is smoothed and the conditional is the model itself.
    let zero = DMatrix::zeros(5, 5);
    let s = hs_sample(&model, &zero, &x, &mut rng).unwrap();
    assert_eq!(s.z, vec![1.0, -1.0, 1.0, 1.0, -1.0]);
    let a = ExactOracle::build(&s.conditional).unwrap();
    let b = ExactOracle::build(&model).unwrap();
    assert!(a.probs().iter().zip(b.probs()).all(|(p, q)| (p - q).abs() < 1e-14));

    // C = I: z − x is standard normal and the interaction drops by I.
    let hs = HsDecomposition::new(&model, &DMatrix::identity(5, 5)).unwrap();
    assert_eq!(hs.reduced_interaction(), &(&j - DMatrix::identity(5, 5)));
    let draws = 40_000;
    let mut sum = DVector::zeros(5);
    let mut sumsq = DVector::zeros(5);
    for _ in 0..draws {
        let s = hs.sample(&x, &mut rng).unwrap();
        let e = DVector::from_iterator(5, s.z.iter().zip(x.spins()).map(|(z, &xi)| z - f64::from(xi)));
        sum += &e;
        sumsq += e.component_mul(&e);
        let want = DVector::from_column_slice(model.field()) + DVector::from_column_slice(&s.z);
        assert!((DVector::from_column_slice(s.conditional.field()) - want).abs().max() < 1e-12);
    }
    for i in 0..5 {
        let mean = sum[i] / draws as f64;
        let var = sumsq[i] / draws as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (draws as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    let not_psd = -DMatrix::<f64>::identity(5, 5);
    assert!(matches!(hs_sample(&model, &not_psd, &x, &mut rng), Err(Error::NotPsd(_))));
    assert!(hs_sample(&model, &DMatrix::identity(4, 4), &x, &mut rng).is_err());
}

#[test]
fn mixture_matches_exact_table() {
    for s in 0..3 {
        let model = random_model(6, 0.6, 10 + s);
        let c = &model.coupling_matrix().unwrap() + DMatrix::identity(6, 6) * 2.0;
        assert!(min_eig(&c) >= 0.0);
        let r = hs_mixture_check(&model, &c, 100_000, 4.0, RngSeed::new(s)).unwrap();
        assert!(r.pass, "max z {}", r.max_z);
        assert_eq!(r.exact.len(), 64);
    }
    let big = IsingModel::sparse(Graph::empty(15), vec![0.0; 15]).unwrap();
    assert!(hs_mixture_check(&big, &DMatrix::identity(15, 15), 10, 4.0, RngSeed::new(0)).is_err());
}

#[test]
fn mixture_detects_a_wrong_decomposition() {
    // Mixing the wrong base model into the conditional tables must fail.
    let model = random_model(4, 0.8, 3);
    let c = shifted_control(&model, 1.0);
    let wrong = model.with_field(vec![0.4; 4]).unwrap();
    let hs_wrong = hs_mixture_check(&wrong, &c, 50_000, 4.0, RngSeed::new(1)).unwrap();
    let exact_model = ExactOracle::build(&model).unwrap();
    let tv: f64 = 0.5
        * hs_wrong
            .mixture
            .iter()
            .zip(exact_model.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    assert!(tv > 0.01);
}

#[test]
fn covariance_identity_cases() {
    let free = IsingModel::sparse(Graph::empty(3), vec![0.0; 3]).unwrap();
    let r = hs_covariance_identity_check(&free, &DMatrix::identity(3, 3), 200_000, RngSeed::new(1)).unwrap();
    for i in 0..3 {
        assert!((r.expected[i][i] - 2.0).abs() < 1e-12);
    }
    assert!(r.relative_residual < 0.02);

    let ferro = IsingModel::sparse(Graph::from_edges(2, [(0, 1, 0.5)]).unwrap(), vec![0.0; 2]).unwrap();
    let c = DMatrix::identity(2, 2) * 2.0;
    let r = hs_covariance_identity_check(&ferro, &c, 400_000, RngSeed::new(2)).unwrap();
    assert!((r.expected[0][1] - 0.5f64.tanh()).abs() < 1e-12);
    assert!((r.expected[0][0] - 1.5).abs() < 1e-12);
    // Entry standard error is about sqrt(2·1.5²/N).
    let se = (2.0 * 1.5f64.powi(2) / 400_000.0).sqrt();
    for i in 0..2 {
        for j in 0..2 {
            assert!((r.estimate[i][j] - r.expected[i][j]).abs() < 3.0 * se);
        }
    }

    let model = random_model(8, 0.5, 7);
    let c = shifted_control(&model, 2.0);
    let r = hs_covariance_identity_check(&model, &c, 1_000_000, RngSeed::new(3)).unwrap();
    assert!(r.relative_residual <= 0.02, "{}", r.relative_residual);
}

#[test]
fn covariance_domination_by_smoothed_law() {
    for s in 0..5 {
        let model = random_model(7, 0.7, 40 + s);
        let c = shifted_control(&model, 0.5);
        let cov = ExactOracle::build(&model).unwrap().covariance().clone();
        let cinv = c.clone().try_inverse().unwrap();
        // Cov(z) = Cov(μ) + C⁻¹ ⪰ Cov(μ).
        assert!(min_eig(&cinv) > 0.0);
        let r = hs_covariance_identity_check(&model, &c, 200_000, RngSeed::new(s)).unwrap();
        let est = DMatrix::from_fn(7, 7, |i, j| r.estimate[i][j]);
        assert!(min_eig(&(crate_sym(&est) - &cov)) > -0.05);
    }
}

fn crate_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[test]
fn decomposition_bound_holds() {
    for s in 0..4 {
        let n = 6;
        let model = random_model(n, 0.3, 60 + s);
        let j = model.coupling_matrix().unwrap();
        // M₁ positive definite with norm below one, carrying half the interaction.
        let half_norm = (&j * 0.5).symmetric_eigenvalues().abs().max();
        let m1 = &j * 0.5 + DMatrix::identity(n, n) * (half_norm + 0.05);
        assert!((&m1).clone().symmetric_eigenvalues().max() < 1.0);
        let m2 = &j * 0.5;
        let r = decomposition_bound_check(&m1, &m2, model.field(), 100, RngSeed::new(s)).unwrap();
        assert!(r.gamma > 0.0);
        assert_eq!(r.pass, Some(true));
    }
}

#[test]
fn sandwich_margin_on_random_matrices() {
    let mut rng = RngSeed::new(17).rng();
    for _ in 0..200 {
        let n = rng.gen_range(1..7);
        let alpha: f64 = rng.gen_range(0.1..3.0);
        let (eta1, eta2): (f64, f64) = (rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.5));
        let hi = (1.0 - eta2) / alpha;
        if eta1 > hi {
            continue;
        }
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = crate_sym(&a);
        let m = &m * (alpha * rng.gen_range(0.0..1.0) / m.clone().symmetric_eigenvalues().abs().max().max(1e-12));
        let q = a.clone().qr().q();
        let eig = DVector::from_fn(n, |_, _| rng.gen_range(eta1..=hi));
        let l = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let margin = sandwich_margin(&m, &l, alpha, eta1, eta2).expect("hypotheses hold");
        assert!(margin >= -1e-10, "{margin}");
    }
    let l = DMatrix::identity(2, 2) * 5.0;
    assert!(sandwich_margin(&DMatrix::identity(2, 2), &l, 1.0, 0.1, 0.1).is_none());
}

fn synthetic_setup() -> PathSetup {
    // Bulk 4-cycle on 0..4, tree on 3..12 hanging from boundary vertex 3.
    let n = 12;
    let bulk = Graph::from_edges(n, [(0, 1, 0.05), (1, 2, -0.05), (2, 3, 0.05), (0, 3, 0.05)]).unwrap();
    let t = random_tree(9, RngSeed::new(4));
    let forest = Graph::from_edges(n, t.edges().iter().map(|e| (e.u + 3, e.v + 3, 0.06))).unwrap();
    let interior: Vec<bool> = (0..n).map(|v| v >= 4).collect();
    let mut params = ControlParams::new(5.0, 0.5, 0.05);
    params.big_delta = sparse_ising::decomposition::observed_delta(&forest, params.big_d);
    PathSetup {
        j_bulk: bulk,
        j_forest: forest,
        interior,
        params,
    }
}

#[test]
fn path_covariance_dominated_on_synthetic_split() {
    let setup = synthetic_setup();
    let n = 12;
    let mut probes = standard_probes(n, 3.0, 1, RngSeed::new(2));
    probes.retain(|p| p.name == "zero" || p.name == "gaussian0");
    let pts = path_covariance_norm(&setup, &[0.0, 0.5, 1.0], &probes, CovarianceMode::Exact, McBudget::default(), None, RngSeed::new(0))
        .unwrap();
    assert_eq!(pts.len(), 6);
    let c_fit = pts.iter().map(|p| p.fitted_c).fold(0.0, f64::max);
    let pts = path_covariance_norm(&setup, &[0.0, 0.5, 1.0], &probes, CovarianceMode::Exact, McBudget::default(), Some(c_fit), RngSeed::new(0))
        .unwrap();
    let weight = DMatrix::from_diagonal(&DVector::from_fn(n, |v, _| if setup.interior[v] { setup.params.big_delta } else { 1.0 }));
    for p in &pts {
        assert_eq!(p.psd_pass, Some(true));
        assert!(!p.flagged);
        // Independent dense eigencheck of Cov ⪯ c·(I_B + Δ·I_interior).
        let coupling = {
            let mut map = std::collections::BTreeMap::new();
            for e in setup.j_bulk.edges() {
                *map.entry((e.u, e.v)).or_insert(0.0) += (1.0 - p.t) * e.weight;
            }
            for e in setup.j_forest.edges() {
                *map.entry((e.u, e.v)).or_insert(0.0) += e.weight;
            }
            Graph::from_edges(n, map.into_iter().filter(|(_, w)| *w != 0.0).map(|((u, v), w)| (u, v, w))).unwrap()
        };
        let field = probes.iter().find(|q| q.name == p.probe).unwrap().field.clone();
        let cov = ExactOracle::build(&IsingModel::sparse(coupling, field).unwrap())
            .unwrap()
            .covariance()
            .clone();
        assert!(min_eig(&(&weight * c_fit - &cov)) >= -1e-10);
        assert!(p.norm > 0.0 && p.norm.is_finite());
    }
}

#[test]
fn path_with_no_bulk_interaction() {
    let mut setup = synthetic_setup();
    setup.j_bulk = Graph::empty(12);
    let probes = vec![Probe {
        name: "zero".into(),
        field: vec![0.0; 12],
    }];
    let pts = path_covariance_norm(&setup, &[1.0], &probes, CovarianceMode::Exact, McBudget::default(), None, RngSeed::new(0))
        .unwrap();
    // Bulk vertices 0..3 are free spins under the diagonal weight θ.
    let theta = ControlParams { t: 1.0, ..setup.params.clone() }.theta();
    assert!(pts[0].norm >= theta - 1e-12);
}

#[test]
fn path_mc_mode_tracks_exact() {
    let setup = synthetic_setup();
    let probes = vec![Probe {
        name: "zero".into(),
        field: vec![0.0; 12],
    }];
    let exact = path_covariance_norm(&setup, &[0.5], &probes, CovarianceMode::Exact, McBudget::default(), None, RngSeed::new(0))
        .unwrap();
    let budget = McBudget {
        sweeps_per_batch: 1_000,
        batches: 20,
        burn_in_sweeps: 200,
        tolerance: 0.05,
    };
    let mc = path_covariance_norm(&setup, &[0.5], &probes, CovarianceMode::Mc, budget, None, RngSeed::new(9)).unwrap();
    assert!((mc[0].norm - exact[0].norm).abs() / exact[0].norm < 0.1);
    assert!((mc[0].fitted_c - exact[0].fitted_c).abs() / exact[0].fitted_c < 0.1);
    assert!(!mc[0].flagged);
}

#[test]
fn localization_path_cases() {
    let model = random_model(4, 0.5, 5);
    let mut rng = RngSeed::new(1).rng();
    let path = discretized_localization_path(&model, &DMatrix::zeros(4, 4), 10, &mut rng).unwrap();
    assert_eq!(path.len(), 11);
    let j = model.coupling_matrix().unwrap();
    for (jk, hk) in &path {
        assert_eq!(jk, &j);
        assert_eq!(hk.as_slice(), model.field());
    }
    // C² = J + E with E diagonal: the endpoint interaction is diagonal.
    let lmin = min_eig(&j);
    let e = DMatrix::identity(4, 4) * (-lmin + 0.5);
    let c = sparse_ising::linalg::sym_sqrt(&(&j + &e), 1e-12);
    let path = discretized_localization_path(&model, &c, 64, &mut rng).unwrap();
    let (j1, h1) = path.last().unwrap();
    let off = j1 - DMatrix::from_diagonal(&j1.diagonal());
    assert!(off.abs().max() < 1e-12);
    let end = ExactOracle::build(&IsingModel::dense(j1.clone(), h1.clone()).unwrap()).unwrap();
    let cov = end.covariance();
    assert!((cov - DMatrix::from_diagonal(&cov.diagonal())).abs().max() < 1e-12);
    assert!(discretized_localization_path(&model, &c, 0, &mut rng).is_err());
}

#[test]
fn localization_path_mean_is_a_martingale() {
    let model = random_model(3, 0.6, 8);
    let c = DMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.0, 0.1, 0.5, 0.1, 0.0, 0.1, 0.7]);
    let start = DVector::from_column_slice(ExactOracle::build(&model).unwrap().mean());
    let paths = 10_000;
    let mut sum = DVector::zeros(3);
    let mut sumsq = DVector::zeros(3);
    for k in 0..paths {
        let mut rng = RngSeed::new(77).derive(k).rng();
        let path = discretized_localization_path(&model, &c, 40, &mut rng).unwrap();
        let (j, h) = path.last().unwrap();
        let m = DVector::from_column_slice(ExactOracle::build(&IsingModel::dense(j.clone(), h.clone()).unwrap()).unwrap().mean());
        sum += &m;
        sumsq += m.component_mul(&m);
    }
    for i in 0..3 {
        let mean = sum[i] / paths as f64;
        let sd = (sumsq[i] / paths as f64 - mean * mean).sqrt();
        let se = sd / (paths as f64).sqrt();
        assert!((mean - start[i]).abs() <= 3.0 * se + 5e-3, "site {i}: {mean} vs {} (se {se})", start[i]);
    }
}

#[test]
fn probe_inventory() {
    let p = standard_probes(4, 3.0, 5, RngSeed::new(1));
    let names: Vec<&str> = p.iter().map(|q| q.name.as_str()).collect();
    assert_eq!(names, ["zero", "plus", "minus", "gaussian0", "gaussian1", "gaussian2", "gaussian3", "gaussian4"]);
    assert_eq!(p[1].field, vec![3.0; 4]);
    assert_eq!(p, standard_probes(4, 3.0, 5, RngSeed::new(1)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prop_reduced_interaction_and_field(seed in 0u64..10_000, n in 1usize..7) {
        let model = random_model(n, 0.5, seed);
        let c = shifted_control(&model, 0.3);
        let hs = HsDecomposition::new(&model, &c).unwrap();
        let z: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 - 0.5).collect();
        let cond = hs.conditional(&z).unwrap();
        let want_j = model.coupling_matrix().unwrap() - &c;
        prop_assert!((cond.coupling_matrix().unwrap() - want_j).abs().max() < 1e-14);
        let want_h = DVector::from_column_slice(model.field()) + &c * DVector::from_column_slice(&z);
        prop_assert!((DVector::from_column_slice(cond.field()) - want_h).abs().max() < 1e-14);
        let nf = hs.noise_factor();
        prop_assert!((nf * &c * nf - DMatrix::identity(n, n)).abs().max() < 1e-8);
    }
}
