//! Invariants of the identifiability checks, tree paths, weight
//! composition and least squares.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tbr::identifiability::{
    check_assumptions, find_nonzero_permutation, is_perm_scaling, l0_norm, nonzero_permutation_brute_force,
    prop47_verdict, random_mixing, random_one_sparse, random_perm_scaling, run_property_battery, SparsityPattern,
    EXACT_TOL,
};
use tbr::numerics::{ols_solve, Matrix};
use tbr::simulator::{compose_weights, env_weight_table, sample_deltas, DeltaMode};
use tbr::EnvTree;

#[test]
fn theory_battery_has_no_violations() {
    let rep = run_property_battery(200, 200, 7).unwrap();
    assert_eq!(rep.mixing_trials, 200);
    assert_eq!(rep.preserving_trials, 200);
    assert_eq!(rep.lemma_trials, 200);
    assert!(rep.passed(), "{rep:?}");
}

/// Entries are zero or at least 0.1 in magnitude.
fn sparse_matrix(m: usize, k: usize, density: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(m, k, |_, _| {
        if rng.gen_bool(density) {
            let v: f64 = rng.sample(StandardNormal);
            v.signum() * (v.abs() + 0.1)
        } else {
            0.0
        }
    })
}

#[test]
fn matching_agrees_with_brute_force_on_existence() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut found = 0;
    for _ in 0..500 {
        let k = rng.gen_range(1..=7);
        let density = rng.gen_range(0.15..0.8);
        let l = sparse_matrix(k, k, density, &mut rng);
        let fast = find_nonzero_permutation(&l, EXACT_TOL);
        let slow = nonzero_permutation_brute_force(&l, EXACT_TOL);
        assert_eq!(fast.is_ok(), slow.is_some(), "{l:?}");
        if let Ok(p) = fast {
            found += 1;
            let mut seen = vec![false; k];
            for (i, &j) in p.iter().enumerate() {
                assert!(l[(i, j)].abs() > EXACT_TOL);
                assert!(!std::mem::replace(&mut seen[j], true));
            }
        }
    }
    // Both outcomes must be exercised.
    assert!(found > 50 && found < 450, "{found}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perm_scaling_preserves_l0_exactly(seed in any::<u64>(), k in 1usize..8, m in 1usize..20, density in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = sparse_matrix(m, k, density, &mut rng);
        let p = random_perm_scaling(k, &mut rng);
        prop_assert!(is_perm_scaling(&p, EXACT_TOL));
        let dl = delta.matmul(&p).unwrap();
        prop_assert_eq!(l0_norm(&dl, EXACT_TOL), l0_norm(&delta, EXACT_TOL));
        // Column j of ΔP is a rescaled column of Δ.
        let (a, b) = (SparsityPattern::of(&delta, EXACT_TOL), SparsityPattern::of(&dl, EXACT_TOL));
        for j in 0..k {
            let src = (0..k).find(|&i| p[(i, j)] != 0.0).unwrap();
            prop_assert_eq!(b.column(j), a.column(src));
        }
    }

    #[test]
    fn one_sparse_supports_survive_under_the_matching(seed in any::<u64>(), k in 2usize..7, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = random_one_sparse(k + extra, k, &mut rng);
        let rep = check_assumptions(&delta, EXACT_TOL);
        prop_assert!(rep.one_sparse && rep.sufficient_perturbations);
        let l = random_mixing(k, &mut rng);
        let v = prop47_verdict(&delta, &l, EXACT_TOL).unwrap();
        prop_assert!(v.omega_sizes.iter().all(|&s| s == 0), "{:?}", v.omega_sizes);
        prop_assert!(v.l0_delta_l > v.l0_delta);
        prop_assert!(!v.perm_scaling);
        prop_assert!(v.implication_holds);
        let gained: usize = v.gamma_sizes.iter().sum();
        prop_assert_eq!(v.l0_delta + gained, v.l0_delta_l);
    }

    #[test]
    fn fixed_mode_rows_have_exact_support(seed in any::<u64>(), k in 1usize..9, s in 0usize..9, arcs in 1usize..40) {
        let s = s % (k + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sample_deltas(arcs, k, DeltaMode::Fixed(s), 0.25, &mut rng).unwrap();
        for a in 0..arcs {
            prop_assert_eq!(d.row(a).iter().filter(|v| **v != 0.0).count(), s);
        }
    }

    #[test]
    fn random_trees_have_consistent_paths(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Node i > 0 attaches to a uniformly chosen earlier node.
        let edges: Vec<(String, String)> = (1..n)
            .map(|i| (format!("n{}", rng.gen_range(0..i)), format!("n{i}")))
            .collect();
        let tree = EnvTree::from_edge_list(&edges).unwrap();
        prop_assert_eq!(tree.num_nodes(), n);
        prop_assert_eq!(tree.num_arcs(), n - 1);
        prop_assert_eq!(tree.label(tree.root()), "n0");
        let reparsed = EnvTree::parse_edge_list(&tree.to_edge_list_string()).unwrap();
        prop_assert!(reparsed.same_shape(&tree));

        let mut max_depth = 0;
        for e in tree.non_root_nodes() {
            let path = tree.path_to_root(e).unwrap();
            let p = tree.parent(e).unwrap();
            prop_assert_eq!(path.len(), tree.depth_of(e).unwrap());
            prop_assert_eq!(path.last().copied(), tree.parent_arc(e));
            prop_assert_eq!(&path[..path.len() - 1], &tree.path_to_root(p).unwrap()[..]);
            prop_assert_eq!(tree.arc(tree.parent_arc(e).unwrap()), (p, e));
            max_depth = max_depth.max(path.len());
        }
        prop_assert_eq!(tree.depth(), max_depth);
        let leaves = tree.nodes().filter(|&e| tree.children(e).is_empty()).count();
        prop_assert_eq!(tree.leaves().len(), leaves);

        let k = 3;
        let w0: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta = sparse_matrix(n - 1, k, 0.5, &mut rng);
        let table = env_weight_table(&tree, &w0, &delta).unwrap();
        for e in tree.nodes() {
            let w = compose_weights(&tree, &w0, &delta, e).unwrap();
            for j in 0..k {
                prop_assert!((w[j] - table[(e.0, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(seed in any::<u64>(), n in 8usize..60, p in 1usize..6) {
        prop_assume!(n > p + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let beta = ols_solve(&x, &y).unwrap();
        let r: Vec<f64> = (0..n).map(|i| y[i] - (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect();
        let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        for j in 0..p {
            let g: f64 = (0..n).map(|i| x[(i, j)] * r[i]).sum();
            prop_assert!(g.abs() < 1e-9 * scale * n as f64, "column {}: {}", j, g);
        }
    }
}
