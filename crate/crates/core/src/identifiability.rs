//! Sparsity-pattern algebra behind the disentanglement guarantee.
//!
//! With `Δ̂ = ΔL` for an invertible `L`, the guarantee says: if every row of
//! `Δ` has at most one nonzero, every latent column is perturbed somewhere,
//! and `‖ΔL‖₀ ≤ ‖Δ‖₀`, then `L` is a permutation-scaling matrix. The checks
//! here evaluate each piece numerically, with a declared tolerance.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env_tree::EnvTree;
use crate::error::{shape_err, Result, TbrError};
use crate::numerics::{condition_number, Matrix, Qr};
use crate::rng::{substream, Domain};
use crate::simulator::GroundTruth;

/// Tolerance for matrices built in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-6;
/// Tolerance for learned matrices, applied after max-abs row normalization.
pub const LEARNED_TOL: f64 = 0.1;
/// Generators reject matrices above this condition number. The Gram-based
/// estimate saturates near 1e8 on exactly singular input.
const MAX_COND: f64 = 1e6;

/// Indices `(row, col)` of entries with `|m| > tol`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub rows: usize,
    pub cols: usize,
    pub entries: BTreeSet<(usize, usize)>,
}

impl SparsityPattern {
    pub fn of(m: &Matrix, tol: f64) -> Self {
        let mut entries = BTreeSet::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)].abs() > tol {
                    entries.insert((i, j));
                }
            }
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.contains(&(row, col))
    }

    /// Rows with a nonzero in column `col`.
    pub fn column(&self, col: usize) -> BTreeSet<usize> {
        self.entries.iter().filter(|e| e.1 == col).map(|e| e.0).collect()
    }

    pub fn complement(&self) -> SparsityPattern {
        let mut entries = BTreeSet::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.contains(i, j) {
                    entries.insert((i, j));
                }
            }
        }
        SparsityPattern {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }
}

pub fn l0_norm(m: &Matrix, tol: f64) -> usize {
    m.as_slice().iter().filter(|v| v.abs() > tol).count()
}

/// Entries above `rel · max|m|`; zero for the zero matrix.
pub fn l0_norm_relative(m: &Matrix, rel: f64) -> usize {
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    l0_norm(m, rel * scale)
}

/// Divides each row by its largest absolute entry (zero rows unchanged).
pub fn normalize_rows_max_abs(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let s = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Every row has at most one nonzero.
    pub one_sparse: bool,
    /// Every column has a nonzero somewhere.
    pub sufficient_perturbations: bool,
    /// Rows with two or more nonzeros.
    pub dense_rows: Vec<usize>,
    /// For each column, the first row (arc) perturbing it.
    pub witnesses: Vec<Option<usize>>,
}

pub fn check_assumptions(delta: &Matrix, tol: f64) -> AssumptionReport {
    let mut dense_rows = Vec::new();
    let mut witnesses = vec![None; delta.cols()];
    for a in 0..delta.rows() {
        let mut count = 0;
        for (j, w) in witnesses.iter_mut().enumerate() {
            if delta[(a, j)].abs() > tol {
                count += 1;
                w.get_or_insert(a);
            }
        }
        if count > 1 {
            dense_rows.push(a);
        }
    }
    AssumptionReport {
        one_sparse: dense_rows.is_empty(),
        sufficient_perturbations: witnesses.iter().all(Option::is_some),
        dense_rows,
        witnesses,
    }
}

/// A permutation `π` with `|L[i, π(i)]| > tol` for every row, by bipartite
/// matching on the nonzero pattern.
pub fn find_nonzero_permutation(l: &Matrix, tol: f64) -> Result<Vec<usize>> {
    let (n, m) = l.shape();
    if n != m {
        return Err(shape_err("find_nonzero_permutation", "square", format!("{:?}", l.shape())));
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| l[(i, j)].abs() > tol).collect())
        .collect();
    let mut col_owner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, &adj, &mut seen, &mut col_owner) {
            return Err(TbrError::Singular);
        }
    }
    let mut perm = vec![0; n];
    for (j, owner) in col_owner.iter().enumerate() {
        perm[owner.expect("perfect matching")] = j;
    }
    Ok(perm)
}

fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], col_owner: &mut [Option<usize>]) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if col_owner[j].map_or(true, |o| augment(o, adj, seen, col_owner)) {
            col_owner[j] = Some(i);
            return true;
        }
    }
    false
}

/// Exactly one entry above `tol` in every row and every column.
pub fn is_perm_scaling(l: &Matrix, tol: f64) -> bool {
    if l.rows() != l.cols() {
        return false;
    }
    let p = SparsityPattern::of(l, tol);
    let n = l.rows();
    let mut row = vec![0; n];
    let mut col = vec![0; n];
    for &(i, j) in &p.entries {
        row[i] += 1;
        col[j] += 1;
    }
    row.iter().all(|&c| c == 1) && col.iter().all(|&c| c == 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop47Verdict {
    pub assumptions: AssumptionReport,
    pub assumptions_hold: bool,
    pub l0_delta: usize,
    pub l0_delta_l: usize,
    pub sparsity_nonincreasing: bool,
    pub perm_scaling: bool,
    /// False only when the premises hold and `L` is not permutation-scaling.
    pub implication_holds: bool,
    /// `σ(i)` with `L[σ(i), i] ≠ 0`, matching column `i` of `ΔL` to column
    /// `σ(i)` of `Δ`.
    pub matching: Vec<usize>,
    /// `|S(Δ[:,σ(i)]) ∩ Sᶜ((ΔL)[:,i])|` per column: nonzeros lost.
    pub omega_sizes: Vec<usize>,
    /// `|Sᶜ(Δ[:,σ(i)]) ∩ S((ΔL)[:,i])|` per column: nonzeros gained.
    pub gamma_sizes: Vec<usize>,
}

pub fn prop47_verdict(delta: &Matrix, l: &Matrix, tol: f64) -> Result<Prop47Verdict> {
    if l.rows() != l.cols() || delta.cols() != l.rows() {
        return Err(shape_err(
            "prop47_verdict",
            format!("L {0}x{0}", delta.cols()),
            format!("{:?}", l.shape()),
        ));
    }
    l.inverse()?;
    let dl = delta.matmul(l)?;
    let assumptions = check_assumptions(delta, tol);
    let assumptions_hold = assumptions.one_sparse && assumptions.sufficient_perturbations;
    let l0_delta = l0_norm(delta, tol);
    let l0_delta_l = l0_norm(&dl, tol);
    let sparsity_nonincreasing = l0_delta_l <= l0_delta;
    let perm_scaling = is_perm_scaling(l, tol);

    // Lemma gives π with Lᵀ[i, π(i)] ≠ 0, i.e. L[π(i), i] ≠ 0.
    let matching = find_nonzero_permutation(&l.transpose(), tol)?;
    let sd = SparsityPattern::of(delta, tol);
    let sdl = SparsityPattern::of(&dl, tol);
    let mut omega_sizes = Vec::with_capacity(l.cols());
    let mut gamma_sizes = Vec::with_capacity(l.cols());
    for (i, &s) in matching.iter().enumerate() {
        let before = sd.column(s);
        let after = sdl.column(i);
        omega_sizes.push(before.difference(&after).count());
        gamma_sizes.push(after.difference(&before).count());
    }
    Ok(Prop47Verdict {
        assumptions,
        assumptions_hold,
        l0_delta,
        l0_delta_l,
        sparsity_nonincreasing,
        perm_scaling,
        implication_holds: !(assumptions_hold && sparsity_nonincreasing) || perm_scaling,
        matching,
        omega_sizes,
        gamma_sizes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// `Z ≈ Ẑ L̂ᵀ` after centering both.
    pub l: Matrix,
    /// `‖Z_c − Ẑ_c L̂ᵀ‖_F / ‖Z_c‖_F`.
    pub relative_residual: f64,
}

/// Least-squares map from estimated to true latents, on centered columns.
pub fn fit_linear_map(zhat: &Matrix, z: &Matrix) -> Result<LinearFit> {
    if zhat.rows() != z.rows() {
        return Err(shape_err("fit_linear_map", format!("{} rows", z.rows()), format!("{} rows", zhat.rows())));
    }
    if zhat.rows() < zhat.cols() {
        return Err(TbrError::Config("fit_linear_map needs n >= k".into()));
    }
    let center = |m: &Matrix| {
        let mu = m.col_means();
        Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] - mu[j])
    };
    let (zh, zc) = (center(zhat), center(z));
    let b = Qr::factor(&zh)?.solve_matrix(&zc)?;
    let resid = zc.sub(&zh.matmul(&b)?)?;
    let denom = zc.frobenius();
    Ok(LinearFit {
        l: b.transpose(),
        relative_residual: if denom > 0.0 { resid.frobenius() / denom } else { resid.frobenius() },
    })
}

/// Whether a learned map is permutation-scaling at [`LEARNED_TOL`].
pub fn learned_map_is_perm_scaling(l: &Matrix) -> bool {
    is_perm_scaling(&normalize_rows_max_abs(l), LEARNED_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Condition number of the stacked `w_e` over observed environments.
    pub weights: f64,
    /// Condition number of the stacked latent means `Ψ(x)` over samples.
    pub latents: f64,
}

/// Numerical stand-ins for the invertibility premises of linear
/// identification.
pub fn condition_report(tree: &EnvTree, truth: &GroundTruth, x: &Matrix) -> Result<ConditionReport> {
    let envs = truth.config.observed_envs(tree);
    let rows: Vec<Vec<f64>> = envs
        .iter()
        .map(|&e| truth.env_weights(tree, e))
        .collect::<Result<_>>()?;
    let w = Matrix::from_rows(&rows)?;
    Ok(ConditionReport {
        weights: condition_number(&w)?,
        latents: condition_number(&truth.latent_mean(x)?)?,
    })
}

/// Random `m × k` matrix with one nonzero per row covering every column.
pub fn random_one_sparse<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Matrix {
    assert!(m >= k && k > 0);
    let mut cols: Vec<usize> = (0..k).chain((k..m).map(|_| rng.gen_range(0..k))).collect();
    cols.shuffle(rng);
    let mut d = Matrix::zeros(m, k);
    for (a, &j) in cols.iter().enumerate() {
        let v: f64 = rng.sample(StandardNormal);
        d[(a, j)] = if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v };
    }
    d
}

/// Random permutation-scaling matrix with scales bounded away from zero.
pub fn random_perm_scaling<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Matrix {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    let mut l = Matrix::zeros(k, k);
    for (i, &j) in perm.iter().enumerate() {
        let s = rng.gen_range(0.5..2.0);
        l[(i, j)] = if rng.gen::<bool>() { s } else { -s };
    }
    l
}

/// Random invertible matrix that is not permutation-scaling: either a dense
/// Gaussian or a permutation-scaling matrix with one extra mixing entry.
pub fn random_mixing<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Matrix {
    assert!(k >= 2);
    loop {
        let l = if rng.gen::<bool>() {
            Matrix::from_fn(k, k, |_, _| rng.sample(StandardNormal))
        } else {
            // D + c·e_i e_jᵀ (i ≠ j) is invertible; a column permutation keeps it so.
            let mut t = random_perm_scaling(k, rng);
            let perm: Vec<usize> = (0..k).map(|r| (0..k).find(|&c| t[(r, c)] != 0.0).unwrap()).collect();
            let i = rng.gen_range(0..k);
            let mut j = rng.gen_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            t[(i, perm[j])] = rng.gen_range(0.5..2.0);
            t
        };
        if !is_perm_scaling(&l, EXACT_TOL) && condition_number(&l).is_ok_and(|c| c < MAX_COND) {
            return l;
        }
    }
}

/// Random invertible `k × k` matrix with a sparse pattern.
pub fn random_sparse_invertible<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Matrix {
    loop {
        let density = rng.gen_range(0.2..0.7);
        let l = Matrix::from_fn(k, k, |_, _| {
            if rng.gen::<f64>() < density {
                rng.sample(StandardNormal)
            } else {
                0.0
            }
        });
        if condition_number(&l).is_ok_and(|c| c < MAX_COND) {
            return l;
        }
    }
}

/// Brute-force search for any permutation `π` with `|L[i, π(i)]| > tol`.
pub fn nonzero_permutation_brute_force(l: &Matrix, tol: f64) -> Option<Vec<usize>> {
    let n = l.rows();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        if p.iter().enumerate().all(|(i, &j)| l[(i, j)].abs() > tol) {
            return Some(p);
        }
        if !crate::metrics::next_permutation(&mut p) {
            return None;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub mixing_trials: usize,
    /// Mixing `L` on valid `Δ` that failed to raise `‖·‖₀`.
    pub mixing_violations: usize,
    pub preserving_trials: usize,
    /// Permutation-scaling `L` that changed `‖·‖₀`.
    pub preserving_violations: usize,
    /// Columns with a nonempty Ω under a 1-sparse `Δ`.
    pub omega_violations: usize,
    pub lemma_trials: usize,
    /// Matching failed, returned an invalid permutation, or disagreed with
    /// brute force on existence.
    pub lemma_violations: usize,
    pub verdicts: Vec<Prop47Verdict>,
}

impl BatteryReport {
    pub fn violations(&self) -> usize {
        self.mixing_violations + self.preserving_violations + self.omega_violations + self.lemma_violations
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

/// Randomized theory checks. `trials` mixing and preserving cases, and
/// `lemma_trials` random invertible matrices with `k ≤ 7`.
pub fn run_property_battery(trials: usize, lemma_trials: usize, seed: u64) -> Result<BatteryReport> {
    let mut rng = substream(seed, Domain::Theory, 0);
    let mut rep = BatteryReport::default();
    for t in 0..trials {
        let k = rng.gen_range(2..=6);
        let m = rng.gen_range(k..=3 * k);
        let delta = random_one_sparse(m, k, &mut rng);

        let mix = random_mixing(k, &mut rng);
        let v = prop47_verdict(&delta, &mix, EXACT_TOL)?;
        rep.mixing_trials += 1;
        if !(v.assumptions_hold && v.l0_delta_l > v.l0_delta && !v.perm_scaling && v.implication_holds) {
            rep.mixing_violations += 1;
        }
        rep.omega_violations += v.omega_sizes.iter().filter(|&&s| s > 0).count();
        if t < 8 {
            rep.verdicts.push(v);
        }

        let ps = random_perm_scaling(k, &mut rng);
        let v = prop47_verdict(&delta, &ps, EXACT_TOL)?;
        rep.preserving_trials += 1;
        if v.l0_delta_l != v.l0_delta || !v.perm_scaling {
            rep.preserving_violations += 1;
        }
        rep.omega_violations += v.omega_sizes.iter().filter(|&&s| s > 0).count();
    }
    for _ in 0..lemma_trials {
        let k = rng.gen_range(1..=7);
        let l = random_sparse_invertible(k, &mut rng);
        rep.lemma_trials += 1;
        let ok = match find_nonzero_permutation(&l, EXACT_TOL) {
            Ok(p) => {
                let valid = p.iter().enumerate().all(|(i, &j)| l[(i, j)].abs() > EXACT_TOL);
                valid && nonzero_permutation_brute_force(&l, EXACT_TOL).is_some()
            }
            Err(_) => false,
        };
        if !ok {
            rep.lemma_violations += 1;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn l0_examples() {
        assert_eq!(l0_norm(&Matrix::zeros(3, 3), 1e-6), 0);
        assert_eq!(l0_norm(&Matrix::identity(4), 1e-6), 4);
        assert_eq!(l0_norm(&m(&[&[1e-9, 0.5]]), 1e-6), 1);
        assert_eq!(l0_norm_relative(&m(&[&[0.05, 1.0, -0.2]]), 0.1), 2);
        assert_eq!(l0_norm_relative(&Matrix::zeros(2, 2), 0.1), 0);
    }

    #[test]
    fn pattern_basics() {
        let p = SparsityPattern::of(&Matrix::zeros(2, 2), 0.0);
        assert!(p.is_empty());
        assert_eq!(p.complement().len(), 4);
        let a = m(&[&[1.0, 0.01], &[0.0, 2.0]]);
        assert!(SparsityPattern::of(&a, 0.1).len() <= SparsityPattern::of(&a, 0.001).len());
        assert_eq!(SparsityPattern::of(&a, 0.001).column(1), [0, 1].into_iter().collect());
    }

    #[test]
    fn assumption_examples() {
        let r = check_assumptions(&m(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 0.0]]), 1e-6);
        assert!(r.one_sparse && r.sufficient_perturbations);
        assert_eq!(r.witnesses, vec![Some(0), Some(1)]);
        let r = check_assumptions(&m(&[&[1.0, 1.0], &[0.0, 2.0]]), 1e-6);
        assert!(!r.one_sparse);
        assert_eq!(r.dense_rows, vec![0]);
        let r = check_assumptions(&m(&[&[1.0, 0.0], &[2.0, 0.0]]), 1e-6);
        assert!(!r.sufficient_perturbations);
        assert_eq!(r.witnesses[1], None);
    }

    #[test]
    fn lemma_examples() {
        assert_eq!(find_nonzero_permutation(&Matrix::identity(3), 1e-6).unwrap(), vec![0, 1, 2]);
        let anti = Matrix::from_fn(3, 3, |i, j| if i + j == 2 { 1.0 } else { 0.0 });
        assert_eq!(find_nonzero_permutation(&anti, 1e-6).unwrap(), vec![2, 1, 0]);
        let sing = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(find_nonzero_permutation(&sing, 1e-6), Err(TbrError::Singular)));
        assert!(find_nonzero_permutation(&Matrix::zeros(2, 3), 1e-6).is_err());
    }

    #[test]
    fn perm_scaling_examples() {
        assert!(is_perm_scaling(&Matrix::diag(&[2.0, -1.0]), 1e-6));
        assert!(!is_perm_scaling(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), 1e-6));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert!(is_perm_scaling(&random_perm_scaling(5, &mut rng), 1e-6));
        }
    }

    #[test]
    fn verdict_examples() {
        let d = m(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 0.0]]);
        let v = prop47_verdict(&d, &m(&[&[1.0, 1.0], &[0.0, 1.0]]), 1e-6).unwrap();
        assert_eq!((v.l0_delta, v.l0_delta_l), (3, 5));
        assert!(v.assumptions_hold && !v.sparsity_nonincreasing && !v.perm_scaling && v.implication_holds);

        let swap_scaled = Matrix::diag(&[5.0, -2.0]).matmul(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let v = prop47_verdict(&d, &swap_scaled, 1e-6).unwrap();
        assert_eq!(v.l0_delta_l, 3);
        assert!(v.perm_scaling && v.implication_holds);
        assert_eq!(v.omega_sizes, vec![0, 0]);
        assert_eq!(v.gamma_sizes, vec![0, 0]);

        // Rows [1,1] and [2,2] with L mixing the columns so the first column
        // cancels: ΔL keeps two nonzeros per row count but the premise fails.
        let dense = m(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let l = m(&[&[1.0, 1.0], &[-1.0, 0.0]]);
        let v = prop47_verdict(&dense, &l, 1e-6).unwrap();
        assert!(!v.assumptions_hold);
        assert!(v.sparsity_nonincreasing && !v.perm_scaling);
        assert!(v.implication_holds);

        assert!(matches!(prop47_verdict(&d, &m(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-6), Err(TbrError::Singular)));
    }

    #[test]
    fn linear_map_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Matrix::from_fn(100, 3, |_, _| rng.sample(StandardNormal));
        let f = fit_linear_map(&z, &z).unwrap();
        assert!(f.relative_residual < 1e-12);
        assert!(f.l.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-10);
        let a = random_mixing(3, &mut rng);
        let zhat = z.matmul_nt(&a).unwrap();
        let f = fit_linear_map(&zhat, &z).unwrap();
        assert!(f.relative_residual < 1e-9);
        let ainv = a.inverse().unwrap();
        assert!(f.l.sub(&ainv).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn learned_map_normalization() {
        let l = m(&[&[0.0, 3.0, 0.2], &[0.01, 0.0, -0.5], &[10.0, 0.5, 0.0]]);
        assert!(learned_map_is_perm_scaling(&l));
        assert!(!is_perm_scaling(&l, 0.1));
    }

    #[test]
    fn small_battery_passes() {
        let r = run_property_battery(30, 40, 9).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.mixing_trials, 30);
    }

    #[test]
    fn sparse_invertible_generator_has_a_full_matching() {
        // Structurally singular draws used to slip past the condition check.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..2000 {
            let k = rng.gen_range(1..=7);
            let l = random_sparse_invertible(k, &mut rng);
            assert!(find_nonzero_permutation(&l, EXACT_TOL).is_ok(), "{l:?}");
        }
    }
}
