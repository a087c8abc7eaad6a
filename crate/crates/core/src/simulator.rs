//! Synthetic multi-environment data.
//!
//! Inputs `x ~ N(0, I)` drive latents `z = Φ(x) + η` with
//! `Φ(x) = tanh(Wᵀx)` (or `Wᵀx` in the all-linear variant), and each
//! environment's target is `y = w_eᵀz + ε`. Environment weights accumulate
//! sparse per-arc mutations down the tree: `w_e = w₀ + Σ_{a ∈ path(e)} δ_a`.
//!
//! The noise parameters are variances. The presets use `0.01`, i.e. noise
//! with standard deviation `0.1`.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiEnvDataset, Split, SplitFractions};
use crate::env_tree::{EnvId, EnvTree};
use crate::error::{shape_err, Result, TbrError};
use crate::numerics::{dot, Matrix};
use crate::rng::{substream, Domain};

/// How many entries of each mutation row are non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// Exactly `S` entries per row, support drawn uniformly without replacement.
    Fixed(usize),
    /// Each entry independently non-zero with probability `π`.
    Bernoulli(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub depth: usize,
    pub n_per_env: usize,
    pub d_x: usize,
    pub k: usize,
    pub s_sparsity: usize,
    pub delta_variance: f64,
    pub z_noise_variance: f64,
    pub y_noise_variance: f64,
    pub observe_leaves_only: bool,
    pub linear_psi: bool,
    /// Replaces `s_sparsity` with Bernoulli supports when set.
    pub bernoulli_pi: Option<f64>,
    pub split_fractions: SplitFractions,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SimConfig {
    /// Full-size setting: depth-7 tree, 3000 samples per environment.
    pub fn paper() -> Self {
        Self {
            depth: 7,
            n_per_env: 3000,
            ..Self::desk()
        }
    }

    /// Reduced setting that runs in minutes: depth 5, 1000 samples per environment.
    pub fn desk() -> Self {
        Self {
            depth: 5,
            n_per_env: 1000,
            d_x: 16,
            k: 5,
            s_sparsity: 1,
            delta_variance: 0.25,
            z_noise_variance: 0.01,
            y_noise_variance: 0.01,
            observe_leaves_only: false,
            linear_psi: false,
            bernoulli_pi: None,
            split_fractions: SplitFractions::default(),
            seed: 0,
        }
    }

    /// Switches to leaf-only observation and deepens the tree by one level so
    /// the number of observed environments stays about the same.
    pub fn leaves_only(mut self) -> Self {
        self.observe_leaves_only = true;
        self.depth += 1;
        self
    }

    pub fn delta_mode(&self) -> DeltaMode {
        match self.bernoulli_pi {
            Some(p) => DeltaMode::Bernoulli(p),
            None => DeltaMode::Fixed(self.s_sparsity),
        }
    }

    /// Expected nonzeros per Δ row: `S`, or `π·k` for Bernoulli deltas.
    pub fn sparsity_label(&self) -> f64 {
        match self.bernoulli_pi {
            Some(p) => p * self.k as f64,
            None => self.s_sparsity as f64,
        }
    }

    /// Variances may be zero (noiseless runs) but not negative.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TbrError::Config(m));
        if self.k == 0 || self.d_x == 0 {
            return bad("k and d_x must be positive".into());
        }
        if self.s_sparsity > self.k {
            return bad(format!("s_sparsity {} exceeds k {}", self.s_sparsity, self.k));
        }
        for (name, v) in [
            ("delta_variance", self.delta_variance),
            ("z_noise_variance", self.z_noise_variance),
            ("y_noise_variance", self.y_noise_variance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if let Some(p) = self.bernoulli_pi {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("bernoulli_pi must be in [0,1], got {p}"));
            }
        }
        if self.n_per_env == 0 {
            return bad("n_per_env must be positive".into());
        }
        self.split_fractions.validate()
    }

    pub fn build_tree(&self) -> Result<EnvTree> {
        EnvTree::build_balanced_binary(self.depth)
    }

    /// Environments that receive samples: all non-root nodes, or only leaves.
    pub fn observed_envs(&self, tree: &EnvTree) -> Vec<EnvId> {
        if self.observe_leaves_only {
            tree.leaves().to_vec()
        } else {
            tree.non_root_nodes().collect()
        }
    }
}

/// Hidden generative parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `d_x × k`; column `j` is the weight vector of latent `j`.
    pub psi_weights: Matrix,
    pub w0: Vec<f64>,
    /// `|A| × k`, one row per arc in canonical order.
    pub delta: Matrix,
    pub config: SimConfig,
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.w0.len()
    }

    /// Noise-free latent map `Φ(x)` for a batch (n×d_x → n×k).
    pub fn latent_mean(&self, x: &Matrix) -> Result<Matrix> {
        let lin = x.matmul(&self.psi_weights)?;
        Ok(if self.config.linear_psi {
            lin
        } else {
            lin.map(f64::tanh)
        })
    }

    pub fn env_weights(&self, tree: &EnvTree, env: EnvId) -> Result<Vec<f64>> {
        compose_weights(tree, &self.w0, &self.delta, env)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Mutation matrix with one row per arc.
pub fn sample_deltas<R: Rng + ?Sized>(
    num_arcs: usize,
    k: usize,
    mode: DeltaMode,
    delta_variance: f64,
    rng: &mut R,
) -> Result<Matrix> {
    let sd = delta_variance.sqrt();
    let mut delta = Matrix::zeros(num_arcs, k);
    match mode {
        DeltaMode::Fixed(s) => {
            if s > k {
                return Err(TbrError::Config(format!("support size {s} exceeds k = {k}")));
            }
            for a in 0..num_arcs {
                let mut support = sample_indices(rng, k, s).into_vec();
                support.sort_unstable();
                for j in support {
                    delta[(a, j)] = sd * normal(rng);
                }
            }
        }
        DeltaMode::Bernoulli(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(TbrError::Config(format!("bernoulli probability {p} outside [0,1]")));
            }
            for a in 0..num_arcs {
                for j in 0..k {
                    if rng.gen_bool(p) {
                        delta[(a, j)] = sd * normal(rng);
                    }
                }
            }
        }
    }
    Ok(delta)
}

/// Draws `W`, `w₀` (standard normal) and the mutation matrix.
pub fn sample_ground_truth<R: Rng + ?Sized>(
    tree: &EnvTree,
    config: &SimConfig,
    rng: &mut R,
) -> Result<GroundTruth> {
    config.validate()?;
    let psi_weights = Matrix::from_fn(config.d_x, config.k, |_, _| normal(rng));
    let w0 = (0..config.k).map(|_| normal(rng)).collect();
    let delta = sample_deltas(
        tree.num_arcs(),
        config.k,
        config.delta_mode(),
        config.delta_variance,
        rng,
    )?;
    Ok(GroundTruth {
        psi_weights,
        w0,
        delta,
        config: config.clone(),
    })
}

/// Ground truth from the config's own seed and tree.
pub fn ground_truth_for(tree: &EnvTree, config: &SimConfig) -> Result<GroundTruth> {
    sample_ground_truth(tree, config, &mut substream(config.seed, Domain::GroundTruth, 0))
}

/// `w_e = w₀ + Σ_{a ∈ path(0,e)} δ_a`.
pub fn compose_weights(tree: &EnvTree, w0: &[f64], delta: &Matrix, env: EnvId) -> Result<Vec<f64>> {
    check_delta(tree, w0, delta)?;
    let mut w = w0.to_vec();
    for a in tree.path_to_root(env)? {
        for (wi, d) in w.iter_mut().zip(delta.row(a.index())) {
            *wi += d;
        }
    }
    Ok(w)
}

/// Weights of every node at once (row = node id), accumulated parent-first.
pub fn env_weight_table(tree: &EnvTree, w0: &[f64], delta: &Matrix) -> Result<Matrix> {
    check_delta(tree, w0, delta)?;
    let k = w0.len();
    let mut table = Matrix::zeros(tree.num_nodes(), k);
    table.row_mut(0).copy_from_slice(w0);
    for e in tree.non_root_nodes() {
        let p = tree.parent(e).unwrap();
        let a = tree.parent_arc(e).unwrap();
        for j in 0..k {
            table[(e.0, j)] = table[(p.0, j)] + delta[(a.0, j)];
        }
    }
    Ok(table)
}

fn check_delta(tree: &EnvTree, w0: &[f64], delta: &Matrix) -> Result<()> {
    if delta.rows() != tree.num_arcs() || delta.cols() != w0.len() {
        return Err(shape_err(
            "compose_weights",
            format!("delta {}x{}", tree.num_arcs(), w0.len()),
            format!("{:?}", delta.shape()),
        ));
    }
    Ok(())
}

struct EnvBlock {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

fn sample_block<R: Rng + ?Sized>(
    truth: &GroundTruth,
    w: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<EnvBlock> {
    let c = &truth.config;
    let d_x = truth.psi_weights.rows();
    let k = truth.k();
    let x = Matrix::from_fn(n, d_x, |_, _| normal(rng));
    let mean = truth.latent_mean(&x)?;
    let (zs, ys) = (c.z_noise_variance.sqrt(), c.y_noise_variance.sqrt());
    let mut z = Vec::with_capacity(n * k);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let start = z.len();
        for &m in mean.row(i) {
            z.push(m + zs * normal(rng));
        }
        y.push(dot(w, &z[start..]) + ys * normal(rng));
    }
    Ok(EnvBlock {
        x: x.into_vec(),
        z,
        y,
    })
}

/// Samples every observed environment and attaches stratified splits.
///
/// Randomness comes from `truth.config.seed`: environment `e` uses its own
/// substream, so environments may be generated in any order or in parallel.
pub fn generate_dataset(tree: &EnvTree, truth: &GroundTruth) -> Result<MultiEnvDataset> {
    let config = &truth.config;
    config.validate()?;
    let weights = env_weight_table(tree, &truth.w0, &truth.delta)?;
    let observed = config.observed_envs(tree);
    let n = config.n_per_env;
    let blocks: Vec<EnvBlock> = observed
        .par_iter()
        .map(|&e| {
            let mut rng = substream(config.seed, Domain::EnvSamples, e.0 as u64);
            sample_block(truth, weights.row(e.0), n, &mut rng)
        })
        .collect::<Result<_>>()?;

    let total = n * observed.len();
    let (mut x, mut z, mut y) = (
        Vec::with_capacity(total * config.d_x),
        Vec::with_capacity(total * config.k),
        Vec::with_capacity(total),
    );
    let mut env = Vec::with_capacity(total);
    for (b, &e) in blocks.into_iter().zip(&observed) {
        x.extend(b.x);
        z.extend(b.z);
        y.extend(b.y);
        env.extend(std::iter::repeat(e).take(n));
    }
    let mut ds = MultiEnvDataset::new(
        config.clone(),
        Matrix::from_vec(total, config.d_x, x)?,
        Matrix::from_vec(total, config.k, z)?,
        y,
        env,
        vec![Split::Train; total],
        observed,
    )?;
    ds.assign_splits(config.split_fractions, config.seed)?;
    Ok(ds)
}

/// Tree + ground truth + dataset from a config in one call.
pub fn simulate(config: &SimConfig) -> Result<(EnvTree, GroundTruth, MultiEnvDataset)> {
    let tree = config.build_tree()?;
    let truth = ground_truth_for(&tree, config)?;
    let data = generate_dataset(&tree, &truth)?;
    Ok((tree, truth, data))
}

/// Settings for a held-out environment one sparse mutation away from an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnseenSpec {
    pub perturbation_variance: f64,
    pub n_samples: usize,
}

/// A held-out environment never used in training.
#[derive(Debug, Clone)]
pub struct UnseenEnv {
    pub anchor: EnvId,
    pub w_anchor: Vec<f64>,
    pub w_test: Vec<f64>,
    pub perturbed_index: usize,
    pub perturbation: f64,
    pub x: Matrix,
    pub z: Matrix,
    pub y: Vec<f64>,
}

/// `w_test = w_anchor + δ·e_j` for a uniformly chosen `j` and
/// `δ ~ N(0, perturbation_variance)`, with fresh samples from the shared latent map.
pub fn spawn_unseen_env<R: Rng + ?Sized>(
    tree: &EnvTree,
    truth: &GroundTruth,
    anchor: EnvId,
    spec: UnseenSpec,
    rng: &mut R,
) -> Result<UnseenEnv> {
    if !truth.config.observed_envs(tree).contains(&anchor) {
        return Err(TbrError::Config(format!("anchor {anchor} is not an observed environment")));
    }
    if !(spec.perturbation_variance >= 0.0) {
        return Err(TbrError::Config("perturbation variance must be non-negative".into()));
    }
    let w_anchor = truth.env_weights(tree, anchor)?;
    let j = rng.gen_range(0..truth.k());
    let delta = spec.perturbation_variance.sqrt() * normal(rng);
    let mut w_test = w_anchor.clone();
    w_test[j] += delta;
    let block = sample_block(truth, &w_test, spec.n_samples, rng)?;
    Ok(UnseenEnv {
        anchor,
        w_anchor,
        w_test,
        perturbed_index: j,
        perturbation: delta,
        x: Matrix::from_vec(spec.n_samples, truth.psi_weights.rows(), block.x)?,
        z: Matrix::from_vec(spec.n_samples, truth.k(), block.z)?,
        y: block.y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ols_solve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(depth: usize, n: usize, s: usize) -> SimConfig {
        SimConfig {
            depth,
            n_per_env: n,
            s_sparsity: s,
            seed: 42,
            ..SimConfig::desk()
        }
    }

    fn row_l0(m: &Matrix, r: usize) -> usize {
        m.row(r).iter().filter(|v| **v != 0.0).count()
    }

    #[test]
    fn sparsity_extremes() {
        let tree = EnvTree::build_balanced_binary(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t0 = sample_ground_truth(&tree, &small(3, 10, 0), &mut rng).unwrap();
        assert!(t0.delta.as_slice().iter().all(|&v| v == 0.0));
        let t5 = sample_ground_truth(&tree, &small(3, 10, 5), &mut rng).unwrap();
        assert!(t5.delta.as_slice().iter().all(|&v| v != 0.0));
        let t2 = sample_deltas(50, 5, DeltaMode::Fixed(2), 0.25, &mut rng).unwrap();
        assert!((0..50).all(|r| row_l0(&t2, r) == 2));
        assert!(sample_deltas(3, 5, DeltaMode::Fixed(6), 0.25, &mut rng).is_err());
        let b0 = sample_deltas(20, 5, DeltaMode::Bernoulli(0.0), 0.25, &mut rng).unwrap();
        assert_eq!(b0.max_abs(), 0.0);
    }

    #[test]
    fn one_sparse_support_is_uniform() {
        // Chi-square goodness of fit over 10^4 rows, 4 degrees of freedom.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = 10_000;
        let d = sample_deltas(rows, 5, DeltaMode::Fixed(1), 0.25, &mut rng).unwrap();
        let mut counts = [0usize; 5];
        for r in 0..rows {
            assert_eq!(row_l0(&d, r), 1);
            let j = d.row(r).iter().position(|v| *v != 0.0).unwrap();
            counts[j] += 1;
        }
        let expected = rows as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9th percentile of chi-square(4).
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn bernoulli_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = sample_deltas(10_000, 5, DeltaMode::Bernoulli(0.5), 0.25, &mut rng).unwrap();
        let frac = d.as_slice().iter().filter(|v| **v != 0.0).count() as f64 / 50_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn composition_examples() {
        let t1 = EnvTree::from_edge_list(&[("r", "a")]).unwrap();
        let d = Matrix::from_rows(&[[0.0, 2.0]]).unwrap();
        assert_eq!(compose_weights(&t1, &[1.0, 0.0], &d, EnvId(1)).unwrap(), vec![1.0, 2.0]);
        assert_eq!(compose_weights(&t1, &[1.0, 0.0], &d, EnvId(0)).unwrap(), vec![1.0, 0.0]);
        let bad = Matrix::zeros(2, 2);
        assert!(compose_weights(&t1, &[1.0, 0.0], &bad, EnvId(1)).is_err());
    }

    fn recursive_weights(tree: &EnvTree, w0: &[f64], delta: &Matrix, e: EnvId) -> Vec<f64> {
        match tree.parent(e) {
            None => w0.to_vec(),
            Some(p) => {
                let a = tree.arc_of(p, e).unwrap();
                recursive_weights(tree, w0, delta, p)
                    .iter()
                    .zip(delta.row(a.0))
                    .map(|(x, d)| x + d)
                    .collect()
            }
        }
    }

    #[test]
    fn composition_matches_recursion() {
        let tree = EnvTree::build_balanced_binary(3).unwrap();
        let truth = ground_truth_for(&tree, &small(3, 10, 2)).unwrap();
        let table = env_weight_table(&tree, &truth.w0, &truth.delta).unwrap();
        for e in tree.nodes() {
            let oracle = recursive_weights(&tree, &truth.w0, &truth.delta, e);
            let w = truth.env_weights(&tree, e).unwrap();
            for j in 0..5 {
                assert!((w[j] - oracle[j]).abs() < 1e-12);
                assert!((table[(e.0, j)] - oracle[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_ignore_off_path_arcs() {
        let tree = EnvTree::build_balanced_binary(3).unwrap();
        let truth = ground_truth_for(&tree, &small(3, 10, 2)).unwrap();
        let leaf = tree.leaves()[0];
        let path = tree.path_to_root(leaf).unwrap();
        let mut perturbed = truth.delta.clone();
        for a in 0..tree.num_arcs() {
            if !path.iter().any(|p| p.0 == a) {
                perturbed.row_mut(a).iter_mut().for_each(|v| *v += 3.0);
            }
        }
        assert_eq!(
            compose_weights(&tree, &truth.w0, &perturbed, leaf).unwrap(),
            truth.env_weights(&tree, leaf).unwrap()
        );
    }

    #[test]
    fn noiseless_linear_targets() {
        let mut cfg = small(2, 20, 1);
        cfg.z_noise_variance = 0.0;
        cfg.y_noise_variance = 0.0;
        cfg.linear_psi = true;
        let (tree, truth, ds) = simulate(&cfg).unwrap();
        let lin = ds.x.matmul(&truth.psi_weights).unwrap();
        for i in 0..ds.len() {
            let w = truth.env_weights(&tree, ds.env[i]).unwrap();
            assert!((ds.y[i] - dot(&w, lin.row(i))).abs() < 1e-9);
        }
    }

    #[test]
    fn observed_environment_counts() {
        let cfg = small(7, 4, 1);
        let tree = cfg.build_tree().unwrap();
        assert_eq!(cfg.observed_envs(&tree).len(), 254);
        let leafy = small(7, 4, 1).leaves_only();
        assert_eq!(leafy.depth, 8);
        let tree8 = leafy.build_tree().unwrap();
        assert_eq!(leafy.observed_envs(&tree8).len(), 256);

        let (_, _, ds) = simulate(&small(3, 12, 1)).unwrap();
        assert_eq!(ds.observed.len(), 14);
        for &e in &ds.observed {
            assert_eq!(ds.split_counts(e).iter().sum::<usize>(), 12);
            assert_eq!(ds.split_counts(e), [6, 3, 3]);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let cfg = small(3, 30, 2);
        let (_, _, a) = simulate(&cfg).unwrap();
        let (_, _, b) = simulate(&cfg).unwrap();
        assert!(a.same_data(&b));
        let mut other = cfg.clone();
        other.seed += 1;
        let (_, _, c) = simulate(&other).unwrap();
        assert!(!a.same_data(&c));
    }

    #[test]
    fn zero_sparsity_shares_regression() {
        // With no mutations every environment regresses to the same w0.
        let cfg = SimConfig {
            n_per_env: 2000,
            ..small(2, 2000, 0)
        };
        let (_, truth, ds) = simulate(&cfg).unwrap();
        for &e in &ds.observed {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.env[i] == e).collect();
            let z = ds.z.select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&i| ds.y[i]).collect();
            let w = ols_solve(&z, &y).unwrap();
            for (a, b) in w.iter().zip(&truth.w0) {
                // Standard error is about sqrt(0.01 / (2000 * 0.8)) ≈ 0.0025.
                assert!((a - b).abs() < 0.05, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn residual_variance_matches_noise() {
        let cfg = small(2, 3000, 2);
        let (tree, truth, ds) = simulate(&cfg).unwrap();
        for &e in &ds.observed {
            let w = truth.env_weights(&tree, e).unwrap();
            let r: Vec<f64> = (0..ds.len())
                .filter(|&i| ds.env[i] == e)
                .map(|i| ds.y[i] - dot(&w, ds.z.row(i)))
                .collect();
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            // Sample variance of Gaussian noise has sd σ²·sqrt(2/(n-1)).
            let s2 = cfg.y_noise_variance;
            let sd = s2 * (2.0 / (n - 1.0)).sqrt();
            assert!((var - s2).abs() < 3.0 * sd, "var {var}");
        }
    }

    #[test]
    fn unseen_env_perturbs_one_coordinate() {
        let cfg = small(3, 10, 1);
        let (tree, truth, _) = simulate(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = UnseenSpec {
            perturbation_variance: 1.0,
            n_samples: 50,
        };
        let u = spawn_unseen_env(&tree, &truth, EnvId(3), spec, &mut rng).unwrap();
        for j in 0..5 {
            if j == u.perturbed_index {
                assert!((u.w_test[j] - u.w_anchor[j] - u.perturbation).abs() < 1e-15);
            } else {
                assert_eq!(u.w_test[j], u.w_anchor[j]);
            }
        }
        let zero = UnseenSpec {
            perturbation_variance: 0.0,
            ..spec
        };
        let u0 = spawn_unseen_env(&tree, &truth, EnvId(3), zero, &mut rng).unwrap();
        assert_eq!(u0.w_test, u0.w_anchor);
        assert!(spawn_unseen_env(&tree, &truth, EnvId(0), spec, &mut rng).is_err());
    }

    #[test]
    fn anchor_predictor_transfer_error_closed_form() {
        // E[(w_aᵀz − y)²] = δ²·E[z_j²] + σ_y² since Φ is odd and x symmetric.
        let cfg = SimConfig {
            n_per_env: 10,
            ..small(2, 10, 1)
        };
        let (tree, truth, _) = simulate(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let spec = UnseenSpec {
            perturbation_variance: 1.0,
            n_samples: 200_000,
        };
        let u = spawn_unseen_env(&tree, &truth, EnvId(2), spec, &mut rng).unwrap();
        let n = u.y.len();
        let mse = (0..n)
            .map(|i| (dot(&u.w_anchor, u.z.row(i)) - u.y[i]).powi(2))
            .sum::<f64>()
            / n as f64;
        let j = u.perturbed_index;
        // E[tanh²(s·t)], t ~ N(0,1), s = ‖W_{:,j}‖, by the trapezoid rule.
        let s = truth.psi_weights.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1e-3;
        let e_tanh2: f64 = (-10_000i32..=10_000)
            .map(|i| {
                let t = i as f64 * h;
                let w = if i.abs() == 10_000 { 0.5 } else { 1.0 };
                w * (s * t).tanh().powi(2) * (-0.5 * t * t).exp()
            })
            .sum::<f64>()
            * h
            / (2.0 * std::f64::consts::PI).sqrt();
        let var_zj = e_tanh2 + cfg.z_noise_variance;
        let analytic = u.perturbation.powi(2) * var_zj + cfg.y_noise_variance;
        assert!((mse - analytic).abs() < 0.05 * analytic, "{mse} vs {analytic}");
    }
}
