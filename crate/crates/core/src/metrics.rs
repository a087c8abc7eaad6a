//! Disentanglement, prediction, and causal-effect metrics.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiEnvDataset, Split};
use crate::env_tree::{EnvId, EnvTree};
use crate::error::{shape_err, Result, TbrError};
use crate::identifiability::l0_norm_relative;
use crate::model::{ModelKind, ModelParams};
use crate::numerics::{Matrix, Qr};
use crate::rng::{substream, Domain};

/// Largest `k` solved by enumerating permutations in `MccMethod::Auto`.
pub const BRUTE_FORCE_MAX_K: usize = 8;

/// Environments averaged by the ATE recovery error.
pub const ATE_ENVS: usize = 10;

/// Relative threshold used for the reported `‖Δ̂‖₀`.
pub const DELTA_L0_REL_TOL: f64 = 0.1;

/// Pearson correlation. Zero when either argument has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// `|Pearson(Ẑ_j, Z_i)|` with rows indexed by true latent `i` and columns
/// by estimated latent `j`.
pub fn abs_correlation_matrix(zhat: &Matrix, z: &Matrix) -> Result<Matrix> {
    if zhat.rows() != z.rows() {
        return Err(shape_err("correlation", format!("{} rows", z.rows()), format!("{} rows", zhat.rows())));
    }
    if zhat.rows() < 3 {
        return Err(TbrError::Config(format!("MCC needs at least 3 samples, got {}", zhat.rows())));
    }
    if !zhat.all_finite() || !z.all_finite() {
        return Err(TbrError::NonFinite("MCC input"));
    }
    let zc: Vec<Vec<f64>> = (0..z.cols()).map(|i| z.col(i)).collect();
    let hc: Vec<Vec<f64>> = (0..zhat.cols()).map(|j| zhat.col(j)).collect();
    Ok(Matrix::from_fn(z.cols(), zhat.cols(), |i, j| pearson(&hc[j], &zc[i]).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MccMethod {
    /// Enumeration up to [`BRUTE_FORCE_MAX_K`], assignment beyond.
    #[default]
    Auto,
    BruteForce,
    Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccResult {
    pub score: f64,
    /// True latent `i` is matched to estimated column `permutation[i]`.
    pub permutation: Vec<usize>,
    /// Matched `|Pearson|` per true latent.
    pub correlations: Vec<f64>,
}

pub fn mcc(zhat: &Matrix, z: &Matrix) -> Result<MccResult> {
    mcc_with(zhat, z, MccMethod::Auto)
}

pub fn mcc_with(zhat: &Matrix, z: &Matrix, method: MccMethod) -> Result<MccResult> {
    if zhat.shape() != z.shape() {
        return Err(shape_err("mcc", format!("{:?}", z.shape()), format!("{:?}", zhat.shape())));
    }
    let c = abs_correlation_matrix(zhat, z)?;
    let k = c.rows();
    let brute = match method {
        MccMethod::Auto => k <= BRUTE_FORCE_MAX_K,
        MccMethod::BruteForce => true,
        MccMethod::Assignment => false,
    };
    let permutation = if brute {
        best_permutation_brute_force(&c)
    } else {
        max_weight_assignment(&c)
    };
    Ok(matched_result(&c, permutation))
}

/// MCC allowing `k̂ ≠ k`: each true latent gets a distinct estimated column
/// when `k̂ ≥ k`; otherwise the `k − k̂` unmatched true latents score 0. The
/// score is always averaged over the `k` true latents.
pub fn mcc_rectangular(zhat: &Matrix, z: &Matrix) -> Result<f64> {
    if zhat.cols() == z.cols() {
        return Ok(mcc(zhat, z)?.score);
    }
    let c = abs_correlation_matrix(zhat, z)?;
    let k = z.cols();
    let total: f64 = if zhat.cols() > k {
        let m = max_weight_assignment(&c);
        m.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum()
    } else {
        let ct = c.transpose();
        let m = max_weight_assignment(&ct);
        m.iter().enumerate().map(|(j, &i)| ct[(j, i)]).sum()
    };
    Ok(total / k as f64)
}

fn matched_result(c: &Matrix, permutation: Vec<usize>) -> MccResult {
    let correlations: Vec<f64> = permutation.iter().enumerate().map(|(i, &j)| c[(i, j)]).collect();
    let score = correlations.iter().sum::<f64>() / correlations.len().max(1) as f64;
    MccResult {
        score,
        permutation,
        correlations,
    }
}

/// Exhaustive search over all `k!` permutations, keeping the first maximum
/// in lexicographic order.
pub fn best_permutation_brute_force(c: &Matrix) -> Vec<usize> {
    let k = c.rows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_score = f64::NEG_INFINITY;
    loop {
        let s: f64 = perm.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
        if s > best_score {
            best_score = s;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

/// Advances to the next lexicographic permutation; false after the last.
pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Maximum-weight assignment of every row to a distinct column
/// (`rows ≤ cols`), by the shortest-augmenting-path Hungarian method.
pub fn max_weight_assignment(w: &Matrix) -> Vec<usize> {
    let (n, m) = w.shape();
    assert!(n <= m, "assignment needs rows <= cols");
    let maxw = w.as_slice().iter().cloned().fold(0.0_f64, f64::max);
    let cost = |i: usize, j: usize| maxw - w[(i - 1, j - 1)];
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(shape_err("mse", y.len().to_string(), pred.len().to_string()));
    }
    if y.is_empty() {
        return Err(TbrError::Empty("mse input"));
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// OLS of `Y` on standardized representation columns plus an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub intercept: f64,
    /// Slopes on the standardized columns.
    pub coefficients: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
}

impl AteEstimate {
    /// Slopes in the original column units.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.column_stds)
            .map(|(b, s)| b / s)
            .collect()
    }
}

pub fn estimate_ate(z_repr: &Matrix, y: &[f64]) -> Result<AteEstimate> {
    if z_repr.rows() != y.len() {
        return Err(shape_err("estimate_ate", format!("{} rows", y.len()), format!("{} rows", z_repr.rows())));
    }
    let column_means = z_repr.col_means();
    let column_stds = z_repr.col_stds();
    let zs = z_repr.standardize_columns();
    let k = zs.cols();
    let design = Matrix::from_fn(zs.rows(), k + 1, |i, j| if j == 0 { 1.0 } else { zs[(i, j - 1)] });
    let beta = Qr::factor(&design)?.solve(y)?;
    Ok(AteEstimate {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        column_means,
        column_stds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    /// `|β̂|` reordered so entry `i` is the column matched to true latent `i`.
    pub estimated: Vec<f64>,
    /// `|β|` from the ground-truth latents.
    pub reference: Vec<f64>,
    pub error: f64,
}

/// Compares absolute standardized OLS slopes of `Y` on `Ẑ` and on `Z`,
/// aligning `Ẑ` columns through `permutation` (the MCC matching when `None`).
pub fn ate_recovery_error(zhat: &Matrix, z: &Matrix, y: &[f64], permutation: Option<&[usize]>) -> Result<AteResult> {
    if zhat.shape() != z.shape() {
        return Err(shape_err("ate_recovery_error", format!("{:?}", z.shape()), format!("{:?}", zhat.shape())));
    }
    let perm = match permutation {
        Some(p) => p.to_vec(),
        None => mcc(zhat, z)?.permutation,
    };
    let est = estimate_ate(zhat, y)?;
    let refe = estimate_ate(z, y)?;
    let estimated: Vec<f64> = perm.iter().map(|&j| est.coefficients[j].abs()).collect();
    let reference: Vec<f64> = refe.coefficients.iter().map(|b| b.abs()).collect();
    let error = mse(&estimated, &reference)?;
    Ok(AteResult {
        estimated,
        reference,
        error,
    })
}

/// One CSV row of evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "S")]
    pub s: f64,
    pub model: ModelKind,
    pub mcc: f64,
    pub test_mse: f64,
    pub ate_mse: f64,
    pub l0_delta_hat: Option<usize>,
    pub l1_delta_hat: Option<f64>,
    pub k_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub row: EvalRow,
    /// Present when `k̂ = k`.
    pub mcc: Option<MccResult>,
    pub env_mse: Vec<(EnvId, f64)>,
    pub ate_envs: Vec<EnvId>,
}

/// Identifies a run in result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLabel {
    pub run_id: String,
    pub seed: u64,
    pub s: f64,
}

/// Scores a trained model on the test split.
pub fn evaluate(params: &ModelParams, tree: &EnvTree, dataset: &MultiEnvDataset, label: &RunLabel) -> Result<EvalReport> {
    let test = dataset.view(Split::Test);
    let zhat = params.encoder().encode(&test.x)?;
    let pred = params.predict_latents(tree, &zhat, &test.env)?;
    let test_mse = mse(&pred, &test.y)?;

    let mut env_mse = Vec::with_capacity(dataset.observed.len());
    for &e in &dataset.observed {
        let rows = test.env_rows(e);
        if rows.is_empty() {
            continue;
        }
        let p: Vec<f64> = rows.iter().map(|&i| pred[i]).collect();
        let t: Vec<f64> = rows.iter().map(|&i| test.y[i]).collect();
        env_mse.push((e, mse(&p, &t)?));
    }

    let square = zhat.cols() == test.z.cols();
    let (mcc_res, mcc_score) = if square {
        let m = mcc(&zhat, &test.z)?;
        let s = m.score;
        (Some(m), s)
    } else {
        (None, mcc_rectangular(&zhat, &test.z)?)
    };

    let n_obs = dataset.observed.len();
    let mut rng = substream(label.seed, Domain::Evaluation, 0);
    let mut picks: Vec<usize> = sample(&mut rng, n_obs, ATE_ENVS.min(n_obs)).into_vec();
    picks.sort_unstable();
    let ate_envs: Vec<EnvId> = picks.iter().map(|&i| dataset.observed[i]).collect();
    let ate_mse = match &mcc_res {
        Some(m) => {
            let mut total = 0.0;
            let mut ok = true;
            for &e in &ate_envs {
                let rows = test.env_rows(e);
                let sub = test.select(&rows);
                let zh = zhat.select_rows(&rows);
                match ate_recovery_error(&zh, &sub.z, &sub.y, Some(&m.permutation)) {
                    Ok(r) => total += r.error,
                    Err(TbrError::RankDeficient { .. }) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if ok {
                total / ate_envs.len() as f64
            } else {
                f64::NAN
            }
        }
        None => f64::NAN,
    };

    let (l0, l1) = match params.delta() {
        Some(d) => (
            Some(l0_norm_relative(d, DELTA_L0_REL_TOL)),
            Some(d.as_slice().iter().map(|v| v.abs()).sum()),
        ),
        None => (None, None),
    };

    Ok(EvalReport {
        row: EvalRow {
            run_id: label.run_id.clone(),
            seed: label.seed,
            s: label.s,
            model: params.kind(),
            mcc: mcc_score,
            test_mse,
            ate_mse,
            l0_delta_hat: l0,
            l1_delta_hat: l1,
            k_hat: params.k_hat(),
        },
        mcc: mcc_res,
        env_mse,
        ate_envs,
    })
}

/// Writes rows with a header to any writer.
pub fn write_rows<W: std::io::Write>(out: W, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
