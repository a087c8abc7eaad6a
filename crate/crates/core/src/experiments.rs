//! Experiment recipes: grids of simulate → train → evaluate cells with
//! CSV/JSON output and embedded pass/fail checks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiEnvDataset, Split};
use crate::env_tree::{EnvId, EnvTree};
use crate::error::{Result, TbrError};
use crate::metrics::{evaluate, mse, write_rows, EvalRow, RunLabel};
use crate::model::ModelKind;
use crate::numerics::{dot, Matrix};
use crate::rng::{substream, Domain};
use crate::simulator::{simulate, spawn_unseen_env, GroundTruth, SimConfig, UnseenSpec};
use crate::trainer::{train, train_on_views, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    FigMcc,
    FigMse,
    LeafOnly,
    LatentDim,
    AteTable,
    LinearDgp,
    BernoulliDelta,
    TransferUnseen,
}

impl Recipe {
    pub const ALL: [Recipe; 8] = [
        Recipe::FigMcc,
        Recipe::FigMse,
        Recipe::LeafOnly,
        Recipe::LatentDim,
        Recipe::AteTable,
        Recipe::LinearDgp,
        Recipe::BernoulliDelta,
        Recipe::TransferUnseen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::FigMcc => "fig-mcc",
            Recipe::FigMse => "fig-mse",
            Recipe::LeafOnly => "leaf-only",
            Recipe::LatentDim => "latent-dim",
            Recipe::AteTable => "ate-table",
            Recipe::LinearDgp => "linear-dgp",
            Recipe::BernoulliDelta => "bernoulli-delta",
            Recipe::TransferUnseen => "transfer-unseen",
        }
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Recipe {
    type Err = TbrError;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| TbrError::Config(format!("unknown recipe {s:?}")))
    }
}

/// Held-out environment protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSpec {
    /// Observed environments used as anchors per trained model.
    pub anchors: usize,
    pub perturbation_variance: f64,
    /// Labelled unseen-environment samples used to pick the head correction.
    pub n_adapt: usize,
    /// Unseen-environment samples scored.
    pub n_eval: usize,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            anchors: 4,
            perturbation_variance: 1.0,
            n_adapt: 100,
            n_eval: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub recipe: Recipe,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Overrides the recipe's sparsity grid.
    pub s_values: Option<Vec<usize>>,
    /// Overrides the Bernoulli grid of `bernoulli-delta`.
    pub pi_values: Option<Vec<f64>>,
    /// True latent dimensions of `latent-dim`.
    pub k_values: Option<Vec<usize>>,
    /// Estimated latent dimensions of `latent-dim`.
    pub k_hat_values: Option<Vec<usize>>,
    /// Overrides which estimators are trained.
    pub models: Option<Vec<ModelKind>>,
    pub transfer: TransferSpec,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::desk(Recipe::FigMcc)
    }
}

/// λ for the all-linear recipe.
pub const LINEAR_DGP_LAMBDA: f64 = 0.02;

/// Training settings used by the desk-scale recipes.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        lambda: 5e-3,
        batch_size: 64,
        max_epochs: 40,
        ..TrainConfig::default()
    }
}

impl ExperimentSpec {
    /// Depth-5 tree, 1000 samples per environment, 5 seeds.
    pub fn desk(recipe: Recipe) -> Self {
        let mut train = desk_train_config();
        if recipe == Recipe::LinearDgp {
            // Linear latents have variance ~16 against ~0.9 under tanh, so Y
            // is ~4x larger; λ follows the scale of the target.
            train.lambda = LINEAR_DGP_LAMBDA;
        }
        Self {
            recipe,
            sim: SimConfig::desk(),
            train,
            seeds: (0..5).collect(),
            s_values: None,
            pi_values: None,
            k_values: None,
            k_hat_values: None,
            models: None,
            transfer: TransferSpec::default(),
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(TbrError::Config("seeds must be non-empty".into()));
        }
        self.sim.validate()?;
        self.train.validate()?;
        if self.recipe == Recipe::TransferUnseen && (self.transfer.anchors == 0 || self.transfer.n_adapt == 0 || self.transfer.n_eval == 0) {
            return Err(TbrError::Config("transfer anchors, n_adapt and n_eval must be positive".into()));
        }
        Ok(())
    }
}

/// One row plus the bookkeeping the checks need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub row: EvalRow,
    /// Run id without the seed suffix.
    pub setting: String,
    pub true_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "S")]
    pub s: f64,
    pub model: ModelKind,
    pub anchor: EnvId,
    pub perturbed_index: usize,
    pub perturbation: f64,
    /// Anchor head applied unchanged.
    pub direct_mse: f64,
    /// After the 1-sparse head correction.
    pub adapted_mse: f64,
    pub adapted_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub run_id: String,
    pub model: ModelKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub setting: String,
    pub model: ModelKind,
    pub n: usize,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
    pub ate_mse_mean: f64,
    pub ate_mse_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeOutput {
    pub recipe: Recipe,
    pub spec: ExperimentSpec,
    pub records: Vec<Record>,
    pub transfer: Vec<TransferRecord>,
    pub failures: Vec<CellFailure>,
    pub groups: Vec<GroupSummary>,
    pub checks: Vec<Check>,
}

impl RecipeOutput {
    pub fn rows(&self) -> Vec<EvalRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }

    /// True when every cell ran and every embedded check passed.
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_rows(&mut buf, &self.rows())?;
        Ok(buf)
    }

    /// Summary JSON (everything except the per-row records).
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            recipe: Recipe,
            spec: &'a ExperimentSpec,
            groups: &'a [GroupSummary],
            checks: &'a [Check],
            failures: &'a [CellFailure],
            transfer: &'a [TransferRecord],
        }
        Ok(serde_json::to_string_pretty(&Summary {
            recipe: self.recipe,
            spec: &self.spec,
            groups: &self.groups,
            checks: &self.checks,
            failures: &self.failures,
            transfer: &self.transfer,
        })?)
    }

    /// Writes `<recipe>.csv` and `<recipe>_summary.json` into `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.recipe));
        let json_path = dir.join(format!("{}_summary.json", self.recipe));
        std::fs::write(&csv_path, self.csv_bytes()?)?;
        std::fs::write(&json_path, self.summary_json()?)?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone)]
struct Fit {
    kind: ModelKind,
    k_hat: Option<usize>,
}

#[derive(Debug, Clone)]
struct Job {
    sim: SimConfig,
    s_label: f64,
    setting: String,
    fits: Vec<Fit>,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

fn jobs_for(spec: &ExperimentSpec) -> Vec<Job> {
    let base = &spec.sim;
    let k = base.k;
    let both = vec![ModelKind::Tbr, ModelKind::Baseline];
    let models = |default: Vec<ModelKind>| spec.models.clone().unwrap_or(default);
    let s_grid = |default: Vec<usize>| spec.s_values.clone().unwrap_or(default);
    let simple = |kinds: &[ModelKind]| -> Vec<Fit> { kinds.iter().map(|&kind| Fit { kind, k_hat: None }).collect() };
    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        let name = spec.recipe.name();
        match spec.recipe {
            Recipe::FigMcc | Recipe::FigMse | Recipe::LeafOnly | Recipe::LinearDgp | Recipe::AteTable | Recipe::TransferUnseen => {
                let default_s: Vec<usize> = match spec.recipe {
                    Recipe::AteTable => vec![1],
                    Recipe::TransferUnseen => vec![0, 1, 2],
                    _ => (0..=k).collect(),
                };
                for s in s_grid(default_s) {
                    let mut sim = SimConfig {
                        s_sparsity: s,
                        bernoulli_pi: None,
                        seed,
                        ..base.clone()
                    };
                    match spec.recipe {
                        Recipe::LeafOnly => sim = sim.leaves_only(),
                        Recipe::LinearDgp => sim.linear_psi = true,
                        _ => {}
                    }
                    let unseen = if spec.recipe == Recipe::TransferUnseen { "-unseen" } else { "" };
                    jobs.push(Job {
                        sim,
                        s_label: s as f64,
                        setting: format!("{name}-s{s}-k{k}{unseen}"),
                        fits: simple(&models(both.clone())),
                    });
                }
            }
            Recipe::BernoulliDelta => {
                let pis = spec.pi_values.clone().unwrap_or_else(|| vec![0.2, 0.4, 0.6, 0.8, 1.0]);
                for pi in pis {
                    jobs.push(Job {
                        sim: SimConfig {
                            bernoulli_pi: Some(pi),
                            seed,
                            ..base.clone()
                        },
                        s_label: pi * k as f64,
                        setting: format!("{name}-pi{}-k{k}", fmt_num(pi)),
                        fits: simple(&models(both.clone())),
                    });
                }
            }
            Recipe::LatentDim => {
                let ks = spec.k_values.clone().unwrap_or_else(|| vec![4, 5, 6]);
                let k_hats = spec.k_hat_values.clone().unwrap_or_else(|| (1..=8).collect());
                for true_k in ks {
                    let kinds = models(vec![ModelKind::Tbr]);
                    let fits = kinds
                        .iter()
                        .flat_map(|&kind| k_hats.iter().map(move |&kh| Fit { kind, k_hat: Some(kh) }))
                        .collect();
                    jobs.push(Job {
                        sim: SimConfig {
                            k: true_k,
                            s_sparsity: 0,
                            bernoulli_pi: Some(0.5),
                            seed,
                            ..base.clone()
                        },
                        s_label: 0.5 * true_k as f64,
                        setting: format!("{name}-pi0p5-k{true_k}"),
                        fits,
                    });
                }
            }
        }
    }
    jobs
}

enum FitOutcome {
    Done(Record, Vec<TransferRecord>),
    Failed(CellFailure),
}

fn run_job(spec: &ExperimentSpec, job: &Job) -> Vec<FitOutcome> {
    let seed = job.sim.seed;
    let fail = |run_id: String, kind, e: TbrError| FitOutcome::Failed(CellFailure {
        run_id,
        model: kind,
        error: e.to_string(),
    });
    let (tree, truth, data) = match simulate(&job.sim) {
        Ok(v) => v,
        Err(e) => {
            return job
                .fits
                .iter()
                .map(|f| fail(format!("{}-seed{seed}", job.setting), f.kind, TbrError::Config(e.to_string())))
                .collect()
        }
    };
    job.fits
        .iter()
        .map(|fit| {
            let setting = match fit.k_hat {
                Some(kh) if spec.recipe == Recipe::LatentDim => format!("{}-khat{kh}", job.setting),
                _ => job.setting.clone(),
            };
            let run_id = format!("{setting}-seed{seed}");
            let label = RunLabel {
                run_id: run_id.clone(),
                seed,
                s: job.s_label,
            };
            let config = TrainConfig {
                seed,
                kind: fit.kind,
                k_hat: fit.k_hat,
                ..spec.train.clone()
            };
            let result = if spec.recipe == Recipe::TransferUnseen {
                transfer_cell(spec, &tree, &truth, &data, &config, &label)
            } else {
                train(&data, &tree, &config)
                    .and_then(|r| evaluate(&r.params, &tree, &data, &label))
                    .map(|ev| (ev.row, Vec::new()))
            };
            match result {
                Ok((row, transfer)) => FitOutcome::Done(
                    Record {
                        row,
                        setting,
                        true_k: job.sim.k,
                    },
                    transfer,
                ),
                Err(e) => fail(run_id, fit.kind, e),
            }
        })
        .collect()
}

/// Picks the single head coordinate and coefficient that best explain the
/// residual `y − Ẑw` in least squares. Returns `(index, coefficient)`.
pub fn one_sparse_adaptation(zhat: &Matrix, y: &[f64], w: &[f64]) -> Result<(usize, f64)> {
    let pred = zhat.matvec(w)?;
    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mut best = (0usize, 0.0, f64::INFINITY);
    for j in 0..zhat.cols() {
        let col = zhat.col(j);
        let ss = dot(&col, &col);
        let c = if ss > 0.0 { dot(&col, &r) / ss } else { 0.0 };
        let sse: f64 = r.iter().zip(&col).map(|(ri, zi)| (ri - c * zi).powi(2)).sum();
        if sse < best.2 {
            best = (j, c, sse);
        }
    }
    Ok((best.0, best.1))
}

/// Unseen-environment MSE of a head `w` on `Ẑ`, directly and after the
/// 1-sparse correction fitted on the first `n_adapt` rows.
fn score_unseen(zhat: &Matrix, y: &[f64], w: &[f64], n_adapt: usize) -> Result<(f64, f64, usize)> {
    let adapt: Vec<usize> = (0..n_adapt).collect();
    let eval: Vec<usize> = (n_adapt..y.len()).collect();
    let za = zhat.select_rows(&adapt);
    let ya: Vec<f64> = adapt.iter().map(|&i| y[i]).collect();
    let ze = zhat.select_rows(&eval);
    let ye: Vec<f64> = eval.iter().map(|&i| y[i]).collect();
    let direct = mse(&ze.matvec(w)?, &ye)?;
    let (j, c) = one_sparse_adaptation(&za, &ya, w)?;
    let mut wa = w.to_vec();
    wa[j] += c;
    let adapted = mse(&ze.matvec(&wa)?, &ye)?;
    Ok((direct, adapted, j))
}

/// TBR reuses the anchor's composed head; the baseline is trained on the
/// anchor environment's rows only. Both then get the same 1-sparse head
/// correction from a few labelled unseen samples.
fn transfer_cell(
    spec: &ExperimentSpec,
    tree: &EnvTree,
    truth: &GroundTruth,
    data: &MultiEnvDataset,
    config: &TrainConfig,
    label: &RunLabel,
) -> Result<(EvalRow, Vec<TransferRecord>)> {
    let ts = &spec.transfer;
    let n_obs = data.observed.len();
    let mut pick_rng = substream(label.seed, Domain::Unseen, 0);
    let mut picks = sample(&mut pick_rng, n_obs, ts.anchors.min(n_obs)).into_vec();
    picks.sort_unstable();
    let anchors: Vec<EnvId> = picks.iter().map(|&i| data.observed[i]).collect();
    let unseen: Vec<_> = anchors
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            spawn_unseen_env(
                tree,
                truth,
                a,
                UnseenSpec {
                    perturbation_variance: ts.perturbation_variance,
                    n_samples: ts.n_adapt + ts.n_eval,
                },
                &mut substream(label.seed, Domain::Unseen, 1 + i as u64),
            )
        })
        .collect::<Result<_>>()?;

    let record = |u: &crate::simulator::UnseenEnv, direct, adapted, j| TransferRecord {
        run_id: label.run_id.clone(),
        seed: label.seed,
        s: label.s,
        model: config.kind,
        anchor: u.anchor,
        perturbed_index: u.perturbed_index,
        perturbation: u.perturbation,
        direct_mse: direct,
        adapted_mse: adapted,
        adapted_index: j,
    };

    match config.kind {
        ModelKind::Tbr => {
            let report = train(data, tree, config)?;
            let mut row = evaluate(&report.params, tree, data, label)?.row;
            let mut recs = Vec::with_capacity(unseen.len());
            for u in &unseen {
                let zhat = report.params.encoder().encode(&u.x)?;
                let w = report.params.head_for(tree, u.anchor)?;
                let (d, a, j) = score_unseen(&zhat, &u.y, &w, ts.n_adapt)?;
                recs.push(record(u, d, a, j));
            }
            row.test_mse = recs.iter().map(|r| r.adapted_mse).sum::<f64>() / recs.len() as f64;
            Ok((row, recs))
        }
        ModelKind::Baseline => {
            let train_view = data.view(Split::Train);
            let val_view = data.view(Split::Val);
            let mut recs = Vec::with_capacity(unseen.len());
            let mut rows = Vec::with_capacity(unseen.len());
            for u in &unseen {
                let tr = train_view.select(&train_view.env_rows(u.anchor));
                let va = val_view.select(&val_view.env_rows(u.anchor));
                let report = train_on_views(&tr, &va, tree, data.d_x(), data.k(), config)?;
                rows.push(evaluate(&report.params, tree, data, label)?.row);
                let zhat = report.params.encoder().encode(&u.x)?;
                let w = report.params.head_for(tree, u.anchor)?;
                let (d, a, j) = score_unseen(&zhat, &u.y, &w, ts.n_adapt)?;
                recs.push(record(u, d, a, j));
            }
            let n = rows.len() as f64;
            let mut row = rows[0].clone();
            row.mcc = rows.iter().map(|r| r.mcc).sum::<f64>() / n;
            row.ate_mse = rows.iter().map(|r| r.ate_mse).sum::<f64>() / n;
            row.test_mse = recs.iter().map(|r| r.adapted_mse).sum::<f64>() / n;
            Ok((row, recs))
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Mean ± sample standard deviation per (setting, model), in first-seen order.
pub fn summarize(records: &[Record]) -> Vec<GroupSummary> {
    let mut order: Vec<(String, ModelKind)> = Vec::new();
    let mut groups: BTreeMap<(String, ModelKind), Vec<&EvalRow>> = BTreeMap::new();
    for r in records {
        let key = (r.setting.clone(), r.row.model);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(&r.row);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let col = |f: fn(&EvalRow) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mcc_mean, mcc_std) = col(|r| r.mcc);
            let (test_mse_mean, test_mse_std) = col(|r| r.test_mse);
            let (ate_mse_mean, ate_mse_std) = col(|r| r.ate_mse);
            GroupSummary {
                setting: key.0,
                model: key.1,
                n: rows.len(),
                mcc_mean,
                mcc_std,
                test_mse_mean,
                test_mse_std,
                ate_mse_mean,
                ate_mse_std,
            }
        })
        .collect()
}

/// Runs every cell of the recipe. Cell failures are recorded, not fatal.
pub fn run_recipe(spec: &ExperimentSpec) -> Result<RecipeOutput> {
    spec.validate()?;
    let jobs = jobs_for(spec);
    let outcomes: Vec<Vec<FitOutcome>> = jobs.par_iter().map(|j| run_job(spec, j)).collect();
    let mut records = Vec::new();
    let mut transfer = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            FitOutcome::Done(r, t) => {
                records.push(r);
                transfer.extend(t);
            }
            FitOutcome::Failed(f) => failures.push(f),
        }
    }
    let checks = criteria::for_recipe(spec, &records);
    let out = RecipeOutput {
        recipe: spec.recipe,
        spec: spec.clone(),
        groups: summarize(&records),
        records,
        transfer,
        failures,
        checks,
    };
    if let Some(dir) = &spec.out_dir {
        out.write_to(dir)?;
    }
    Ok(out)
}

/// Pass/fail thresholds evaluated on recipe records.
pub mod criteria {
    use super::*;

    fn mean_of(records: &[Record], pred: impl Fn(&Record) -> bool, f: impl Fn(&EvalRow) -> f64) -> Option<f64> {
        let v: Vec<f64> = records.iter().filter(|r| pred(r)).map(|r| f(&r.row)).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    fn at(records: &[Record], s: f64, model: ModelKind, f: impl Fn(&EvalRow) -> f64) -> Option<f64> {
        mean_of(records, |r| r.row.s == s && r.row.model == model, f)
    }

    fn check(criterion: &str, passed: bool, detail: String) -> Check {
        Check {
            criterion: criterion.into(),
            passed,
            detail,
        }
    }

    /// TBR mean MCC ≥ 0.90 at S=1 and baseline ≤ TBR − 0.15.
    pub fn disentanglement(records: &[Record]) -> Option<Check> {
        let t = at(records, 1.0, ModelKind::Tbr, |r| r.mcc)?;
        let b = at(records, 1.0, ModelKind::Baseline, |r| r.mcc)?;
        Some(check(
            "disentanglement at S=1",
            t >= 0.90 && b <= t - 0.15,
            format!("TBR mean MCC {t:.4} (need >= 0.90), baseline {b:.4} (need <= {:.4})", t - 0.15),
        ))
    }

    /// Both ≤ 0.75 at S=0 and within 0.15 of each other.
    pub fn entanglement(records: &[Record]) -> Option<Check> {
        let t = at(records, 0.0, ModelKind::Tbr, |r| r.mcc)?;
        let b = at(records, 0.0, ModelKind::Baseline, |r| r.mcc)?;
        Some(check(
            "entanglement at S=0",
            t <= 0.75 && b <= 0.75 && (t - b).abs() <= 0.15,
            format!("TBR {t:.4}, baseline {b:.4} (both need <= 0.75, |diff| <= 0.15)"),
        ))
    }

    /// TBR MCC non-increasing over S=1..5 (0.05 margin) and ≥ baseline + 0.1.
    pub fn monotone(records: &[Record], k: usize) -> Option<Check> {
        let mut tbr = Vec::new();
        let mut gap_ok = true;
        let mut detail = String::new();
        for s in 1..=k {
            let t = at(records, s as f64, ModelKind::Tbr, |r| r.mcc)?;
            let b = at(records, s as f64, ModelKind::Baseline, |r| r.mcc)?;
            gap_ok &= t >= b + 0.1;
            detail.push_str(&format!("S={s}: TBR {t:.3} base {b:.3}; "));
            tbr.push(t);
        }
        let mono = tbr.windows(2).all(|w| w[1] <= w[0] + 0.05);
        Some(check(
            "monotone degradation in S",
            mono && gap_ok,
            format!("{detail}non-increasing: {mono}, gap >= 0.1: {gap_ok}"),
        ))
    }

    /// TBR test MSE ≤ 2·σ²_y for all S; baseline MSE at S=k ≥ 3× at S=0.
    pub fn prediction(records: &[Record], k: usize, y_noise_variance: f64) -> Option<Check> {
        let floor = 2.0 * y_noise_variance;
        let mut worst: f64 = 0.0;
        let mut detail = String::new();
        for s in 0..=k {
            let t = at(records, s as f64, ModelKind::Tbr, |r| r.test_mse)?;
            worst = worst.max(t);
            detail.push_str(&format!("S={s}: TBR {t:.4}; "));
        }
        let b0 = at(records, 0.0, ModelKind::Baseline, |r| r.test_mse)?;
        let bk = at(records, k as f64, ModelKind::Baseline, |r| r.test_mse)?;
        Some(check(
            "prediction error",
            worst <= floor && bk >= 3.0 * b0,
            format!("{detail}max TBR {worst:.4} (need <= {floor:.4}); baseline S={k} {bk:.4} vs S=0 {b0:.4} (need ratio >= 3, got {:.2})", bk / b0),
        ))
    }

    /// TBR ATE error ≤ 0.2 at S=1 and baseline ≥ 2× TBR.
    pub fn ate(records: &[Record]) -> Option<Check> {
        let t = at(records, 1.0, ModelKind::Tbr, |r| r.ate_mse)?;
        let b = at(records, 1.0, ModelKind::Baseline, |r| r.ate_mse)?;
        Some(check(
            "ATE recovery at S=1",
            t <= 0.2 && b >= 2.0 * t,
            format!("TBR {t:.4} (need <= 0.2), baseline {b:.4} (need >= {:.4})", 2.0 * t),
        ))
    }

    /// For each true k: MSE at k̂=k within 10% of the minimum over k̂, and
    /// MSE at k̂=k−1 at least 25% higher than at k̂=k.
    pub fn latent_dim(records: &[Record]) -> Option<Check> {
        let mut ks: Vec<usize> = records.iter().map(|r| r.true_k).collect();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() {
            return None;
        }
        let mut ok = true;
        let mut detail = String::new();
        for k in ks {
            let mse_at = |kh: usize| {
                mean_of(
                    records,
                    |r| r.true_k == k && r.row.k_hat == kh && r.row.model == ModelKind::Tbr,
                    |r| r.test_mse,
                )
            };
            let mut k_hats: Vec<usize> = records.iter().filter(|r| r.true_k == k).map(|r| r.row.k_hat).collect();
            k_hats.sort_unstable();
            k_hats.dedup();
            let at_k = mse_at(k)?;
            let below = mse_at(k - 1)?;
            let min = k_hats.iter().filter_map(|&kh| mse_at(kh)).fold(f64::INFINITY, f64::min);
            let pass = at_k <= 1.1 * min && below >= 1.25 * at_k;
            ok &= pass;
            detail.push_str(&format!(
                "k={k}: mse(k)={at_k:.4} min={min:.4} mse(k-1)={below:.4} ratio={:.2} {}; ",
                below / at_k,
                if pass { "ok" } else { "FAIL" }
            ));
        }
        Some(check("latent-dimension plateau", ok, detail))
    }

    /// TBR at S=1 ≤ 0.6× TBR at S=0 on unseen environments, and the
    /// baseline's mean at each of S=0 and S=1 exceeds both TBR means.
    pub fn transfer(records: &[Record]) -> Option<Check> {
        let t0 = at(records, 0.0, ModelKind::Tbr, |r| r.test_mse)?;
        let t1 = at(records, 1.0, ModelKind::Tbr, |r| r.test_mse)?;
        let b0 = at(records, 0.0, ModelKind::Baseline, |r| r.test_mse)?;
        let b1 = at(records, 1.0, ModelKind::Baseline, |r| r.test_mse)?;
        let top = t0.max(t1);
        Some(check(
            "transfer to unseen environments",
            t1 <= 0.6 * t0 && b0 > top && b1 > top,
            format!("TBR S=1 {t1:.4} vs S=0 {t0:.4} (ratio {:.3}, need <= 0.6); baseline S=0 {b0:.4}, S=1 {b1:.4} (need > {top:.4})", t1 / t0),
        ))
    }

    /// Checks embedded in each recipe.
    pub fn for_recipe(spec: &ExperimentSpec, records: &[Record]) -> Vec<Check> {
        let k = spec.sim.k;
        let checks = match spec.recipe {
            Recipe::FigMcc | Recipe::LeafOnly => vec![disentanglement(records), entanglement(records), monotone(records, k)],
            Recipe::FigMse => vec![prediction(records, k, spec.sim.y_noise_variance)],
            Recipe::AteTable => vec![ate(records)],
            Recipe::LinearDgp => vec![disentanglement(records)],
            Recipe::LatentDim => vec![latent_dim(records)],
            Recipe::TransferUnseen => vec![transfer(records)],
            Recipe::BernoulliDelta => vec![],
        };
        checks.into_iter().flatten().collect()
    }
}
