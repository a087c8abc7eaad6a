//! Mini-batch Adam training with best-validation checkpointing, and
//! hyperparameter sweeps.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataView, MultiEnvDataset, Split, SplitFractions};
use crate::env_tree::EnvTree;
use crate::error::{Result, TbrError};
use crate::metrics::mse;
use crate::model::{BaselineParams, Batch, Freeze, Model, ModelKind, ModelParams, TbrParams};
use crate::numerics::{AdamConfig, AdamState, Architecture};
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub kind: ModelKind,
    /// Latent width of the encoder; `None` uses the dataset's true `k`.
    pub k_hat: Option<usize>,
    pub freeze: Freeze,
    /// Stop after this many epochs without a new best validation MSE.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lambda: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            seed: 0,
            kind: ModelKind::Tbr,
            k_hat: None,
            freeze: Freeze::default(),
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TbrError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(TbrError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TbrError::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.k_hat == Some(0) {
            return Err(TbrError::Config("k_hat must be positive".into()));
        }
        Ok(())
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub params: ModelParams,
    /// Mean training objective per epoch (prediction + penalty).
    pub train_loss: Vec<f64>,
    /// Validation prediction MSE after each epoch.
    pub val_mse: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn best_val_mse(&self) -> f64 {
        self.val_mse[self.selected_epoch]
    }

    pub fn epochs_run(&self) -> usize {
        self.val_mse.len()
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        self.config == other.config
            && self.params == other.params
            && bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.val_mse) == bits(&other.val_mse)
            && self.selected_epoch == other.selected_epoch
    }
}

/// Relabels `dataset` with per-environment stratified splits.
pub fn split_dataset(dataset: &mut MultiEnvDataset, fractions: SplitFractions, seed: u64) -> Result<()> {
    dataset.assign_splits(fractions, seed)
}

/// Trains on the dataset's train split, selecting by validation MSE. The
/// test split is never read.
pub fn train(dataset: &MultiEnvDataset, tree: &EnvTree, config: &TrainConfig) -> Result<TrainReport> {
    let train_view = dataset.view(Split::Train);
    let val_view = dataset.view(Split::Val);
    train_on_views(&train_view, &val_view, tree, dataset.d_x(), dataset.k(), config)
}

/// Trains from explicit train/validation rows.
pub fn train_on_views(
    train: &DataView,
    val: &DataView,
    tree: &EnvTree,
    d_x: usize,
    true_k: usize,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(TbrError::Empty("training split"));
    }
    if val.is_empty() {
        return Err(TbrError::Empty("validation split"));
    }
    let arch = Architecture::new(d_x, config.k_hat.unwrap_or(true_k));
    let mut rng = substream(config.seed, Domain::ModelInit, 0);
    let start = Instant::now();
    let (params, train_loss, val_mse, selected_epoch) = match config.kind {
        ModelKind::Tbr => {
            let init = TbrParams::init(arch, tree.num_arcs(), &mut rng);
            let (p, t, v, s) = fit(init, train, val, tree, config)?;
            (ModelParams::Tbr(p), t, v, s)
        }
        ModelKind::Baseline => {
            let init = BaselineParams::init(arch, &mut rng);
            let (p, t, v, s) = fit(init, train, val, tree, config)?;
            (ModelParams::Baseline(p), t, v, s)
        }
    };
    Ok(TrainReport {
        config: config.clone(),
        params,
        train_loss,
        val_mse,
        selected_epoch,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

type FitOutput<M> = (M, Vec<f64>, Vec<f64>, usize);

/// The optimisation loop, starting from `params`.
pub fn fit<M: Model>(
    params: M,
    train: &DataView,
    val: &DataView,
    tree: &EnvTree,
    config: &TrainConfig,
) -> Result<FitOutput<M>> {
    fit_observed(params, train, val, tree, config, |_, _, _| {})
}

/// As [`fit`], calling `observe(epoch, params, val_mse)` after every epoch.
pub fn fit_observed<M: Model>(
    mut params: M,
    train: &DataView,
    val: &DataView,
    tree: &EnvTree,
    config: &TrainConfig,
    mut observe: impl FnMut(usize, &M, f64),
) -> Result<FitOutput<M>> {
    config.validate()?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), &params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut train_loss = Vec::with_capacity(config.max_epochs);
    let mut val_hist = Vec::with_capacity(config.max_epochs);

    for epoch in 0..config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, Domain::Batching, epoch as u64));
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = train.x.select_rows(chunk);
            let env: Vec<_> = chunk.iter().map(|&i| train.env[i]).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| train.y[i]).collect();
            let (loss, mut grads) = params.loss_and_grads(tree, Batch::new(&x, &env, &y)?, config.lambda)?;
            if !loss.total.is_finite() {
                return Err(TbrError::Diverged {
                    epoch,
                    detail: format!("non-finite training loss {}", loss.total),
                });
            }
            M::apply_freeze(&mut grads, config.freeze);
            adam.step(&mut params, &grads).map_err(|e| TbrError::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
            weighted += loss.total * chunk.len() as f64;
        }
        train_loss.push(weighted / train.len() as f64);

        let pred = params.predict(tree, &val.x, &val.env)?;
        let v = mse(&pred, &val.y)?;
        if !v.is_finite() {
            return Err(TbrError::Diverged {
                epoch,
                detail: format!("non-finite validation MSE {v}"),
            });
        }
        val_hist.push(v);
        observe(epoch, &params, v);
        if v < best.0 {
            best = (v, epoch, params.clone());
        } else if let Some(p) = config.patience {
            if epoch - best.1 >= p {
                break;
            }
        }
    }
    Ok((best.2, train_loss, val_hist, best.1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub config: TrainConfig,
    pub val_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: TrainReport,
    pub table: Vec<SweepEntry>,
}

/// λ ∈ {0, 0.1, 0.01, 0.001, 0.0001} × lr ∈ {0.001, 0.0001} around `base`.
pub fn paper_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut grid = Vec::new();
    for &lr in &[1e-3, 1e-4] {
        for &lambda in &[0.0, 0.1, 0.01, 0.001, 0.0001] {
            grid.push(TrainConfig {
                learning_rate: lr,
                lambda,
                ..base.clone()
            });
        }
    }
    grid
}

/// Trains every grid entry and keeps the lowest validation MSE, preferring
/// the larger λ on ties. Failed entries are recorded and skipped.
pub fn sweep(dataset: &MultiEnvDataset, tree: &EnvTree, grid: &[TrainConfig]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(TbrError::Config("sweep grid is empty".into()));
    }
    let runs: Vec<Result<TrainReport>> = grid.par_iter().map(|c| train(dataset, tree, c)).collect();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<TrainReport> = None;
    for (config, run) in grid.iter().zip(runs) {
        match run {
            Ok(report) => {
                let v = report.best_val_mse();
                table.push(SweepEntry {
                    config: config.clone(),
                    val_mse: Some(v),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let bv = b.best_val_mse();
                        v < bv || (v == bv && config.lambda > b.config.lambda)
                    }
                };
                if better {
                    best = Some(report);
                }
            }
            Err(e) => table.push(SweepEntry {
                config: config.clone(),
                val_mse: None,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some(best) => Ok(SweepResult { best, table }),
        None => Err(TbrError::Diverged {
            epoch: 0,
            detail: "every sweep configuration failed".into(),
        }),
    }
}
