//! Tree-regularized and baseline estimators.
//!
//! Both share the MLP encoder `Ẑ = Ψ̂_θ(X)`. The TBR model predicts
//! `ŷ = ŵ_eᵀẑ` with `ŵ_e = ŵ₀ + Σ_{a ∈ path(e)} Δ̂_a` and is trained on
//!
//! ```text
//! mean_i (ŷ_i − y_i)²  +  λ·‖Δ̂‖₁
//! ```
//!
//! (the L1 norm standing in for L0). The penalty touches `Δ̂` only, never
//! `ŵ₀`. The subgradient of `|·|` at exactly zero is taken as zero. The
//! baseline fits one head `ŵ` shared by every environment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env_tree::{EnvId, EnvTree};
use crate::error::{shape_err, Result, TbrError};
use crate::numerics::{dot, Architecture, EncoderParams, Matrix, ParamSet};
use crate::simulator::env_weight_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tbr,
    Baseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tbr => "tbr",
            ModelKind::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = TbrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tbr" => Ok(ModelKind::Tbr),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(TbrError::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Borrowed mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Matrix,
    pub env: &'a [EnvId],
    pub y: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a Matrix, env: &'a [EnvId], y: &'a [f64]) -> Result<Self> {
        if x.rows() != y.len() || env.len() != y.len() {
            return Err(shape_err(
                "Batch::new",
                format!("{} rows", y.len()),
                format!("x {} env {}", x.rows(), env.len()),
            ));
        }
        if y.is_empty() {
            return Err(TbrError::Empty("batch"));
        }
        Ok(Self { x, env, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub prediction_term: f64,
    pub penalty_term: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(prediction_term: f64, penalty_term: f64, lambda: f64) -> Self {
        Self {
            prediction_term,
            penalty_term,
            lambda,
            total: prediction_term + lambda * penalty_term,
        }
    }
}

/// Which parameter groups receive updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freeze {
    pub encoder: bool,
    pub delta: bool,
}

/// Behaviour the trainer needs from either estimator.
pub trait Model: ParamSet + Clone + Send + Sync {
    fn kind(&self) -> ModelKind;
    fn encoder(&self) -> &EncoderParams;
    fn k_hat(&self) -> usize {
        self.encoder().arch().output_dim
    }
    /// Predictions from precomputed latents.
    fn predict_latents(&self, tree: &EnvTree, zhat: &Matrix, env: &[EnvId]) -> Result<Vec<f64>>;
    /// Prediction loss, penalty, and exact gradients.
    fn loss_and_grads(&self, tree: &EnvTree, batch: Batch<'_>, lambda: f64) -> Result<(LossBreakdown, Self)>;
    /// Zeroes gradient groups that should stay fixed.
    fn apply_freeze(grads: &mut Self, freeze: Freeze);

    fn predict(&self, tree: &EnvTree, x: &Matrix, env: &[EnvId]) -> Result<Vec<f64>> {
        let zhat = self.encoder().encode(x)?;
        self.predict_latents(tree, &zhat, env)
    }
}

fn head_init<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let bound = (6.0 / (k + 1) as f64).sqrt();
    (0..k).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn squared_error(pred: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let mut sse = 0.0;
    let g = pred
        .iter()
        .zip(y)
        .map(|(p, t)| {
            let r = p - t;
            sse += r * r;
            2.0 * r / n
        })
        .collect();
    (sse / n, g)
}

fn check_env(tree: &EnvTree, env: &[EnvId]) -> Result<()> {
    match env.iter().find(|e| e.0 >= tree.num_nodes()) {
        Some(e) => Err(TbrError::UnknownEnv(e.0)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbrParams {
    pub encoder: EncoderParams,
    pub w0: Vec<f64>,
    /// `|A| × k̂`, one row per arc.
    pub delta: Matrix,
}

impl TbrParams {
    /// Encoder from the Glorot initializer, `ŵ₀` uniform, `Δ̂ = 0`. Draws the
    /// same random numbers as [`BaselineParams::init`].
    pub fn init<R: Rng + ?Sized>(arch: Architecture, num_arcs: usize, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(arch, rng);
        let w0 = head_init(arch.output_dim, rng);
        Self {
            encoder,
            w0,
            delta: Matrix::zeros(num_arcs, arch.output_dim),
        }
    }

    pub fn validate(&self, tree: &EnvTree) -> Result<()> {
        let k = self.encoder.arch().output_dim;
        if self.w0.len() != k || self.delta.shape() != (tree.num_arcs(), k) {
            return Err(shape_err(
                "TbrParams",
                format!("w0 {k}, delta {}x{k}", tree.num_arcs()),
                format!("w0 {}, delta {:?}", self.w0.len(), self.delta.shape()),
            ));
        }
        Ok(())
    }

    /// `ŵ_e` for one environment.
    pub fn env_weights(&self, tree: &EnvTree, env: EnvId) -> Result<Vec<f64>> {
        crate::simulator::compose_weights(tree, &self.w0, &self.delta, env)
    }

    /// `ŵ_e` for every node (row = node id).
    pub fn weight_table(&self, tree: &EnvTree) -> Result<Matrix> {
        env_weight_table(tree, &self.w0, &self.delta)
    }

    pub fn l1_penalty(&self) -> f64 {
        self.delta.as_slice().iter().map(|v| v.abs()).sum()
    }

    /// Reorders latent units: new unit `j` is old unit `perm[j]`, in the
    /// encoder output layer, `ŵ₀` and `Δ̂` together.
    pub fn permute_latents(&mut self, perm: &[usize]) {
        self.encoder.permute_outputs(perm);
        self.w0 = perm.iter().map(|&j| self.w0[j]).collect();
        self.delta = self.delta.select_cols(perm);
    }

    /// Multiplies latent `j` by `c` and divides its head weights by `c`.
    pub fn rescale_latent(&mut self, j: usize, c: f64) {
        self.encoder.scale_output(j, c);
        self.w0[j] /= c;
        for a in 0..self.delta.rows() {
            self.delta[(a, j)] /= c;
        }
    }
}

impl ParamSet for TbrParams {
    fn groups(&self) -> Vec<&[f64]> {
        let mut g = self.encoder.groups();
        g.push(&self.w0);
        g.push(self.delta.as_slice());
        g
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut g = self.encoder.groups_mut();
        g.push(&mut self.w0);
        g.push(self.delta.as_mut_slice());
        g
    }
}

impl Model for TbrParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Tbr
    }

    fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    fn predict_latents(&self, tree: &EnvTree, zhat: &Matrix, env: &[EnvId]) -> Result<Vec<f64>> {
        self.validate(tree)?;
        check_env(tree, env)?;
        if zhat.rows() != env.len() || zhat.cols() != self.w0.len() {
            return Err(shape_err("predict", format!("{}x{}", env.len(), self.w0.len()), format!("{:?}", zhat.shape())));
        }
        let table = self.weight_table(tree)?;
        Ok((0..env.len()).map(|i| dot(zhat.row(i), table.row(env[i].0))).collect())
    }

    fn loss_and_grads(&self, tree: &EnvTree, batch: Batch<'_>, lambda: f64) -> Result<(LossBreakdown, Self)> {
        if batch.is_empty() {
            return Err(TbrError::Empty("batch"));
        }
        if !(lambda >= 0.0) {
            return Err(TbrError::Config(format!("lambda must be non-negative, got {lambda}")));
        }
        self.validate(tree)?;
        check_env(tree, batch.env)?;
        let k = self.w0.len();
        let (zhat, cache) = self.encoder.forward(batch.x)?;
        let table = self.weight_table(tree)?;
        let pred: Vec<f64> = (0..batch.len())
            .map(|i| dot(zhat.row(i), table.row(batch.env[i].0)))
            .collect();
        let (mse, g) = squared_error(&pred, batch.y);
        let loss = LossBreakdown::new(mse, self.l1_penalty(), lambda);

        // ∂/∂ŵ₀ sums over every sample regardless of environment.
        let dw0 = zhat.tr_matvec(&g)?;

        // Per-node gradient of ŵ_e, then subtree sums give ∂/∂Δ̂ for each arc.
        let mut node = Matrix::zeros(tree.num_nodes(), k);
        for (i, &gi) in g.iter().enumerate() {
            let row = node.row_mut(batch.env[i].0);
            for (acc, z) in row.iter_mut().zip(zhat.row(i)) {
                *acc += gi * z;
            }
        }
        for e in tree.nodes().rev() {
            if let Some(p) = tree.parent(e) {
                for j in 0..k {
                    let v = node[(e.0, j)];
                    node[(p.0, j)] += v;
                }
            }
        }
        let mut ddelta = Matrix::zeros(tree.num_arcs(), k);
        for e in tree.non_root_nodes() {
            let a = tree.parent_arc(e).unwrap().0;
            for j in 0..k {
                let d = self.delta[(a, j)];
                let sub = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                ddelta[(a, j)] = node[(e.0, j)] + lambda * sub;
            }
        }

        let mut dz = Matrix::zeros(batch.len(), k);
        for (i, &gi) in g.iter().enumerate() {
            let w = table.row(batch.env[i].0);
            for (d, wj) in dz.row_mut(i).iter_mut().zip(w) {
                *d = gi * wj;
            }
        }
        let encoder = self.encoder.backward_params(&cache, &dz)?;
        Ok((
            loss,
            TbrParams {
                encoder,
                w0: dw0,
                delta: ddelta,
            },
        ))
    }

    fn apply_freeze(grads: &mut Self, freeze: Freeze) {
        if freeze.encoder {
            for g in grads.encoder.groups_mut() {
                g.fill(0.0);
            }
        }
        if freeze.delta {
            grads.delta.as_mut_slice().fill(0.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub encoder: EncoderParams,
    pub w: Vec<f64>,
}

impl BaselineParams {
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(arch, rng);
        let w = head_init(arch.output_dim, rng);
        Self { encoder, w }
    }
}

impl ParamSet for BaselineParams {
    fn groups(&self) -> Vec<&[f64]> {
        let mut g = self.encoder.groups();
        g.push(&self.w);
        g
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut g = self.encoder.groups_mut();
        g.push(&mut self.w);
        g
    }
}

impl Model for BaselineParams {
    fn kind(&self) -> ModelKind {
        ModelKind::Baseline
    }

    fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    fn predict_latents(&self, _tree: &EnvTree, zhat: &Matrix, env: &[EnvId]) -> Result<Vec<f64>> {
        if zhat.cols() != self.w.len() || zhat.rows() != env.len() {
            return Err(shape_err("predict", format!("{}x{}", env.len(), self.w.len()), format!("{:?}", zhat.shape())));
        }
        Ok(zhat.row_iter().map(|r| dot(r, &self.w)).collect())
    }

    fn loss_and_grads(&self, _tree: &EnvTree, batch: Batch<'_>, _lambda: f64) -> Result<(LossBreakdown, Self)> {
        if batch.is_empty() {
            return Err(TbrError::Empty("batch"));
        }
        let k = self.w.len();
        let (zhat, cache) = self.encoder.forward(batch.x)?;
        let pred: Vec<f64> = zhat.row_iter().map(|r| dot(r, &self.w)).collect();
        let (mse, g) = squared_error(&pred, batch.y);
        let dw = zhat.tr_matvec(&g)?;
        let mut dz = Matrix::zeros(batch.len(), k);
        for (i, &gi) in g.iter().enumerate() {
            for (d, wj) in dz.row_mut(i).iter_mut().zip(&self.w) {
                *d = gi * wj;
            }
        }
        let encoder = self.encoder.backward_params(&cache, &dz)?;
        Ok((LossBreakdown::new(mse, 0.0, 0.0), BaselineParams { encoder, w: dw }))
    }

    fn apply_freeze(grads: &mut Self, freeze: Freeze) {
        if freeze.encoder {
            for g in grads.encoder.groups_mut() {
                g.fill(0.0);
            }
        }
    }
}

/// Either trained estimator, for storage and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Tbr(TbrParams),
    Baseline(BaselineParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Tbr(_) => ModelKind::Tbr,
            ModelParams::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn encoder(&self) -> &EncoderParams {
        match self {
            ModelParams::Tbr(p) => &p.encoder,
            ModelParams::Baseline(p) => &p.encoder,
        }
    }

    pub fn k_hat(&self) -> usize {
        self.encoder().arch().output_dim
    }

    pub fn predict(&self, tree: &EnvTree, x: &Matrix, env: &[EnvId]) -> Result<Vec<f64>> {
        match self {
            ModelParams::Tbr(p) => p.predict(tree, x, env),
            ModelParams::Baseline(p) => p.predict(tree, x, env),
        }
    }

    pub fn predict_latents(&self, tree: &EnvTree, zhat: &Matrix, env: &[EnvId]) -> Result<Vec<f64>> {
        match self {
            ModelParams::Tbr(p) => p.predict_latents(tree, zhat, env),
            ModelParams::Baseline(p) => p.predict_latents(tree, zhat, env),
        }
    }

    /// Head weights used for `env`: `ŵ_e` for TBR, the shared `ŵ` otherwise.
    pub fn head_for(&self, tree: &EnvTree, env: EnvId) -> Result<Vec<f64>> {
        match self {
            ModelParams::Tbr(p) => p.env_weights(tree, env),
            ModelParams::Baseline(p) => Ok(p.w.clone()),
        }
    }

    pub fn delta(&self) -> Option<&Matrix> {
        match self {
            ModelParams::Tbr(p) => Some(&p.delta),
            ModelParams::Baseline(_) => None,
        }
    }
}

impl From<TbrParams> for ModelParams {
    fn from(p: TbrParams) -> Self {
        ModelParams::Tbr(p)
    }
}

impl From<BaselineParams> for ModelParams {
    fn from(p: BaselineParams) -> Self {
        ModelParams::Baseline(p)
    }
}
