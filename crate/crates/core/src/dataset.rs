//! Multi-environment sample storage with per-sample split labels.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env_tree::EnvId;
use crate::error::{shape_err, Result, TbrError};
use crate::numerics::Matrix;
use crate::rng::{substream, Domain};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn from_code(code: u32) -> Result<Split> {
        match code {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            other => Err(TbrError::Format(format!("unknown split code {other}"))),
        }
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions(pub [f64; 3]);

impl Default for SplitFractions {
    fn default() -> Self {
        Self([0.5, 0.25, 0.25])
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.0.iter().sum();
        if self.0.iter().any(|f| !(0.0..=1.0).contains(f)) || (s - 1.0).abs() > 1e-9 {
            return Err(TbrError::Config(format!(
                "split fractions must be in [0,1] and sum to 1, got {:?}",
                self.0
            )));
        }
        Ok(())
    }

    /// Sample counts for an environment of size `n`: train and validation are
    /// rounded, test takes the remainder.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let train = (((n as f64) * self.0[0]).round() as usize).min(n);
        let val = (((n as f64) * self.0[1]).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

/// Counts how many times each split's indices were handed out.
#[derive(Debug, Default)]
pub struct AccessLog([AtomicUsize; 3]);

impl AccessLog {
    pub fn reads(&self, split: Split) -> usize {
        self.0[split as usize].load(Ordering::Relaxed)
    }

    fn touch(&self, split: Split) {
        self.0[split as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        for c in &self.0 {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl Clone for AccessLog {
    fn clone(&self) -> Self {
        Self(std::array::from_fn(|i| AtomicUsize::new(self.0[i].load(Ordering::Relaxed))))
    }
}

/// Rows gathered from one split (or any index set).
#[derive(Debug, Clone)]
pub struct DataView {
    pub x: Matrix,
    pub z: Matrix,
    pub y: Vec<f64>,
    pub env: Vec<EnvId>,
}

impl DataView {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Row indices belonging to `env`.
    pub fn env_rows(&self, env: EnvId) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.env[i] == env).collect()
    }

    pub fn select(&self, rows: &[usize]) -> DataView {
        DataView {
            x: self.x.select_rows(rows),
            z: self.z.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            env: rows.iter().map(|&i| self.env[i]).collect(),
        }
    }
}

/// Samples from every observed environment, stored contiguously per
/// environment in `observed` order.
#[derive(Debug, Clone)]
pub struct MultiEnvDataset {
    pub config: SimConfig,
    pub x: Matrix,
    pub z: Matrix,
    pub y: Vec<f64>,
    pub env: Vec<EnvId>,
    pub split: Vec<Split>,
    pub observed: Vec<EnvId>,
    access: AccessLog,
}

impl MultiEnvDataset {
    pub fn new(
        config: SimConfig,
        x: Matrix,
        z: Matrix,
        y: Vec<f64>,
        env: Vec<EnvId>,
        split: Vec<Split>,
        observed: Vec<EnvId>,
    ) -> Result<Self> {
        let n = y.len();
        if x.rows() != n || z.rows() != n || env.len() != n || split.len() != n {
            return Err(shape_err(
                "MultiEnvDataset::new",
                format!("{n} rows everywhere"),
                format!(
                    "x {} z {} env {} split {}",
                    x.rows(),
                    z.rows(),
                    env.len(),
                    split.len()
                ),
            ));
        }
        if let Some(e) = env.iter().find(|e| !observed.contains(e)) {
            return Err(TbrError::UnknownEnv(e.0));
        }
        Ok(Self {
            config,
            x,
            z,
            y,
            env,
            split,
            observed,
            access: AccessLog::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.access
    }

    /// Indices of the samples in `split`. Every call is recorded.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.access.touch(split);
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn view(&self, split: Split) -> DataView {
        let idx = self.split_indices(split);
        self.gather(&idx)
    }

    /// All rows, ignoring splits.
    pub fn full_view(&self) -> DataView {
        self.gather(&(0..self.len()).collect::<Vec<_>>())
    }

    pub(crate) fn gather(&self, idx: &[usize]) -> DataView {
        DataView {
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            env: idx.iter().map(|&i| self.env[i]).collect(),
        }
    }

    pub fn split_counts(&self, env: EnvId) -> [usize; 3] {
        let mut c = [0; 3];
        for i in 0..self.len() {
            if self.env[i] == env {
                c[self.split[i] as usize] += 1;
            }
        }
        c
    }

    /// Reassigns split labels, stratified per environment. Deterministic in
    /// `seed`: each environment shuffles with its own stream.
    pub fn assign_splits(&mut self, fractions: SplitFractions, seed: u64) -> Result<()> {
        fractions.validate()?;
        for &e in &self.observed {
            let rows: Vec<usize> = (0..self.len()).filter(|&i| self.env[i] == e).collect();
            if rows.len() < 4 {
                return Err(TbrError::Config(format!(
                    "environment {e} has {} samples; at least 4 are needed to populate every split",
                    rows.len()
                )));
            }
            let mut order = rows.clone();
            order.shuffle(&mut substream(seed, Domain::Split, e.0 as u64));
            let [train, val, _] = fractions.counts(order.len());
            for (pos, &i) in order.iter().enumerate() {
                self.split[i] = if pos < train {
                    Split::Train
                } else if pos < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
        }
        Ok(())
    }

    /// True when all data arrays and labels agree bit for bit.
    pub fn same_data(&self, other: &MultiEnvDataset) -> bool {
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        bits(self.x.as_slice()) == bits(other.x.as_slice())
            && bits(self.z.as_slice()) == bits(other.z.as_slice())
            && bits(&self.y) == bits(&other.y)
            && self.env == other.env
            && self.split == other.split
            && self.observed == other.observed
    }
}
