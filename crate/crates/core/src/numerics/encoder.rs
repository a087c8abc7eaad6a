//! Fixed-architecture MLP encoder `d_x → h1 → h2 → k` with LeakyReLU hidden
//! activations and a linear output layer, plus its exact reverse pass.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, TbrError};
use crate::numerics::matrix::gemm;
use crate::numerics::{Matrix, ParamSet};

/// Rows per block when encoding without a cache.
const ENCODE_BLOCK: usize = 256;

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 64];
pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
    pub negative_slope: f64,
}

impl Architecture {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: DEFAULT_HIDDEN,
            output_dim,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
        }
    }

    /// Layer widths `[d_x, h1, h2, k]`.
    pub fn widths(&self) -> [usize; 4] {
        [self.input_dim, self.hidden[0], self.hidden[1], self.output_dim]
    }

    pub fn num_params(&self) -> usize {
        let w = self.widths();
        (0..3).map(|l| w[l] * w[l + 1] + w[l + 1]).sum()
    }
}

/// One affine layer; `weight` is `fan_in × fan_out` so a batch maps as `X·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderParams {
    arch: Architecture,
    layers: [Dense; 3],
    /// Identifies the parameter values a forward cache was built from.
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.layers == other.layers
    }
}

/// Intermediate values retained by [`EncoderParams::forward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    stamp: u64,
    input: Matrix,
    pre: [Matrix; 2],
    post: [Matrix; 2],
}

impl EncoderCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

impl EncoderParams {
    pub fn zeros(arch: Architecture) -> Self {
        let w = arch.widths();
        Self {
            arch,
            layers: [
                Dense::zeros(w[0], w[1]),
                Dense::zeros(w[1], w[2]),
                Dense::zeros(w[2], w[3]),
            ],
            stamp: fresh_stamp(),
        }
    }

    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for layer in &mut p.layers {
            let (fi, fo) = layer.weight.shape();
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            for v in layer.weight.as_mut_slice() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn from_layers(arch: Architecture, layers: [Dense; 3]) -> Result<Self> {
        let w = arch.widths();
        for (l, d) in layers.iter().enumerate() {
            if d.weight.shape() != (w[l], w[l + 1]) || d.bias.len() != w[l + 1] {
                return Err(shape_err(
                    "EncoderParams::from_layers",
                    format!("layer {l}: {}x{} + {}", w[l], w[l + 1], w[l + 1]),
                    format!("{:?} + {}", d.weight.shape(), d.bias.len()),
                ));
            }
        }
        Ok(Self {
            arch,
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layer(&self, l: usize) -> &Dense {
        &self.layers[l]
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn layer_mut(&mut self, l: usize) -> &mut Dense {
        self.stamp = fresh_stamp();
        &mut self.layers[l]
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.arch.input_dim {
            return Err(shape_err("encoder_forward", self.arch.input_dim, x.cols()));
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let d = &self.layers[l];
        let mut out = Matrix::zeros(x.rows(), d.weight.cols());
        gemm(1.0, x, false, &d.weight, false, 0.0, &mut out);
        out.add_row_broadcast(&d.bias);
        out
    }

    fn leaky(&self, m: &Matrix) -> Matrix {
        let s = self.arch.negative_slope;
        m.map(|v| if v > 0.0 { v } else { s * v })
    }

    /// Encodes a batch without keeping intermediates. Large inputs are
    /// processed in row blocks so activations stay in cache.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        if x.rows() <= ENCODE_BLOCK {
            return Ok(self.encode_block(x));
        }
        let mut out = Matrix::zeros(x.rows(), self.arch.output_dim);
        let idx: Vec<usize> = (0..x.rows()).collect();
        for chunk in idx.chunks(ENCODE_BLOCK) {
            let z = self.encode_block(&x.select_rows(chunk));
            for (r, &i) in chunk.iter().enumerate() {
                out.row_mut(i).copy_from_slice(z.row(r));
            }
        }
        Ok(out)
    }

    fn encode_block(&self, x: &Matrix) -> Matrix {
        let s = self.arch.negative_slope;
        let act = |m: &mut Matrix| {
            for v in m.as_mut_slice() {
                if *v <= 0.0 {
                    *v *= s;
                }
            }
        };
        let mut h1 = self.affine(0, x);
        act(&mut h1);
        let mut h2 = self.affine(1, &h1);
        act(&mut h2);
        self.affine(2, &h2)
    }

    /// Encodes a batch and keeps what the reverse pass needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, EncoderCache)> {
        self.check_input(x)?;
        let a1 = self.affine(0, x);
        let h1 = self.leaky(&a1);
        let a2 = self.affine(1, &h1);
        let h2 = self.leaky(&a2);
        let z = self.affine(2, &h2);
        Ok((
            z,
            EncoderCache {
                stamp: self.stamp,
                input: x.clone(),
                pre: [a1, a2],
                post: [h1, h2],
            },
        ))
    }

    /// Parameter gradients and the input gradient for upstream `∂L/∂Ẑ`.
    pub fn backward(&self, cache: &EncoderCache, dz: &Matrix) -> Result<(EncoderParams, Matrix)> {
        let (grads, dx) = self.backward_impl(cache, dz, true)?;
        Ok((grads, dx.expect("input gradient requested")))
    }

    /// As [`backward`](Self::backward) but skips the input gradient.
    pub fn backward_params(&self, cache: &EncoderCache, dz: &Matrix) -> Result<EncoderParams> {
        Ok(self.backward_impl(cache, dz, false)?.0)
    }

    fn backward_impl(
        &self,
        cache: &EncoderCache,
        dz: &Matrix,
        want_input: bool,
    ) -> Result<(EncoderParams, Option<Matrix>)> {
        if cache.stamp != self.stamp {
            return Err(TbrError::StaleCache);
        }
        let n = cache.input.rows();
        if dz.shape() != (n, self.arch.output_dim) {
            return Err(shape_err(
                "encoder_backward",
                format!("({n}, {})", self.arch.output_dim),
                format!("{:?}", dz.shape()),
            ));
        }
        let slope = self.arch.negative_slope;
        let mut g = EncoderParams::zeros(self.arch);

        // Output layer.
        gemm(1.0, &cache.post[1], true, dz, false, 0.0, &mut g.layers[2].weight);
        g.layers[2].bias = dz.col_sums();

        // Hidden layer 2.
        let mut d = Matrix::zeros(n, self.arch.hidden[1]);
        gemm(1.0, dz, false, &self.layers[2].weight, true, 0.0, &mut d);
        leaky_grad_inplace(&mut d, &cache.pre[1], slope);
        gemm(1.0, &cache.post[0], true, &d, false, 0.0, &mut g.layers[1].weight);
        g.layers[1].bias = d.col_sums();

        // Hidden layer 1.
        let mut d1 = Matrix::zeros(n, self.arch.hidden[0]);
        gemm(1.0, &d, false, &self.layers[1].weight, true, 0.0, &mut d1);
        leaky_grad_inplace(&mut d1, &cache.pre[0], slope);
        gemm(1.0, &cache.input, true, &d1, false, 0.0, &mut g.layers[0].weight);
        g.layers[0].bias = d1.col_sums();

        let dx = want_input.then(|| {
            let mut dx = Matrix::zeros(n, self.arch.input_dim);
            gemm(1.0, &d1, false, &self.layers[0].weight, true, 0.0, &mut dx);
            dx
        });
        Ok((g, dx))
    }

    /// Reorders output units so that new unit `j` is old unit `perm[j]`.
    pub fn permute_outputs(&mut self, perm: &[usize]) {
        let l = self.layer_mut(2);
        let w = l.weight.select_cols(perm);
        let b: Vec<f64> = perm.iter().map(|&j| l.bias[j]).collect();
        l.weight = w;
        l.bias = b;
    }

    /// Multiplies output unit `j` by `c`.
    pub fn scale_output(&mut self, j: usize, c: f64) {
        let l = self.layer_mut(2);
        for i in 0..l.weight.rows() {
            l.weight[(i, j)] *= c;
        }
        l.bias[j] *= c;
    }
}

fn leaky_grad_inplace(d: &mut Matrix, pre: &Matrix, slope: f64) {
    for (g, &a) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if a <= 0.0 {
            *g *= slope;
        }
    }
}

impl ParamSet for EncoderParams {
    fn groups(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
