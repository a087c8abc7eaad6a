//! Finite-difference oracles shared by the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbr::model::{Batch, BaselineParams, Model, TbrParams};
use tbr::numerics::{Architecture, EncoderParams, Matrix, ParamSet};
use tbr::{EnvId, EnvTree};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Below this absolute gap the relative error is meaningless.
pub const ABS_FLOOR: f64 = 1e-9;

pub fn small_arch(d_x: usize, k: usize) -> Architecture {
    Architecture {
        hidden: [7, 5],
        ..Architecture::new(d_x, k)
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
}

/// Biases start at zero after init; randomize them so every path is exercised.
pub fn randomize_biases(p: &mut EncoderParams, rng: &mut ChaCha8Rng) {
    for l in 0..3 {
        for b in &mut p.layer_mut(l).bias {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
}

pub fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn agrees(analytic: f64, fd: f64) -> bool {
    rel_err(analytic, fd) < REL_TOL || (analytic - fd).abs() < ABS_FLOOR
}

/// Central differences of `f` with respect to flat parameter `idx`.
pub fn central_diff<P: ParamSet + Clone>(p: &P, idx: usize, f: impl Fn(&P) -> f64) -> f64 {
    let perturbed = |delta: f64| {
        let mut q = p.clone();
        let mut offset = 0;
        for g in q.groups_mut() {
            if idx < offset + g.len() {
                g[idx - offset] += delta;
                break;
            }
            offset += g.len();
        }
        f(&q)
    };
    (perturbed(H) - perturbed(-H)) / (2.0 * H)
}

/// Pre-activations within this distance of zero make the difference quotient
/// straddle the LeakyReLU kink; such points are re-drawn.
pub fn min_abs_preactivation(p: &EncoderParams, x: &Matrix) -> f64 {
    let mut m = f64::INFINITY;
    for r in 0..x.rows() {
        let mut a = x.row(r).to_vec();
        for l in 0..2 {
            let layer = p.layer(l);
            let (_, fo) = layer.weight.shape();
            let mut next = vec![0.0; fo];
            for (j, out) in next.iter_mut().enumerate() {
                let s: f64 = layer.bias[j] + a.iter().enumerate().map(|(i, ai)| ai * layer.weight[(i, j)]).sum::<f64>();
                m = m.min(s.abs());
                *out = leaky(s, p.arch().negative_slope);
            }
            a = next;
        }
    }
    m
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub draws: usize,
    pub checked: usize,
    pub mismatches: usize,
    pub worst_rel: f64,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, fd: f64) {
        self.checked += 1;
        if !agrees(analytic, fd) {
            self.mismatches += 1;
        }
        if analytic.abs().max(fd.abs()) > 1e-6 {
            self.worst_rel = self.worst_rel.max(rel_err(analytic, fd));
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.checked > 0
    }
}

/// Encoder parameter and input gradients of `Σ c ⊙ Ẑ` on `draws` random
/// (parameters, batch) pairs.
pub fn encoder_check(draws: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::default();
    while out.draws < draws {
        let mut p = EncoderParams::init(small_arch(3, 2), &mut rng);
        randomize_biases(&mut p, &mut rng);
        let x = random_matrix(4, 3, &mut rng);
        if min_abs_preactivation(&p, &x) < 1e-3 {
            continue;
        }
        out.draws += 1;
        let c = random_matrix(4, 2, &mut rng);
        let objective = |q: &EncoderParams, x: &Matrix| -> f64 {
            let z = q.encode(x).unwrap();
            z.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = p.forward(&x).unwrap();
        let (grads, dx) = p.backward(&cache, &c).unwrap();
        for (idx, g) in grads.to_flat().iter().enumerate() {
            out.record(*g, central_diff(&p, idx, |q| objective(q, &x)));
        }
        for r in 0..x.rows() {
            for i in 0..x.cols() {
                let shifted = |d: f64| {
                    let mut xs = x.clone();
                    xs[(r, i)] += d;
                    objective(&p, &xs)
                };
                out.record(dx[(r, i)], (shifted(H) - shifted(-H)) / (2.0 * H));
            }
        }
    }
    out
}

/// TBR loss gradients with every `Δ̂` entry at least 0.1 from the L1 kink.
pub fn tbr_loss_check(draws: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = EnvTree::build_balanced_binary(2).unwrap();
    let mut out = GradCheck::default();
    while out.draws < draws {
        let mut p = TbrParams::init(small_arch(3, 2), tree.num_arcs(), &mut rng);
        randomize_biases(&mut p.encoder, &mut rng);
        for v in p.delta.as_mut_slice() {
            let mag = rng.gen_range(0.1..0.8);
            *v = if rng.gen_bool(0.5) { mag } else { -mag };
        }
        let n = 6;
        let x = random_matrix(n, 3, &mut rng);
        if min_abs_preactivation(&p.encoder, &x) < 1e-3 {
            continue;
        }
        out.draws += 1;
        let env: Vec<EnvId> = (0..n).map(|i| EnvId(i % tree.num_nodes())).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lambda = rng.gen_range(0.0..0.2);
        let loss = |q: &TbrParams| q.loss_and_grads(&tree, Batch::new(&x, &env, &y).unwrap(), lambda).unwrap().0.total;
        let (_, grads) = p.loss_and_grads(&tree, Batch::new(&x, &env, &y).unwrap(), lambda).unwrap();
        for (idx, g) in grads.to_flat().iter().enumerate() {
            out.record(*g, central_diff(&p, idx, loss));
        }
    }
    out
}

pub fn baseline_loss_check(draws: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = EnvTree::build_balanced_binary(1).unwrap();
    let mut out = GradCheck::default();
    while out.draws < draws {
        let mut p = BaselineParams::init(small_arch(3, 2), &mut rng);
        randomize_biases(&mut p.encoder, &mut rng);
        let n = 5;
        let x = random_matrix(n, 3, &mut rng);
        if min_abs_preactivation(&p.encoder, &x) < 1e-3 {
            continue;
        }
        out.draws += 1;
        let env: Vec<EnvId> = (0..n).map(|i| EnvId(i % tree.num_nodes())).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |q: &BaselineParams| q.loss_and_grads(&tree, Batch::new(&x, &env, &y).unwrap(), 0.3).unwrap().0.total;
        let (_, grads) = p.loss_and_grads(&tree, Batch::new(&x, &env, &y).unwrap(), 0.3).unwrap();
        for (idx, g) in grads.to_flat().iter().enumerate() {
            out.record(*g, central_diff(&p, idx, loss));
        }
    }
    out
}
