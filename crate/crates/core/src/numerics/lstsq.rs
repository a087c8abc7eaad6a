//! Least squares through Householder QR, plus a small symmetric eigensolver
//! used for condition numbers.

use crate::error::{shape_err, Result, TbrError};
use crate::numerics::Matrix;

/// Relative pivot threshold below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Householder QR of a tall matrix, kept in compact form.
#[derive(Debug, Clone)]
pub struct Qr {
    /// R in the upper triangle, Householder vectors below the diagonal.
    packed: Matrix,
    /// Leading entries of the Householder vectors.
    heads: Vec<f64>,
    betas: Vec<f64>,
}

impl Qr {
    /// Factors `x` (n×p, n ≥ p). Fails if a column is numerically dependent
    /// on earlier ones; no pseudo-inverse fallback is attempted.
    pub fn factor(x: &Matrix) -> Result<Self> {
        let (n, p) = x.shape();
        if n < p {
            return Err(shape_err("Qr::factor", format!("rows >= cols ({p})"), n));
        }
        if !x.all_finite() {
            return Err(TbrError::NonFinite("design matrix"));
        }
        let col_scale = (0..p)
            .map(|j| (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let mut a = x.clone();
        let mut heads = vec![0.0; p];
        let mut betas = vec![0.0; p];
        for j in 0..p {
            let norm = (j..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
            if norm <= RANK_TOL * col_scale || norm == 0.0 {
                return Err(TbrError::RankDeficient { column: j, pivot: norm });
            }
            let alpha = if a[(j, j)] > 0.0 { -norm } else { norm };
            let v0 = a[(j, j)] - alpha;
            // v = [v0, a[j+1..n, j]], H = I - beta v vᵀ, beta = 2/(vᵀv)
            let vtv = v0 * v0 + (j + 1..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
            for c in j + 1..p {
                let mut s = v0 * a[(j, c)];
                for i in j + 1..n {
                    s += a[(i, j)] * a[(i, c)];
                }
                s *= beta;
                a[(j, c)] -= s * v0;
                for i in j + 1..n {
                    let vi = a[(i, j)];
                    a[(i, c)] -= s * vi;
                }
            }
            a[(j, j)] = alpha;
            heads[j] = v0;
            betas[j] = beta;
        }
        Ok(Self {
            packed: a,
            heads,
            betas,
        })
    }

    pub fn ncols(&self) -> usize {
        self.packed.cols()
    }

    /// Least-squares coefficients for one right-hand side.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (n, p) = self.packed.shape();
        if y.len() != n {
            return Err(shape_err("Qr::solve", n, y.len()));
        }
        let mut qty = y.to_vec();
        for j in 0..p {
            let a = &self.packed;
            let mut s = self.heads[j] * qty[j];
            for i in j + 1..n {
                s += a[(i, j)] * qty[i];
            }
            s *= self.betas[j];
            qty[j] -= s * self.heads[j];
            for i in j + 1..n {
                qty[i] -= s * a[(i, j)];
            }
        }
        let mut beta = vec![0.0; p];
        for j in (0..p).rev() {
            let mut s = qty[j];
            for c in j + 1..p {
                s -= self.packed[(j, c)] * beta[c];
            }
            beta[j] = s / self.packed[(j, j)];
        }
        Ok(beta)
    }

    /// Solves column by column; returns a p×m coefficient matrix.
    pub fn solve_matrix(&self, y: &Matrix) -> Result<Matrix> {
        let p = self.ncols();
        let mut out = Matrix::zeros(p, y.cols());
        for c in 0..y.cols() {
            let b = self.solve(&y.col(c))?;
            out.set_col(c, &b);
        }
        Ok(out)
    }
}

/// Ordinary least squares: `argmin_β ‖Xβ − y‖²`.
pub fn ols_solve(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(shape_err("ols_solve", x.rows(), y.len()));
    }
    Qr::factor(x)?.solve(y)
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(shape_err("symmetric_eigenvalues", "square", format!("{:?}", a.shape())));
    }
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * m.frobenius().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// 2-norm condition number `σ_max / σ_min`; infinite when singular.
///
/// Works on the Gram matrix, so values beyond about `1e8` are not resolved
/// and a singular matrix may report a finite number of that order.
pub fn condition_number(a: &Matrix) -> Result<f64> {
    let gram = a.matmul_tn(a)?;
    let ev = symmetric_eigenvalues(&gram)?;
    let lo = ev.first().copied().unwrap_or(0.0).max(0.0);
    let hi = ev.last().copied().unwrap_or(0.0).max(0.0);
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((hi / lo).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Normal equations solved with Gauss-Jordan, independent of the QR path.
    fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let xtx = x.matmul_tn(x).unwrap();
        let xty = x.tr_matvec(y).unwrap();
        xtx.inverse().unwrap().matvec(&xty).unwrap()
    }

    #[test]
    fn exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 40, 6);
        let beta: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let y = x.matvec(&beta).unwrap();
        let b = ols_solve(&x, &y).unwrap();
        for (u, v) in b.iter().zip(&beta) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_target_gives_zero() {
        // Columns e1, e2 in R^3, y = e3.
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let b = ols_solve(&x, &[0.0, 0.0, 1.0]).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random(&mut rng, 60, 5);
            let y: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = ols_solve(&x, &y).unwrap();
            let oracle = normal_equations(&x, &y);
            for (u, v) in b.iter().zip(&oracle) {
                assert!((u - v).abs() < 1e-8, "{u} vs {v}");
            }
            let resid: Vec<f64> = x
                .matvec(&b)
                .unwrap()
                .iter()
                .zip(&y)
                .map(|(p, t)| t - p)
                .collect();
            let xtr = x.tr_matvec(&resid).unwrap();
            let xty = x.tr_matvec(&y).unwrap();
            let lhs = xtr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rhs = xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(lhs < 1e-8 * rhs);
        }
    }

    #[test]
    fn rank_deficiency_reported() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            ols_solve(&x, &[1.0, 2.0, 3.0]),
            Err(TbrError::RankDeficient { column: 1, .. })
        ));
        let zero_col = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]).unwrap();
        assert!(matches!(
            ols_solve(&zero_col, &[1.0, 2.0, 3.0]),
            Err(TbrError::RankDeficient { column: 1, .. })
        ));
        let wide = Matrix::zeros(2, 3);
        assert!(matches!(ols_solve(&wide, &[0.0, 0.0]), Err(TbrError::Shape { .. })));
    }

    #[test]
    fn eigenvalues_and_condition() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let d = Matrix::diag(&[4.0, -0.5, 1.0]);
        assert!((condition_number(&d).unwrap() - 8.0).abs() < 1e-10);
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(condition_number(&s).unwrap() > 1e12);
    }
}
