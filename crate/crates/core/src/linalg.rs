//! Small dense least-squares helpers shared by the linear learners.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Columns whose QR pivot falls below this fraction of their own norm are
/// treated as linearly dependent on earlier columns.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct LeastSquares {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// (XᵀX)⁻¹, for coefficient standard errors.
    pub xtx_inv: DMatrix<f64>,
}

/// Builds an n×k matrix from the chosen columns, optionally prefixed by a
/// column of ones.
pub(crate) fn design_matrix(rows: &[Vec<f64>], cols: &[usize], intercept: bool) -> DMatrix<f64> {
    let k = cols.len() + usize::from(intercept);
    DMatrix::from_fn(rows.len(), k, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                rows[i][cols[j - 1]]
            }
        } else {
            rows[i][cols[j]]
        }
    })
}

/// Ordinary least squares through a Householder QR.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquares> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < k {
        return Err(Error::RankDeficient(format!("{n} rows for {k} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::RankDeficient(format!("column {j} is (nearly) collinear with earlier columns")));
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let fitted = x * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok(LeastSquares {
        coef: coef.iter().copied().collect(),
        residuals,
        rss,
        xtx_inv,
    })
}

/// Solves `(A + ridge·I) x = b` for symmetric positive (semi)definite `A`.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let jittered = a + DMatrix::identity(n, n) * ridge;
    let chol = jittered
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Orthonormal basis grown one column at a time (modified Gram-Schmidt
/// with one reorthogonalization pass). Dependent columns are rejected.
#[derive(Debug, Clone, Default)]
pub(crate) struct OrthoBasis {
    pub vectors: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Component of `v` orthogonal to the basis.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vectors {
                let d = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= d * qi);
            }
        }
        r
    }

    /// Adds `v` if it is not (numerically) in the current span.
    pub fn push(&mut self, v: &[f64]) -> bool {
        let norm = dot(v, v).sqrt();
        if norm == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = dot(&r, &r).sqrt();
        if rn <= RANK_TOL.sqrt() * norm {
            return false;
        }
        self.vectors.push(r.into_iter().map(|x| x / rn).collect());
        true
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn total_ss(y: &[f64]) -> f64 {
    let m = mean(y);
    y.iter().map(|v| (v - m) * (v - m)).sum()
}
