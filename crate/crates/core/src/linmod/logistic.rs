use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::{design_matrix, solve_spd};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-10;
/// Coefficient norm beyond which the fit is treated as diverging.
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub threshold: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the classes are (quasi-)perfectly separable and the
    /// coefficients were left at the point where divergence was detected.
    pub separated: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of labels under linear predictor `x·beta`.
pub(crate) fn log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).map(|(&e, &l)| f64::from(l) * e - softplus(e)).sum()
}

/// Binary logistic regression fitted by iteratively reweighted least squares.
pub fn fit_logistic(design: &Design, labels: &[u8]) -> Result<LogitFit> {
    let n = design.n_rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    if n == 0 {
        return Err(Error::EmptyTrain);
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    let cols: Vec<usize> = (0..design.n_cols()).collect();
    let x = design_matrix(&design.rows, &cols, true);
    let k = x.ncols();
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(l)));
    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let eta = &x * &beta;
        let p = eta.map(sigmoid);
        let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
        // Newton step: (XᵀWX) Δ = Xᵀ(y − p)
        let xw = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * w[i]);
        let hessian = x.transpose() * xw;
        let grad = x.transpose() * (&y - &p);
        let delta = solve_spd(&hessian, &grad, RIDGE)?;
        beta += &delta;
        if beta.norm() > DIVERGENCE_NORM || !beta.iter().all(|b| b.is_finite()) {
            beta -= &delta;
            separated = true;
            break;
        }
        if delta.amax() < TOL {
            converged = true;
            break;
        }
        // log-likelihood at zero means every row is fit with certainty
        if log_likelihood(&x, labels, &beta) > -1e-9 {
            separated = true;
            break;
        }
    }
    if separated {
        log::warn!("logistic fit: classes are separable, coefficients capped at norm {:.3e}", beta.norm());
    }
    Ok(LogitFit {
        names: design.names.clone(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        threshold: 0.5,
        iterations,
        converged,
        separated,
    })
}

impl LogitFit {
    pub fn predict_proba(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.names)?;
        Ok(sub
            .rows
            .iter()
            .map(|r| sigmoid(self.intercept + r.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()))
            .collect())
    }

    /// Probabilities and labels; a row is labelled 1 only when its
    /// probability strictly exceeds the threshold.
    pub fn predict(&self, design: &Design) -> Result<(Vec<f64>, Vec<u8>)> {
        let probs = self.predict_proba(design)?;
        let labels = probs.iter().map(|&p| label_at(p, self.threshold)).collect();
        Ok((probs, labels))
    }
}

pub(crate) fn label_at(p: f64, threshold: f64) -> u8 {
    u8::from(p > threshold)
}
