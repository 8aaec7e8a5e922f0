use serde::{Deserialize, Serialize};

use super::smo::{solve, Problem};
use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Iteration cap; `None` uses 10·n² bounded to [10⁴, 2·10⁶].
    pub max_iter: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

impl SvmConfig {
    fn iter_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (10 * n * n).clamp(10_000, 2_000_000))
    }

    fn check(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::BadParams("C must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadParams("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmTask {
    Classification,
    /// ε-insensitive regression.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub task: SvmTask,
    pub kernel: Kernel,
    pub names: Vec<String>,
    pub c: f64,
    /// Tube half-width; 0 for classification.
    pub epsilon: f64,
    /// Training rows with a non-zero dual coefficient.
    pub support_vectors: Vec<usize>,
    pub sv_rows: Vec<Vec<f64>>,
    /// yᵢαᵢ (classification) or αᵢ − αᵢ* (regression) for each support vector.
    pub dual_coef: Vec<f64>,
    /// Raw dual variables: n for classification, 2n (α then α*) for regression.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Share of misclassified training rows (classification only).
    pub training_error: Option<f64>,
}

impl SvmModel {
    pub fn decision_values(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.names)?;
        Ok(sub
            .rows
            .iter()
            .map(|x| self.bias + self.sv_rows.iter().zip(&self.dual_coef).map(|(s, c)| c * self.kernel.eval(s, x)).sum::<f64>())
            .collect())
    }

    /// Labels for classification (class 1 only for strictly positive
    /// decision values), fitted values for regression.
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let f = self.decision_values(design)?;
        Ok(match self.task {
            SvmTask::Classification => f.into_iter().map(|v| f64::from(u8::from(v > 0.0))).collect(),
            SvmTask::Regression => f,
        })
    }

    /// Primal weight vector of a linear model.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let p = self.names.len();
        let mut w = vec![0.0; p];
        for (s, c) in self.sv_rows.iter().zip(&self.dual_coef) {
            for j in 0..p {
                w[j] += c * s[j];
            }
        }
        Some(w)
    }
}

fn check_shape(design: &Design, y_len: usize) -> Result<()> {
    if design.n_rows() == 0 {
        return Err(Error::EmptyTrain);
    }
    if y_len != design.n_rows() {
        return Err(Error::LengthMismatch { left: design.n_rows(), right: y_len });
    }
    Ok(())
}

/// Soft-margin linear SVM on 0/1 labels.
pub fn fit_svm_classifier(design: &Design, labels: &[u8], config: &SvmConfig) -> Result<SvmModel> {
    fit_svc(design, labels, Kernel::Linear, config)
}

pub fn fit_svc(design: &Design, labels: &[u8], kernel: Kernel, config: &SvmConfig) -> Result<SvmModel> {
    config.check()?;
    check_shape(design, labels.len())?;
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::SingleClass);
    }
    let rows = &design.rows;
    let n = rows.len();
    let gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel.eval(&rows[i], &rows[j])).collect()).collect();
    let kfn = |i: usize, j: usize| gram[i][j];
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let prob = Problem {
        kernel: &kfn,
        y: y.clone(),
        p: vec![-1.0; n],
        c: config.c,
        tol: config.tol,
        max_iter: config.iter_cap(n),
    };
    let sol = solve(&prob);
    if !sol.converged {
        log::warn!("SVM classifier hit the iteration cap ({}) before meeting tol {}", sol.iterations, config.tol);
    }
    let support_vectors: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
    let mut model = SvmModel {
        task: SvmTask::Classification,
        kernel,
        names: design.names.clone(),
        c: config.c,
        epsilon: 0.0,
        sv_rows: support_vectors.iter().map(|&i| rows[i].clone()).collect(),
        dual_coef: support_vectors.iter().map(|&i| y[i] * sol.alpha[i]).collect(),
        support_vectors,
        alphas: sol.alpha,
        bias: -sol.rho,
        iterations: sol.iterations,
        converged: sol.converged,
        training_error: None,
    };
    let pred = model.predict(design)?;
    let wrong = pred.iter().zip(labels).filter(|(p, &l)| **p != f64::from(l)).count();
    model.training_error = Some(wrong as f64 / n as f64);
    Ok(model)
}

/// ε-SVR with an RBF kernel exp(−gamma·‖x − z‖²).
pub fn fit_svr(design: &Design, y: &[f64], gamma: f64, epsilon: f64, config: &SvmConfig) -> Result<SvmModel> {
    config.check()?;
    check_shape(design, y.len())?;
    if design.n_rows() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: design.n_rows() });
    }
    if !(gamma > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::BadParams("gamma must be positive and epsilon non-negative".into()));
    }
    let kernel = Kernel::Rbf { gamma };
    let rows = &design.rows;
    let n = rows.len();
    let gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel.eval(&rows[i], &rows[j])).collect()).collect();
    let kfn = |i: usize, j: usize| gram[i % n][j % n];
    // variables 0..n are α (sign +1), n..2n are α* (sign −1)
    let signs: Vec<f64> = (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..2 * n).map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] }).collect();
    let prob = Problem {
        kernel: &kfn,
        y: signs,
        p,
        c: config.c,
        tol: config.tol,
        max_iter: config.iter_cap(2 * n),
    };
    let sol = solve(&prob);
    if !sol.converged {
        log::warn!("SVR hit the iteration cap ({}) before meeting tol {}", sol.iterations, config.tol);
    }
    let beta: Vec<f64> = (0..n).map(|i| sol.alpha[i] - sol.alpha[i + n]).collect();
    let support_vectors: Vec<usize> = (0..n).filter(|&i| beta[i] != 0.0).collect();
    Ok(SvmModel {
        task: SvmTask::Regression,
        kernel,
        names: design.names.clone(),
        c: config.c,
        epsilon,
        sv_rows: support_vectors.iter().map(|&i| rows[i].clone()).collect(),
        dual_coef: support_vectors.iter().map(|&i| beta[i]).collect(),
        support_vectors,
        alphas: sol.alpha,
        bias: -sol.rho,
        iterations: sol.iterations,
        converged: sol.converged,
        training_error: None,
    })
}

pub fn svm_predict(model: &SvmModel, design: &Design) -> Result<Vec<f64>> {
    model.predict(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn tight() -> SvmConfig {
        SvmConfig {
            c: 100.0,
            tol: 1e-9,
            max_iter: Some(1_000_000),
        }
    }

    /// Largest margin of any separating line, by scanning unit normals.
    fn grid_margin(rows: &[Vec<f64>], labels: &[u8]) -> f64 {
        (0..36_000)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 36_000.0;
                let (c, s) = (th.cos(), th.sin());
                let proj = |r: &Vec<f64>| c * r[0] + s * r[1];
                let lo1 = rows.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| proj(r)).fold(f64::INFINITY, f64::min);
                let hi0 = rows.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(r, _)| proj(r)).fold(f64::NEG_INFINITY, f64::max);
                (lo1 - hi0) / 2.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn separable_four_points_reach_max_margin() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![3.0, 3.0], vec![4.0, 2.0]];
        let labels = [0, 0, 1, 1];
        let d = Design::from_rows(rows.clone()).unwrap();
        let m = fit_svm_classifier(&d, &labels, &tight()).unwrap();
        assert!(m.converged);
        assert_eq!(m.training_error, Some(0.0));
        let w = m.linear_weights().unwrap();
        let margin = 1.0 / (w[0] * w[0] + w[1] * w[1]).sqrt();
        let oracle = grid_margin(&rows, &labels);
        assert!(margin >= 0.95 * oracle && margin <= oracle * 1.0001, "{margin} vs {oracle}");
    }

    #[test]
    fn separable_blobs_have_zero_training_error() {
        let mut rng = crate::rng::rng_from(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let l = (i % 2) as u8;
            let c = if l == 1 { 4.0 } else { -4.0 };
            rows.push(vec![c + rng.sample::<f64, _>(StandardNormal), c + rng.sample::<f64, _>(StandardNormal)]);
            labels.push(l);
        }
        let m = fit_svm_classifier(&Design::from_rows(rows).unwrap(), &labels, &SvmConfig::default()).unwrap();
        assert_eq!(m.training_error, Some(0.0));
        assert!(m.support_vectors.len() <= 60);
        assert!(m.alphas.iter().all(|&a| (0.0..=m.c).contains(&a)));
    }

    #[test]
    fn duplicated_rows_leave_decision_unchanged() {
        let mut rng = crate::rng::rng_from(4);
        let rows: Vec<Vec<f64>> = (0..20).map(|i| {
            let c = if i % 2 == 1 { 3.0 } else { -3.0 };
            vec![c + rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)]
        }).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let d = Design::from_rows(rows.clone()).unwrap();
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().cloned());
        let dl: Vec<u8> = labels.iter().chain(&labels).copied().collect();
        let a = fit_svm_classifier(&d, &labels, &tight()).unwrap();
        let b = fit_svm_classifier(&Design::from_rows(doubled).unwrap(), &dl, &tight()).unwrap();
        let fa = a.decision_values(&d).unwrap();
        let fb = b.decision_values(&d).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_decision_value_is_class_zero() {
        let m = SvmModel {
            task: SvmTask::Classification,
            kernel: Kernel::Linear,
            names: vec!["x0".into()],
            c: 1.0,
            epsilon: 0.0,
            support_vectors: vec![0],
            sv_rows: vec![vec![1.0]],
            dual_coef: vec![1.0],
            alphas: vec![1.0],
            bias: -2.0,
            iterations: 0,
            converged: true,
            training_error: None,
        };
        assert_eq!(m.predict(&Design::from_rows(vec![vec![2.0], vec![2.5]]).unwrap()).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn single_class_rejected() {
        let d = Design::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(fit_svm_classifier(&d, &[0, 0], &SvmConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn svr_constant_target() {
        let rows: Vec<Vec<f64>> = (0..15).map(|i| vec![f64::from(i) * 0.1, (f64::from(i) * 0.7).sin()]).collect();
        let d = Design::from_rows(rows).unwrap();
        let m = fit_svr(&d, &[2.5; 15], 0.1, 0.1, &SvmConfig::default()).unwrap();
        assert!(m.predict(&d).unwrap().iter().all(|p| (p - 2.5).abs() <= 0.1));
    }

    #[test]
    fn svr_large_gamma_interpolates() {
        let mut rng = crate::rng::rng_from(5);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = Design::from_rows(rows).unwrap();
        let cfg = SvmConfig { c: 10.0, ..SvmConfig::default() };
        let m = fit_svr(&d, &y, 1e4, 0.1, &cfg).unwrap();
        assert!(m.converged);
        for (p, t) in m.predict(&d).unwrap().iter().zip(&y) {
            assert!((p - t).abs() <= 0.1 + cfg.tol, "{p} vs {t}");
        }
        assert!(m.alphas.iter().all(|&a| (0.0..=m.c).contains(&a)));
    }

    #[test]
    fn svr_wide_tube_is_flat() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<f64> = (0..10).map(|i| 0.1 * f64::from(i)).collect();
        let m = fit_svr(&Design::from_rows(rows.clone()).unwrap(), &y, 0.1, 5.0, &SvmConfig::default()).unwrap();
        assert!(m.alphas.iter().all(|&a| a == 0.0));
        assert!(m.support_vectors.is_empty());
        let p = m.predict(&Design::from_rows(rows).unwrap()).unwrap();
        assert!(p.iter().all(|&v| v == m.bias));
    }

    #[test]
    fn rbf_gram_is_positive_semidefinite() {
        let mut rng = crate::rng::rng_from(6);
        let pts: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let k = Kernel::Rbf { gamma: 0.1 };
        let g: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| k.eval(a, b)).collect()).collect();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(g[i][j], g[j][i]);
            }
        }
        let power = |m: &dyn Fn(&[f64]) -> Vec<f64>| {
            let mut v = vec![1.0; 10];
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let w = m(&v);
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                lambda = dot(&v, &w) / dot(&v, &v);
                v = w.iter().map(|x| x / norm).collect();
            }
            lambda
        };
        let mul = |v: &[f64]| g.iter().map(|r| dot(r, v)).collect::<Vec<f64>>();
        let lmax = power(&mul);
        let shifted = |v: &[f64]| mul(v).iter().zip(v).map(|(a, b)| lmax * b - a).collect::<Vec<f64>>();
        let lmin = lmax - power(&shifted);
        assert!(lmin >= -1e-8, "min eigenvalue {lmin}");
    }
}
