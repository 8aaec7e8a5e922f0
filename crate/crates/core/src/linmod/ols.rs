use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::{design_matrix, least_squares, total_ss};

/// Multivariate least-squares fit with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Predictors in the model, in coefficient order.
    pub selected: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Two-sided t-test p-values, intercept first.
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// Absent for the intercept-only model.
    pub f_stat: Option<f64>,
    pub f_p: Option<f64>,
    /// n·ln(RSS/n) + 2k, with k counting the intercept.
    pub aic: f64,
    pub n: usize,
}

pub(crate) fn aic(n: usize, rss: f64, k: usize) -> f64 {
    let n = n as f64;
    // exact fits would give -inf; floor keeps comparisons meaningful
    n * (rss.max(f64::MIN_POSITIVE) / n).ln() + 2.0 * k as f64
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => 2.0 * dist.sf(t.abs()),
        Err(_) => f64::NAN,
    }
}

/// Fits `y ~ 1 + columns` on the given column indices of `design`.
pub fn fit_subset(design: &Design, y: &[f64], cols: &[usize]) -> Result<OlsFit> {
    let n = design.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    let k = cols.len() + 1;
    if n <= k {
        return Err(Error::RankDeficient(format!("{n} rows for {k} coefficients")));
    }
    let x = design_matrix(&design.rows, cols, true);
    let ls = least_squares(&x, y)?;
    let tss = total_ss(y);
    let r2 = if tss > 0.0 { (1.0 - ls.rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let df_resid = (n - k) as f64;
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid;
    let sigma2 = ls.rss / df_resid;
    let p_values = (0..k)
        .map(|j| {
            let se = (sigma2 * ls.xtx_inv[(j, j)]).sqrt();
            let beta = ls.coef[j];
            if se == 0.0 {
                if beta == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                two_sided_t(beta / se, df_resid)
            }
        })
        .collect();
    let (f_stat, f_p) = if cols.is_empty() {
        (None, None)
    } else {
        let df_model = cols.len() as f64;
        let f = ((tss - ls.rss) / df_model) / sigma2;
        let p = if f.is_finite() {
            FisherSnedecor::new(df_model, df_resid).map(|d| d.sf(f)).unwrap_or(f64::NAN)
        } else {
            0.0
        };
        (Some(f), Some(p))
    };
    Ok(OlsFit {
        selected: cols.iter().map(|&j| design.names[j].clone()).collect(),
        intercept: ls.coef[0],
        coefficients: ls.coef[1..].to_vec(),
        p_values,
        residuals: ls.residuals,
        rss: ls.rss,
        r2,
        adj_r2: adj_r2.min(r2),
        f_stat,
        f_p,
        aic: aic(n, ls.rss, k),
        n,
    })
}

/// Fits `y` on every column of `design` plus an intercept.
pub fn fit_ols(design: &Design, y: &[f64]) -> Result<OlsFit> {
    let cols: Vec<usize> = (0..design.n_cols()).collect();
    fit_subset(design, y, &cols)
}

impl OlsFit {
    /// Predicts from a design carrying (at least) the selected columns.
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.selected)?;
        Ok(sub
            .rows
            .iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn residuals_orthogonal_to_predictors() {
        let mut rng = crate::rng::rng_from(3);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[2] + rng.sample::<f64, _>(StandardNormal)).collect();
        let d = Design::from_rows(rows).unwrap();
        let fit = fit_ols(&d, &y).unwrap();
        let n = y.len() as f64;
        for j in 0..4 {
            let col = d.column(j);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            assert!((dot / norm).abs() < 1e-8 * n);
        }
        assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-8);
        assert!(fit.adj_r2 <= fit.r2 && fit.r2 <= 1.0);
        assert_eq!(fit.residuals.len(), 120);
        assert!(fit.p_values[1] < 1e-10);
        assert!(fit.f_p.unwrap() < 1e-10);
    }

    #[test]
    fn intercept_only_model() {
        let d = Design::from_rows(vec![vec![]; 5]).unwrap();
        let d = Design { names: vec![], rows: d.rows };
        let fit = fit_ols(&d, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert_eq!(fit.r2, 0.0);
        assert!(fit.f_stat.is_none());
        assert!((fit.rss - 10.0).abs() < 1e-12);
    }

    #[test]
    fn predict_uses_named_columns() {
        let d = Design::new(vec!["a".into(), "b".into()], (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect()).unwrap();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let fit = fit_subset(&d, &y, &[0]).unwrap();
        let pred = fit.predict(&d).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-9);
        }
    }
}
