use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::{design_matrix, least_squares, total_ss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwInterpretation {
    Positive,
    NoAutocorrelation,
    Negative,
}

impl DwInterpretation {
    /// Rule-of-thumb bands: below 1.5 positive, above 2.5 negative.
    pub fn from_stat(dw: f64) -> Self {
        if dw < 1.5 {
            Self::Positive
        } else if dw > 2.5 {
            Self::Negative
        } else {
            Self::NoAutocorrelation
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub bp_stat: f64,
    pub bp_p: f64,
    pub dw_stat: f64,
    pub dw_interpretation: DwInterpretation,
}

/// Upper tail of the chi-square distribution.
pub(crate) fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
    }
}

/// Breusch-Pagan heteroscedasticity test (studentized form): n·R² from
/// regressing squared residuals on the design, chi-square with one degree
/// of freedom per design column.
pub fn breusch_pagan(residuals: &[f64], design: &Design) -> Result<(f64, f64)> {
    let n = design.n_rows();
    if residuals.len() != n {
        return Err(Error::LengthMismatch { left: n, right: residuals.len() });
    }
    let k = design.n_cols();
    if n <= k + 1 {
        return Err(Error::RankDeficient(format!("{n} rows for {k} predictors")));
    }
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let tss = total_ss(&sq);
    if tss == 0.0 {
        return Ok((0.0, 1.0));
    }
    let cols: Vec<usize> = (0..k).collect();
    let aux = least_squares(&design_matrix(&design.rows, &cols, true), &sq)?;
    let r2 = (1.0 - aux.rss / tss).clamp(0.0, 1.0);
    let stat = n as f64 * r2;
    Ok((stat, chi_square_sf(stat, k as f64)))
}

pub fn durbin_watson(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: residuals.len() });
    }
    let denom: f64 = residuals.iter().map(|e| e * e).sum();
    if denom == 0.0 {
        return Err(Error::AllZeroResiduals);
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((num / denom).clamp(0.0, 4.0))
}

pub fn diagnose(residuals: &[f64], design: &Design) -> Result<DiagnosticsReport> {
    let (bp_stat, bp_p) = breusch_pagan(residuals, design)?;
    let dw_stat = durbin_watson(residuals)?;
    Ok(DiagnosticsReport {
        bp_stat,
        bp_p,
        dw_stat,
        dw_interpretation: DwInterpretation::from_stat(dw_stat),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from, Rng};
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn sample(rng: &mut Rng, n: usize, hetero: bool) -> (Design, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.5..3.0), rng.sample(StandardNormal)]).collect();
        let res = rows
            .iter()
            .map(|r| {
                let sd = if hetero { r[0] } else { 1.0 };
                sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (Design::from_rows(rows).unwrap(), res)
    }

    #[test]
    fn chi_square_tail_reference_points() {
        // 3.841459 is the 95% point of chi-square(1); 5.991465 of chi-square(2)
        assert!((chi_square_sf(3.841459, 1.0) - 0.05).abs() < 1e-6);
        assert!((chi_square_sf(5.991465, 2.0) - 0.05).abs() < 1e-6);
        // with two degrees of freedom the tail is exp(-x/2)
        assert!((chi_square_sf(10.239, 2.0) - (-10.239f64 / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn heteroscedastic_residuals_rejected() {
        let mut rng = rng_from(1);
        let (d, e) = sample(&mut rng, 300, true);
        let (_, p) = breusch_pagan(&e, &d).unwrap();
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn homoscedastic_residuals_not_rejected() {
        let mut rng = rng_from(2);
        let (d, e) = sample(&mut rng, 300, false);
        let (_, p) = breusch_pagan(&e, &d).unwrap();
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn rejection_rates_over_repeated_simulation() {
        let mut rng = rng_from(3);
        let reps = 1000;
        let mut null_rej = 0;
        let mut alt_rej = 0;
        for _ in 0..reps {
            let (d, e) = sample(&mut rng, 100, false);
            null_rej += usize::from(breusch_pagan(&e, &d).unwrap().1 < 0.05);
            let (d, e) = sample(&mut rng, 100, true);
            alt_rej += usize::from(breusch_pagan(&e, &d).unwrap().1 < 0.05);
        }
        let null_rate = null_rej as f64 / reps as f64;
        let alt_rate = alt_rej as f64 / reps as f64;
        assert!((0.025..=0.08).contains(&null_rate), "size {null_rate}");
        assert!(alt_rate > 0.8, "power {alt_rate}");
    }

    #[test]
    fn identical_residuals_give_zero_stat() {
        let d = Design::from_rows((0..10).map(|i| vec![i as f64]).collect()).unwrap();
        assert_eq!(breusch_pagan(&[0.7; 10], &d).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn durbin_watson_limits() {
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((durbin_watson(&alt).unwrap() - 4.0).abs() < 0.1);
        assert_eq!(durbin_watson(&[2.0; 10]).unwrap(), 0.0);
        assert!(matches!(durbin_watson(&[0.0; 5]), Err(Error::AllZeroResiduals)));
        let mut rng = rng_from(4);
        let noise: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let dw = durbin_watson(&noise).unwrap();
        assert!((1.9..=2.1).contains(&dw), "{dw}");
        assert_eq!(DwInterpretation::from_stat(dw), DwInterpretation::NoAutocorrelation);
        assert_eq!(DwInterpretation::from_stat(3.023), DwInterpretation::Negative);
    }
}
