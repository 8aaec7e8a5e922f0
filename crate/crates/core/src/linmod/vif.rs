use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::{dot, total_ss, OrthoBasis};

/// R² at or above this counts as perfect collinearity.
const PERFECT_R2: f64 = 1.0 - 1e-10;

fn r_squared_on_others(design: &Design, j: usize) -> f64 {
    let n = design.n_rows();
    let target = design.column(j);
    let tss = total_ss(&target);
    if tss == 0.0 {
        // a constant column is collinear with the intercept
        return 1.0;
    }
    let mut basis = OrthoBasis::new();
    basis.push(&vec![1.0; n]);
    for k in (0..design.n_cols()).filter(|&k| k != j) {
        basis.push(&design.column(k));
    }
    let r = basis.residual(&target);
    (1.0 - dot(&r, &r) / tss).clamp(0.0, 1.0)
}

/// Variance inflation factor of every column: 1 / (1 − R²) from regressing
/// that column on all others. Perfect collinearity yields `f64::INFINITY`.
pub fn vif(design: &Design) -> Result<Vec<f64>> {
    let (n, p) = (design.n_rows(), design.n_cols());
    if n < p + 2 {
        return Err(Error::RankDeficient(format!("{n} rows for {p} predictors")));
    }
    Ok((0..p)
        .map(|j| {
            let r2 = r_squared_on_others(design, j);
            if r2 >= PERFECT_R2 {
                f64::INFINITY
            } else {
                1.0 / (1.0 - r2)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub kept: Vec<String>,
    /// Removed predictors in removal order, with their VIF at removal.
    /// Infinite VIFs are reported as `None`.
    pub removed: Vec<(String, Option<f64>)>,
}

/// Repeatedly removes the highest-VIF predictor until every remaining VIF is
/// at most `threshold`. Ties go to the lexicographically first name.
pub fn drop_collinear(design: &Design, threshold: f64) -> Result<CollinearityReport> {
    if threshold.is_nan() || threshold <= 1.0 {
        return Err(Error::BadParams("VIF threshold must exceed 1".into()));
    }
    let mut current = design.clone();
    let mut removed = Vec::new();
    while current.n_cols() > 1 {
        let vifs = vif(&current)?;
        let worst = (0..vifs.len())
            .max_by(|&a, &b| {
                vifs[a]
                    .partial_cmp(&vifs[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| current.names[b].cmp(&current.names[a]))
            })
            .expect("at least one column");
        if vifs[worst] <= threshold {
            break;
        }
        log::debug!("dropping {} (VIF {})", current.names[worst], vifs[worst]);
        removed.push((current.names[worst].clone(), vifs[worst].is_finite().then_some(vifs[worst])));
        let keep: Vec<usize> = (0..current.n_cols()).filter(|&k| k != worst).collect();
        current = current.select(&keep);
    }
    Ok(CollinearityReport {
        kept: current.names,
        removed,
    })
}
