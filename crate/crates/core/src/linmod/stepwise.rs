use serde::{Deserialize, Serialize};

use super::ols::{fit_subset, OlsFit};
use crate::error::{Error, Result};
use crate::features::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepwiseConfig {
    /// Optional t-test gate on top of AIC: backward only removes predictors
    /// with p > alpha, forward only adds predictors with p < alpha. `None`
    /// lets AIC alone drive the search.
    pub alpha: Option<f64>,
    /// Steps with an AIC change smaller than this are not taken.
    pub min_improvement: f64,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            min_improvement: 1e-9,
        }
    }
}

/// Greedy AIC search over the columns of `design`.
///
/// Backward starts from the full model and removes, one at a time, the
/// predictor whose removal lowers AIC the most; forward starts from the
/// intercept-only model and adds the predictor that lowers AIC the most.
/// Both stop when no move lowers AIC.
pub fn stepwise_select(design: &Design, y: &[f64], direction: Direction, config: &StepwiseConfig) -> Result<OlsFit> {
    match direction {
        Direction::Backward => backward(design, y, config),
        Direction::Forward => forward(design, y, config),
    }
}

fn p_of(fit: &OlsFit, design: &Design, col: usize) -> f64 {
    let name = &design.names[col];
    let pos = fit.selected.iter().position(|s| s == name).expect("column in fit");
    fit.p_values[pos + 1]
}

fn backward(design: &Design, y: &[f64], config: &StepwiseConfig) -> Result<OlsFit> {
    let mut current: Vec<usize> = (0..design.n_cols()).collect();
    let mut fit = fit_subset(design, y, &current)?;
    loop {
        let mut best: Option<(f64, usize, OlsFit)> = None;
        for (pos, &col) in current.iter().enumerate() {
            if let Some(alpha) = config.alpha {
                if p_of(&fit, design, col) <= alpha {
                    continue;
                }
            }
            let mut reduced = current.clone();
            reduced.remove(pos);
            let candidate = fit_subset(design, y, &reduced)?;
            if best.as_ref().is_none_or(|(aic, _, _)| candidate.aic < *aic) {
                best = Some((candidate.aic, pos, candidate));
            }
        }
        match best {
            Some((aic, pos, candidate)) if aic < fit.aic - config.min_improvement => {
                log::debug!("backward: drop {} (AIC {:.4} -> {:.4})", design.names[current[pos]], fit.aic, aic);
                current.remove(pos);
                fit = candidate;
            }
            _ => return Ok(fit),
        }
    }
}

fn forward(design: &Design, y: &[f64], config: &StepwiseConfig) -> Result<OlsFit> {
    let mut current: Vec<usize> = Vec::new();
    let mut fit = fit_subset(design, y, &current)?;
    loop {
        let mut best: Option<(f64, usize, OlsFit)> = None;
        for col in (0..design.n_cols()).filter(|c| !current.contains(c)) {
            let mut extended = current.clone();
            extended.push(col);
            let candidate = match fit_subset(design, y, &extended) {
                Ok(c) => c,
                Err(Error::RankDeficient(_)) => continue,
                Err(e) => return Err(e),
            };
            if let Some(alpha) = config.alpha {
                if p_of(&candidate, design, col) >= alpha {
                    continue;
                }
            }
            if best.as_ref().is_none_or(|(aic, _, _)| candidate.aic < *aic) {
                best = Some((candidate.aic, col, candidate));
            }
        }
        match best {
            Some((aic, col, candidate)) if aic < fit.aic - config.min_improvement => {
                log::debug!("forward: add {} (AIC {:.4} -> {:.4})", design.names[col], fit.aic, aic);
                current.push(col);
                fit = candidate;
            }
            _ => {
                // report predictors in design order regardless of entry order
                current.sort_unstable();
                return fit_subset(design, y, &current);
            }
        }
    }
}
