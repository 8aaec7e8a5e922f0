use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cnn::{cnn_fit, CnnSpec, CnnVariant};
use super::weekly::WeeklySplit;
use crate::error::{Error, Result};
use crate::rng::sub_seed;

pub const WEEKDAYS: [&str; 5] = ["mon", "tue", "wed", "thu", "fri"];
pub const ROUND_CSV_HEADER: &str = "round,overall_rmse,mon,tue,wed,thu,fri,exec_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub overall_rmse: f64,
    pub weekday_rmse: [f64; 5],
    /// Wall-clock time; reported, never compared.
    #[serde(skip)]
    pub exec_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub overall_rmse: f64,
    pub weekday_rmse: [f64; 5],
    #[serde(skip)]
    pub exec_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRoundReport {
    pub variant: Option<CnnVariant>,
    pub rounds: Vec<RoundResult>,
    /// Mean, SD, Min, Max, then Ratio (mean RMSE over mean actual open).
    pub summary: Vec<SummaryRow>,
    pub mean_actual: f64,
    pub weekday_mean_actual: [f64; 5],
}

fn rmse(sq: &[f64]) -> f64 {
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

fn column_stats(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, sd, min, max]
}

/// Trains and walk-forward evaluates `rounds` independently seeded models,
/// in parallel. Errors are pooled per weekday across all test weeks.
pub fn cnn_fit_eval(spec: &CnnSpec, split: &WeeklySplit, rounds: usize) -> Result<MultiRoundReport> {
    if rounds == 0 {
        return Err(Error::BadParams("at least one round is required".into()));
    }
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::TooFewWeeks {
            needed: 2,
            got: usize::from(!split.train.is_empty()) + split.test.len(),
        });
    }
    let results: Vec<RoundResult> = (0..rounds)
        .into_par_iter()
        .map(|round| -> Result<RoundResult> {
            let started = Instant::now();
            let model = cnn_fit(spec, &split.train, sub_seed(spec.seed, round as u64))?;
            let mut per_day: [Vec<f64>; 5] = Default::default();
            for s in &split.test {
                let pred = model.forecast(&s.input)?;
                for d in 0..5 {
                    per_day[d].push((pred[d] - s.target[d]).powi(2));
                }
            }
            let all: Vec<f64> = per_day.iter().flatten().copied().collect();
            Ok(RoundResult {
                round: round + 1,
                overall_rmse: rmse(&all),
                weekday_rmse: std::array::from_fn(|d| rmse(&per_day[d])),
                exec_seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;

    let mean_of = |f: &dyn Fn(&[f64; 5]) -> f64| split.test.iter().map(|s| f(&s.target)).sum::<f64>() / split.test.len() as f64;
    let mean_actual = mean_of(&|t| t.iter().sum::<f64>() / 5.0);
    let weekday_mean_actual: [f64; 5] = std::array::from_fn(|d| mean_of(&|t| t[d]));

    let overall = column_stats(&results.iter().map(|r| r.overall_rmse).collect::<Vec<_>>());
    let days: Vec<[f64; 4]> = (0..5).map(|d| column_stats(&results.iter().map(|r| r.weekday_rmse[d]).collect::<Vec<_>>())).collect();
    let secs = column_stats(&results.iter().map(|r| r.exec_seconds).collect::<Vec<_>>());
    let mut summary: Vec<SummaryRow> = ["Mean", "SD", "Min", "Max"]
        .iter()
        .enumerate()
        .map(|(k, label)| SummaryRow {
            label: label.to_string(),
            overall_rmse: overall[k],
            weekday_rmse: std::array::from_fn(|d| days[d][k]),
            exec_seconds: Some(secs[k]),
        })
        .collect();
    summary.push(SummaryRow {
        label: "Ratio".into(),
        overall_rmse: overall[0] / mean_actual,
        weekday_rmse: std::array::from_fn(|d| days[d][0] / weekday_mean_actual[d]),
        exec_seconds: None,
    });
    Ok(MultiRoundReport {
        variant: spec.variant,
        rounds: results,
        summary,
        mean_actual,
        weekday_mean_actual,
    })
}

impl MultiRoundReport {
    pub fn n_rows(&self) -> usize {
        self.rounds.len() + self.summary.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{ROUND_CSV_HEADER}\n");
        let mut row = |label: &str, overall: f64, days: &[f64; 5], secs: Option<f64>| {
            write!(out, "{label},{overall}").expect("write to string");
            for v in days {
                write!(out, ",{v}").expect("write to string");
            }
            match secs {
                Some(s) => writeln!(out, ",{s:.3}"),
                None => writeln!(out, ","),
            }
            .expect("write to string");
        };
        for r in &self.rounds {
            row(&r.round.to_string(), r.overall_rmse, &r.weekday_rmse, Some(r.exec_seconds));
        }
        for s in &self.summary {
            row(&s.label, s.overall_rmse, &s.weekday_rmse, s.exec_seconds);
        }
        out
    }
}
