//! Classification and regression scoring: confusion metrics, ROC/AUC,
//! lift, regression ratios and cross-model summary tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Counts with class 1 as the positive class.
    pub fn from_labels(predicted: &[u8], actual: &[u8]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::LengthMismatch { left: predicted.len(), right: actual.len() });
        }
        let mut cm = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p == 1, a == 1) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions scored with class 0 as the positive class.
    pub fn relabeled(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// Percentages; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClsMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub ca: Option<f64>,
    pub f1: Option<f64>,
}

pub const CLS_METRIC_NAMES: [&str; 6] = ["sensitivity", "specificity", "ppv", "npv", "ca", "f1"];

impl ClsMetrics {
    pub fn values(&self) -> [Option<f64>; 6] {
        [self.sensitivity, self.specificity, self.ppv, self.npv, self.ca, self.f1]
    }

    /// False discovery rate, 100 − PPV.
    pub fn fdr(&self) -> Option<f64> {
        self.ppv.map(|v| 100.0 - v)
    }

    /// False omission rate, 100 − NPV.
    pub fn false_omission(&self) -> Option<f64> {
        self.npv.map(|v| 100.0 - v)
    }
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn cls_metrics(cm: &ConfusionMatrix) -> ClsMetrics {
    let sensitivity = pct(cm.tp, cm.tp + cm.fn_);
    let ppv = pct(cm.tp, cm.tp + cm.fp);
    let f1 = match (sensitivity, ppv) {
        (Some(s), Some(p)) if s + p > 0.0 => Some(2.0 * s * p / (s + p)),
        _ => None,
    };
    ClsMetrics {
        sensitivity,
        specificity: pct(cm.tn, cm.tn + cm.fp),
        ppv,
        npv: pct(cm.tn, cm.tn + cm.fn_),
        ca: pct(cm.tp + cm.tn, cm.total()),
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Groups of equal score in descending score order: (size, positives).
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in order {
        let p = usize::from(labels[i] == 1);
        if last == Some(scores[i]) {
            let g = groups.last_mut().expect("open group");
            g.0 += 1;
            g.1 += p;
        } else {
            groups.push((1, p));
            last = Some(scores[i]);
        }
    }
    groups
}

/// ROC over every distinct score threshold; AUC by the trapezoid rule,
/// which gives tied scores half credit.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    for (size, p) in tie_groups(scores, labels) {
        let (x0, y0) = *points.last().expect("origin");
        tp += p;
        fp += size - p;
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftPoint {
    /// Share of rows taken from the top of the ranking, in (0, 1].
    pub depth: f64,
    pub lift: f64,
}

/// Cumulative lift at each of `bins` equal depths. Rows tied on score are
/// taken fractionally, so the result does not depend on input order.
pub fn lift_curve(scores: &[f64], labels: &[u8], bins: usize) -> Result<Vec<LiftPoint>> {
    let (pos, _) = check_binary(scores, labels)?;
    let n = scores.len();
    if bins == 0 || n < bins {
        return Err(Error::TooFewRows { needed: bins.max(1), got: n });
    }
    let rate = pos as f64 / n as f64;
    let groups = tie_groups(scores, labels);
    Ok((1..=bins)
        .map(|d| {
            let mass = d as f64 * n as f64 / bins as f64;
            let mut taken = 0.0;
            let mut hits = 0.0;
            for &(size, p) in &groups {
                if taken >= mass {
                    break;
                }
                let share = ((mass - taken) / size as f64).min(1.0);
                taken += share * size as f64;
                hits += share * p as f64;
            }
            LiftPoint {
                depth: d as f64 / bins as f64,
                lift: (hits / mass) / rate,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegMetrics {
    pub rmse: f64,
    pub mean_abs_actual: f64,
    pub rmse_ratio_pct: Option<f64>,
    pub pearson_r: Option<f64>,
    /// r·√((n−2)/(1−r²)); absent when |r| = 1 or r is undefined.
    pub r_t_stat: Option<f64>,
    pub mismatch_count: usize,
    pub mismatch_pct: f64,
}

pub const REG_METRIC_NAMES: [&str; 5] = ["rmse", "rmse_ratio_pct", "pearson_r", "mismatch_count", "mismatch_pct"];

impl RegMetrics {
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            Some(self.rmse),
            self.rmse_ratio_pct,
            self.pearson_r,
            Some(self.mismatch_count as f64),
            Some(self.mismatch_pct),
        ]
    }
}

/// RMSE as a percentage of the mean absolute actual value.
pub fn rmse_ratio_pct(rmse: f64, mean_abs_actual: f64) -> Option<f64> {
    (mean_abs_actual > 0.0).then(|| 100.0 * rmse / mean_abs_actual)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn reg_metrics(pred: &[f64], actual: &[f64]) -> Result<RegMetrics> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: actual.len() });
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let nf = n as f64;
    let rmse = (pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / nf).sqrt();
    let mean_abs_actual = actual.iter().map(|a| a.abs()).sum::<f64>() / nf;
    let pearson_r = pearson(pred, actual);
    let r_t_stat = pearson_r.filter(|r| r.abs() < 1.0).map(|r| r * ((nf - 2.0) / (1.0 - r * r)).sqrt());
    // same positive/non-positive split as the classification target
    let mismatch_count = pred.iter().zip(actual).filter(|(p, a)| (**p > 0.0) != (**a > 0.0)).count();
    Ok(RegMetrics {
        rmse,
        mean_abs_actual,
        rmse_ratio_pct: rmse_ratio_pct(rmse, mean_abs_actual),
        pearson_r,
        r_t_stat,
        mismatch_count,
        mismatch_pct: 100.0 * mismatch_count as f64 / nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    Higher,
    Lower,
}

/// Metrics (rows) by models (columns) with the best entry of every row
/// flagged; ties flag every tied model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub title: String,
    pub metrics: Vec<String>,
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub best: Vec<Vec<bool>>,
}

/// `models` holds each model's metric values in the order of `metrics`.
pub fn summarize(title: &str, metrics: &[(&str, Better)], models: &[(String, Vec<Option<f64>>)]) -> SummaryTable {
    let values: Vec<Vec<Option<f64>>> = (0..metrics.len()).map(|m| models.iter().map(|(_, v)| v.get(m).copied().flatten()).collect()).collect();
    let best = values
        .iter()
        .zip(metrics)
        .map(|(row, (_, better))| {
            let target = row.iter().flatten().copied().reduce(|a, b| match better {
                Better::Higher => a.max(b),
                Better::Lower => a.min(b),
            });
            row.iter().map(|v| v.is_some() && *v == target).collect()
        })
        .collect();
    SummaryTable {
        title: title.to_string(),
        metrics: metrics.iter().map(|(m, _)| m.to_string()).collect(),
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        values,
        best,
    }
}

pub fn cls_summary(title: &str, models: &[(String, ClsMetrics)]) -> SummaryTable {
    let metrics: Vec<(&str, Better)> = CLS_METRIC_NAMES.iter().map(|&m| (m, Better::Higher)).collect();
    let rows: Vec<(String, Vec<Option<f64>>)> = models.iter().map(|(n, m)| (n.clone(), m.values().to_vec())).collect();
    summarize(title, &metrics, &rows)
}

pub fn reg_summary(title: &str, models: &[(String, RegMetrics)]) -> SummaryTable {
    let metrics = [
        ("rmse", Better::Lower),
        ("rmse_ratio_pct", Better::Lower),
        ("pearson_r", Better::Higher),
        ("mismatch_count", Better::Lower),
        ("mismatch_pct", Better::Lower),
    ];
    let rows: Vec<(String, Vec<Option<f64>>)> = models.iter().map(|(n, m)| (n.clone(), m.values().to_vec())).collect();
    summarize(title, &metrics, &rows)
}

impl SummaryTable {
    /// One row per metric, two decimals, best entries suffixed with `*`,
    /// undefined entries written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for m in &self.models {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (r, metric) in self.metrics.iter().enumerate() {
            out.push_str(metric);
            for (c, v) in self.values[r].iter().enumerate() {
                match v {
                    Some(v) => write!(out, ",{v:.2}{}", if self.best[r][c] { "*" } else { "" }).expect("write to string"),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `x,y` rows for external plotting.
pub fn points_csv(header: (&str, &str), points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, y) in points {
        writeln!(out, "{x},{y}").expect("write to string");
    }
    out
}
