use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelName};
use crate::deepnets::MultiRoundReport;
use crate::error::{Error, Result};
use crate::evalsuite::{cls_summary, points_csv, reg_summary, ClsMetrics, ConfusionMatrix, LiftPoint, RegMetrics, RocCurve, SummaryTable};
use crate::features::Case;
use crate::linmod::DiagnosticsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsEval {
    pub confusion: ConfusionMatrix,
    pub metrics: ClsMetrics,
    /// Absent when the evaluated rows hold a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsReport {
    pub train: ClsEval,
    pub test: ClsEval,
    /// Test-set curves.
    pub roc: Option<RocCurve>,
    pub lift: Option<Vec<LiftPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegReport {
    pub train: RegMetrics,
    pub test: RegMetrics,
    /// Residual diagnostics on the training fit.
    pub diagnostics: Option<DiagnosticsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmReport {
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub pearson_r: Option<f64>,
    pub rmse_ratio_pct: Option<f64>,
    pub baseline_mae: f64,
    pub train_rows: usize,
    pub val_rows: usize,
}

/// Everything one model produced; classical models fill the classification
/// and/or regression parts, deep models their own part.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelReport {
    pub classification: Option<ClsReport>,
    pub regression: Option<RegReport>,
    pub lstm: Option<LstmReport>,
    pub cnn: Option<MultiRoundReport>,
    /// Fitted-model facts worth keeping (selected predictors, MARS terms...).
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeakageAudit {
    /// Case III: latest training date precedes earliest test date.
    pub case_split_ok: Option<bool>,
    pub cnn_samples_checked: usize,
    pub cnn_samples_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: ExperimentConfig,
    /// The effective config as TOML; feeding it back reproduces the run.
    pub config_toml: String,
    pub case: Case,
    pub train_rows: usize,
    pub test_rows: usize,
    pub models: BTreeMap<String, ModelReport>,
    /// Effective settings of every model that ran, including values the
    /// config left at their defaults.
    pub defaults: BTreeMap<String, serde_json::Value>,
    /// Per-model failures; the other models are unaffected.
    pub errors: BTreeMap<String, String>,
    pub leakage: LeakageAudit,
    /// Wall-clock seconds per model; kept out of the JSON so reruns compare
    /// byte for byte, written to a separate timings file instead.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub const BUNDLE_FILE: &str = "bundle.json";
pub const TIMINGS_FILE: &str = "timings.json";

impl ReportBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }

    fn summary(&self, pick: impl Fn(&ClsReport) -> &ClsEval, title: &str) -> Option<SummaryTable> {
        let rows: Vec<(String, ClsMetrics)> = ModelName::CLASSIFIERS
            .iter()
            .filter_map(|m| {
                let r = self.models.get(m.as_str())?.classification.as_ref()?;
                Some((m.to_string(), pick(r).metrics))
            })
            .collect();
        (!rows.is_empty()).then(|| cls_summary(title, &rows))
    }

    fn reg_table(&self, pick: impl Fn(&RegReport) -> &RegMetrics, title: &str) -> Option<SummaryTable> {
        let rows: Vec<(String, RegMetrics)> = ModelName::REGRESSORS
            .iter()
            .filter_map(|m| {
                let r = self.models.get(m.as_str())?.regression.as_ref()?;
                Some((m.to_string(), *pick(r)))
            })
            .collect();
        (!rows.is_empty()).then(|| reg_summary(title, &rows))
    }

    /// Metric-by-model tables for the test and training rows.
    pub fn summary_tables(&self) -> Vec<(String, SummaryTable)> {
        let case = self.case;
        [
            ("classification_test", self.summary(|r| &r.test, &format!("Case {case} classification, test"))),
            ("classification_train", self.summary(|r| &r.train, &format!("Case {case} classification, training"))),
            ("regression_test", self.reg_table(|r| &r.test, &format!("Case {case} regression, test"))),
            ("regression_train", self.reg_table(|r| &r.train, &format!("Case {case} regression, training"))),
        ]
        .into_iter()
        .filter_map(|(file, t)| t.map(|t| (file.to_string(), t)))
        .collect()
    }
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    written.push(path);
    Ok(())
}

/// Writes the bundle into `dir`. JSON gives the full-precision bundle plus
/// a timings sidecar; CSV gives summary tables, ROC and lift points,
/// LSTM loss curves and CNN round tables. Returns the files written.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Json) {
        write(dir, BUNDLE_FILE, &bundle.to_json()?, &mut written)?;
        if !bundle.timings.is_empty() {
            write(dir, TIMINGS_FILE, &serde_json::to_string_pretty(&bundle.timings)?, &mut written)?;
        }
    }
    if formats.contains(&ReportFormat::Csv) {
        for (file, table) in bundle.summary_tables() {
            write(dir, &format!("{file}_summary.csv"), &table.to_csv(), &mut written)?;
        }
        for (name, report) in &bundle.models {
            if let Some(cls) = &report.classification {
                if let Some(roc) = &cls.roc {
                    write(dir, &format!("roc_{name}.csv"), &points_csv(("fpr", "tpr"), roc.points.iter().copied()), &mut written)?;
                }
                if let Some(lift) = &cls.lift {
                    write(dir, &format!("lift_{name}.csv"), &points_csv(("depth", "lift"), lift.iter().map(|p| (p.depth, p.lift))), &mut written)?;
                }
            }
            if let Some(lstm) = &report.lstm {
                let mut body = String::from("epoch,train_mae,val_mae\n");
                for (e, (t, v)) in lstm.train_mae.iter().zip(&lstm.val_mae).enumerate() {
                    body.push_str(&format!("{},{t},{v}\n", e + 1));
                }
                write(dir, &format!("{name}_loss.csv"), &body, &mut written)?;
            }
            if let Some(cnn) = &report.cnn {
                write(dir, &format!("{name}_rounds.csv"), &cnn.to_csv(), &mut written)?;
            }
        }
        if !bundle.errors.is_empty() {
            let mut body = String::from("model,error\n");
            for (m, e) in &bundle.errors {
                body.push_str(&format!("{m},\"{}\"\n", e.replace('"', "'")));
            }
            write(dir, "errors.csv", &body, &mut written)?;
        }
    }
    Ok(written)
}
