use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;

use super::bundle::{emit_reports, ClsEval, ClsReport, LeakageAudit, LstmReport, ModelReport, RegReport, ReportBundle, ReportFormat};
use super::config::{DataSection, ExperimentConfig, ModelName};
use crate::deepnets::{cnn_build, cnn_fit_eval, lstm_fit, weekly_split, CnnSpec, CnnVariant, LstmSpec, WeeklySplit};
use crate::error::{Error, Result};
use crate::evalsuite::{cls_metrics, lift_curve, reg_metrics, roc_auc, ConfusionMatrix};
use crate::features::{case_split, derive_features, Case, Dataset, Design, ScaleParams};
use crate::kernel_models::{fit_knn, fit_svm_classifier, fit_svr};
use crate::linmod::{diagnose, drop_collinear, fit_logistic, stepwise_select};
use crate::mars::fit_mars;
use crate::market_data::{parse_ticks, synth_ticks, to_daily_bars, DailyBar, IngestFormat, TickSeries};
use crate::rng::sub_seed;
use crate::shallow_nn::{mlp_fit, MlpSpec, OutputMode};
use crate::slotter::{aggregate_slots, SlotBar};
use crate::trees::{fit_adaboost, fit_bagging, fit_cart, fit_gradboost, fit_random_forest, EnsembleModel, Task};

/// Reads every tick file (or generates the synthetic series) into one
/// sorted series.
pub fn load_series(data: &DataSection) -> Result<TickSeries> {
    let symbol = if data.symbol.is_empty() { "UNKNOWN" } else { data.symbol.as_str() };
    if let Some(synth) = &data.synth {
        let mut s = synth_ticks(synth.seed, synth.days, &synth.params)?;
        s.symbol = symbol.to_string();
        return Ok(s);
    }
    let mut records = Vec::new();
    for path in &data.ticks {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => IngestFormat::Tsv,
            _ => IngestFormat::Csv,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        records.extend_from_slice(parse_ticks(std::io::BufReader::new(file), format)?.records());
    }
    TickSeries::new(symbol, records)
}

/// Slots and feature rows for one calendar year.
#[derive(Debug, Clone)]
pub struct YearData {
    pub year: i32,
    pub slots: Vec<SlotBar>,
    pub dataset: Dataset,
}

/// The series split into its first two calendar years plus daily bars of
/// the whole series.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub years: [Option<YearData>; 2],
    pub daily: Vec<DailyBar>,
}

pub fn prepare(series: &TickSeries, config: &ExperimentConfig) -> Result<PreparedData> {
    let first = series.records().first().ok_or(Error::EmptySeries)?.date.year();
    let year = |y: i32| -> Result<Option<YearData>> {
        let part = series.filter_year(y);
        if part.is_empty() {
            return Ok(None);
        }
        let slots = aggregate_slots(&part, &config.data.slots)?;
        let dataset = derive_features(&slots, &config.data.features)?.into_dataset();
        Ok(Some(YearData { year: y, slots, dataset }))
    };
    Ok(PreparedData {
        years: [year(first)?, year(first + 1)?],
        daily: to_daily_bars(series)?,
    })
}

fn date_range(d: &Dataset) -> Option<(NaiveDate, NaiveDate)> {
    let dates: Vec<NaiveDate> = d.rows.iter().filter_map(|r| r.date).collect();
    Some((*dates.iter().min()?, *dates.iter().max()?))
}

/// Case III must train strictly before it tests.
pub fn audit_case_split(train: &Dataset, test: &Dataset, case: Case) -> Option<bool> {
    if case != Case::III {
        return None;
    }
    match (date_range(train), date_range(test)) {
        (Some((_, train_max)), Some((test_min, _))) => Some(train_max < test_min),
        _ => Some(false),
    }
}

/// Every training and walk-forward sample reads only earlier dates.
pub fn audit_walk_forward(split: &WeeklySplit) -> (usize, bool) {
    let n = split.train.len() + split.test.len();
    (n, split.train.iter().chain(&split.test).all(|s| s.is_causal()))
}

struct Classical<'a> {
    train: &'a Dataset,
    test: &'a Dataset,
    train_x: Design,
    test_x: Design,
    train_scaled: Design,
    test_scaled: Design,
    train_cls: Vec<f64>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    classical: Option<Classical<'a>>,
    lstm_slots: Vec<SlotBar>,
    daily: &'a [DailyBar],
}

fn labels_of(pred: &[f64]) -> Vec<u8> {
    pred.iter().map(|&p| u8::from(p > 0.5)).collect()
}

fn cls_eval(scores: &[f64], predicted: &[u8], actual: &[u8]) -> Result<ClsEval> {
    let confusion = ConfusionMatrix::from_labels(predicted, actual)?;
    Ok(ClsEval {
        confusion,
        metrics: cls_metrics(&confusion),
        auc: roc_auc(scores, actual).ok().map(|r| r.auc),
    })
}

/// Scores and labels on the training rows, then on the test rows.
fn cls_report(c: &Classical, train: (Vec<f64>, Vec<u8>), test: (Vec<f64>, Vec<u8>)) -> Result<ClsReport> {
    let actual = &c.test.target_cls;
    Ok(ClsReport {
        train: cls_eval(&train.0, &train.1, &c.train.target_cls)?,
        test: cls_eval(&test.0, &test.1, actual)?,
        roc: roc_auc(&test.0, actual).ok(),
        lift: lift_curve(&test.0, actual, 10).ok(),
    })
}

fn reg_report(c: &Classical, train: Vec<f64>, test: Vec<f64>) -> Result<RegReport> {
    Ok(RegReport {
        train: reg_metrics(&train, &c.train.target_reg)?,
        test: reg_metrics(&test, &c.test.target_reg)?,
        diagnostics: None,
    })
}

fn ensemble_cls(c: &Classical, m: &EnsembleModel) -> Result<ClsReport> {
    let side = |x: &Design| -> Result<(Vec<f64>, Vec<u8>)> { Ok((m.predict_scores(x)?, labels_of(&m.predict(x)?))) };
    cls_report(c, side(&c.train_x)?, side(&c.test_x)?)
}

fn ensemble_reg(c: &Classical, m: &EnsembleModel) -> Result<RegReport> {
    reg_report(c, m.predict(&c.train_x)?, m.predict(&c.test_x)?)
}

fn mlp_spec(ctx: &Context, output: OutputMode, seed: u64) -> MlpSpec {
    let s = &ctx.config.model.ann;
    MlpSpec {
        hidden_layers: s.hidden_layers.clone(),
        output,
        max_steps: s.max_steps,
        lr: s.lr,
        grad_tol: s.grad_tol,
        init_range: s.init_range,
        seed,
    }
}

pub(crate) fn lstm_spec(config: &ExperimentConfig, seed: u64) -> LstmSpec {
    LstmSpec { seed, ..config.model.lstm.clone() }
}

pub(crate) fn cnn_spec(config: &ExperimentConfig, variant: CnnVariant, seed: u64) -> CnnSpec {
    let s = &config.model.cnn;
    let base = cnn_build(variant);
    CnnSpec {
        lr: s.lr,
        epochs: s.epochs.unwrap_or(base.epochs),
        batch: s.batch.unwrap_or(base.batch),
        seed,
        ..base
    }
}

fn model_seed(config: &ExperimentConfig, model: ModelName) -> u64 {
    sub_seed(config.experiment.seed, model.index())
}

fn run_model(model: ModelName, ctx: &Context) -> Result<ModelReport> {
    let seed = model_seed(ctx.config, model);
    let settings = &ctx.config.model;
    let mut report = ModelReport::default();
    if let Some(variant) = model.cnn_variant() {
        let split = weekly_split(ctx.daily, variant.history_weeks(), variant.variables(), settings.cnn.train_weeks)?;
        report.cnn = Some(cnn_fit_eval(&cnn_spec(ctx.config, variant, seed), &split, settings.cnn.rounds)?);
        return Ok(report);
    }
    if model == ModelName::Lstm {
        let fit = lstm_fit(&ctx.lstm_slots, &lstm_spec(ctx.config, seed))?;
        report.lstm = Some(LstmReport {
            train_rows: fit.spec.train_rows,
            val_rows: fit.val_actual.len(),
            train_mae: fit.train_mae,
            val_mae: fit.val_mae,
            rmse: fit.rmse,
            mae: fit.mae,
            pearson_r: fit.pearson_r,
            rmse_ratio_pct: fit.rmse_ratio_pct,
            baseline_mae: fit.baseline_mae,
        });
        return Ok(report);
    }

    let c = ctx.classical.as_ref().ok_or_else(|| Error::Config("no feature rows for the requested case".into()))?;
    let y_reg = &c.train.target_reg;
    let y_cls = &c.train.target_cls;
    match model {
        ModelName::Logit => {
            let mut fit = fit_logistic(&c.train_x, y_cls)?;
            fit.threshold = settings.logit.threshold;
            if fit.separated {
                report.notes.push("training classes are separable; coefficients diverge".into());
            }
            report.classification = Some(cls_report(c, fit.predict(&c.train_x)?, fit.predict(&c.test_x)?)?);
        }
        ModelName::Knn => {
            let knn = fit_knn(&c.train_x, y_cls, settings.knn.k)?;
            let side = |x: &Design| -> Result<(Vec<f64>, Vec<u8>)> { Ok((knn.predict_scores(x)?, knn.classify(x)?)) };
            report.classification = Some(cls_report(c, side(&c.train_x)?, side(&c.test_x)?)?);
        }
        ModelName::Cart => {
            let cls = fit_cart(&c.train_x, &c.train_cls, Task::Classification, &settings.cart)?;
            let side = |x: &Design| -> Result<(Vec<f64>, Vec<u8>)> { Ok((cls.predict_values(x)?, labels_of(&cls.predict(x)?))) };
            report.classification = Some(cls_report(c, side(&c.train_x)?, side(&c.test_x)?)?);
            let reg = fit_cart(&c.train_x, y_reg, Task::Regression, &settings.cart)?;
            report.regression = Some(reg_report(c, reg.predict_values(&c.train_x)?, reg.predict_values(&c.test_x)?)?);
            report.notes.push(format!("leaves: classification {}, regression {}", cls.root.n_leaves(), reg.root.n_leaves()));
        }
        ModelName::Bag => {
            let cls = fit_bagging(&c.train_x, &c.train_cls, Task::Classification, &settings.bag, sub_seed(seed, 0))?;
            report.classification = Some(ensemble_cls(c, &cls)?);
            let reg = fit_bagging(&c.train_x, y_reg, Task::Regression, &settings.bag, sub_seed(seed, 1))?;
            report.regression = Some(ensemble_reg(c, &reg)?);
        }
        ModelName::Adaboost => {
            let m = fit_adaboost(&c.train_x, &c.train_cls, &settings.adaboost, seed)?;
            if m.stopped_early {
                report.notes.push(format!("stopped after {} rounds", m.members.len()));
            }
            report.classification = Some(ensemble_cls(c, &m)?);
        }
        ModelName::Gradboost => {
            let m = fit_gradboost(&c.train_x, y_reg, &settings.gradboost, seed)?;
            report.regression = Some(ensemble_reg(c, &m)?);
        }
        ModelName::Rf => {
            let cls = fit_random_forest(&c.train_x, &c.train_cls, Task::Classification, &settings.rf, sub_seed(seed, 0))?;
            report.classification = Some(ensemble_cls(c, &cls)?);
            let reg = fit_random_forest(&c.train_x, y_reg, Task::Regression, &settings.rf, sub_seed(seed, 1))?;
            report.regression = Some(ensemble_reg(c, &reg)?);
            report.notes.push(format!("oob error: classification {:?}, regression {:?}", cls.oob_error, reg.oob_error));
        }
        ModelName::Ann => {
            let cls = mlp_fit(&c.train_scaled, &c.train_cls, &mlp_spec(ctx, OutputMode::Sigmoid, sub_seed(seed, 0)))?;
            let side = |x: &Design| -> Result<(Vec<f64>, Vec<u8>)> {
                let p = cls.net.predict(x)?;
                let l = labels_of(&p);
                Ok((p, l))
            };
            report.classification = Some(cls_report(c, side(&c.train_scaled)?, side(&c.test_scaled)?)?);
            let reg = mlp_fit(&c.train_scaled, y_reg, &mlp_spec(ctx, OutputMode::Linear, sub_seed(seed, 1)))?;
            report.regression = Some(reg_report(c, reg.net.predict(&c.train_scaled)?, reg.net.predict(&c.test_scaled)?)?);
            for (task, fit) in [("classification", &cls), ("regression", &reg)] {
                if !fit.converged {
                    report.notes.push(format!("{task} network stopped at the step limit ({} steps)", fit.steps_used));
                }
            }
        }
        ModelName::Svm => {
            let m = fit_svm_classifier(&c.train_scaled, y_cls, &settings.svm)?;
            let side = |x: &Design| -> Result<(Vec<f64>, Vec<u8>)> { Ok((m.decision_values(x)?, labels_of(&m.predict(x)?))) };
            report.classification = Some(cls_report(c, side(&c.train_scaled)?, side(&c.test_scaled)?)?);
            report.notes.push(format!("{} support vectors, converged {}", m.support_vectors.len(), m.converged));
        }
        ModelName::Svr => {
            let s = &settings.svr;
            let m = fit_svr(&c.train_scaled, y_reg, s.gamma, s.epsilon, &s.svm)?;
            report.regression = Some(reg_report(c, m.predict(&c.train_scaled)?, m.predict(&c.test_scaled)?)?);
            report.notes.push(format!("{} support vectors, converged {}", m.support_vectors.len(), m.converged));
        }
        ModelName::OlsStepwise => {
            let s = &settings.ols_stepwise;
            let kept = drop_collinear(&c.train_x, s.vif_threshold)?;
            let fit = stepwise_select(&c.train_x.select_names(&kept.kept)?, y_reg, s.direction, &s.stepwise)?;
            let mut reg = reg_report(c, fit.predict(&c.train_x)?, fit.predict(&c.test_x)?)?;
            reg.diagnostics = diagnose(&fit.residuals, &c.train_x.select_names(&fit.selected)?).ok();
            report.regression = Some(reg);
            for (name, v) in &kept.removed {
                report.notes.push(format!("removed for collinearity: {name} (VIF {v:?})"));
            }
            report.notes.push(format!("selected: {}", fit.selected.join(", ")));
            report.notes.push(format!("adjusted R2 {}, AIC {}", fit.adj_r2, fit.aic));
        }
        ModelName::Mars => {
            let fit = fit_mars(&c.train_x, y_reg, &settings.mars)?;
            report.regression = Some(reg_report(c, fit.predict(&c.train_x)?, fit.predict(&c.test_x)?)?);
            report.notes.push(fit.pretty("open_perc"));
        }
        ModelName::Lstm | ModelName::CnnM1 | ModelName::CnnM2 | ModelName::CnnM3 | ModelName::CnnM4 => unreachable!("handled above"),
    }
    Ok(report)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Effective settings of `model`, with its derived seed.
fn effective_settings(config: &ExperimentConfig, model: ModelName) -> serde_json::Value {
    let seed = model_seed(config, model);
    let s = &config.model;
    let mut v = match model {
        ModelName::Logit => to_value(&s.logit),
        ModelName::Knn => to_value(&s.knn),
        ModelName::Cart => to_value(&s.cart),
        ModelName::Bag => to_value(&s.bag),
        ModelName::Adaboost => to_value(&s.adaboost),
        ModelName::Gradboost => to_value(&s.gradboost),
        ModelName::Rf => to_value(&s.rf),
        ModelName::Ann => to_value(&s.ann),
        ModelName::Svm => to_value(&s.svm),
        ModelName::Svr => to_value(&s.svr),
        ModelName::OlsStepwise => to_value(&s.ols_stepwise),
        ModelName::Mars => to_value(&s.mars),
        ModelName::Lstm => to_value(&lstm_spec(config, seed)),
        m => {
            let variant = m.cnn_variant().expect("cnn model");
            serde_json::json!({ "rounds": s.cnn.rounds, "train_weeks": s.cnn.train_weeks, "spec": to_value(&cnn_spec(config, variant, seed)) })
        }
    };
    if let Some(map) = v.as_object_mut() {
        map.insert("seed".into(), seed.into());
    }
    v
}

/// Runs every requested model. Model failures are collected in the bundle;
/// only data and configuration problems abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle> {
    config.validate()?;
    let series = load_series(&config.data)?;
    let data = prepare(&series, config)?;
    run_prepared(config, &data)
}

pub fn run_prepared(config: &ExperimentConfig, data: &PreparedData) -> Result<ReportBundle> {
    config.validate()?;
    let case = config.experiment.case;
    let models = &config.experiment.models;
    let [first, second] = &data.years;
    let (first_ds, second_ds) = (first.as_ref().map(|y| &y.dataset), second.as_ref().map(|y| &y.dataset));
    let needs_classical = models.iter().any(|m| m.classifies() || m.regresses());
    let pair = match case {
        Case::I => first_ds.map(|d| (d, d)),
        _ => first_ds.zip(second_ds).map(|(a, b)| case_split(a, b, case)),
    };
    if needs_classical && pair.is_none() {
        return Err(Error::Config(format!("case {case} needs data covering {} calendar year(s)", if case == Case::I { 1 } else { 2 })));
    }

    let mut leakage = LeakageAudit {
        cnn_samples_ok: true,
        ..LeakageAudit::default()
    };
    let classical = match pair {
        Some((train, test)) => {
            leakage.case_split_ok = audit_case_split(train, test, case);
            if leakage.case_split_ok == Some(false) {
                return Err(Error::InvariantViolation {
                    line: 0,
                    reason: "case III training rows overlap the test period".into(),
                });
            }
            let train_x = train.design();
            let test_x = test.design();
            let scale = ScaleParams::fit(&train_x)?;
            Some(Classical {
                train,
                test,
                train_scaled: scale.apply(&train_x),
                test_scaled: scale.apply(&test_x),
                train_x,
                test_x,
                train_cls: train.target_cls.iter().map(|&l| f64::from(l)).collect(),
            })
        }
        None => None,
    };

    for variant in models.iter().filter_map(|m| m.cnn_variant()) {
        if let Ok(split) = weekly_split(&data.daily, variant.history_weeks(), variant.variables(), config.model.cnn.train_weeks) {
            let (n, ok) = audit_walk_forward(&split);
            leakage.cnn_samples_checked += n;
            leakage.cnn_samples_ok &= ok;
        }
    }

    let lstm_slots = match (case, first, second) {
        (Case::I, Some(a), _) => a.slots.clone(),
        (Case::II, _, Some(b)) => b.slots.clone(),
        (Case::III, Some(a), Some(b)) => a.slots.iter().chain(&b.slots).copied().collect(),
        _ => Vec::new(),
    };
    let ctx = Context {
        config,
        classical,
        lstm_slots,
        daily: &data.daily,
    };

    let outcomes: Vec<(ModelName, Result<ModelReport>, f64)> = models
        .par_iter()
        .map(|&m| {
            let started = Instant::now();
            let r = run_model(m, &ctx);
            (m, r, started.elapsed().as_secs_f64())
        })
        .collect();

    let mut bundle = ReportBundle {
        config: config.clone(),
        config_toml: config.to_toml()?,
        case,
        train_rows: ctx.classical.as_ref().map_or(0, |c| c.train.len()),
        test_rows: ctx.classical.as_ref().map_or(0, |c| c.test.len()),
        models: BTreeMap::new(),
        defaults: models.iter().map(|&m| (m.to_string(), effective_settings(config, m))).collect(),
        errors: BTreeMap::new(),
        leakage,
        timings: BTreeMap::new(),
    };
    for (m, outcome, secs) in outcomes {
        bundle.timings.insert(m.to_string(), secs);
        match outcome {
            Ok(report) => {
                bundle.models.insert(m.to_string(), report);
            }
            Err(e) => {
                let e = e.in_model(m.as_str());
                log::error!("{e}");
                bundle.errors.insert(m.to_string(), e.to_string());
            }
        }
    }
    Ok(bundle)
}

/// Runs the experiment and writes CSV and JSON reports to its output folder.
pub fn execute(config: &ExperimentConfig) -> Result<(ReportBundle, Vec<PathBuf>)> {
    let bundle = run_experiment(config)?;
    let files = emit_reports(&bundle, &config.experiment.out_dir, &[ReportFormat::Json, ReportFormat::Csv])?;
    Ok((bundle, files))
}
