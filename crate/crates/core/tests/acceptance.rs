//! Acceptance checks, one per criterion. Runs without the libtest harness
//! so every criterion prints exactly one PASS or FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use slotcast::deepnets::{cnn_build, cnn_fit_eval, weekly_split, CnnNet, CnnSpec, CnnVariant, HeadSpec, LstmNet, SeqLayer, SeqLoss, WeeklyVariables, WEEKDAYS};
use slotcast::evalsuite::{cls_metrics, rmse_ratio_pct, roc_auc, ConfusionMatrix};
use slotcast::features::{Case, Design};
use slotcast::kernel_models::fit_knn;
use slotcast::linmod::{stepwise_select, Direction, StepwiseConfig};
use slotcast::mars::{fit_mars, MarsConfig};
use slotcast::market_data::{synth_ticks, to_daily_bars, SynthParams};
use slotcast::rng::rng_from;
use slotcast::runner::{audit_case_split, load_series, prepare, run_experiment, ExperimentConfig, PreparedData};
use slotcast::shallow_nn::{mlp_gradient, Mlp, OutputMode};
use slotcast::trees::{fit_cart, fit_random_forest, CartControls, CartNode, ForestConfig, Task};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, || format!("took {took:.2?}, budget {budget:?}"))
}

// ---------------------------------------------------------------- 1

/// Metrics straight from the counts, as percentages.
fn metric_oracle(tp: f64, fp: f64, tn: f64, fn_: f64) -> [f64; 6] {
    let sens = 100.0 * tp / (tp + fn_);
    let ppv = 100.0 * tp / (tp + fp);
    [sens, 100.0 * tn / (tn + fp), ppv, 100.0 * tn / (tn + fn_), 100.0 * (tp + tn) / (tp + fp + tn + fn_), 2.0 * sens * ppv / (sens + ppv)]
}

fn metric_arithmetic() -> Outcome {
    let started = Instant::now();
    // (tp, fp, tn, fn) and the published sensitivity, specificity, ppv,
    // npv, accuracy, F1
    let cases: [(&str, [u64; 4], [f64; 6]); 3] = [
        ("logit case I", [309, 10, 409, 17], [94.79, 97.61, 96.87, 96.01, 96.38, 95.82]),
        ("cart case I", [310, 8, 411, 16], [95.09, 98.09, 97.48, 96.25, 96.78, 96.27]),
        ("logit case III", [303, 26, 370, 26], [92.10, 93.43, 92.10, 93.43, 92.83, 92.10]),
    ];
    for (label, [tp, fp, tn, fn_], want) in cases {
        let got = cls_metrics(&ConfusionMatrix::new(tp, fp, tn, fn_)).values();
        let oracle = metric_oracle(tp as f64, fp as f64, tn as f64, fn_ as f64);
        for k in 0..6 {
            let g = got[k].ok_or_else(|| format!("{label}: metric {k} undefined"))?;
            ensure((g - want[k]).abs() <= 0.01, || format!("{label}: metric {k} = {g}, published {}", want[k]))?;
            ensure((g - oracle[k]).abs() < 1e-9, || format!("{label}: metric {k} = {g}, oracle {}", oracle[k]))?;
        }
    }
    within_budget(started, Duration::from_secs(1))?;
    Ok("3 confusion matrices x 6 metrics within 0.01".into())
}

// ---------------------------------------------------------------- 2

fn regression_ratio() -> Outcome {
    for (rmse, mean_abs, want) in [(0.0853, 0.6402, 13.32), (0.1749, 0.9286, 18.84)] {
        let got = rmse_ratio_pct(rmse, mean_abs).ok_or("ratio undefined")?;
        ensure((got - want).abs() <= 0.01, || format!("{rmse}/{mean_abs} = {got}%, want {want}%"))?;
        ensure((got - 100.0 * rmse / mean_abs).abs() < 1e-12, || "ratio formula".into())?;
    }
    Ok("13.32% and 18.84% within 0.01".into())
}

// ---------------------------------------------------------------- 3

const H: f64 = 1e-5;

/// Relative error with a small floor so near-zero gradients compare
/// absolutely.
fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

fn ann_worst(hidden: &[usize], output: OutputMode, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let mut net = Mlp::new(vec!["a".into(), "b".into(), "c".into()], hidden, output);
    for w in net.weights.iter_mut().flatten().flatten().chain(net.biases.iter_mut().flatten()) {
        *w = rng.random_range(-0.9..0.9);
    }
    let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = match output {
        OutputMode::Linear => (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        OutputMode::Sigmoid => (0..6).map(|i| f64::from(i % 2 == 0)).collect(),
    };
    let grad = mlp_gradient(&net, &rows, &y);
    let mut worst = 0.0f64;
    for l in 0..net.weights.len() {
        for o in 0..net.weights[l].len() {
            for i in 0..=net.weights[l][o].len() {
                // i == len stands for the bias of output o
                let (orig, analytic) = if i < net.weights[l][o].len() {
                    (net.weights[l][o][i], grad.weights[l][o][i])
                } else {
                    (net.biases[l][o], grad.biases[l][o])
                };
                let mut loss_at = |v: f64| {
                    if i < net.weights[l][o].len() {
                        net.weights[l][o][i] = v;
                    } else {
                        net.biases[l][o] = v;
                    }
                    net.loss(&rows, &y)
                };
                let fd = (loss_at(orig + H) - loss_at(orig - H)) / (2.0 * H);
                loss_at(orig);
                worst = worst.max(rel_err(fd, analytic));
            }
        }
    }
    worst
}

fn lstm_worst(loss: SeqLoss, seed: u64) -> f64 {
    let mut net = LstmNet::init(3, 4, seed);
    let mut rng = rng_from(seed ^ 0x5eed);
    for p in &mut net.params {
        *p += rng.random_range(-0.5..0.5);
    }
    let seqs: Vec<Vec<Vec<f64>>> = (0..4).map(|_| (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect()).collect();
    let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xs: Vec<&[Vec<f64>]> = seqs.iter().map(Vec::as_slice).collect();
    let (_, grad) = net.batch_gradient(&xs, &targets, loss).unwrap();
    let mut worst = 0.0f64;
    for k in 0..net.params.len() {
        let orig = net.params[k];
        net.params[k] = orig + H;
        let up = net.batch_gradient(&xs, &targets, loss).unwrap().0;
        net.params[k] = orig - H;
        let down = net.batch_gradient(&xs, &targets, loss).unwrap().0;
        net.params[k] = orig;
        worst = worst.max(rel_err((up - down) / (2.0 * H), grad[k]));
    }
    worst
}

fn cnn_worst(spec: &CnnSpec, seed: u64, max_checked: usize) -> f64 {
    let mut net = CnnNet::new(spec, seed).unwrap();
    let mut rng = rng_from(seed ^ 0xc0ffee);
    // positive biases keep ReLUs active and away from their kinks
    for p in &mut net.params {
        if *p == 0.0 {
            *p = rng.random_range(0.05..0.3);
        }
    }
    let inputs: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| (0..spec.input_len).map(|_| (0..spec.input_channels).map(|_| rng.random_range(0.0..1.0)).collect()).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..3).map(|_| (0..spec.output).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let xs: Vec<&[Vec<f64>]> = inputs.iter().map(Vec::as_slice).collect();
    let ts: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    let (_, grad) = net.batch_gradient(&xs, &ts).unwrap();
    let mut idx: Vec<usize> = (0..net.params.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(max_checked);
    let mut worst = 0.0f64;
    for k in idx {
        let orig = net.params[k];
        net.params[k] = orig + H;
        let up = net.batch_gradient(&xs, &ts).unwrap().0;
        net.params[k] = orig - H;
        let down = net.batch_gradient(&xs, &ts).unwrap().0;
        net.params[k] = orig;
        worst = worst.max(rel_err((up - down) / (2.0 * H), grad[k]));
    }
    worst
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    for seed in 0..3 {
        worst.push((format!("ann [3] linear s{seed}"), ann_worst(&[3], OutputMode::Linear, seed)));
        worst.push((format!("ann [4,3] linear s{seed}"), ann_worst(&[4, 3], OutputMode::Linear, seed)));
        worst.push((format!("ann [3] sigmoid s{seed}"), ann_worst(&[3], OutputMode::Sigmoid, seed)));
        worst.push((format!("lstm mse s{seed}"), lstm_worst(SeqLoss::Mse, seed)));
        worst.push((format!("lstm mae s{seed}"), lstm_worst(SeqLoss::Mae, seed)));
    }
    let toy = CnnSpec {
        variant: None,
        input_len: 8,
        input_channels: 2,
        heads: vec![HeadSpec {
            channels: vec![0, 1],
            layers: vec![SeqLayer::Conv { filters: 2, kernel: 3 }, SeqLayer::Pool { size: 2 }],
        }],
        dense: vec![4],
        output: 5,
        ..cnn_build(CnnVariant::M1)
    };
    for seed in 0..3 {
        worst.push((format!("cnn toy s{seed}"), cnn_worst(&toy, seed, usize::MAX)));
    }
    for v in CnnVariant::ALL {
        worst.push((format!("cnn {}", v.name()), cnn_worst(&cnn_build(v), 11, 300)));
    }
    let (label, max) = worst.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    ensure(*max < 1e-4, || format!("{label}: max relative error {max:e}"))?;
    within_budget(started, Duration::from_secs(30))?;
    Ok(format!("{} fixtures, max relative error {max:.1e} ({label})", worst.len()))
}

// ---------------------------------------------------------------- 4

fn gaussian_instance(seed: u64, n: usize, beta: &[f64], noise: f64) -> (Design, Vec<f64>) {
    let mut rng = rng_from(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| beta.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (Design::from_rows(rows).unwrap(), y)
}

/// Exhaustive AIC search with its own least squares. Returns the best
/// subset (as column names) and whether the runner-up is clearly worse.
fn best_subset(design: &Design, y: &[f64]) -> (Vec<String>, bool) {
    let (n, p) = (design.n_rows(), design.n_cols());
    let yv = DVector::from_column_slice(y);
    let mut scored: Vec<(f64, Vec<usize>)> = (0u32..1 << p)
        .map(|mask| {
            let cols: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
            let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { design.rows[i][cols[j - 1]] });
            let beta = x.clone().svd(true, true).solve(&yv, 1e-12).unwrap();
            let rss = (&yv - &x * beta).norm_squared();
            (n as f64 * (rss / n as f64).ln() + 2.0 * (cols.len() + 1) as f64, cols)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let unique = scored.len() < 2 || scored[1].0 - scored[0].0 > 1e-6;
    (scored[0].1.iter().map(|&j| design.names[j].clone()).collect(), unique)
}

fn stepwise_vs_best_subset() -> Result<String, String> {
    let (mut compared, mut skipped) = (0, 0);
    for seed in 0..100u64 {
        let mut rng = rng_from(1_000 + seed);
        let p = rng.random_range(2..=8usize);
        let n = rng.random_range(40..200usize);
        // a few strong effects, the rest absent
        let beta: Vec<f64> = (0..p).map(|j| if j < 2 { [2.5, -1.5][j] } else if rng.random_bool(0.25) { 1.0 } else { 0.0 }).collect();
        let (d, y) = gaussian_instance(seed, n, &beta, 1.5);
        let (oracle, unique) = best_subset(&d, &y);
        if !unique {
            skipped += 1;
            continue;
        }
        for dir in [Direction::Backward, Direction::Forward] {
            let fit = stepwise_select(&d, &y, dir, &StepwiseConfig::default()).map_err(|e| e.to_string())?;
            let mut got = fit.selected.clone();
            got.sort_by_key(|s| d.col_index(s));
            ensure(got == oracle, || format!("seed {seed} {dir:?}: stepwise {got:?}, best subset {oracle:?}"))?;
        }
        compared += 1;
    }
    Ok(format!("stepwise = best subset on {compared}/{compared} unique instances ({skipped} ties skipped)"))
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn auc_vs_pairwise() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = rng_from(seed);
        let n = rng.random_range(2..120usize);
        let levels = rng.random_range(2..30u32);
        let labels: Vec<u8> = (0..n).map(|i| if i < 2 { i as u8 } else { u8::from(rng.random_bool(0.4)) }).collect();
        // coarse scores force ties
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(rng.random_range(0..levels)) + 0.7 * f64::from(l)).collect();
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        worst = worst.max((got - pairwise_auc(&scores, &labels)).abs());
    }
    ensure(worst < 1e-12, || format!("AUC differs from pairwise oracle by {worst:e}"))?;
    Ok(format!("AUC max deviation {worst:.1e} over 200 instances"))
}

/// Best (feature, midpoint) by exhaustive scan; ties keep the lower feature
/// and threshold.
fn split_scan(rows: &[Vec<f64>], y: &[f64], idx: &[usize], task: Task, min_node: usize) -> Option<(usize, f64)> {
    let impurity = |sel: &[usize]| -> f64 {
        let n = sel.len() as f64;
        let mean = sel.iter().map(|&i| y[i]).sum::<f64>() / n;
        match task {
            Task::Classification => n * 2.0 * mean * (1.0 - mean),
            Task::Regression => sel.iter().map(|&i| (y[i] - mean).powi(2)).sum(),
        }
    };
    let parent = impurity(idx);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = idx.iter().map(|&i| rows[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][f] <= t);
            if l.len() < min_node || r.len() < min_node {
                continue;
            }
            let gain = parent - impurity(&l) - impurity(&r);
            if best.is_none_or(|(g, _, _)| gain > g + 1e-9 * parent.max(1.0)) {
                best = Some((gain, f, t));
            }
        }
    }
    best.filter(|b| b.0 > 1e-12 * parent.max(1.0)).map(|(_, f, t)| (f, t))
}

/// Checks every node of a grown tree against the scan on the rows that
/// reach it.
fn check_node(node: &CartNode, rows: &[Vec<f64>], y: &[f64], idx: &[usize], task: Task, min_node: usize, depth: usize, max_depth: usize) -> Result<usize, String> {
    let oracle = if depth < max_depth && idx.len() >= 2 * min_node { split_scan(rows, y, idx, task, min_node) } else { None };
    match node {
        CartNode::Leaf { .. } => {
            ensure(oracle.is_none(), || format!("leaf at depth {depth} but scan finds {oracle:?}"))?;
            Ok(0)
        }
        CartNode::Split { feature, threshold, left, right } => {
            ensure(oracle == Some((*feature, *threshold)), || format!("split ({feature}, {threshold}) at depth {depth}, scan {oracle:?}"))?;
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][*feature] <= *threshold);
            Ok(1 + check_node(left, rows, y, &l, task, min_node, depth + 1, max_depth)? + check_node(right, rows, y, &r, task, min_node, depth + 1, max_depth)?)
        }
    }
}

fn cart_vs_scan() -> Outcome {
    let mut splits = 0;
    for seed in 0..60u64 {
        let mut rng = rng_from(seed);
        let (n, p) = (rng.random_range(20..80usize), rng.random_range(1..5usize));
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| f64::from(rng.random_range(0..15u8))).collect()).collect();
        let task = if seed % 2 == 0 { Task::Classification } else { Task::Regression };
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                let signal = r[0] + rng.random_range(0.0..8.0);
                match task {
                    Task::Classification => f64::from(u8::from(signal > 10.0)),
                    Task::Regression => signal,
                }
            })
            .collect();
        let controls = CartControls {
            min_node: 1 + (seed % 4) as usize,
            max_depth: 3,
            min_impurity_decrease: 0.0,
            mtry: None,
        };
        let cart = fit_cart(&Design::from_rows(rows.clone()).unwrap(), &y, task, &controls).map_err(|e| e.to_string())?;
        let idx: Vec<usize> = (0..n).collect();
        splits += check_node(&cart.root, &rows, &y, &idx, task, controls.min_node, 0, controls.max_depth).map_err(|e| format!("seed {seed} {task:?}: {e}"))?;
    }
    Ok(format!("{splits} CART splits equal the exhaustive scan"))
}

/// Noiseless additive hinge targets on a full factorial grid, so no
/// feature's term leaks into another's knot search.
fn mars_knots() -> Outcome {
    let mut recovered = 0;
    for seed in 0..60u64 {
        let mut rng = rng_from(seed);
        let p = 1 + (seed % 3) as usize;
        let levels = [41usize, 21, 11][p - 1];
        let step = 4.0 / (levels - 1) as f64;
        let mut rows: Vec<Vec<f64>> = vec![Vec::new()];
        for _ in 0..p {
            rows = rows
                .into_iter()
                .flat_map(|r| {
                    (0..levels).map(move |l| {
                        let mut r = r.clone();
                        r.push(l as f64 * step);
                        r
                    })
                })
                .collect();
        }
        // one hinge per feature, knot anywhere in the interior
        let truth: Vec<(f64, f64, bool)> = (0..p)
            .map(|_| (rng.random_range(0.8..3.2), rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }, rng.random_bool(0.5)))
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| truth.iter().enumerate().map(|(f, &(t, c, plus))| c * if plus { (r[f] - t).max(0.0) } else { (t - r[f]).max(0.0) }).sum())
            .collect();
        let fit = fit_mars(&Design::from_rows(rows).unwrap(), &y, &MarsConfig::default()).map_err(|e| e.to_string())?;
        let knots = fit.knots();
        for (f, &(t, _, _)) in truth.iter().enumerate() {
            ensure(knots.iter().any(|&(kf, kt)| kf == f && (kt - t).abs() <= step + 1e-9), || format!("seed {seed}: feature {f} knot {t:.3} not in {knots:?}"))?;
            recovered += 1;
        }
    }
    Ok(format!("{recovered} hinge knots recovered within one grid step"))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let parts = [stepwise_vs_best_subset()?, auc_vs_pairwise()?, cart_vs_scan()?, mars_knots()?];
    within_budget(started, Duration::from_secs(120))?;
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------- 5

fn determinism() -> Outcome {
    let config = ExperimentConfig::synthetic(2024, 520);
    let first = run_experiment(&config).map_err(|e| e.to_string())?;
    ensure(first.errors.is_empty(), || format!("model errors: {:?}", first.errors))?;
    let cls = first.models.values().filter(|m| m.classification.is_some()).count();
    let reg = first.models.values().filter(|m| m.regression.is_some()).count();
    ensure((cls, reg) == (8, 8), || format!("{cls} classifiers and {reg} regressors"))?;
    // rerun on a single worker thread so scheduling differs too
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let second = pool.install(|| run_experiment(&config)).map_err(|e| e.to_string())?;
    let (a, b) = (first.to_json().map_err(|e| e.to_string())?, second.to_json().map_err(|e| e.to_string())?);
    ensure(a == b, || "JSON bundles differ".into())?;
    Ok(format!("16 model reports, two runs byte-identical ({} bytes)", a.len()))
}

// ---------------------------------------------------------------- 6

fn two_years() -> Result<(ExperimentConfig, PreparedData), String> {
    let mut config = ExperimentConfig::synthetic(31, 520);
    config.experiment.case = Case::III;
    let data = prepare(&load_series(&config.data).map_err(|e| e.to_string())?, &config).map_err(|e| e.to_string())?;
    Ok((config, data))
}

fn leakage_audit() -> Outcome {
    let (_, data) = two_years()?;
    let [Some(first), Some(second)] = &data.years else {
        return Err("synthetic run does not span two years".into());
    };
    let train_dates: Vec<_> = first.dataset.rows.iter().map(|r| r.date.ok_or("undated training row")).collect::<Result<_, _>>()?;
    let test_dates: Vec<_> = second.dataset.rows.iter().map(|r| r.date.ok_or("undated test row")).collect::<Result<_, _>>()?;
    let (train_max, test_min) = (train_dates.iter().max().unwrap(), test_dates.iter().min().unwrap());
    ensure(train_max < test_min, || format!("training reaches {train_max}, test starts {test_min}"))?;
    ensure(train_dates.iter().all(|d| test_dates.iter().all(|t| d < t)), || "a training row is not earlier than every test row".into())?;
    ensure(audit_case_split(&first.dataset, &second.dataset, Case::III) == Some(true), || "runner audit disagrees".into())?;

    let mut checked = 0;
    for v in CnnVariant::ALL {
        let split = weekly_split(&data.daily, v.history_weeks(), v.variables(), None).map_err(|e| e.to_string())?;
        for s in split.train.iter().chain(&split.test) {
            let target_start = s.target_dates.0;
            ensure(s.input_dates.1 < target_start, || format!("{}: input to {} but target from {target_start}", v.name(), s.input_dates.1))?;
            // every input row must be the values of a bar dated before the
            // target week
            for row in &s.input {
                let found = data.daily.iter().filter(|b| b.date < target_start).any(|b| {
                    let all = [b.open, b.high, b.low, b.close, b.volume as f64];
                    match v.variables() {
                        WeeklyVariables::OpenOnly => row[..] == all[..1],
                        WeeklyVariables::All => row[..] == all[..],
                    }
                });
                ensure(found, || format!("{}: input row {row:?} is not from a bar before {target_start}", v.name()))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{} training rows precede {} test rows; {checked} CNN samples causal", train_dates.len(), test_dates.len()))
}

// ---------------------------------------------------------------- 7

fn training_accuracy(predicted: &[u8], actual: &[u8]) -> f64 {
    predicted.iter().zip(actual).filter(|(p, a)| p == a).count() as f64 / actual.len() as f64
}

fn learnability() -> Outcome {
    let started = Instant::now();
    let mut config = ExperimentConfig::synthetic(5, 250);
    config.experiment.case = Case::I;
    let synth = config.data.synth.as_mut().unwrap();
    // strongly persistent slot drift, quiet overnight moves and bars
    synth.params = SynthParams {
        slot_momentum: 0.97,
        volatility: 0.001,
        jitter: 0.0002,
        ..SynthParams::default()
    };
    let data = prepare(&load_series(&config.data).map_err(|e| e.to_string())?, &config).map_err(|e| e.to_string())?;
    let ds = &data.years[0].as_ref().ok_or("no data")?.dataset;
    let x = ds.design();
    let labels = &ds.target_cls;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();

    let forest = ForestConfig {
        n_trees: 500,
        mtry: 3,
        ..ForestConfig::default()
    };
    let rf = fit_random_forest(&x, &y, Task::Classification, &forest, 1).map_err(|e| e.to_string())?;
    let rf_pred: Vec<u8> = rf.predict(&x).map_err(|e| e.to_string())?.iter().map(|&p| u8::from(p > 0.5)).collect();
    let rf_acc = training_accuracy(&rf_pred, labels);
    let knn_acc = |k: usize| -> Result<f64, String> {
        let m = fit_knn(&x, labels, k).map_err(|e| e.to_string())?;
        Ok(training_accuracy(&m.classify(&x).map_err(|e| e.to_string())?, labels))
    };
    let (k3, k1) = (knn_acc(3)?, knn_acc(1)?);
    // persistence rule: the next move has the sign of the current one
    let persist: Vec<u8> = ds.rows.iter().map(|r| u8::from(r.open_perc > 0.0)).collect();
    let summary = format!(
        "{} rows: rf {:.2}%, knn k=3 {:.2}%, knn k=1 {:.2}% (sign persistence {:.2}%)",
        labels.len(),
        100.0 * rf_acc,
        100.0 * k3,
        100.0 * k1,
        100.0 * training_accuracy(&persist, labels)
    );
    ensure(rf_acc >= 0.9 && k3 >= 0.9 && k1 == 1.0, || summary.clone())?;
    within_budget(started, Duration::from_secs(120))?;
    Ok(summary)
}

// ---------------------------------------------------------------- 8

fn cnn_harness() -> Outcome {
    let ticks = synth_ticks(17, 260, &SynthParams::default()).map_err(|e| e.to_string())?;
    let bars = to_daily_bars(&ticks).map_err(|e| e.to_string())?;
    let mut shapes = Vec::new();
    for v in [CnnVariant::M1, CnnVariant::M4] {
        let split = weekly_split(&bars, v.history_weeks(), v.variables(), None).map_err(|e| e.to_string())?;
        let report = cnn_fit_eval(&CnnSpec { seed: 3, ..cnn_build(v) }, &split, 20).map_err(|e| e.to_string())?;
        let csv = report.to_csv();
        let lines: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
        let mut want_header = vec!["round", "overall_rmse"];
        want_header.extend(WEEKDAYS);
        want_header.push("exec_seconds");
        ensure(lines[0] == want_header, || format!("header {:?}", lines[0]))?;
        let labels: Vec<&str> = lines[1..].iter().map(|l| l[0]).collect();
        let mut want_labels: Vec<String> = (1..=20).map(|r| r.to_string()).collect();
        want_labels.extend(["Mean", "SD", "Min", "Max", "Ratio"].map(String::from));
        ensure(labels == want_labels, || format!("{}: row labels {labels:?}", v.name()))?;
        ensure(lines.iter().all(|l| l.len() == 8), || "ragged rows".into())?;

        // columns 1..=6: overall then Mon..Fri
        let value = |row: usize, col: usize| -> f64 { lines[row][col].parse().unwrap() };
        for col in 1..=6 {
            let rounds: Vec<f64> = (1..=20).map(|r| value(r, col)).collect();
            let (min, max) = (value(23, col), value(24, col));
            ensure(rounds.iter().all(|&r| min <= r && r <= max), || format!("{}: column {col} round outside [min, max]", v.name()))?;
            ensure(rounds.contains(&min) && rounds.contains(&max), || format!("{}: column {col} min/max not attained", v.name()))?;
            let mean = rounds.iter().sum::<f64>() / 20.0;
            let sd = (rounds.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
            ensure((value(21, col) - mean).abs() <= 1e-9 * mean.abs().max(1.0), || format!("{}: column {col} mean", v.name()))?;
            ensure((value(22, col) - sd).abs() <= 1e-9 * sd.max(1.0), || format!("{}: column {col} sd", v.name()))?;
        }
        shapes.push(format!("{} {} rows", v.name(), labels.len()));
    }
    Ok(format!("{}; Min <= every round <= Max", shapes.join(", ")))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("metric arithmetic", metric_arithmetic),
        ("regression ratio", regression_ratio),
        ("gradient suite", gradient_suite),
        ("oracle equivalence", oracle_equivalence),
        ("determinism", determinism),
        ("leakage audit", leakage_audit),
        ("learnability", learnability),
        ("cnn harness shape", cnn_harness),
    ];
    // keep panics from interleaving with the result lines
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} [{secs:.1}s] {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} [{secs:.1}s] {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
