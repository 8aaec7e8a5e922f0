use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{check_controls, check_targets, fit_cart_weighted, Builder, Cart, CartControls, Task};
use super::sexpr::Sexp;
use crate::error::{Error, Result};
use crate::features::Design;
use crate::rng::{rng_from, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bag,
    AdaBoost,
    GradBoost,
    RandomForest,
}

impl EnsembleKind {
    fn tag(self) -> &'static str {
        match self {
            EnsembleKind::Bag => "bag",
            EnsembleKind::AdaBoost => "adaboost",
            EnsembleKind::GradBoost => "gradboost",
            EnsembleKind::RandomForest => "rf",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "bag" => EnsembleKind::Bag,
            "adaboost" => EnsembleKind::AdaBoost,
            "gradboost" => EnsembleKind::GradBoost,
            "rf" => EnsembleKind::RandomForest,
            other => return Err(Error::BadParams(format!("unknown ensemble kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub task: Task,
    pub members: Vec<Cart>,
    /// Vote weights (AdaBoost), learning rate (gradient boosting) or 1.
    pub member_weights: Vec<f64>,
    /// Starting prediction for gradient boosting, 0 otherwise.
    pub base: f64,
    /// Out-of-bag misclassification rate (classification) or mean squared
    /// error (regression); random forest only.
    pub oob_error: Option<f64>,
    pub seed: u64,
    /// Boosting stopped before the requested number of rounds.
    pub stopped_early: bool,
    /// Per-round weighted error (AdaBoost) or training RSS (gradient boosting).
    pub round_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BagConfig {
    pub n_bags: usize,
    /// When false every member sees the full training set in order.
    pub bootstrap: bool,
    pub controls: CartControls,
}

impl Default for BagConfig {
    fn default() -> Self {
        Self {
            n_bags: 25,
            bootstrap: true,
            controls: CartControls::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaBoostConfig {
    pub rounds: usize,
    pub controls: CartControls,
}

impl Default for AdaBoostConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            controls: CartControls {
                min_node: 1,
                max_depth: 3,
                ..CartControls::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradBoostConfig {
    pub rounds: usize,
    pub learn_rate: f64,
    pub controls: CartControls,
}

impl Default for GradBoostConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            learn_rate: 0.1,
            controls: CartControls {
                max_depth: 4,
                ..CartControls::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub bootstrap: bool,
    /// Minimum rows per child; `None` picks 1 for classification and 5 for
    /// regression.
    pub min_node: Option<usize>,
    pub max_depth: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: 3,
            bootstrap: true,
            min_node: None,
            max_depth: 30,
        }
    }
}

fn bootstrap_sample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn grow_member(design: &Design, y: &[f64], task: Task, controls: CartControls, idx: &mut [usize], seed: u64) -> Cart {
    let ones = vec![1.0; y.len()];
    let mut rng = rng_from(seed);
    let root = Builder::new(&design.rows, y, &ones, task, controls, Some(&mut rng)).grow(idx);
    Cart {
        task,
        names: design.names.clone(),
        root,
    }
}

fn check_rows(design: &Design, y: &[f64], needed: usize) -> Result<()> {
    if y.len() != design.n_rows() {
        return Err(Error::LengthMismatch { left: design.n_rows(), right: y.len() });
    }
    if design.n_rows() < needed {
        return Err(Error::TooFewRows { needed, got: design.n_rows() });
    }
    Ok(())
}

/// Bootstrap aggregation of CART trees. Member `i` draws its sample from
/// `sub_seed(seed, i)`, so members can be grown in parallel.
pub fn fit_bagging(design: &Design, y: &[f64], task: Task, config: &BagConfig, seed: u64) -> Result<EnsembleModel> {
    if config.n_bags == 0 {
        return Err(Error::BadParams("n_bags must be >= 1".into()));
    }
    check_controls(&config.controls, design.n_cols())?;
    check_rows(design, y, 2 * config.controls.min_node.max(1))?;
    check_targets(y, task)?;
    let n = y.len();
    let members: Vec<Cart> = (0..config.n_bags)
        .into_par_iter()
        .map(|b| {
            let s = sub_seed(seed, b as u64);
            let mut idx = if config.bootstrap { bootstrap_sample(n, s) } else { (0..n).collect() };
            grow_member(design, y, task, config.controls, &mut idx, sub_seed(s, 1))
        })
        .collect();
    Ok(EnsembleModel {
        kind: EnsembleKind::Bag,
        task,
        member_weights: vec![1.0; members.len()],
        members,
        base: 0.0,
        oob_error: None,
        seed,
        stopped_early: false,
        round_trace: Vec::new(),
    })
}

/// Random forest: bootstrap samples plus `mtry` fresh candidate features at
/// every node, with the out-of-bag error recorded on the model.
pub fn fit_random_forest(design: &Design, y: &[f64], task: Task, config: &ForestConfig, seed: u64) -> Result<EnsembleModel> {
    let p = design.n_cols();
    if config.n_trees == 0 {
        return Err(Error::BadParams("n_trees must be >= 1".into()));
    }
    if config.mtry == 0 || config.mtry > p {
        return Err(Error::BadParams(format!("mtry must be in 1..={p}, got {}", config.mtry)));
    }
    let min_node = config.min_node.unwrap_or(match task {
        Task::Classification => 1,
        Task::Regression => 5,
    });
    let controls = CartControls {
        min_node,
        max_depth: config.max_depth,
        min_impurity_decrease: 0.0,
        mtry: Some(config.mtry),
    };
    check_rows(design, y, 2 * min_node.max(1))?;
    check_targets(y, task)?;
    let n = y.len();
    let grown: Vec<(Cart, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let s = sub_seed(seed, t as u64);
            let mut idx = if config.bootstrap { bootstrap_sample(n, s) } else { (0..n).collect() };
            let mut in_bag = vec![false; n];
            idx.iter().for_each(|&i| in_bag[i] = true);
            (grow_member(design, y, task, controls, &mut idx, sub_seed(s, 1)), in_bag)
        })
        .collect();
    let oob_error = oob(design, y, task, &grown);
    let members: Vec<Cart> = grown.into_iter().map(|(c, _)| c).collect();
    Ok(EnsembleModel {
        kind: EnsembleKind::RandomForest,
        task,
        member_weights: vec![1.0; members.len()],
        members,
        base: 0.0,
        oob_error,
        seed,
        stopped_early: false,
        round_trace: Vec::new(),
    })
}

fn oob(design: &Design, y: &[f64], task: Task, grown: &[(Cart, Vec<bool>)]) -> Option<f64> {
    let mut loss = 0.0;
    let mut counted = 0usize;
    for (i, row) in design.rows.iter().enumerate() {
        let preds: Vec<f64> = grown.iter().filter(|(_, bag)| !bag[i]).map(|(c, _)| c.predict_row(row)).collect();
        if preds.is_empty() {
            continue;
        }
        counted += 1;
        loss += match task {
            Task::Classification => f64::from(u8::from(majority(&preds) != y[i])),
            Task::Regression => {
                let m = preds.iter().sum::<f64>() / preds.len() as f64;
                (m - y[i]).powi(2)
            }
        };
    }
    (counted > 0).then(|| loss / counted as f64)
}

/// Majority class of 0/1 votes; ties go to class 0.
fn majority(votes: &[f64]) -> f64 {
    let ones = votes.iter().filter(|&&v| v == 1.0).count();
    f64::from(u8::from(2 * ones > votes.len()))
}

/// AdaBoost.M1 with weighted-Gini trees (depth 3 by default). Stops when a
/// round has zero weighted error or error at least one half; a first round
/// that fails is kept with unit weight so the ensemble is never empty.
pub fn fit_adaboost(design: &Design, y: &[f64], config: &AdaBoostConfig, seed: u64) -> Result<EnsembleModel> {
    if config.rounds == 0 {
        return Err(Error::BadParams("rounds must be >= 1".into()));
    }
    check_controls(&config.controls, design.n_cols())?;
    check_rows(design, y, 2 * config.controls.min_node.max(1))?;
    check_targets(y, Task::Classification)?;
    let n = y.len();
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }
    let mut w = vec![1.0 / n as f64; n];
    let mut members = Vec::new();
    let mut alphas = Vec::new();
    let mut trace = Vec::new();
    let mut stopped_early = false;
    for round in 0..config.rounds {
        let tree = fit_cart_weighted(design, y, Some(&w), Task::Classification, &config.controls, None)?;
        let miss: Vec<bool> = design.rows.iter().zip(y).map(|(r, &t)| tree.predict_row(r) != t).collect();
        let eps: f64 = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, wi)| wi).sum();
        trace.push(eps);
        if eps >= 0.5 || eps <= 0.0 {
            if round == 0 {
                members.push(tree);
                alphas.push(1.0);
            }
            stopped_early = round + 1 < config.rounds || eps >= 0.5;
            log::debug!("adaboost stopped at round {round} with weighted error {eps}");
            break;
        }
        let alpha = 0.5 * ((1.0 - eps) / eps).ln();
        for (wi, &m) in w.iter_mut().zip(&miss) {
            *wi *= if m { alpha.exp() } else { (-alpha).exp() };
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
        members.push(tree);
        alphas.push(alpha);
    }
    Ok(EnsembleModel {
        kind: EnsembleKind::AdaBoost,
        task: Task::Classification,
        members,
        member_weights: alphas,
        base: 0.0,
        oob_error: None,
        seed,
        stopped_early,
        round_trace: trace,
    })
}

/// Squared-error gradient boosting: start from the mean, then each round
/// fits a regression tree to the residuals and adds `learn_rate` times it.
pub fn fit_gradboost(design: &Design, y: &[f64], config: &GradBoostConfig, seed: u64) -> Result<EnsembleModel> {
    if config.rounds == 0 {
        return Err(Error::BadParams("rounds must be >= 1".into()));
    }
    if !(config.learn_rate > 0.0 && config.learn_rate <= 1.0) {
        return Err(Error::BadParams("learn_rate must be in (0, 1]".into()));
    }
    check_controls(&config.controls, design.n_cols())?;
    check_rows(design, y, 2 * config.controls.min_node.max(1))?;
    check_targets(y, Task::Regression)?;
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut f = vec![base; y.len()];
    let mut members = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..config.rounds {
        let resid: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let tree = fit_cart_weighted(design, &resid, None, Task::Regression, &config.controls, None)?;
        for (fi, row) in f.iter_mut().zip(&design.rows) {
            *fi += config.learn_rate * tree.predict_row(row);
        }
        trace.push(y.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum());
        members.push(tree);
    }
    Ok(EnsembleModel {
        kind: EnsembleKind::GradBoost,
        task: Task::Regression,
        member_weights: vec![config.learn_rate; members.len()],
        members,
        base,
        oob_error: None,
        seed,
        stopped_early: false,
        round_trace: trace,
    })
}

impl EnsembleModel {
    /// Number of members voting for class 0 and class 1 on each row.
    pub fn votes(&self, design: &Design) -> Result<Vec<(usize, usize)>> {
        let sub = design.select_names(&self.members[0].names)?;
        Ok(sub
            .rows
            .iter()
            .map(|r| {
                let ones = self.members.iter().filter(|m| m.predict_row(r) == 1.0).count();
                (self.members.len() - ones, ones)
            })
            .collect())
    }

    /// Continuous score per row: class-1 vote share (bagging, forest),
    /// normalized weighted margin in [-1, 1] (AdaBoost), or the regression
    /// prediction.
    pub fn predict_scores(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.members[0].names)?;
        let total_w: f64 = self.member_weights.iter().sum();
        Ok(sub
            .rows
            .iter()
            .map(|r| {
                let preds = self.members.iter().map(|m| m.predict_row(r));
                match (self.kind, self.task) {
                    (EnsembleKind::AdaBoost, _) => {
                        preds.zip(&self.member_weights).map(|(p, a)| a * (2.0 * p - 1.0)).sum::<f64>() / total_w
                    }
                    (EnsembleKind::GradBoost, _) => self.base + preds.zip(&self.member_weights).map(|(p, lr)| lr * p).sum::<f64>(),
                    (_, _) => preds.sum::<f64>() / self.members.len() as f64,
                }
            })
            .collect())
    }

    /// Labels for classification (majority vote with ties to class 0, or the
    /// sign of the AdaBoost margin), values for regression.
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let scores = self.predict_scores(design)?;
        Ok(match (self.kind, self.task) {
            (EnsembleKind::AdaBoost, _) => scores.into_iter().map(|s| f64::from(u8::from(s > 0.0))).collect(),
            (_, Task::Classification) => scores.into_iter().map(|s| f64::from(u8::from(s > 0.5))).collect(),
            (_, Task::Regression) => scores,
        })
    }

    pub fn to_sexpr(&self) -> String {
        let mut items = vec![
            Sexp::atom("ensemble"),
            Sexp::atom(self.kind.tag()),
            Sexp::list(vec![Sexp::atom("seed"), Sexp::atom(self.seed.to_string())]),
            Sexp::list(vec![Sexp::atom("base"), Sexp::float(self.base)]),
            Sexp::list(vec![
                Sexp::atom("oob"),
                self.oob_error.map_or_else(|| Sexp::atom("none"), Sexp::float),
            ]),
            Sexp::list(vec![Sexp::atom("stopped_early"), Sexp::atom(self.stopped_early.to_string())]),
        ];
        let mut trace = vec![Sexp::atom("trace")];
        trace.extend(self.round_trace.iter().map(|&v| Sexp::float(v)));
        items.push(Sexp::list(trace));
        for (m, w) in self.members.iter().zip(&self.member_weights) {
            items.push(Sexp::list(vec![Sexp::atom("member"), Sexp::float(*w), m.to_sexp()]));
        }
        Sexp::list(items).to_string()
    }

    pub fn from_sexpr(text: &str) -> Result<Self> {
        let s = Sexp::parse_text(text)?;
        let items = s.as_list()?;
        let bad = || Error::BadParams("malformed ensemble".into());
        if items.len() < 7 || items[0].as_atom()? != "ensemble" {
            return Err(bad());
        }
        let field = |i: usize, name: &str| -> Result<&[Sexp]> {
            let l = items[i].as_list()?;
            if l.first().map(Sexp::as_atom).transpose()? != Some(name) {
                return Err(bad());
            }
            Ok(&l[1..])
        };
        let seed = field(2, "seed")?.first().ok_or_else(bad)?.parse()?;
        let base = field(3, "base")?.first().ok_or_else(bad)?.parse()?;
        let oob_error = match field(4, "oob")?.first().ok_or_else(bad)?.as_atom()? {
            "none" => None,
            v => Some(v.parse().map_err(|_| bad())?),
        };
        let stopped_early = field(5, "stopped_early")?.first().ok_or_else(bad)?.parse()?;
        let round_trace = field(6, "trace")?.iter().map(Sexp::parse).collect::<Result<_>>()?;
        let mut members = Vec::new();
        let mut member_weights = Vec::new();
        for m in &items[7..] {
            let l = m.as_list()?;
            if l.len() != 3 || l[0].as_atom()? != "member" {
                return Err(bad());
            }
            member_weights.push(l[1].parse()?);
            members.push(Cart::from_sexp(&l[2])?);
        }
        let task = members.first().ok_or_else(bad)?.task;
        Ok(EnsembleModel {
            kind: EnsembleKind::from_tag(items[1].as_atom()?)?,
            task,
            members,
            member_weights,
            base,
            oob_error,
            seed,
            stopped_early,
            round_trace,
        })
    }
}
