use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::sexpr::Sexp;
use crate::error::{Error, Result};
use crate::features::Design;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    fn tag(self) -> &'static str {
        match self {
            Task::Classification => "cls",
            Task::Regression => "reg",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "cls" => Ok(Task::Classification),
            "reg" => Ok(Task::Regression),
            other => Err(Error::BadParams(format!("unknown task tag {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartControls {
    /// Minimum number of rows in each child of a split.
    pub min_node: usize,
    pub max_depth: usize,
    /// Minimum impurity decrease, per unit of total training weight.
    pub min_impurity_decrease: f64,
    /// Features drawn at random at every node; `None` scans all of them.
    pub mtry: Option<usize>,
}

impl Default for CartControls {
    fn default() -> Self {
        Self {
            min_node: 5,
            max_depth: 30,
            min_impurity_decrease: 1e-7,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CartNode {
    /// `value` is the (weighted) share of class 1 for classification and the
    /// (weighted) mean target for regression.
    Leaf { value: f64, n: usize },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
}

impl CartNode {
    pub fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 1,
            CartNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Leaf value and leaf number (left-to-right order) reached by `row`,
    /// plus the number of comparisons made on the way.
    pub fn route(&self, row: &[f64]) -> (f64, usize, usize) {
        let mut node = self;
        let mut leaf_offset = 0;
        let mut steps = 0;
        loop {
            match node {
                CartNode::Leaf { value, .. } => return (*value, leaf_offset, steps),
                CartNode::Split { feature, threshold, left, right } => {
                    steps += 1;
                    if row[*feature] <= *threshold {
                        node = left;
                    } else {
                        leaf_offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    fn to_sexp(&self) -> Sexp {
        match self {
            CartNode::Leaf { value, n } => Sexp::list(vec![Sexp::atom("leaf"), Sexp::float(*value), Sexp::atom(n.to_string())]),
            CartNode::Split { feature, threshold, left, right } => Sexp::list(vec![
                Sexp::atom("split"),
                Sexp::atom(feature.to_string()),
                Sexp::float(*threshold),
                left.to_sexp(),
                right.to_sexp(),
            ]),
        }
    }

    fn from_sexp(s: &Sexp) -> Result<Self> {
        let items = s.as_list()?;
        match items.first().map(Sexp::as_atom).transpose()? {
            Some("leaf") if items.len() == 3 => Ok(CartNode::Leaf {
                value: items[1].parse()?,
                n: items[2].parse()?,
            }),
            Some("split") if items.len() == 5 => Ok(CartNode::Split {
                feature: items[1].parse()?,
                threshold: items[2].parse()?,
                left: Box::new(CartNode::from_sexp(&items[3])?),
                right: Box::new(CartNode::from_sexp(&items[4])?),
            }),
            _ => Err(Error::BadParams("malformed tree node".into())),
        }
    }
}

/// A fitted binary decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cart {
    pub task: Task,
    pub names: Vec<String>,
    pub root: CartNode,
}

impl Cart {
    /// Raw leaf values: class-1 share or regression mean.
    pub fn predict_values(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.names)?;
        Ok(sub.rows.iter().map(|r| self.root.route(r).0).collect())
    }

    /// Labels (0/1) for classification, means for regression. A class-1
    /// share of exactly one half predicts class 0.
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let values = self.predict_values(design)?;
        Ok(match self.task {
            Task::Classification => values.into_iter().map(|p| if p > 0.5 { 1.0 } else { 0.0 }).collect(),
            Task::Regression => values,
        })
    }

    pub(crate) fn predict_row(&self, row: &[f64]) -> f64 {
        let v = self.root.route(row).0;
        match self.task {
            Task::Classification => f64::from(u8::from(v > 0.5)),
            Task::Regression => v,
        }
    }

    pub(crate) fn to_sexp(&self) -> Sexp {
        let mut names = vec![Sexp::atom("names")];
        names.extend(self.names.iter().map(|n| Sexp::atom(n.clone())));
        Sexp::list(vec![Sexp::atom("cart"), Sexp::atom(self.task.tag()), Sexp::list(names), self.root.to_sexp()])
    }

    pub(crate) fn from_sexp(s: &Sexp) -> Result<Self> {
        let items = s.as_list()?;
        if items.len() != 4 || items[0].as_atom()? != "cart" {
            return Err(Error::BadParams("expected (cart ...)".into()));
        }
        let names = items[2].as_list()?;
        if names.first().map(Sexp::as_atom).transpose()? != Some("names") {
            return Err(Error::BadParams("expected (names ...)".into()));
        }
        Ok(Cart {
            task: Task::from_tag(items[1].as_atom()?)?,
            names: names[1..].iter().map(|n| n.as_atom().map(str::to_string)).collect::<Result<_>>()?,
            root: CartNode::from_sexp(&items[3])?,
        })
    }

    /// Nested s-expression form, e.g. `(cart cls (names a b) (split 0 3.5 (leaf 0 3) (leaf 1 3)))`.
    pub fn to_sexpr(&self) -> String {
        self.to_sexp().to_string()
    }

    pub fn from_sexpr(text: &str) -> Result<Self> {
        Cart::from_sexp(&Sexp::parse_text(text)?)
    }
}

pub(crate) fn check_targets(y: &[f64], task: Task) -> Result<()> {
    if task == Task::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::BadParams("classification targets must be 0 or 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadParams("non-finite target".into()));
    }
    Ok(())
}

/// Weighted node statistics.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    w: f64,
    wy: f64,
    wyy: f64,
}

impl Stats {
    fn add(&mut self, w: f64, y: f64) {
        self.w += w;
        self.wy += w * y;
        self.wyy += w * y * y;
    }

    fn sub(self, o: Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            wy: self.wy - o.wy,
            wyy: self.wyy - o.wyy,
        }
    }

    /// Total weighted impurity: W·Gini for 0/1 labels, SSE for regression.
    fn impurity(&self, task: Task) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        match task {
            Task::Classification => {
                let w1 = self.wy;
                let w0 = self.w - w1;
                (2.0 * w0 * w1 / self.w).max(0.0)
            }
            Task::Regression => (self.wyy - self.wy * self.wy / self.w).max(0.0),
        }
    }

    fn value(&self) -> f64 {
        if self.w > 0.0 {
            self.wy / self.w
        } else {
            0.0
        }
    }
}

pub(crate) struct Builder<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub task: Task,
    pub controls: CartControls,
    pub rng: Option<&'a mut Rng>,
    total_w: f64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<'a> Builder<'a> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [f64], w: &'a [f64], task: Task, controls: CartControls, rng: Option<&'a mut Rng>) -> Self {
        Self {
            x,
            y,
            w,
            task,
            controls,
            rng,
            total_w: 0.0,
        }
    }

    /// Grows a tree over `idx` (row indices, repeats allowed).
    pub fn grow(&mut self, idx: &mut [usize]) -> CartNode {
        self.total_w = idx.iter().map(|&i| self.w[i]).sum();
        self.build(idx, 0)
    }

    fn stats(&self, idx: &[usize]) -> Stats {
        let mut s = Stats::default();
        for &i in idx {
            s.add(self.w[i], self.y[i]);
        }
        s
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> CartNode {
        let stats = self.stats(idx);
        let leaf = CartNode::Leaf {
            value: stats.value(),
            n: idx.len(),
        };
        let parent = stats.impurity(self.task);
        if depth >= self.controls.max_depth || idx.len() < 2 * self.controls.min_node.max(1) || parent <= 1e-14 * stats.w.max(1e-300) {
            return leaf;
        }
        let Some(best) = self.best_split(idx, stats) else {
            return leaf;
        };
        if best.gain < self.controls.min_impurity_decrease * self.total_w {
            return leaf;
        }
        // partition in place: left rows first
        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][best.feature] <= best.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        CartNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x[0].len();
        match (self.controls.mtry, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], total: Stats) -> Option<BestSplit> {
        let parent = total.impurity(self.task);
        let min_node = self.controls.min_node.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in self.candidate_features() {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left = Stats::default();
            for k in 0..order.len() - 1 {
                let i = order[k];
                left.add(self.w[i], self.y[i]);
                let (xa, xb) = (x[i][f], x[order[k + 1]][f]);
                if xa == xb || k + 1 < min_node || order.len() - k - 1 < min_node {
                    continue;
                }
                let right = total.sub(left);
                let gain = parent - left.impurity(self.task) - right.impurity(self.task);
                // strict improvement keeps the lowest feature and lowest threshold on ties
                let better = match &best {
                    None => gain > 0.0,
                    Some(b) => gain > b.gain + 1e-12 * parent.abs(),
                };
                if better {
                    let mut threshold = 0.5 * (xa + xb);
                    if threshold >= xb {
                        threshold = xa;
                    }
                    best = Some(BestSplit { feature: f, threshold, gain });
                }
            }
        }
        best
    }
}

/// Fits a single CART tree. Classification targets must be 0/1.
pub fn fit_cart(design: &Design, y: &[f64], task: Task, controls: &CartControls) -> Result<Cart> {
    fit_cart_weighted(design, y, None, task, controls, None)
}

pub(crate) fn fit_cart_weighted(
    design: &Design,
    y: &[f64],
    weights: Option<&[f64]>,
    task: Task,
    controls: &CartControls,
    rng: Option<&mut Rng>,
) -> Result<Cart> {
    let n = design.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    check_controls(controls, design.n_cols())?;
    let needed = 2 * controls.min_node.max(1);
    if n < needed {
        return Err(Error::TooFewRows { needed, got: n });
    }
    check_targets(y, task)?;
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let mut idx: Vec<usize> = (0..n).collect();
    let root = Builder::new(&design.rows, y, w, task, *controls, rng).grow(&mut idx);
    Ok(Cart {
        task,
        names: design.names.clone(),
        root,
    })
}

pub(crate) fn check_controls(controls: &CartControls, p: usize) -> Result<()> {
    if let Some(m) = controls.mtry {
        if m == 0 || m > p {
            return Err(Error::BadParams(format!("mtry must be in 1..={p}, got {m}")));
        }
    }
    if controls.min_impurity_decrease.is_nan() || controls.min_impurity_decrease < 0.0 {
        return Err(Error::BadParams("min_impurity_decrease must be >= 0".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(xs: &[f64]) -> Design {
        Design::from_rows(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn small() -> CartControls {
        CartControls {
            min_node: 1,
            ..CartControls::default()
        }
    }

    /// Exhaustive oracle: best Gini split over all features and midpoints.
    fn scan_oracle(rows: &[Vec<f64>], y: &[f64], min_node: usize) -> Option<(usize, f64)> {
        let gini = |ys: &[f64]| {
            let n = ys.len() as f64;
            let p = ys.iter().sum::<f64>() / n;
            n * 2.0 * p * (1.0 - p)
        };
        let parent = gini(y);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..rows[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let l: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[f] <= t).map(|(_, &v)| v).collect();
                let r: Vec<f64> = rows.iter().zip(y).filter(|(r, _)| r[f] > t).map(|(_, &v)| v).collect();
                if l.len() < min_node || r.len() < min_node {
                    continue;
                }
                let gain = parent - gini(&l) - gini(&r);
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, f, t));
                }
            }
        }
        best.filter(|b| b.0 > 0.0).map(|(_, f, t)| (f, t))
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let cart = fit_cart(&one_d(&[1.0, 2.0, 3.0, 4.0]), &[1.0; 4], Task::Classification, &small()).unwrap();
        assert_eq!(cart.root, CartNode::Leaf { value: 1.0, n: 4 });
    }

    #[test]
    fn threshold_split_at_midpoint() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y: Vec<f64> = xs.iter().map(|&x| f64::from(u8::from(x > 3.5))).collect();
        let cart = fit_cart(&one_d(&xs), &y, Task::Classification, &small()).unwrap();
        match &cart.root {
            CartNode::Split { feature, threshold, left, right } => {
                assert_eq!((*feature, *threshold), (0, 3.5));
                assert!(matches!(**left, CartNode::Leaf { value, .. } if value == 0.0));
                assert!(matches!(**right, CartNode::Leaf { value, .. } if value == 1.0));
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
        assert_eq!(scan_oracle(&one_d(&xs).rows, &y, 1), Some((0, 3.5)));
    }

    #[test]
    fn step_function_leaf_means_exact() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|&x| if x < 10.0 { 1.25 } else { -0.5 }).collect();
        let cart = fit_cart(&one_d(&xs), &y, Task::Regression, &CartControls::default()).unwrap();
        let pred = cart.predict(&one_d(&xs)).unwrap();
        assert_eq!(pred, y);
        assert_eq!(cart.root.n_leaves(), 2);
    }

    #[test]
    fn root_split_matches_exhaustive_scan() {
        use rand::Rng as _;
        for seed in 0..20 {
            let mut rng = crate::rng::rng_from(seed);
            let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| f64::from(rng.random_range(0..12u8))).collect()).collect();
            let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[1] + rng.random_range(0.0..6.0) > 8.0))).collect();
            let controls = CartControls {
                min_node: 3,
                max_depth: 1,
                min_impurity_decrease: 0.0,
                mtry: None,
            };
            let d = Design::from_rows(rows.clone()).unwrap();
            let cart = fit_cart(&d, &y, Task::Classification, &controls).unwrap();
            let got = match cart.root {
                CartNode::Split { feature, threshold, .. } => Some((feature, threshold)),
                CartNode::Leaf { .. } => None,
            };
            assert_eq!(got, scan_oracle(&rows, &y, 3), "seed {seed}");
        }
    }

    #[test]
    fn ties_prefer_lower_feature_and_value() {
        // both columns separate the labels perfectly
        let rows = vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0], vec![4.0, 40.0]];
        let cart = fit_cart(&Design::from_rows(rows).unwrap(), &[0.0, 0.0, 1.0, 1.0], Task::Classification, &small()).unwrap();
        assert!(matches!(cart.root, CartNode::Split { feature: 0, threshold, .. } if threshold == 2.5));
    }

    #[test]
    fn every_row_reaches_one_leaf_within_depth() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from(9);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 6.0).sin() + r[1]).collect();
        let controls = CartControls {
            max_depth: 4,
            ..CartControls::default()
        };
        let d = Design::from_rows(rows.clone()).unwrap();
        let cart = fit_cart(&d, &y, Task::Regression, &controls).unwrap();
        assert!(cart.root.depth() <= 4);
        let mut counts = vec![0usize; cart.root.n_leaves()];
        for r in &rows {
            let (_, leaf, steps) = cart.root.route(r);
            assert!(steps <= 4);
            counts[leaf] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 200);
        assert!(counts.iter().all(|&c| c >= controls.min_node));
    }

    #[test]
    fn too_few_rows_and_bad_labels() {
        let d = one_d(&[1.0, 2.0, 3.0]);
        assert!(matches!(fit_cart(&d, &[0.0, 1.0, 0.0], Task::Classification, &CartControls::default()), Err(Error::TooFewRows { .. })));
        assert!(matches!(fit_cart(&d, &[0.0, 2.0, 0.0], Task::Classification, &small()), Err(Error::BadParams(_))));
    }

    #[test]
    fn sexpr_round_trip() {
        let xs: Vec<f64> = (0..30).map(|i| f64::from(i) * 0.37).collect();
        let y: Vec<f64> = xs.iter().map(|x| (x * 1.3).cos()).collect();
        let cart = fit_cart(&one_d(&xs), &y, Task::Regression, &small()).unwrap();
        let text = cart.to_sexpr();
        assert!(text.starts_with("(cart reg (names x0) (split 0 "));
        assert_eq!(Cart::from_sexpr(&text).unwrap(), cart);
    }
}
