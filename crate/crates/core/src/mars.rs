//! Multivariate adaptive regression splines (additive, degree one).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Design;
use crate::linalg::{design_matrix, dot, least_squares, total_ss, OrthoBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HingeDirection {
    /// max(0, x − t)
    Plus,
    /// max(0, t − x)
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeBasis {
    pub feature: usize,
    pub name: String,
    pub knot: f64,
    pub direction: HingeDirection,
}

pub fn hinge_eval(basis: &HingeBasis, x: f64) -> f64 {
    match basis.direction {
        HingeDirection::Plus => (x - basis.knot).max(0.0),
        HingeDirection::Minus => (basis.knot - x).max(0.0),
    }
}

impl fmt::Display for HingeBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            HingeDirection::Plus => write!(f, "h({} - {})", self.name, format_g(self.knot)),
            HingeDirection::Minus => write!(f, "h({} - {})", format_g(self.knot), self.name),
        }
    }
}

/// C-style `%g` with six significant digits.
pub fn format_g(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    // rounding can bump the exponent (e.g. 999999.5)
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) { exp + 1 } else { exp };
    if !(-4..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mantissa = trim_zeros(mantissa);
        let e: i32 = e.parse().unwrap_or(0);
        format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarsConfig {
    /// Upper bound on terms, intercept included.
    pub max_terms: usize,
    /// Forward pass stops when a new pair raises R² by less than this.
    pub rsq_threshold: f64,
    /// GCV cost per knot.
    pub penalty: f64,
}

impl Default for MarsConfig {
    fn default() -> Self {
        Self {
            max_terms: 21,
            rsq_threshold: 0.001,
            penalty: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardPass {
    pub names: Vec<String>,
    pub bases: Vec<HingeBasis>,
    /// R² after each accepted step, starting with the intercept-only 0.
    pub rsq_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarsTerm {
    /// `None` is the intercept.
    pub basis: Option<HingeBasis>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarsFit {
    pub names: Vec<String>,
    pub terms: Vec<MarsTerm>,
    pub gcv: f64,
    pub rss: f64,
    pub grsq: f64,
    pub r2: f64,
    pub penalty: f64,
    /// GCV after each pruning step, starting with the full forward model.
    pub gcv_trace: Vec<f64>,
    pub n: usize,
}

const MIN_ROWS: usize = 10;
/// Relative residual norm under which a candidate column counts as
/// already spanned by the basis.
const DEP_TOL: f64 = 1e-5;

fn hinge_column(rows: &[Vec<f64>], basis: &HingeBasis) -> Vec<f64> {
    rows.iter().map(|r| hinge_eval(basis, r[basis.feature])).collect()
}

fn unit_residual(basis: &OrthoBasis, extra: &[Vec<f64>], v: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return None;
    }
    let mut r = basis.residual(v);
    for e in extra {
        let d = dot(e, &r);
        r.iter_mut().zip(e).for_each(|(ri, ei)| *ri -= d * ei);
    }
    let rn = dot(&r, &r).sqrt();
    (rn > DEP_TOL * norm).then(|| r.into_iter().map(|x| x / rn).collect())
}

struct Candidate {
    gain: f64,
    feature: usize,
    knot: f64,
    /// Which halves of the pair add a new direction.
    halves: Vec<HingeDirection>,
}

/// Greedy forward pass: at each step adds the hinge pair (feature, knot at
/// an observed value) giving the largest drop in residual sum of squares.
pub fn mars_forward(design: &Design, y: &[f64], config: &MarsConfig) -> Result<ForwardPass> {
    let n = design.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < MIN_ROWS {
        return Err(Error::TooFewRows { needed: MIN_ROWS, got: n });
    }
    if config.max_terms < 1 || !(config.rsq_threshold >= 0.0) || !(config.penalty >= 0.0) {
        return Err(Error::BadParams("invalid MARS configuration".into()));
    }
    let tss = total_ss(y);
    let mut pass = ForwardPass {
        names: design.names.clone(),
        bases: Vec::new(),
        rsq_trace: vec![0.0],
    };
    if tss == 0.0 {
        return Ok(pass);
    }
    let knots: Vec<Vec<f64>> = (0..design.n_cols())
        .map(|j| {
            let mut v = design.column(j);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let mut ortho = OrthoBasis::new();
    ortho.push(&vec![1.0; n]);
    let mut resid = ortho.residual(y);
    let mut rss = dot(&resid, &resid);
    let mut r2 = 0.0;
    while 1 + pass.bases.len() < config.max_terms {
        let mut best: Option<Candidate> = None;
        for (feature, ks) in knots.iter().enumerate() {
            for &knot in ks {
                let mut gain = 0.0;
                let mut halves = Vec::new();
                let mut extra: Vec<Vec<f64>> = Vec::new();
                for direction in [HingeDirection::Plus, HingeDirection::Minus] {
                    if 1 + pass.bases.len() + halves.len() >= config.max_terms {
                        break;
                    }
                    let col = hinge_column(&design.rows, &HingeBasis { feature, name: String::new(), knot, direction });
                    if let Some(u) = unit_residual(&ortho, &extra, &col) {
                        gain += dot(&resid, &u).powi(2);
                        extra.push(u);
                        halves.push(direction);
                    }
                }
                if halves.is_empty() {
                    continue;
                }
                // strict improvement keeps the lower feature and knot on ties
                if best.as_ref().is_none_or(|b| gain > b.gain * (1.0 + 1e-12)) {
                    best = Some(Candidate { gain, feature, knot, halves });
                }
            }
        }
        let Some(cand) = best else { break };
        let new_r2 = 1.0 - (rss - cand.gain).max(0.0) / tss;
        if new_r2 - r2 < config.rsq_threshold {
            log::debug!("MARS forward pass: delta R2 {:.3e} below threshold", new_r2 - r2);
            break;
        }
        for direction in cand.halves {
            let basis = HingeBasis {
                feature: cand.feature,
                name: design.names[cand.feature].clone(),
                knot: cand.knot,
                direction,
            };
            ortho.push(&hinge_column(&design.rows, &basis));
            pass.bases.push(basis);
        }
        resid = ortho.residual(y);
        rss = dot(&resid, &resid);
        r2 = 1.0 - rss / tss;
        pass.rsq_trace.push(r2);
        if r2 >= 1.0 - 1e-12 {
            break;
        }
    }
    Ok(pass)
}

/// Effective parameter count: terms plus `penalty` per knot, with a knot
/// counted for every two hinge terms.
pub fn effective_params(n_terms: usize, penalty: f64) -> f64 {
    n_terms as f64 + penalty * (n_terms as f64 - 1.0) / 2.0
}

pub fn gcv(rss: f64, n: usize, n_terms: usize, penalty: f64) -> f64 {
    let n = n as f64;
    let c = effective_params(n_terms, penalty);
    if c >= n {
        return f64::INFINITY;
    }
    (rss / n) / (1.0 - c / n).powi(2)
}

fn refit(design: &Design, y: &[f64], bases: &[&HingeBasis]) -> Result<(Vec<f64>, f64)> {
    let cols: Vec<Vec<f64>> = bases.iter().map(|b| hinge_column(&design.rows, b)).collect();
    let rows: Vec<Vec<f64>> = (0..design.n_rows()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let idx: Vec<usize> = (0..bases.len()).collect();
    let ls = least_squares(&design_matrix(&rows, &idx, true), y)?;
    Ok((ls.coef, ls.rss))
}

/// Backward pruning: repeatedly deletes the hinge term whose removal lowers
/// GCV the most, stopping when no deletion lowers it.
pub fn mars_backward(pass: &ForwardPass, design: &Design, y: &[f64], penalty: f64) -> Result<MarsFit> {
    let n = design.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    let tss = total_ss(y);
    let gcv0 = gcv(tss, n, 1, penalty);
    let mut current: Vec<&HingeBasis> = pass.bases.iter().collect();
    let (mut coef, mut rss) = refit(design, y, &current)?;
    let mut score = gcv(rss, n, current.len() + 1, penalty);
    let mut trace = vec![score];
    loop {
        let mut best: Option<(f64, usize, Vec<f64>, f64)> = None;
        for k in 0..current.len() {
            let mut reduced = current.clone();
            reduced.remove(k);
            let (c, r) = refit(design, y, &reduced)?;
            let g = gcv(r, n, reduced.len() + 1, penalty);
            if best.as_ref().is_none_or(|b| g < b.0) {
                best = Some((g, k, c, r));
            }
        }
        match best {
            Some((g, k, c, r)) if g < score => {
                log::debug!("MARS pruned {} (GCV {score:.6} -> {g:.6})", current[k]);
                current.remove(k);
                coef = c;
                rss = r;
                score = g;
                trace.push(g);
            }
            _ => break,
        }
    }
    let mut terms = vec![MarsTerm { basis: None, coefficient: coef[0] }];
    terms.extend(current.iter().zip(&coef[1..]).map(|(b, &c)| MarsTerm {
        basis: Some((*b).clone()),
        coefficient: c,
    }));
    let (grsq, r2) = if tss > 0.0 { (1.0 - score / gcv0, 1.0 - rss / tss) } else { (0.0, 0.0) };
    Ok(MarsFit {
        names: pass.names.clone(),
        terms,
        gcv: score,
        rss,
        grsq,
        r2,
        penalty,
        gcv_trace: trace,
        n,
    })
}

pub fn fit_mars(design: &Design, y: &[f64], config: &MarsConfig) -> Result<MarsFit> {
    let pass = mars_forward(design, y, config)?;
    mars_backward(&pass, design, y, config.penalty)
}

impl MarsFit {
    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.names)?;
        Ok(sub
            .rows
            .iter()
            .map(|r| {
                self.terms
                    .iter()
                    .map(|t| t.coefficient * t.basis.as_ref().map_or(1.0, |b| hinge_eval(b, r[b.feature])))
                    .sum()
            })
            .collect())
    }

    pub fn knots(&self) -> Vec<(usize, f64)> {
        self.terms.iter().filter_map(|t| t.basis.as_ref().map(|b| (b.feature, b.knot))).collect()
    }

    /// Model listing, one term per line, e.g.
    /// `  +0.52 * h(close_perc - 2.11268)`.
    pub fn pretty(&self, response: &str) -> String {
        let mut out = format!("{response} =\n  {}\n", format_g(self.terms[0].coefficient));
        for t in &self.terms[1..] {
            let sign = if t.coefficient < 0.0 { '-' } else { '+' };
            let basis = t.basis.as_ref().expect("non-intercept term");
            out.push_str(&format!("  {sign} {} * {basis}\n", format_g(t.coefficient.abs())));
        }
        out.push_str(&format!(
            "GCV: {}  RSS: {}  GRSq: {}  RSq: {}\n",
            format_g(self.gcv),
            format_g(self.rss),
            format_g(self.grsq),
            format_g(self.r2)
        ));
        out
    }
}
