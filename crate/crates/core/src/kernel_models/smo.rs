//! Sequential minimal optimization for the box-constrained dual
//!
//!   min ½ αᵀQα + pᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,
//!
//! with Q = (yᵢ yⱼ K(i, j)) and second-order working-set selection.

const TAU: f64 = 1e-12;

pub(crate) struct Problem<'a> {
    /// Kernel value between variables `i` and `j` (variable indices may map
    /// onto the same training row).
    pub kernel: &'a dyn Fn(usize, usize) -> f64,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    /// Decision function is Σ yᵢ αᵢ K(xᵢ, x) − rho.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn solve(prob: &Problem) -> Solution {
    let n = prob.y.len();
    let y = &prob.y;
    let c = prob.c;
    let q = |i: usize, j: usize| y[i] * y[j] * (prob.kernel)(i, j);
    let qd: Vec<f64> = (0..n).map(|i| (prob.kernel)(i, i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = prob.p.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut q_i = vec![0.0; n];
    let mut q_j = vec![0.0; n];
    while iterations < prob.max_iter {
        // i maximizes −yᵢ∇ᵢ over the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        for (t, slot) in q_i.iter_mut().enumerate() {
            *slot = q(i, t);
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let v = y[t] * grad[t];
            gmax2 = gmax2.max(v);
            let diff = gmax + v;
            if diff > 0.0 {
                let mut quad = qd[i] + qd[t] - 2.0 * y[i] * q_i[t] * y[t];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < prob.tol {
            converged = true;
            break;
        }
        let Some(j) = j_sel else {
            converged = true;
            break;
        };
        for (t, slot) in q_j.iter_mut().enumerate() {
            *slot = q(j, t);
        }
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * q_i[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * q_i[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q_i[t] * di + q_j[t] * dj;
        }
    }
    Solution {
        rho: rho(&alpha, &grad, y, c),
        alpha,
        iterations,
        converged,
    }
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}
