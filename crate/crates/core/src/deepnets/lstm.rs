use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::evalsuite::pearson;
use crate::rng::{rng_from, sub_seed};
use crate::slotter::SlotBar;

pub const LSTM_INPUTS: [&str; 6] = ["open", "high", "low", "close", "volume", "index"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqLoss {
    Mae,
    Mse,
}

impl SeqLoss {
    /// Loss of one prediction and its derivative with respect to it.
    pub fn eval(self, pred: f64, target: f64) -> (f64, f64) {
        let e = pred - target;
        match self {
            SeqLoss::Mae => (e.abs(), if e > 0.0 { 1.0 } else if e < 0.0 { -1.0 } else { 0.0 }),
            SeqLoss::Mse => (e * e, 2.0 * e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSpec {
    pub input_width: usize,
    pub hidden_units: usize,
    /// Slots per input sequence.
    pub lookback: usize,
    pub loss: SeqLoss,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Leading samples used for training; the rest validate.
    pub train_rows: usize,
    pub seed: u64,
}

impl Default for LstmSpec {
    fn default() -> Self {
        Self {
            input_width: LSTM_INPUTS.len(),
            hidden_units: 50,
            lookback: 1,
            loss: SeqLoss::Mae,
            lr: 0.001,
            batch: 72,
            epochs: 100,
            train_rows: 500,
            seed: 0,
        }
    }
}

impl LstmSpec {
    fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.batch == 0 || self.input_width == 0 || self.lookback == 0 {
            return Err(Error::BadParams("hidden units, batch, input width and lookback must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::BadParams("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One LSTM layer feeding a single linear output unit.
///
/// Parameters live in one flat vector. Gate blocks come first in the order
/// forget, input, output, candidate; each block is `W` (hidden × input),
/// `U` (hidden × hidden) and `b` (hidden). The dense weights and bias follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub input: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

const FORGET: usize = 0;
const INPUT: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// Cell and hidden vectors after a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Activations of one time step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    pub gates: [Vec<f64>; 4],
    pub state: LstmState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
    pub output: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LstmNet {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            params: vec![0.0; 4 * hidden * (input + hidden + 1) + hidden + 1],
        }
    }

    /// Recurrent weights uniform in ±1/√hidden, forget bias 1, other biases
    /// 0, dense weights Glorot-uniform.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut net = Self::zeros(input, hidden);
        let mut rng = rng_from(seed);
        let r = 1.0 / (hidden as f64).sqrt();
        for k in 0..4 {
            let base = net.block(k);
            for p in &mut net.params[base..base + hidden * (input + hidden)] {
                *p = rng.random_range(-r..r);
            }
        }
        for h in 0..hidden {
            let i = net.bias(FORGET, h);
            net.params[i] = 1.0;
        }
        let g = (6.0 / (hidden as f64 + 1.0)).sqrt();
        let d = net.dense();
        for p in &mut net.params[d..d + hidden] {
            *p = rng.random_range(-g..g);
        }
        net
    }

    fn block(&self, k: usize) -> usize {
        k * self.hidden * (self.input + self.hidden + 1)
    }

    fn w(&self, k: usize, h: usize, d: usize) -> usize {
        self.block(k) + h * self.input + d
    }

    fn u(&self, k: usize, h: usize, j: usize) -> usize {
        self.block(k) + self.hidden * self.input + h * self.hidden + j
    }

    fn bias(&self, k: usize, h: usize) -> usize {
        self.block(k) + self.hidden * (self.input + self.hidden) + h
    }

    fn dense(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, seq: &[Vec<f64>]) -> Result<LstmTrace> {
        if seq.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        let (nh, p) = (self.hidden, &self.params);
        let mut h = vec![0.0; nh];
        let mut c = vec![0.0; nh];
        let mut steps = Vec::with_capacity(seq.len());
        for x in seq {
            if x.len() != self.input {
                return Err(Error::ShapeMismatch(format!("input width {} expected {}", x.len(), self.input)));
            }
            let mut gates: [Vec<f64>; 4] = Default::default();
            for (k, gate) in gates.iter_mut().enumerate() {
                *gate = (0..nh)
                    .map(|u| {
                        let mut z = p[self.bias(k, u)];
                        let wb = self.w(k, u, 0);
                        z += p[wb..wb + self.input].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                        let ub = self.u(k, u, 0);
                        z += p[ub..ub + nh].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                        if k == CANDIDATE {
                            z.tanh()
                        } else {
                            sigmoid(z)
                        }
                    })
                    .collect();
            }
            let c_new: Vec<f64> = (0..nh).map(|u| gates[FORGET][u] * c[u] + gates[INPUT][u] * gates[CANDIDATE][u]).collect();
            let h_new: Vec<f64> = (0..nh).map(|u| gates[OUTPUT][u] * c_new[u].tanh()).collect();
            steps.push(LstmStep {
                x: x.clone(),
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                c_prev: std::mem::replace(&mut c, c_new.clone()),
                gates,
                state: LstmState { cell: c_new, hidden: h_new },
            });
        }
        let d = self.dense();
        let output = p[d + nh] + p[d..d + nh].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        Ok(LstmTrace { steps, output })
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<f64> {
        Ok(self.forward(seq)?.output)
    }

    /// Backpropagation through time; adds `d_out · ∂output/∂params` to `grad`.
    pub fn backward(&self, trace: &LstmTrace, d_out: f64, grad: &mut [f64]) {
        let (nh, p) = (self.hidden, &self.params);
        let d = self.dense();
        let last = &trace.steps.last().expect("non-empty trace").state.hidden;
        for u in 0..nh {
            grad[d + u] += d_out * last[u];
        }
        grad[d + nh] += d_out;
        let mut dh: Vec<f64> = p[d..d + nh].iter().map(|w| d_out * w).collect();
        let mut dc_next = vec![0.0; nh];
        let mut dz: [Vec<f64>; 4] = [vec![0.0; nh], vec![0.0; nh], vec![0.0; nh], vec![0.0; nh]];
        for step in trace.steps.iter().rev() {
            let [f, i, o, g] = &step.gates;
            for u in 0..nh {
                let tc = step.state.cell[u].tanh();
                let d_o = dh[u] * tc;
                let dc = dc_next[u] + dh[u] * o[u] * (1.0 - tc * tc);
                dz[FORGET][u] = dc * step.c_prev[u] * f[u] * (1.0 - f[u]);
                dz[INPUT][u] = dc * g[u] * i[u] * (1.0 - i[u]);
                dz[OUTPUT][u] = d_o * o[u] * (1.0 - o[u]);
                dz[CANDIDATE][u] = dc * i[u] * (1.0 - g[u] * g[u]);
                dc_next[u] = dc * f[u];
            }
            let mut dh_prev = vec![0.0; nh];
            for (k, dzk) in dz.iter().enumerate() {
                for u in 0..nh {
                    let z = dzk[u];
                    if z == 0.0 {
                        continue;
                    }
                    let wb = self.w(k, u, 0);
                    for (gw, x) in grad[wb..wb + self.input].iter_mut().zip(&step.x) {
                        *gw += z * x;
                    }
                    let ub = self.u(k, u, 0);
                    for j in 0..nh {
                        grad[ub + j] += z * step.h_prev[j];
                        dh_prev[j] += z * p[ub + j];
                    }
                    grad[self.bias(k, u)] += z;
                }
            }
            dh = dh_prev;
        }
    }

    /// Mean loss over a batch and its gradient.
    pub fn batch_gradient(&self, inputs: &[&[Vec<f64>]], targets: &[f64], loss: SeqLoss) -> Result<(f64, Vec<f64>)> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch { left: inputs.len(), right: targets.len() });
        }
        let n = inputs.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut total = 0.0;
        for (seq, &t) in inputs.iter().zip(targets) {
            let trace = self.forward(seq)?;
            let (l, dl) = loss.eval(trace.output, t);
            total += l;
            self.backward(&trace, dl / n, &mut grad);
        }
        Ok((total / n, grad))
    }
}

/// Supervised next-slot samples: each input is `lookback` consecutive slots,
/// the target is the following slot's opening price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqFrame {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<f64>,
    /// Opening price of the last input slot, the repeat-last forecast.
    pub last_open: Vec<f64>,
}

fn slot_inputs(bar: &SlotBar) -> Vec<f64> {
    vec![bar.first_open, bar.high_max, bar.low_min, bar.last_close, bar.vol_mean, bar.index_mean]
}

pub fn lstm_frame(slots: &[SlotBar], lookback: usize) -> Result<SeqFrame> {
    if lookback == 0 {
        return Err(Error::BadParams("lookback must be at least 1".into()));
    }
    let mut frame = SeqFrame {
        inputs: Vec::new(),
        targets: Vec::new(),
        last_open: Vec::new(),
    };
    for k in lookback.saturating_sub(1)..slots.len().saturating_sub(1) {
        frame.inputs.push(slots[k + 1 - lookback..=k].iter().map(slot_inputs).collect());
        frame.targets.push(slots[k + 1].first_open);
        frame.last_open.push(slots[k].first_open);
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct MinMax {
    min: f64,
    max: f64,
}

impl MinMax {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Self { min, max }
    }

    fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    fn unscale(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmFit {
    pub net: LstmNet,
    pub spec: LstmSpec,
    /// Per-epoch MAE in price units.
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    pub val_predictions: Vec<f64>,
    pub val_actual: Vec<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub pearson_r: Option<f64>,
    pub mean_actual: f64,
    pub rmse_ratio_pct: Option<f64>,
    /// MAE of repeating the last observed open on the validation rows.
    pub baseline_mae: f64,
}

/// Fits on slot bars: inputs are the slot's opening, high, low, closing
/// prices, mean volume and mean index; the target is the next slot's open.
pub fn lstm_fit(slots: &[SlotBar], spec: &LstmSpec) -> Result<LstmFit> {
    lstm_fit_frame(&lstm_frame(slots, spec.lookback)?, spec)
}

pub fn lstm_fit_frame(frame: &SeqFrame, spec: &LstmSpec) -> Result<LstmFit> {
    spec.validate()?;
    let n = frame.targets.len();
    let needed = spec.train_rows + 10;
    if n < needed {
        return Err(Error::TooFewRows { needed, got: n });
    }
    if frame.inputs.iter().flatten().any(|x| x.len() != spec.input_width) {
        return Err(Error::ShapeMismatch(format!("inputs must have width {}", spec.input_width)));
    }
    let split = spec.train_rows;
    let x_scale: Vec<MinMax> = (0..spec.input_width).map(|f| MinMax::fit(frame.inputs[..split].iter().flatten().map(|x| x[f]))).collect();
    let y_scale = MinMax::fit(frame.targets[..split].iter().copied());
    let inputs: Vec<Vec<Vec<f64>>> = frame
        .inputs
        .iter()
        .map(|seq| seq.iter().map(|x| x.iter().zip(&x_scale).map(|(v, s)| s.scale(*v)).collect()).collect())
        .collect();
    let targets: Vec<f64> = frame.targets.iter().map(|&t| y_scale.scale(t)).collect();

    let mut net = LstmNet::init(spec.input_width, spec.hidden_units, sub_seed(spec.seed, 0));
    let mut adam = AdamState::new(net.n_params(), spec.lr);
    let mut shuffle_rng = rng_from(sub_seed(spec.seed, 1));
    let mut order: Vec<usize> = (0..split).collect();

    let mae_over = |net: &LstmNet, range: std::ops::Range<usize>| -> Result<(f64, Vec<f64>)> {
        let preds = range.clone().map(|k| net.predict(&inputs[k]).map(|p| y_scale.unscale(p))).collect::<Result<Vec<f64>>>()?;
        let mae = preds.iter().zip(&frame.targets[range]).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64;
        Ok((mae, preds))
    };

    let mut train_mae = Vec::with_capacity(spec.epochs);
    let mut val_mae = Vec::with_capacity(spec.epochs);
    for _ in 0..spec.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(spec.batch) {
            let xs: Vec<&[Vec<f64>]> = chunk.iter().map(|&k| inputs[k].as_slice()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&k| targets[k]).collect();
            let (_, grad) = net.batch_gradient(&xs, &ys, spec.loss)?;
            adam_step(&mut adam, &mut net.params, &grad)?;
        }
        train_mae.push(mae_over(&net, 0..split)?.0);
        val_mae.push(mae_over(&net, split..n)?.0);
    }

    let (mae, val_predictions) = mae_over(&net, split..n)?;
    let val_actual = frame.targets[split..].to_vec();
    let m = val_actual.len() as f64;
    let rmse = (val_predictions.iter().zip(&val_actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / m).sqrt();
    let mean_actual = val_actual.iter().sum::<f64>() / m;
    let baseline_mae = frame.last_open[split..].iter().zip(&val_actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / m;
    Ok(LstmFit {
        pearson_r: pearson(&val_predictions, &val_actual),
        rmse_ratio_pct: crate::evalsuite::rmse_ratio_pct(rmse, mean_actual.abs()),
        net,
        spec: spec.clone(),
        train_mae,
        val_mae,
        val_predictions,
        val_actual,
        rmse,
        mae,
        mean_actual,
        baseline_mae,
    })
}
