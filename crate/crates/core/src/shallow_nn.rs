//! Fully connected feed-forward network with logistic hidden units,
//! trained by full-batch gradient descent.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Design;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Identity output, half sum-of-squares loss.
    Linear,
    /// Logistic output, cross-entropy loss on 0/1 targets.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub hidden_layers: Vec<usize>,
    pub output: OutputMode,
    pub max_steps: usize,
    pub lr: f64,
    /// Training stops once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Initial weights are uniform in ±init_range.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden_layers: vec![1],
            output: OutputMode::Linear,
            max_steps: 1_000_000,
            lr: 0.01,
            grad_tol: 1e-7,
            init_range: 0.5,
            seed: 0,
        }
    }
}

/// Weights and biases; `weights[l][o][i]` connects input `i` of layer `l`
/// to its output `o`. The last layer has a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub names: Vec<String>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub output: OutputMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub net: Mlp,
    pub final_loss: f64,
    pub steps_used: usize,
    pub converged: bool,
    pub final_lr: f64,
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradient {
    pub fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flatten().flatten().map(|g| g * g).sum();
        let b: f64 = self.biases.iter().flatten().map(|g| g * g).sum();
        (w + b).sqrt()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Mlp {
    pub fn new(names: Vec<String>, hidden: &[usize], output: OutputMode) -> Self {
        let mut sizes = vec![names.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let weights = sizes.windows(2).map(|w| vec![vec![0.0; w[0]]; w[1]]).collect();
        let biases = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        Self { names, weights, biases, output }
    }

    fn randomize(&mut self, seed: u64, range: f64) {
        let mut rng = rng_from(seed);
        for layer in &mut self.weights {
            for row in layer {
                for w in row {
                    *w = rng.random_range(-range..=range);
                }
            }
        }
        for b in self.biases.iter_mut().flatten() {
            *b = rng.random_range(-range..=range);
        }
    }

    /// Activations of every layer; the last entry holds the output
    /// pre-activation.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = acts.last().expect("input layer");
            let z: Vec<f64> = w.iter().zip(b).map(|(row, bi)| bi + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>()).collect();
            acts.push(if l == last { z } else { z.into_iter().map(sigmoid).collect() });
        }
        acts
    }

    fn output_of(&self, z: f64) -> f64 {
        match self.output {
            OutputMode::Linear => z,
            OutputMode::Sigmoid => sigmoid(z),
        }
    }

    /// Sigmoid outputs are kept strictly inside (0, 1) even when the
    /// logistic rounds to an endpoint.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let acts = self.forward(x);
        let out = self.output_of(acts.last().expect("output")[0]);
        match self.output {
            OutputMode::Linear => out,
            OutputMode::Sigmoid => out.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0),
        }
    }

    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        let sub = design.select_names(&self.names)?;
        Ok(sub.rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Half sum of squared errors (linear) or summed cross-entropy (sigmoid).
    pub fn loss(&self, rows: &[Vec<f64>], y: &[f64]) -> f64 {
        rows.iter()
            .zip(y)
            .map(|(r, &t)| {
                let z = self.forward(r).last().expect("output")[0];
                match self.output {
                    OutputMode::Linear => 0.5 * (z - t) * (z - t),
                    OutputMode::Sigmoid => softplus(z) - t * z,
                }
            })
            .sum()
    }

    fn zero_grad(&self) -> MlpGradient {
        MlpGradient {
            weights: self.weights.iter().map(|l| l.iter().map(|r| vec![0.0; r.len()]).collect()).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn step(&mut self, g: &MlpGradient, lr: f64) {
        for (layer, gl) in self.weights.iter_mut().zip(&g.weights) {
            for (row, gr) in layer.iter_mut().zip(gl) {
                row.iter_mut().zip(gr).for_each(|(w, d)| *w -= lr * d);
            }
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            b.iter_mut().zip(gb).for_each(|(w, d)| *w -= lr * d);
        }
    }
}

/// Backpropagated gradient of [`Mlp::loss`] over a batch.
pub fn mlp_gradient(net: &Mlp, rows: &[Vec<f64>], y: &[f64]) -> MlpGradient {
    let mut grad = net.zero_grad();
    let n_layers = net.weights.len();
    for (x, &t) in rows.iter().zip(y) {
        let acts = net.forward(x);
        // both losses give output delta = prediction − target
        let mut delta = vec![net.output_of(acts[n_layers][0]) - t];
        for l in (0..n_layers).rev() {
            let input = &acts[l];
            for (o, &d) in delta.iter().enumerate() {
                grad.biases[l][o] += d;
                grad.weights[l][o].iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
            }
            if l > 0 {
                delta = (0..input.len())
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(o, d)| d * net.weights[l][o][i]).sum();
                        back * input[i] * (1.0 - input[i])
                    })
                    .collect();
            }
        }
    }
    grad
}

/// Full-batch gradient descent from a seeded uniform initialization. A step
/// that raises the loss is undone and the learning rate halved.
pub fn mlp_fit(design: &Design, y: &[f64], spec: &MlpSpec) -> Result<MlpFit> {
    if design.n_rows() == 0 {
        return Err(Error::EmptyTrain);
    }
    if y.len() != design.n_rows() {
        return Err(Error::LengthMismatch { left: design.n_rows(), right: y.len() });
    }
    if spec.hidden_layers.iter().any(|&h| h == 0) || spec.max_steps == 0 || !(spec.lr > 0.0) {
        return Err(Error::BadParams("hidden layer sizes, max_steps and lr must be positive".into()));
    }
    if spec.output == OutputMode::Sigmoid && y.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::BadParams("sigmoid output needs 0/1 targets".into()));
    }
    let mut net = Mlp::new(design.names.clone(), &spec.hidden_layers, spec.output);
    net.randomize(spec.seed, spec.init_range);
    let rows = &design.rows;
    let mut loss = net.loss(rows, y);
    let mut lr = spec.lr;
    let mut steps = 0;
    let mut converged = false;
    while steps < spec.max_steps {
        let g = mlp_gradient(&net, rows, y);
        if g.norm() < spec.grad_tol {
            converged = true;
            break;
        }
        steps += 1;
        let previous = net.clone();
        net.step(&g, lr);
        let new_loss = net.loss(rows, y);
        if new_loss > loss || !new_loss.is_finite() {
            net = previous;
            lr *= 0.5;
            if lr < 1e-300 {
                break;
            }
        } else {
            loss = new_loss;
        }
    }
    if !converged {
        log::debug!("MLP stopped after {steps} steps without reaching gradient norm {}", spec.grad_tol);
    }
    Ok(MlpFit {
        net,
        final_loss: loss,
        steps_used: steps,
        converged,
        final_lr: lr,
    })
}
