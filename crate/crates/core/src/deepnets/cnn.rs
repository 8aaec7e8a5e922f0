use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::weekly::{WeeklySample, WeeklyVariables};
use crate::error::{Error, Result};
use crate::rng::{rng_from, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnVariant {
    /// Univariate, one week of history.
    M1,
    /// Univariate, two weeks of history.
    M2,
    /// Five-channel input, two weeks of history.
    M3,
    /// One sub-network per variable, two weeks of history.
    M4,
}

impl CnnVariant {
    pub const ALL: [CnnVariant; 4] = [CnnVariant::M1, CnnVariant::M2, CnnVariant::M3, CnnVariant::M4];

    pub fn history_weeks(self) -> usize {
        match self {
            CnnVariant::M1 => 1,
            _ => 2,
        }
    }

    pub fn variables(self) -> WeeklyVariables {
        match self {
            CnnVariant::M1 | CnnVariant::M2 => WeeklyVariables::OpenOnly,
            _ => WeeklyVariables::All,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CnnVariant::M1 => "cnn_m1",
            CnnVariant::M2 => "cnn_m2",
            CnnVariant::M3 => "cnn_m3",
            CnnVariant::M4 => "cnn_m4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqLayer {
    /// Valid convolution followed by ReLU.
    Conv { filters: usize, kernel: usize },
    /// Non-overlapping max pooling; a trailing remainder is dropped.
    Pool { size: usize },
}

/// A convolutional branch reading some input channels; its output is
/// flattened and concatenated with the other branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub channels: Vec<usize>,
    pub layers: Vec<SeqLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub variant: Option<CnnVariant>,
    pub input_len: usize,
    pub input_channels: usize,
    pub heads: Vec<HeadSpec>,
    /// Widths of the ReLU dense layers after the flattened features.
    pub dense: Vec<usize>,
    pub output: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

pub const WEEK_LEN: usize = 5;

pub fn cnn_build(variant: CnnVariant) -> CnnSpec {
    let conv = |filters, kernel| SeqLayer::Conv { filters, kernel };
    let pool = |size| SeqLayer::Pool { size };
    let light = vec![conv(16, 3), pool(2)];
    let (input_len, input_channels, heads, dense, epochs, batch) = match variant {
        CnnVariant::M1 => (5, 1, vec![HeadSpec { channels: vec![0], layers: light }], vec![10], 20, 4),
        CnnVariant::M2 => (10, 1, vec![HeadSpec { channels: vec![0], layers: light }], vec![10], 20, 4),
        CnnVariant::M3 => (
            10,
            5,
            vec![HeadSpec {
                channels: (0..5).collect(),
                layers: vec![conv(32, 3), conv(32, 3), pool(2), conv(16, 3), pool(1)],
            }],
            vec![100],
            70,
            16,
        ),
        CnnVariant::M4 => (
            10,
            5,
            (0..5).map(|c| HeadSpec { channels: vec![c], layers: light.clone() }).collect(),
            vec![100],
            70,
            16,
        ),
    };
    CnnSpec {
        variant: Some(variant),
        input_len,
        input_channels,
        heads,
        dense,
        output: WEEK_LEN,
        epochs,
        batch,
        lr: 0.001,
        seed: 0,
    }
}

impl CnnSpec {
    /// (length, channels) after every layer of each head.
    pub fn head_shapes(&self) -> Result<Vec<Vec<(usize, usize)>>> {
        self.heads
            .iter()
            .map(|head| {
                if head.channels.is_empty() || head.channels.iter().any(|&c| c >= self.input_channels) {
                    return Err(Error::ShapeMismatch("head reads a channel outside the input".into()));
                }
                let mut shape = (self.input_len, head.channels.len());
                let mut out = Vec::with_capacity(head.layers.len());
                for layer in &head.layers {
                    shape = match *layer {
                        SeqLayer::Conv { filters, kernel } => {
                            if kernel == 0 || kernel > shape.0 || filters == 0 {
                                return Err(Error::ShapeMismatch(format!("kernel {kernel} on sequence of length {}", shape.0)));
                            }
                            (shape.0 - kernel + 1, filters)
                        }
                        SeqLayer::Pool { size } => {
                            if size == 0 || size > shape.0 {
                                return Err(Error::ShapeMismatch(format!("pool {size} on sequence of length {}", shape.0)));
                            }
                            (shape.0 / size, shape.1)
                        }
                    };
                    out.push(shape);
                }
                Ok(out)
            })
            .collect()
    }

    /// Width of the concatenated flattened features.
    pub fn flat_width(&self) -> Result<usize> {
        Ok(self
            .head_shapes()?
            .iter()
            .zip(&self.heads)
            .map(|(shapes, head)| shapes.last().map_or(self.input_len * head.channels.len(), |s| s.0 * s.1))
            .sum())
    }
}

/// Row-major sequence: `data[t * ch + c]`.
#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    len: usize,
    ch: usize,
    data: Vec<f64>,
}

enum Cache {
    Conv { input: Tensor, output: Tensor, offset: usize, filters: usize, kernel: usize },
    Pool { input_len: usize, ch: usize, argmax: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct DenseSlot {
    offset: usize,
    n_in: usize,
    n_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnNet {
    pub spec: CnnSpec,
    pub params: Vec<f64>,
    conv_offsets: Vec<Vec<usize>>,
    dense_slots: Vec<DenseSlot>,
}

fn conv_forward(input: &Tensor, w: &[f64], b: &[f64], filters: usize, kernel: usize) -> Tensor {
    let (ch, out_len) = (input.ch, input.len - kernel + 1);
    let mut data = vec![0.0; out_len * filters];
    for t in 0..out_len {
        let window = &input.data[t * ch..(t + kernel) * ch];
        for f in 0..filters {
            let wf = &w[f * kernel * ch..(f + 1) * kernel * ch];
            let z = b[f] + wf.iter().zip(window).map(|(a, x)| a * x).sum::<f64>();
            data[t * filters + f] = z.max(0.0);
        }
    }
    Tensor { len: out_len, ch: filters, data }
}

fn pool_forward(input: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let len = input.len / size;
    let mut data = Vec::with_capacity(len * input.ch);
    let mut argmax = Vec::with_capacity(len * input.ch);
    for t in 0..len {
        for c in 0..input.ch {
            let (mut best, mut at) = (f64::NEG_INFINITY, 0);
            for s in t * size..(t + 1) * size {
                let v = input.data[s * input.ch + c];
                if v > best {
                    best = v;
                    at = s * input.ch + c;
                }
            }
            data.push(best);
            argmax.push(at);
        }
    }
    (Tensor { len, ch: input.ch, data }, argmax)
}

fn glorot(rng: &mut crate::rng::Rng, params: &mut [f64], fan_in: usize, fan_out: usize) {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for p in params {
        *p = rng.random_range(-r..r);
    }
}

impl CnnNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: &CnnSpec, seed: u64) -> Result<Self> {
        let shapes = spec.head_shapes()?;
        if spec.output == 0 || spec.dense.contains(&0) {
            return Err(Error::ShapeMismatch("dense widths must be at least 1".into()));
        }
        let mut rng = rng_from(seed);
        let mut params = Vec::new();
        let mut conv_offsets = Vec::new();
        for (head, shapes) in spec.heads.iter().zip(&shapes) {
            let mut ch = head.channels.len();
            let mut offs = Vec::new();
            for (layer, shape) in head.layers.iter().zip(shapes) {
                if let SeqLayer::Conv { filters, kernel } = *layer {
                    offs.push(params.len());
                    let n_w = filters * kernel * ch;
                    params.resize(params.len() + n_w + filters, 0.0);
                    let at = params.len() - n_w - filters;
                    glorot(&mut rng, &mut params[at..at + n_w], kernel * ch, kernel * filters);
                }
                ch = shape.1;
            }
            conv_offsets.push(offs);
        }
        let mut dense_slots = Vec::new();
        let mut n_in = spec.flat_width()?;
        for &n_out in spec.dense.iter().chain(std::iter::once(&spec.output)) {
            let offset = params.len();
            params.resize(offset + n_out * n_in + n_out, 0.0);
            glorot(&mut rng, &mut params[offset..offset + n_out * n_in], n_in, n_out);
            dense_slots.push(DenseSlot { offset, n_in, n_out });
            n_in = n_out;
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            conv_offsets,
            dense_slots,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, input: &[Vec<f64>]) -> Result<()> {
        if input.len() != self.spec.input_len || input.iter().any(|r| r.len() != self.spec.input_channels) {
            return Err(Error::ShapeMismatch(format!(
                "input must be {}x{}",
                self.spec.input_len, self.spec.input_channels
            )));
        }
        Ok(())
    }

    /// Returns the output and, per head, the layer caches plus the dense
    /// layer activations (input of each dense layer, then the output).
    fn forward_cached(&self, input: &[Vec<f64>]) -> (Vec<Vec<Cache>>, Vec<usize>, Vec<Vec<f64>>) {
        let p = &self.params;
        let mut caches = Vec::with_capacity(self.spec.heads.len());
        let mut flat = Vec::new();
        let mut widths = Vec::new();
        for (head, offs) in self.spec.heads.iter().zip(&self.conv_offsets) {
            let mut x = Tensor {
                len: input.len(),
                ch: head.channels.len(),
                data: input.iter().flat_map(|row| head.channels.iter().map(move |&c| row[c])).collect(),
            };
            let mut cache = Vec::with_capacity(head.layers.len());
            let mut conv_i = 0;
            for layer in &head.layers {
                match *layer {
                    SeqLayer::Conv { filters, kernel } => {
                        let off = offs[conv_i];
                        conv_i += 1;
                        let n_w = filters * kernel * x.ch;
                        let y = conv_forward(&x, &p[off..off + n_w], &p[off + n_w..off + n_w + filters], filters, kernel);
                        cache.push(Cache::Conv {
                            input: std::mem::replace(&mut x, y.clone()),
                            output: y,
                            offset: off,
                            filters,
                            kernel,
                        });
                    }
                    SeqLayer::Pool { size } => {
                        let (y, argmax) = pool_forward(&x, size);
                        cache.push(Cache::Pool { input_len: x.len, ch: x.ch, argmax });
                        x = y;
                    }
                }
            }
            widths.push(x.data.len());
            flat.extend(x.data);
            caches.push(cache);
        }
        let mut acts = vec![flat];
        let last = self.dense_slots.len() - 1;
        for (l, slot) in self.dense_slots.iter().enumerate() {
            let x = acts.last().expect("input activation");
            let w = &p[slot.offset..slot.offset + slot.n_out * slot.n_in];
            let b = &p[slot.offset + slot.n_out * slot.n_in..slot.offset + slot.n_out * (slot.n_in + 1)];
            let y: Vec<f64> = (0..slot.n_out)
                .map(|o| {
                    let z = b[o] + w[o * slot.n_in..(o + 1) * slot.n_in].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(y);
        }
        (caches, widths, acts)
    }

    pub fn predict(&self, input: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_cached(input).2.pop().expect("output layer"))
    }

    /// Adds `∂(d_out · output)/∂params` to `grad` and returns the output.
    fn backward(&self, input: &[Vec<f64>], d_out_of: impl Fn(&[f64]) -> Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        let p = &self.params;
        let (caches, widths, acts) = self.forward_cached(input);
        let out = acts.last().expect("output").clone();
        let mut d = d_out_of(&out);
        let last = self.dense_slots.len() - 1;
        for (l, slot) in self.dense_slots.iter().enumerate().rev() {
            if l != last {
                for (g, y) in d.iter_mut().zip(&acts[l + 1]) {
                    if *y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let x = &acts[l];
            let mut dx = vec![0.0; slot.n_in];
            let b_off = slot.offset + slot.n_out * slot.n_in;
            for o in 0..slot.n_out {
                if d[o] == 0.0 {
                    continue;
                }
                grad[b_off + o] += d[o];
                let row = slot.offset + o * slot.n_in;
                for i in 0..slot.n_in {
                    grad[row + i] += d[o] * x[i];
                    dx[i] += d[o] * p[row + i];
                }
            }
            d = dx;
        }
        let mut start = 0;
        for (cache, width) in caches.iter().zip(widths) {
            let mut dy = d[start..start + width].to_vec();
            start += width;
            for layer in cache.iter().rev() {
                match layer {
                    Cache::Pool { input_len, ch, argmax } => {
                        let mut dx = vec![0.0; input_len * ch];
                        for (g, &at) in dy.iter().zip(argmax) {
                            dx[at] += g;
                        }
                        dy = dx;
                    }
                    Cache::Conv {
                        input,
                        output,
                        offset,
                        filters,
                        kernel,
                    } => {
                        let (ch, f_n, k_n) = (input.ch, *filters, *kernel);
                        let n_w = f_n * k_n * ch;
                        let mut dx = vec![0.0; input.data.len()];
                        for t in 0..output.len {
                            for f in 0..f_n {
                                let i = t * f_n + f;
                                if output.data[i] <= 0.0 || dy[i] == 0.0 {
                                    continue;
                                }
                                let g = dy[i];
                                grad[offset + n_w + f] += g;
                                let w0 = offset + f * k_n * ch;
                                for j in 0..k_n * ch {
                                    grad[w0 + j] += g * input.data[t * ch + j];
                                    dx[t * ch + j] += g * p[w0 + j];
                                }
                            }
                        }
                        dy = dx;
                    }
                }
            }
        }
        out
    }

    /// Mean squared error over outputs and samples, with its gradient.
    pub fn batch_gradient(&self, inputs: &[&[Vec<f64>]], targets: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(Error::LengthMismatch { left: inputs.len(), right: targets.len() });
        }
        let scale = 1.0 / (inputs.len() * self.spec.output) as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            if t.len() != self.spec.output {
                return Err(Error::ShapeMismatch(format!("target width {} expected {}", t.len(), self.spec.output)));
            }
            let out = self.backward(x, |y| y.iter().zip(t.iter()).map(|(a, b)| 2.0 * (a - b) * scale).collect(), &mut grad);
            loss += out.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * scale;
        }
        Ok((loss, grad))
    }

    /// Pre-pooling feature map of the first convolution of head `head`.
    pub fn first_feature_map(&self, head: usize, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_input(input)?;
        let (caches, _, _) = self.forward_cached(input);
        match caches.get(head).and_then(|c| c.first()) {
            Some(Cache::Conv { output, .. }) => Ok(output.data.chunks(output.ch).map(<[f64]>::to_vec).collect()),
            _ => Err(Error::ShapeMismatch(format!("head {head} does not start with a convolution"))),
        }
    }
}

/// Min-max scaling of the weekly variables fitted on training samples;
/// the target uses the open column's range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl WeeklyScaler {
    pub fn fit(samples: &[WeeklySample]) -> Result<Self> {
        let width = samples.first().ok_or(Error::EmptyTrain)?.input[0].len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in samples.iter().flat_map(|s| &s.input) {
            for c in 0..width {
                min[c] = min[c].min(row[c]);
                max[c] = max[c].max(row[c]);
            }
        }
        for t in samples.iter().flat_map(|s| s.target) {
            min[0] = min[0].min(t);
            max[0] = max[0].max(t);
        }
        Ok(Self { min, max })
    }

    fn scale(&self, c: usize, v: f64) -> f64 {
        let span = self.max[c] - self.min[c];
        if span > 0.0 {
            (v - self.min[c]) / span
        } else {
            0.0
        }
    }

    pub fn scale_input(&self, input: &[Vec<f64>]) -> Vec<Vec<f64>> {
        input.iter().map(|row| row.iter().enumerate().map(|(c, &v)| self.scale(c, v)).collect()).collect()
    }

    pub fn scale_target(&self, v: f64) -> f64 {
        self.scale(0, v)
    }

    pub fn unscale_target(&self, v: f64) -> f64 {
        self.min[0] + v * (self.max[0] - self.min[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub net: CnnNet,
    pub scaler: WeeklyScaler,
    pub epoch_loss: Vec<f64>,
}

impl CnnModel {
    /// Five de-scaled opening prices.
    pub fn forecast(&self, input: &[Vec<f64>]) -> Result<Vec<f64>> {
        let y = self.net.predict(&self.scaler.scale_input(input))?;
        Ok(y.into_iter().map(|v| self.scaler.unscale_target(v)).collect())
    }
}

/// Mini-batch Adam on min-max scaled samples; single-threaded.
pub fn cnn_fit(spec: &CnnSpec, train: &[WeeklySample], seed: u64) -> Result<CnnModel> {
    if spec.batch == 0 || !(spec.lr > 0.0) {
        return Err(Error::BadParams("batch must be at least 1 and learning rate positive".into()));
    }
    let scaler = WeeklyScaler::fit(train)?;
    let inputs: Vec<Vec<Vec<f64>>> = train.iter().map(|s| scaler.scale_input(&s.input)).collect();
    let targets: Vec<Vec<f64>> = train.iter().map(|s| s.target.iter().map(|&t| scaler.scale_target(t)).collect()).collect();
    let mut net = CnnNet::new(spec, sub_seed(seed, 0))?;
    let mut adam = AdamState::new(net.n_params(), spec.lr);
    let mut rng = rng_from(sub_seed(seed, 1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_loss = Vec::with_capacity(spec.epochs);
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(spec.batch) {
            let xs: Vec<&[Vec<f64>]> = chunk.iter().map(|&k| inputs[k].as_slice()).collect();
            let ts: Vec<&[f64]> = chunk.iter().map(|&k| targets[k].as_slice()).collect();
            let (loss, grad) = net.batch_gradient(&xs, &ts)?;
            total += loss * chunk.len() as f64;
            adam_step(&mut adam, &mut net.params, &grad)?;
        }
        epoch_loss.push(total / train.len() as f64);
    }
    Ok(CnnModel { net, scaler, epoch_loss })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(len: usize, ch: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed);
        (0..len).map(|_| (0..ch).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn shape_arithmetic() {
        let m1 = cnn_build(CnnVariant::M1).head_shapes().unwrap();
        assert_eq!(m1[0], vec![(3, 16), (1, 16)]);
        assert_eq!(cnn_build(CnnVariant::M1).flat_width().unwrap(), 16);
        let m3 = cnn_build(CnnVariant::M3).head_shapes().unwrap();
        assert_eq!(m3[0], vec![(8, 32), (6, 32), (3, 32), (1, 16), (1, 16)]);
        let m4 = cnn_build(CnnVariant::M4);
        assert_eq!(m4.heads.len(), 5);
        assert_eq!(m4.flat_width().unwrap(), 5 * 4 * 16);
        for v in CnnVariant::ALL {
            assert_eq!(cnn_build(v).output, 5);
        }
    }

    #[test]
    fn oversized_kernel_rejected() {
        let mut spec = cnn_build(CnnVariant::M1);
        spec.heads[0].layers[0] = SeqLayer::Conv { filters: 2, kernel: 6 };
        assert!(matches!(CnnNet::new(&spec, 0), Err(Error::ShapeMismatch(_))));
    }

    fn toy_spec() -> CnnSpec {
        CnnSpec {
            variant: None,
            input_len: 6,
            input_channels: 1,
            heads: vec![HeadSpec {
                channels: vec![0],
                layers: vec![SeqLayer::Conv { filters: 1, kernel: 2 }, SeqLayer::Pool { size: 2 }],
            }],
            dense: vec![3],
            output: 5,
            epochs: 1,
            batch: 1,
            lr: 0.001,
            seed: 0,
        }
    }

    /// Central differences on up to `max_checked` parameters.
    fn worst_fd_error(spec: &CnnSpec, seed: u64, max_checked: usize) -> f64 {
        let mut net = CnnNet::new(spec, seed).unwrap();
        let mut rng = rng_from(seed + 50);
        // positive biases keep ReLUs active and away from their kinks
        for p in &mut net.params {
            if *p == 0.0 {
                *p = rng.random_range(0.05..0.3);
            }
        }
        let inputs: Vec<Vec<Vec<f64>>> = (0..3).map(|k| random_input(spec.input_len, spec.input_channels, seed * 10 + k)).collect();
        let targets: Vec<Vec<f64>> = (0..3).map(|_| (0..spec.output).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let xs: Vec<&[Vec<f64>]> = inputs.iter().map(|v| v.as_slice()).collect();
        let ts: Vec<&[f64]> = targets.iter().map(|v| v.as_slice()).collect();
        let (_, grad) = net.batch_gradient(&xs, &ts).unwrap();
        let mut idx: Vec<usize> = (0..net.n_params()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(max_checked);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in idx {
            let orig = net.params[k];
            net.params[k] = orig + h;
            let up = net.batch_gradient(&xs, &ts).unwrap().0;
            net.params[k] = orig - h;
            let down = net.batch_gradient(&xs, &ts).unwrap().0;
            net.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn toy_conv_gradient_matches_finite_differences() {
        for seed in 1..4 {
            let w = worst_fd_error(&toy_spec(), seed, usize::MAX);
            assert!(w < 1e-4, "seed {seed}: {w}");
        }
    }

    #[test]
    fn variant_gradients_match_finite_differences() {
        for v in CnnVariant::ALL {
            let w = worst_fd_error(&cnn_build(v), 7, 400);
            assert!(w < 1e-4, "{v:?}: {w}");
        }
    }

    #[test]
    fn convolution_is_translation_covariant() {
        let mut spec = toy_spec();
        spec.input_len = 8;
        spec.heads[0].layers = vec![SeqLayer::Conv { filters: 3, kernel: 3 }];
        let mut net = CnnNet::new(&spec, 4).unwrap();
        for p in &mut net.params {
            *p = p.abs() + 0.1;
        }
        let base = random_input(8, 1, 3);
        let shifted: Vec<Vec<f64>> = std::iter::once(vec![0.42]).chain(base[..7].iter().cloned()).collect();
        let a = net.first_feature_map(0, &base).unwrap();
        let b = net.first_feature_map(0, &shifted).unwrap();
        for t in 0..a.len() - 1 {
            for (x, y) in a[t].iter().zip(&b[t + 1]) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn multi_head_reads_its_own_channel() {
        let net = CnnNet::new(&cnn_build(CnnVariant::M4), 2).unwrap();
        let x = random_input(10, 5, 1);
        let mut y = x.clone();
        for row in &mut y {
            row[3] += 0.5;
        }
        assert_eq!(net.first_feature_map(0, &x).unwrap(), net.first_feature_map(0, &y).unwrap());
        assert_ne!(net.first_feature_map(3, &x).unwrap(), net.first_feature_map(3, &y).unwrap());
    }

    #[test]
    fn zero_output_layer_predicts_bias() {
        let mut net = CnnNet::new(&cnn_build(CnnVariant::M2), 1).unwrap();
        let slot = *net.dense_slots.last().unwrap();
        for p in &mut net.params[slot.offset..slot.offset + slot.n_in * slot.n_out] {
            *p = 0.0;
        }
        net.params[slot.offset + slot.n_in * slot.n_out + 2] = 0.7;
        assert_eq!(net.predict(&random_input(10, 1, 5)).unwrap(), vec![0.0, 0.0, 0.7, 0.0, 0.0]);
    }
}
