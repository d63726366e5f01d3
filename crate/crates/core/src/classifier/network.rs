//! Dilated CNN: `[conv -> relu -> avgpool2] x L -> global average pool -> linear`.
//!
//! Parameters live in one flat vector. Layer `l` stores its weights as
//! `[out][in][ky][kx]` followed by `out` biases (absent unless
//! `conv_bias`); the head stores `[class][channel]` weights followed by
//! `classes` biases.
//!
//! Without conv biases every layer up to the head is positively homogeneous,
//! so a featureless (mean-only) input yields zero features and the softmax
//! falls back to the head bias: confidence follows texture contrast.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub num_classes: usize,
    pub conv_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            channels: vec![8, 16, 32],
            kernel_size: 3,
            dilations: vec![1, 2, 4],
            num_classes: 4,
            conv_bias: false,
        }
    }
}

/// Offsets of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn range(self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub conv_weights: Vec<Span>,
    pub conv_biases: Vec<Span>,
    pub head_weights: Span,
    pub head_bias: Span,
    pub total: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.channels.is_empty() {
            return bad("model.channels must not be empty".into());
        }
        if self.channels.len() != self.dilations.len() {
            return bad(format!(
                "model.channels has {} entries but model.dilations has {}",
                self.channels.len(),
                self.dilations.len()
            ));
        }
        if self.channels.contains(&0) || self.dilations.contains(&0) {
            return bad("channel counts and dilations must be at least 1".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("model.kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.num_classes < 2 {
            return bad("model.num_classes must be at least 2".into());
        }
        let depth = self.channels.len() as u32;
        if self.input_size == 0 || self.input_size % (1 << depth) != 0 {
            return bad(format!(
                "model.input_size {} must be a positive multiple of 2^{depth}",
                self.input_size
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let k2 = self.kernel_size * self.kernel_size;
        let mut offset = 0;
        let mut take = |len: usize| {
            let s = Span { start: offset, len };
            offset += len;
            s
        };
        let mut conv_weights = Vec::new();
        let mut conv_biases = Vec::new();
        let mut in_c = 1;
        for &out_c in &self.channels {
            conv_weights.push(take(out_c * in_c * k2));
            conv_biases.push(take(if self.conv_bias { out_c } else { 0 }));
            in_c = out_c;
        }
        let head_weights = take(self.num_classes * in_c);
        let head_bias = take(self.num_classes);
        ParamLayout {
            conv_weights,
            conv_biases,
            head_weights,
            head_bias,
            total: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    fn last_channels(&self) -> usize {
        *self.channels.last().expect("validated config")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            values: vec![0.0; cfg.param_count()],
        }
    }
}

/// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let layout = cfg.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.total];
    let k2 = cfg.kernel_size * cfg.kernel_size;
    let mut in_c = 1;
    for (l, &out_c) in cfg.channels.iter().enumerate() {
        let bound = (6.0 / (in_c * k2) as f64).sqrt();
        for w in &mut values[layout.conv_weights[l].range()] {
            *w = rng.gen_range(-bound..bound);
        }
        in_c = out_c;
    }
    let bound = (6.0 / in_c as f64).sqrt();
    for w in &mut values[layout.head_weights.range()] {
        *w = rng.gen_range(-bound..bound);
    }
    Ok(ModelParams { values })
}

/// Resizes to the model input size, removes the image mean and scales by
/// 1/64, so a featureless image maps to an all-zero input.
pub fn preprocess(img: &ImageBuffer, cfg: &ModelConfig) -> Vec<f64> {
    let small = img.resize_bilinear(cfg.input_size, cfg.input_size);
    let mean = small.mean();
    small.pixels().iter().map(|&p| (f64::from(p) - mean) / 64.0).collect()
}

struct ConvGeom {
    in_c: usize,
    out_c: usize,
    size: usize,
    k: usize,
    dilation: usize,
}

impl ConvGeom {
    /// Visits every kernel tap with its source offset and the output rows
    /// and columns whose source pixel lies inside the map.
    fn for_each_tap(&self, mut f: impl FnMut(usize, isize, isize, Range<usize>, Range<usize>)) {
        let n = self.size as isize;
        let half = (self.k / 2) as isize;
        let valid = |d: isize| {
            let lo = (-d).clamp(0, n);
            let hi = (n - d).clamp(lo, n);
            lo as usize..hi as usize
        };
        for ky in 0..self.k {
            let dy = (ky as isize - half) * self.dilation as isize;
            for kx in 0..self.k {
                let dx = (kx as isize - half) * self.dilation as isize;
                f(ky * self.k + kx, dy, dx, valid(dy), valid(dx));
            }
        }
    }
}

fn conv_forward(g: &ConvGeom, input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let plane = g.size * g.size;
    let k2 = g.k * g.k;
    let mut out = vec![0.0; g.out_c * plane];
    for o in 0..g.out_c {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        let b = bias.get(o).copied().unwrap_or(0.0);
        out_plane.iter_mut().for_each(|v| *v = b);
        for i in 0..g.in_c {
            let in_plane = &input[i * plane..(i + 1) * plane];
            let w = &weights[(o * g.in_c + i) * k2..(o * g.in_c + i + 1) * k2];
            g.for_each_tap(|tap, dy, dx, ys, xs| {
                let wv = w[tap];
                for y in ys {
                    let sy = (y as isize + dy) as usize;
                    let dst = &mut out_plane[y * g.size + xs.start..y * g.size + xs.end];
                    let sx = (xs.start as isize + dx) as usize;
                    let src = &in_plane[sy * g.size + sx..sy * g.size + sx + dst.len()];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            });
        }
    }
    out
}

/// Accumulates weight/bias gradients and, when `grad_input` is given, the
/// input gradient for one convolution.
fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let plane = g.size * g.size;
    let k2 = g.k * g.k;
    for o in 0..g.out_c {
        let go = &grad_out[o * plane..(o + 1) * plane];
        if let Some(b) = grad_b.get_mut(o) {
            *b += go.iter().sum::<f64>();
        }
        for i in 0..g.in_c {
            let in_plane = &input[i * plane..(i + 1) * plane];
            let base = (o * g.in_c + i) * k2;
            g.for_each_tap(|tap, dy, dx, ys, xs| {
                let wv = weights[base + tap];
                let mut acc = 0.0;
                for y in ys {
                    let sy = (y as isize + dy) as usize;
                    let sx = (xs.start as isize + dx) as usize;
                    let len = xs.len();
                    let g_row = &go[y * g.size + xs.start..y * g.size + xs.start + len];
                    let src = &in_plane[sy * g.size + sx..sy * g.size + sx + len];
                    acc += g_row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    if let Some(gi) = grad_input.as_deref_mut() {
                        let dst = &mut gi[i * plane + sy * g.size + sx..i * plane + sy * g.size + sx + len];
                        for (d, gv) in dst.iter_mut().zip(g_row) {
                            *d += wv * gv;
                        }
                    }
                }
                grad_w[base + tap] += acc;
            });
        }
    }
}

fn avg_pool(input: &[f64], channels: usize, size: usize) -> Vec<f64> {
    let half = size / 2;
    let mut out = vec![0.0; channels * half * half];
    for c in 0..channels {
        let src = &input[c * size * size..(c + 1) * size * size];
        let dst = &mut out[c * half * half..(c + 1) * half * half];
        for y in 0..half {
            for x in 0..half {
                let (r0, r1) = (2 * y * size, (2 * y + 1) * size);
                dst[y * half + x] = 0.25 * (src[r0 + 2 * x] + src[r0 + 2 * x + 1] + src[r1 + 2 * x] + src[r1 + 2 * x + 1]);
            }
        }
    }
    out
}

fn avg_pool_backward(grad_out: &[f64], channels: usize, size: usize) -> Vec<f64> {
    let half = size / 2;
    let mut out = vec![0.0; channels * size * size];
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                out[c * size * size + y * size + x] = 0.25 * grad_out[c * half * half + (y / 2) * half + x / 2];
            }
        }
    }
    out
}

/// Activations kept for the backward pass.
struct Trace {
    /// Input to each conv layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation conv outputs.
    pre: Vec<Vec<f64>>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

fn forward_trace(params: &ModelParams, cfg: &ModelConfig, input: &[f64]) -> Trace {
    let layout = cfg.layout();
    let p = &params.values;
    let mut size = cfg.input_size;
    let mut in_c = 1;
    let mut x = input.to_vec();
    let mut inputs = Vec::with_capacity(cfg.channels.len());
    let mut pre = Vec::with_capacity(cfg.channels.len());
    for (l, &out_c) in cfg.channels.iter().enumerate() {
        let g = ConvGeom {
            in_c,
            out_c,
            size,
            k: cfg.kernel_size,
            dilation: cfg.dilations[l],
        };
        let z = conv_forward(&g, &x, &p[layout.conv_weights[l].range()], &p[layout.conv_biases[l].range()]);
        let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        inputs.push(std::mem::replace(&mut x, avg_pool(&a, out_c, size)));
        pre.push(z);
        size /= 2;
        in_c = out_c;
    }
    let plane = size * size;
    let features: Vec<f64> = x.chunks_exact(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect();
    let hw = &p[layout.head_weights.range()];
    let hb = &p[layout.head_bias.range()];
    let logits = (0..cfg.num_classes)
        .map(|j| hb[j] + hw[j * in_c..(j + 1) * in_c].iter().zip(&features).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Trace {
        inputs,
        pre,
        features,
        logits,
    }
}

/// Logits for a preprocessed input of `input_size^2` values.
pub fn forward_input(params: &ModelParams, cfg: &ModelConfig, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != cfg.input_size * cfg.input_size {
        return Err(Error::Dimension(format!(
            "model expects {0}x{0} input, got {1} values",
            cfg.input_size,
            input.len()
        )));
    }
    if params.len() != cfg.param_count() {
        return Err(Error::Dimension(format!(
            "{} parameters for a model with {}",
            params.len(),
            cfg.param_count()
        )));
    }
    Ok(forward_trace(params, cfg, input).logits)
}

/// Logits for an image, resized to the model input if needed.
pub fn forward(params: &ModelParams, cfg: &ModelConfig, img: &ImageBuffer) -> Result<Vec<f64>> {
    forward_input(params, cfg, &preprocess(img, cfg))
}

/// Cross-entropy `-ln softmax(z)[label]` and its gradient with respect to `z`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Loss and parameter gradient for one sample, both multiplied by `scale`.
pub fn sample_gradient(params: &ModelParams, cfg: &ModelConfig, input: &[f64], label: usize, scale: f64) -> (f64, Vec<f64>) {
    let layout = cfg.layout();
    let p = &params.values;
    let t = forward_trace(params, cfg, input);
    let (loss, dlogits) = cross_entropy(&t.logits, label);
    let mut grad = vec![0.0; layout.total];

    let c_last = cfg.last_channels();
    let hw = &p[layout.head_weights.range()];
    let mut dfeat = vec![0.0; c_last];
    {
        let (gw, gb) = grad.split_at_mut(layout.head_bias.start);
        let gw = &mut gw[layout.head_weights.range()];
        for j in 0..cfg.num_classes {
            let dz = scale * dlogits[j];
            gb[j] += dz;
            for c in 0..c_last {
                gw[j * c_last + c] += dz * t.features[c];
                dfeat[c] += dz * hw[j * c_last + c];
            }
        }
    }

    let depth = cfg.channels.len();
    let final_size = cfg.input_size >> depth;
    let plane = final_size * final_size;
    let mut dx: Vec<f64> = dfeat.iter().flat_map(|&d| std::iter::repeat_n(d / plane as f64, plane)).collect();
    for l in (0..depth).rev() {
        let size = cfg.input_size >> l;
        let out_c = cfg.channels[l];
        let in_c = if l == 0 { 1 } else { cfg.channels[l - 1] };
        let mut dz = avg_pool_backward(&dx, out_c, size);
        for (d, z) in dz.iter_mut().zip(&t.pre[l]) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let g = ConvGeom {
            in_c,
            out_c,
            size,
            k: cfg.kernel_size,
            dilation: cfg.dilations[l],
        };
        let mut d_in = if l > 0 { Some(vec![0.0; in_c * size * size]) } else { None };
        let wspan = layout.conv_weights[l];
        let bspan = layout.conv_biases[l];
        let (lo, hi) = grad.split_at_mut(bspan.start);
        conv_backward(
            &g,
            &t.inputs[l],
            &p[wspan.range()],
            &dz,
            &mut lo[wspan.range()],
            &mut hi[..bspan.len],
            d_in.as_deref_mut(),
        );
        if let Some(d) = d_in {
            dx = d;
        }
    }
    (scale * loss, grad)
}

/// Mean cross-entropy over a batch and its gradient, scaled by `scale`.
/// Per-sample gradients are summed in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &[Vec<f64>],
    labels: &[usize],
    scale: f64,
    exec: crate::Exec,
) -> (f64, Vec<f64>) {
    let n = inputs.len() as f64;
    let per_sample = exec.map_range(inputs.len(), |i| sample_gradient(params, cfg, &inputs[i], labels[i], scale / n));
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (loss, grad)
}

pub fn batch_loss(params: &ModelParams, cfg: &ModelConfig, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = inputs.len() as f64;
    inputs
        .iter()
        .zip(labels)
        .map(|(x, &y)| cross_entropy(&forward_trace(params, cfg, x).logits, y).0)
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Probes whose +-step flipped a rectifier, where central differences
    /// do not estimate the derivative.
    pub skipped_kinks: usize,
    /// Worst error per parameter tensor, in layout order.
    pub per_tensor: Vec<(String, f64)>,
}

const FD_STEP: f64 = 1e-4;
// Central differences carry ~1e-12 of rounding noise at this step, so
// gradients below the floor are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Loss plus the sign of every pre-activation, for kink detection.
fn loss_and_pattern(params: &ModelParams, cfg: &ModelConfig, inputs: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<bool>) {
    let mut pattern = Vec::new();
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let t = forward_trace(params, cfg, x);
        pattern.extend(t.pre.iter().flatten().map(|&z| z > 0.0));
        loss += cross_entropy(&t.logits, y).0;
    }
    (loss / inputs.len() as f64, pattern)
}

/// Compares backprop against central finite differences on up to
/// `max_params` parameters, spread across every tensor. Probes that move a
/// rectifier across zero are skipped and counted.
pub fn gradient_check(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &[Vec<f64>],
    labels: &[usize],
    max_params: usize,
    seed: u64,
) -> GradientCheck {
    let (_, analytic) = batch_gradient(params, cfg, inputs, labels, 1.0, crate::Exec::Sequential);
    let layout = cfg.layout();
    let mut tensors: Vec<(String, Span)> = Vec::new();
    for l in 0..cfg.channels.len() {
        tensors.push((format!("conv{l}.weight"), layout.conv_weights[l]));
        if layout.conv_biases[l].len > 0 {
            tensors.push((format!("conv{l}.bias"), layout.conv_biases[l]));
        }
    }
    tensors.push(("head.weight".into(), layout.head_weights));
    tensors.push(("head.bias".into(), layout.head_bias));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_tensor_quota = (max_params / tensors.len()).max(1);
    let mut probe = params.clone();
    let (_, base) = loss_and_pattern(params, cfg, inputs, labels);
    let mut checked = 0;
    let mut skipped_kinks = 0;
    let mut per_tensor = Vec::new();
    for (name, span) in &tensors {
        let indices: Vec<usize> = if span.len <= per_tensor_quota {
            span.range().collect()
        } else {
            (0..per_tensor_quota).map(|_| rng.gen_range(span.range())).collect()
        };
        let mut worst: f64 = 0.0;
        for i in indices {
            let orig = probe.values[i];
            probe.values[i] = orig + FD_STEP;
            let (up, up_pattern) = loss_and_pattern(&probe, cfg, inputs, labels);
            probe.values[i] = orig - FD_STEP;
            let (down, down_pattern) = loss_and_pattern(&probe, cfg, inputs, labels);
            probe.values[i] = orig;
            if up_pattern != base || down_pattern != base {
                skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
        per_tensor.push((name.clone(), worst));
    }
    GradientCheck {
        max_relative_error: per_tensor.iter().map(|t| t.1).fold(0.0, f64::max),
        checked,
        skipped_kinks,
        per_tensor,
    }
}
