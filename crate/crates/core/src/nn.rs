//! Dense autoencoder engine.
//!
//! Parameters live in one flat `f64` buffer ([`ParamVector`]) with per-layer
//! shape metadata, so that clients and the server can add, scale and average
//! models without knowing anything about layers. Layer `l` stores its weight
//! matrix row-major as `fan_in x fan_out`, followed by `fan_out` biases.
//!
//! Hidden layers use Leaky-ReLU; the encoder bottleneck and the decoder output
//! use Tanh. The reconstruction objective mixes a binary cross-entropy over the
//! one-hot segments with a squared error over the numeric slots.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Container};
use crate::data::SegmentLayout;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Probabilities fed to the cross-entropy are clamped to `[EPS, 1 - EPS]`.
pub const PROB_EPS: f64 = 1e-6;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.4;
pub const DEFAULT_THETA_MIX: f64 = 2.0 / 3.0;
pub const DEFAULT_BATCH_SIZE: usize = 16;

const CHECKPOINT_MAGIC: &[u8; 4] = b"FLAE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
}

/// Widths of a symmetric encoder/decoder pair. The first encoder width and the
/// last decoder width are the input dimension; the last encoder width is the
/// bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub leaky_slope: f64,
}

const SHALLOW_HIDDEN: [usize; 7] = [128, 64, 32, 16, 8, 4, 2];
const DEEP_HIDDEN: [usize; 11] = [2048, 1024, 512, 256, 128, 64, 32, 16, 8, 4, 2];

impl ArchitectureSpec {
    pub fn new(encoder_widths: Vec<usize>, decoder_widths: Vec<usize>, leaky_slope: f64) -> Result<Self> {
        let spec = ArchitectureSpec {
            encoder_widths,
            decoder_widths,
            leaky_slope,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Encoder `widths` mirrored into the decoder.
    pub fn symmetric(encoder_widths: Vec<usize>) -> Result<Self> {
        let mut decoder = encoder_widths.clone();
        decoder.reverse();
        Self::new(encoder_widths, decoder, DEFAULT_LEAKY_SLOPE)
    }

    /// Eight-layer encoder `|x|,128,64,32,16,8,4,2` (global anomalies).
    pub fn shallow(input_dim: usize) -> Result<Self> {
        let mut w = vec![input_dim];
        w.extend_from_slice(&SHALLOW_HIDDEN);
        Self::symmetric(w)
    }

    /// Twelve-layer encoder `|x|,2048,...,4,2` (local anomalies).
    pub fn deep(input_dim: usize) -> Result<Self> {
        let mut w = vec![input_dim];
        w.extend_from_slice(&DEEP_HIDDEN);
        Self::symmetric(w)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config("/architecture", m.to_string()));
        if self.encoder_widths.len() < 2 {
            return bad("encoder needs at least an input and a bottleneck width");
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return bad("layer widths must be positive");
        }
        let mut rev = self.encoder_widths.clone();
        rev.reverse();
        if rev != self.decoder_widths {
            return bad("decoder widths must mirror the encoder widths");
        }
        if !(self.leaky_slope.is_finite()) || self.leaky_slope <= 0.0 {
            return bad("leaky slope must be positive");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_widths[0]
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_widths.last().expect("validated")
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let chain: Vec<usize> = self
            .encoder_widths
            .iter()
            .chain(self.decoder_widths.iter().skip(1))
            .copied()
            .collect();
        chain
            .windows(2)
            .map(|w| LayerShape {
                fan_in: w[0],
                fan_out: w[1],
            })
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        let n_enc = self.encoder_widths.len() - 1;
        let n = n_enc + self.decoder_widths.len() - 1;
        (0..n)
            .map(|l| {
                if l == n_enc - 1 || l == n - 1 {
                    Activation::Tanh
                } else {
                    Activation::LeakyRelu
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(LayerShape::param_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

/// Flat model parameters (or gradients) with layer metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub shapes: Vec<LayerShape>,
}

impl ParamVector {
    pub fn zeros(shapes: Vec<LayerShape>) -> Self {
        let n = shapes.iter().map(LayerShape::param_count).sum();
        ParamVector {
            values: vec![0.0; n],
            shapes,
        }
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        Self::zeros(other.shapes.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &ParamVector) -> bool {
        self.shapes == other.shapes && self.values.len() == other.values.len()
    }

    pub fn check_shape(&self, other: &ParamVector) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "parameter vectors differ: {} vs {} values",
                self.len(),
                other.len()
            )))
        }
    }

    /// Offset of layer `l`'s weights in `values`.
    fn offset(&self, l: usize) -> usize {
        self.shapes[..l].iter().map(LayerShape::param_count).sum()
    }

    pub fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = self.shapes[l];
        let o = self.offset(l);
        ArrayView2::from_shape((s.fan_in, s.fan_out), &self.values[o..o + s.fan_in * s.fan_out]).expect("layout")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let s = self.shapes[l];
        let o = self.offset(l) + s.fan_in * s.fan_out;
        ArrayView1::from(&self.values[o..o + s.fan_out])
    }

    fn layer_mut(&mut self, l: usize) -> (ArrayViewMut2<'_, f64>, &mut [f64]) {
        let s = self.shapes[l];
        let o = self.offset(l);
        let (w, b) = self.values[o..o + s.param_count()].split_at_mut(s.fan_in * s.fan_out);
        (
            ArrayViewMut2::from_shape((s.fan_in, s.fan_out), w).expect("layout"),
            b,
        )
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ParamVector) -> Result<()> {
        self.check_shape(other)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_shape(other)?;
        Ok(ParamVector {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            shapes: self.shapes.clone(),
        })
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_container(&self) -> Container {
        Container {
            dims: self
                .shapes
                .iter()
                .map(|s| (s.fan_in as u32, s.fan_out as u32))
                .collect(),
            values: self.values.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 8 * self.shapes.len() + 8 * self.len());
        codec::write_container(&mut buf, CHECKPOINT_MAGIC, &self.to_container()).expect("vec write");
        buf
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let c = codec::read_container(input, CHECKPOINT_MAGIC, |dims| {
            dims.iter().map(|&(r, c)| (r as usize) * (c as usize) + c as usize).sum()
        })?;
        Ok(ParamVector {
            values: c.values,
            shapes: c
                .dims
                .into_iter()
                .map(|(r, c)| LayerShape {
                    fan_in: r as usize,
                    fan_out: c as usize,
                })
                .collect(),
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut f)
    }

    /// Short hex digest of the raw bytes.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(spec: &ArchitectureSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = crate::rng::stream(seed, "init", &[]);
    let mut params = ParamVector::zeros(spec.layer_shapes());
    for l in 0..params.shapes.len() {
        let s = params.shapes[l];
        let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
        let (mut w, _) = params.layer_mut(l);
        w.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
    }
    Ok(params)
}

/// Activations of every layer for one batch; `activations[0]` is the input.
pub struct ForwardPass {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("non-empty")
    }
}

fn check_params(params: &ParamVector, spec: &ArchitectureSpec) -> Result<()> {
    let shapes = spec.layer_shapes();
    if params.shapes != shapes {
        return Err(Error::Shape("parameters do not match the architecture".into()));
    }
    Ok(())
}

pub fn forward_pass(params: &ParamVector, spec: &ArchitectureSpec, inputs: ArrayView2<f64>) -> Result<ForwardPass> {
    check_params(params, spec)?;
    if inputs.ncols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "batch width {} does not match input dimension {}",
            inputs.ncols(),
            spec.input_dim()
        )));
    }
    let slope = spec.leaky_slope;
    let mut acts = Vec::with_capacity(params.shapes.len() + 1);
    acts.push(inputs.to_owned());
    for (l, act) in spec.activations().into_iter().enumerate() {
        let w = params.weights(l);
        let b = params.bias(l);
        let prev = acts.last().expect("input pushed");
        let mut z = Array2::zeros((prev.nrows(), w.ncols()));
        general_mat_mul(1.0, prev, &w, 0.0, &mut z);
        z += &b;
        match act {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::LeakyRelu => z.mapv_inplace(|v| if v > 0.0 { v } else { slope * v }),
        }
        acts.push(z);
    }
    Ok(ForwardPass { activations: acts })
}

/// Reconstruction of every input row; values lie in (-1, 1).
pub fn forward(params: &ParamVector, spec: &ArchitectureSpec, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut pass = forward_pass(params, spec, inputs)?;
    Ok(pass.activations.pop().expect("non-empty"))
}

/// Per-row (or batch-mean) reconstruction loss split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce_part: f64,
    pub mse_part: f64,
    pub theta_mix: f64,
}

impl LossBreakdown {
    fn from_parts(bce_part: f64, mse_part: f64, theta_mix: f64) -> Self {
        LossBreakdown {
            total: theta_mix * bce_part + (1.0 - theta_mix) * mse_part,
            bce_part,
            mse_part,
            theta_mix,
        }
    }
}

#[inline]
fn to_prob(y: f64) -> (f64, bool) {
    let p = 0.5 * (y + 1.0);
    if p < PROB_EPS {
        (PROB_EPS, true)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (p, false)
    }
}

/// Loss of a single row and, optionally, `d loss / d output` scaled by
/// `grad_scale` and accumulated into `grad`.
fn row_loss(
    layout: &SegmentLayout,
    target: ArrayView1<f64>,
    output: ArrayView1<f64>,
    theta_mix: f64,
    grad: Option<(&mut [f64], f64)>,
) -> Result<LossBreakdown> {
    if output.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("reconstruction contains non-finite values".into()));
    }
    let mut bce = 0.0;
    let mut mse = 0.0;
    let mut grad = grad;
    for seg in &layout.categorical {
        let upsilon = seg.len() as f64;
        let mut attr = 0.0;
        for i in seg.clone() {
            let t = target[i];
            let (p, clamped) = to_prob(output[i]);
            attr -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            if let Some((g, scale)) = grad.as_mut() {
                if !clamped {
                    // d/dy of -(t ln p + (1-t) ln(1-p)) with dp/dy = 1/2
                    let dp = -(t / p) + (1.0 - t) / (1.0 - p);
                    g[i] += *scale * theta_mix * 0.5 * dp / upsilon;
                }
            }
        }
        bce += attr / upsilon;
    }
    for i in layout.numeric() {
        let d = output[i] - target[i];
        mse += d * d;
        if let Some((g, scale)) = grad.as_mut() {
            g[i] += *scale * (1.0 - theta_mix) * 2.0 * d;
        }
    }
    Ok(LossBreakdown::from_parts(bce, mse, theta_mix))
}

/// Combined cross-entropy / squared-error loss for one encoded row.
pub fn reconstruction_loss(
    layout: &SegmentLayout,
    target: &[f64],
    output: &[f64],
    theta_mix: f64,
) -> Result<LossBreakdown> {
    if target.len() != layout.width() || output.len() != layout.width() {
        return Err(Error::Shape(format!(
            "row widths {}/{} do not match layout width {}",
            target.len(),
            output.len(),
            layout.width()
        )));
    }
    row_loss(layout, ArrayView1::from(target), ArrayView1::from(output), theta_mix, None)
}

/// Per-row losses of a batch.
pub fn row_losses(
    layout: &SegmentLayout,
    targets: ArrayView2<f64>,
    outputs: ArrayView2<f64>,
    theta_mix: f64,
) -> Result<Vec<LossBreakdown>> {
    targets
        .outer_iter()
        .zip(outputs.outer_iter())
        .map(|(t, o)| row_loss(layout, t, o, theta_mix, None))
        .collect()
}

/// Batch-mean loss and its gradient with respect to the outputs.
pub fn loss_with_output_grad(
    layout: &SegmentLayout,
    targets: ArrayView2<f64>,
    outputs: ArrayView2<f64>,
    theta_mix: f64,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let n = targets.nrows();
    let mut d_out = Array2::zeros(outputs.raw_dim());
    let (mut bce, mut mse) = (0.0, 0.0);
    let scale = 1.0 / n as f64;
    for (i, (t, o)) in targets.outer_iter().zip(outputs.outer_iter()).enumerate() {
        let mut drow = d_out.row_mut(i);
        let g = drow.as_slice_mut().expect("standard layout");
        let lb = row_loss(layout, t, o, theta_mix, Some((g, scale)))?;
        bce += lb.bce_part;
        mse += lb.mse_part;
    }
    Ok((LossBreakdown::from_parts(bce * scale, mse * scale, theta_mix), d_out))
}

/// Backpropagate `d_out` (gradient w.r.t. the final activations) through a
/// cached forward pass.
pub fn backprop(params: &ParamVector, spec: &ArchitectureSpec, pass: &ForwardPass, d_out: Array2<f64>) -> ParamVector {
    let mut grad = ParamVector::zeros_like(params);
    let acts = spec.activations();
    let slope = spec.leaky_slope;
    let mut delta = d_out;
    for l in (0..params.shapes.len()).rev() {
        let a = &pass.activations[l + 1];
        match acts[l] {
            Activation::Tanh => Zip::from(&mut delta).and(a).for_each(|d, &y| *d *= 1.0 - y * y),
            Activation::LeakyRelu => Zip::from(&mut delta).and(a).for_each(|d, &y| {
                if y <= 0.0 {
                    *d *= slope
                }
            }),
        }
        let prev = &pass.activations[l];
        {
            let (mut gw, gb) = grad.layer_mut(l);
            general_mat_mul(1.0, &prev.t(), &delta, 0.0, &mut gw);
            let col_sums: Array1<f64> = delta.sum_axis(Axis(0));
            gb.copy_from_slice(col_sums.as_slice().expect("contiguous"));
        }
        if l > 0 {
            let w = params.weights(l);
            let mut next = Array2::zeros((delta.nrows(), w.nrows()));
            general_mat_mul(1.0, &delta, &w.t(), 0.0, &mut next);
            delta = next;
        }
    }
    grad
}

/// Gradient of the batch-mean reconstruction loss.
pub fn backward(
    params: &ParamVector,
    spec: &ArchitectureSpec,
    batch: ArrayView2<f64>,
    layout: &SegmentLayout,
    theta_mix: f64,
) -> Result<(ParamVector, LossBreakdown)> {
    if layout.width() != spec.input_dim() {
        return Err(Error::Shape("layout width does not match the architecture".into()));
    }
    let pass = forward_pass(params, spec, batch)?;
    let (loss, d_out) = loss_with_output_grad(layout, batch, pass.output().view(), theta_mix)?;
    Ok((backprop(params, spec, &pass, d_out), loss))
}

/// Adam moments and hyperparameters for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.step_count = 0;
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ParamVector, grads: &ParamVector, state: &mut AdamState) -> Result<()> {
    adam_step_corrected(params, grads, state, None)
}

/// Adam update whose direction `m_hat / (sqrt(v_hat) + eps)` is shifted by
/// `correction` before scaling with the learning rate.
pub fn adam_step_corrected(
    params: &mut ParamVector,
    grads: &ParamVector,
    state: &mut AdamState,
    correction: Option<&[f64]>,
) -> Result<()> {
    if correction.is_some_and(|c| c.len() != params.len()) {
        return Err(Error::Shape("direction correction length differs from params".into()));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam lengths differ: params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (((p, &g), m), v)) in params
        .values
        .iter_mut()
        .zip(&grads.values)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .enumerate()
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        let dir = m_hat / (v_hat.sqrt() + state.epsilon);
        match correction {
            None => *p -= state.lr * dir,
            Some(c) => *p -= state.lr * (dir + c[i]),
        }
    }
    Ok(())
}

/// Interceptor for strategy-specific training behaviour.
///
/// Terms returned by the hook are added to the batch loss; gradients are
/// accumulated into the supplied buffers.
pub trait LossHook {
    /// Extend or replace the sampled batch before the forward pass.
    fn augment(&mut self, batch: Array2<f64>) -> Array2<f64> {
        batch
    }

    /// Output-space term (e.g. distillation); adds to `d_out`.
    fn output_term(&mut self, _inputs: ArrayView2<f64>, _outputs: ArrayView2<f64>, _d_out: &mut Array2<f64>) -> Result<f64> {
        Ok(0.0)
    }

    /// Parameter-space term (e.g. quadratic anchors); adds to `grad`.
    fn param_term(&mut self, _params: &ParamVector, _grad: &mut ParamVector) -> Result<f64> {
        Ok(0.0)
    }

    /// Offset added to the optimizer's update direction (drift correction).
    fn step_correction(&self) -> Option<&[f64]> {
        None
    }
}

/// Plain reconstruction training.
pub struct NoHook;

impl LossHook for NoHook {}

/// Applies several hooks in order.
pub struct HookChain<'a>(pub Vec<&'a mut dyn LossHook>);

impl LossHook for HookChain<'_> {
    fn augment(&mut self, mut batch: Array2<f64>) -> Array2<f64> {
        for h in self.0.iter_mut() {
            batch = h.augment(batch);
        }
        batch
    }

    fn output_term(&mut self, inputs: ArrayView2<f64>, outputs: ArrayView2<f64>, d_out: &mut Array2<f64>) -> Result<f64> {
        let mut total = 0.0;
        for h in self.0.iter_mut() {
            total += h.output_term(inputs, outputs, d_out)?;
        }
        Ok(total)
    }

    fn param_term(&mut self, params: &ParamVector, grad: &mut ParamVector) -> Result<f64> {
        let mut total = 0.0;
        for h in self.0.iter_mut() {
            total += h.param_term(params, grad)?;
        }
        Ok(total)
    }

    fn step_correction(&self) -> Option<&[f64]> {
        self.0.iter().find_map(|h| h.step_correction())
    }
}

/// Patience-based stop on windowed mean loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
    /// Iterations per evaluation window.
    pub window: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            patience: 5,
            min_delta: 1e-5,
            window: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub n_iters: usize,
    pub batch_size: usize,
    pub theta_mix: f64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            n_iters: 1000,
            batch_size: DEFAULT_BATCH_SIZE,
            theta_mix: DEFAULT_THETA_MIX,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    /// Reconstruction part of the last batch loss (hook terms excluded).
    pub last_loss: f64,
    /// Mean reconstruction loss over all steps.
    pub mean_loss: f64,
    pub stopped_early: bool,
}

/// Epoch-wise shuffled minibatch sampler.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchSampler {
    fn new(n: usize, batch: usize) -> Self {
        BatchSampler {
            order: (0..n).collect(),
            cursor: n,
            batch: batch.min(n),
        }
    }

    fn next(&mut self, rng: &mut SimRng) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let s = &self.order[self.cursor..self.cursor + self.batch];
        self.cursor += self.batch;
        s
    }
}

/// Run `opts.n_iters` minibatch Adam steps on `data`.
#[allow(clippy::too_many_arguments)]
pub fn train_iterations(
    params: &mut ParamVector,
    state: &mut AdamState,
    spec: &ArchitectureSpec,
    layout: &SegmentLayout,
    data: ArrayView2<f64>,
    opts: &TrainOptions,
    rng: &mut SimRng,
    hook: &mut dyn LossHook,
) -> Result<TrainReport> {
    if data.nrows() == 0 {
        return Err(Error::config("/data", "training data is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::config("/gamma", "batch size must be positive"));
    }
    let mut sampler = BatchSampler::new(data.nrows(), opts.batch_size);
    let mut report = TrainReport {
        steps: 0,
        last_loss: f64::NAN,
        mean_loss: f64::NAN,
        stopped_early: false,
    };
    let mut sum = 0.0;
    let mut window_sum = 0.0;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for it in 0..opts.n_iters {
        let idx = sampler.next(rng);
        let batch = hook.augment(data.select(Axis(0), idx));
        let pass = forward_pass(params, spec, batch.view())?;
        let (loss, mut d_out) = loss_with_output_grad(layout, batch.view(), pass.output().view(), opts.theta_mix)?;
        hook.output_term(batch.view(), pass.output().view(), &mut d_out)?;
        let mut grad = backprop(params, spec, &pass, d_out);
        hook.param_term(params, &mut grad)?;
        adam_step_corrected(params, &grad, state, hook.step_correction())?;
        report.steps += 1;
        report.last_loss = loss.total;
        sum += loss.total;
        if let Some(es) = opts.early_stop {
            window_sum += loss.total;
            if (it + 1) % es.window.max(1) == 0 {
                let mean = window_sum / es.window.max(1) as f64;
                window_sum = 0.0;
                if mean < best - es.min_delta {
                    best = mean;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= es.patience {
                        report.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    if report.steps > 0 {
        report.mean_loss = sum / report.steps as f64;
    }
    Ok(report)
}

/// Mean reconstruction loss of a whole table under `params`.
pub fn mean_loss(
    params: &ParamVector,
    spec: &ArchitectureSpec,
    layout: &SegmentLayout,
    data: ArrayView2<f64>,
    theta_mix: f64,
) -> Result<f64> {
    let out = forward(params, spec, data)?;
    let losses = row_losses(layout, data, out.view(), theta_mix)?;
    Ok(losses.iter().map(|l| l.total).sum::<f64>() / losses.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn layout(cat: &[usize], num: usize) -> SegmentLayout {
        let mut o = 0;
        let categorical = cat
            .iter()
            .map(|&u| {
                let r = o..o + u;
                o += u;
                r
            })
            .collect();
        SegmentLayout {
            categorical,
            numeric_offset: o,
            numeric_count: num,
        }
    }

    #[test]
    fn param_count_by_hand() {
        let spec = ArchitectureSpec::new(vec![10, 4, 2], vec![2, 4, 10], 0.4).unwrap();
        assert_eq!(spec.param_count(), (10 * 4 + 4) + (4 * 2 + 2) + (2 * 4 + 4) + (4 * 10 + 10));
        assert_eq!(spec.param_count(), 116);
        assert_eq!(init_model(&spec, 1).unwrap().len(), 116);
    }

    #[test]
    fn shallow_widths() {
        let spec = ArchitectureSpec::shallow(128).unwrap();
        assert_eq!(spec.encoder_widths, vec![128, 128, 64, 32, 16, 8, 4, 2]);
        assert_eq!(spec.decoder_widths, vec![2, 4, 8, 16, 32, 64, 128, 128]);
        let deep = ArchitectureSpec::deep(50).unwrap();
        assert_eq!(deep.encoder_widths.len(), 12);
        assert_eq!(deep.bottleneck(), 2);
    }

    #[test]
    fn invalid_specs_are_configuration_errors() {
        assert!(matches!(
            ArchitectureSpec::new(vec![10, 4, 2], vec![2, 5, 10], 0.4),
            Err(Error::Config { .. })
        ));
        assert!(ArchitectureSpec::new(vec![10, 0, 2], vec![2, 0, 10], 0.4).is_err());
        assert!(ArchitectureSpec::new(vec![10], vec![10], 0.4).is_err());
    }

    #[test]
    fn activations_place_tanh_at_bottleneck_and_output() {
        let spec = ArchitectureSpec::symmetric(vec![6, 4, 2]).unwrap();
        use Activation::*;
        assert_eq!(spec.activations(), vec![LeakyRelu, Tanh, LeakyRelu, Tanh]);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = ArchitectureSpec::shallow(20).unwrap();
        let a = init_model(&spec, 7).unwrap();
        let b = init_model(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(&spec, 8).unwrap());
        for l in 0..a.shapes.len() {
            let s = a.shapes[l];
            let lim = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            assert!(a.weights(l).iter().all(|w| w.abs() <= lim));
            assert!(a.bias(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let spec = ArchitectureSpec::symmetric(vec![3, 2]).unwrap();
        let p = ParamVector::zeros(spec.layer_shapes());
        let out = forward(&p, &spec, array![[0.3, -1.0, 2.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_forward_pass() {
        // 2 -> 2 (tanh bottleneck) -> 2 (tanh output), identity weights
        let spec = ArchitectureSpec::symmetric(vec![2, 2]).unwrap();
        let mut p = ParamVector::zeros(spec.layer_shapes());
        // layer 0: W = I, b = (0.1, 0); layer 1: W = I, b = 0
        p.values[..6].copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.1, 0.0]);
        p.values[6..12].copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let out = forward(&p, &spec, array![[0.5, -0.2]].view()).unwrap();
        let h0 = (0.5f64 + 0.1).tanh();
        let h1 = (-0.2f64).tanh();
        assert!((out[[0, 0]] - h0.tanh()).abs() < 1e-15);
        assert!((out[[0, 1]] - h1.tanh()).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let spec = ArchitectureSpec::symmetric(vec![3, 2]).unwrap();
        let p = init_model(&spec, 1).unwrap();
        assert!(matches!(forward(&p, &spec, array![[1.0, 2.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_fixture() {
        let lay = layout(&[2], 1);
        // mapped probabilities (0.8, 0.2) correspond to y = 2p - 1
        let lb = reconstruction_loss(&lay, &[1.0, 0.0, 0.5], &[0.6, -0.6, 0.3], DEFAULT_THETA_MIX).unwrap();
        assert!((lb.bce_part - 0.223_143_551_314_209_7).abs() < 1e-12);
        assert!((lb.mse_part - 0.04).abs() < 1e-12);
        assert!((lb.total - 0.162_095_700_876_139_8).abs() < 1e-9);
        assert_eq!(lb.total, lb.theta_mix * lb.bce_part + (1.0 - lb.theta_mix) * lb.mse_part);
    }

    #[test]
    fn loss_sums_over_attributes() {
        let lay = layout(&[2, 2], 2);
        // second attribute predicted (0.5, 0.5): BCE ln 2; second amount exact
        let lb = reconstruction_loss(
            &lay,
            &[1.0, 0.0, 0.0, 1.0, 0.5, 0.1],
            &[0.6, -0.6, 0.0, 0.0, 0.3, 0.1],
            DEFAULT_THETA_MIX,
        )
        .unwrap();
        assert!((lb.bce_part - (0.223_143_551_314_209_7 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((lb.mse_part - 0.04).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_is_near_zero() {
        let lay = layout(&[2, 3], 1);
        let lb = reconstruction_loss(&lay, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.25], &[1.0, -1.0, -1.0, -1.0, 1.0, 0.25], 0.5)
            .unwrap();
        assert!(lb.total <= 2.0 * -(1.0f64 - 1e-6).ln());
        assert!(lb.total >= 0.0);
    }

    #[test]
    fn non_finite_output_is_numeric_error() {
        let lay = layout(&[2], 0);
        assert!(matches!(
            reconstruction_loss(&lay, &[1.0, 0.0], &[f64::NAN, 0.0], 0.5),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn adam_first_step() {
        let shapes = vec![LayerShape { fan_in: 0, fan_out: 1 }];
        let mut p = ParamVector {
            values: vec![0.0],
            shapes: shapes.clone(),
        };
        let g = ParamVector {
            values: vec![1.0],
            shapes,
        };
        let mut st = AdamState::new(1, 1e-3);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p.values[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_correction_is_plain_adam() {
        let shapes = vec![LayerShape { fan_in: 0, fan_out: 3 }];
        let g = ParamVector {
            values: vec![0.3, -1.7, 0.01],
            shapes: shapes.clone(),
        };
        let start = ParamVector {
            values: vec![0.5, 0.25, -0.125],
            shapes,
        };
        let (mut a, mut b) = (start.clone(), start.clone());
        let (mut sa, mut sb) = (AdamState::new(3, 1e-3), AdamState::new(3, 1e-3));
        for _ in 0..3 {
            adam_step(&mut a, &g, &mut sa).unwrap();
            adam_step_corrected(&mut b, &g, &mut sb, Some(&[0.0; 3])).unwrap();
        }
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn correction_shifts_the_step_by_lr_c() {
        let shapes = vec![LayerShape { fan_in: 0, fan_out: 2 }];
        let g = ParamVector {
            values: vec![1.0, -2.0],
            shapes: shapes.clone(),
        };
        let start = ParamVector {
            values: vec![0.0, 0.0],
            shapes,
        };
        let (mut a, mut b) = (start.clone(), start);
        let (mut sa, mut sb) = (AdamState::new(2, 1e-3), AdamState::new(2, 1e-3));
        adam_step(&mut a, &g, &mut sa).unwrap();
        adam_step_corrected(&mut b, &g, &mut sb, Some(&[0.5, -2.0])).unwrap();
        assert!((b.values[0] - (a.values[0] - 1e-3 * 0.5)).abs() < 1e-15);
        assert!((b.values[1] - (a.values[1] + 1e-3 * 2.0)).abs() < 1e-15);
        assert_eq!(sa.m, sb.m);
        assert!(adam_step_corrected(&mut b, &g, &mut sb, Some(&[0.0])).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let spec = ArchitectureSpec::symmetric(vec![4, 2]).unwrap();
        let mut p = init_model(&spec, 3).unwrap();
        let before = p.clone();
        let g = ParamVector::zeros_like(&p);
        let mut st = AdamState::new(p.len(), 1e-3);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
        assert!(st.m.iter().chain(&st.v).all(|&x| x == 0.0));
    }

    #[test]
    fn adam_rejects_length_mismatch() {
        let spec = ArchitectureSpec::symmetric(vec![4, 2]).unwrap();
        let mut p = init_model(&spec, 3).unwrap();
        let mut st = AdamState::new(3, 1e-3);
        let g = ParamVector::zeros_like(&p);
        assert!(matches!(adam_step(&mut p, &g, &mut st), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_gradient_is_mean_of_row_gradients() {
        let spec = ArchitectureSpec::symmetric(vec![5, 3, 2]).unwrap();
        let lay = layout(&[2, 2], 1);
        let p = init_model(&spec, 11).unwrap();
        let data = array![[1.0, 0.0, 0.0, 1.0, 0.3], [0.0, 1.0, 1.0, 0.0, 0.9]];
        let (g, _) = backward(&p, &spec, data.view(), &lay, 0.6).unwrap();
        let (g0, _) = backward(&p, &spec, data.slice(ndarray::s![0..1, ..]), &lay, 0.6).unwrap();
        let (g1, _) = backward(&p, &spec, data.slice(ndarray::s![1..2, ..]), &lay, 0.6).unwrap();
        for i in 0..g.len() {
            assert!((g.values[i] - 0.5 * (g0.values[i] + g1.values[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = ArchitectureSpec::new(vec![10, 4, 2], vec![2, 4, 10], 0.4).unwrap();
        let p = init_model(&spec, 5).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"FLAE");
        assert_eq!(bytes.len(), 12 + 4 * 8 + 116 * 8);
        let back = ParamVector::from_bytes(&bytes).unwrap();
        assert_eq!(back.shapes, p.shapes);
        assert!(back.values.iter().zip(&p.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_iterations_leave_params_unchanged() {
        let spec = ArchitectureSpec::symmetric(vec![3, 2]).unwrap();
        let lay = layout(&[2], 1);
        let mut p = init_model(&spec, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(p.len(), 1e-3);
        let data = array![[1.0, 0.0, 0.5]];
        let opts = TrainOptions {
            n_iters: 0,
            ..Default::default()
        };
        let mut rng = crate::rng::stream(0, "t", &[]);
        train_iterations(&mut p, &mut st, &spec, &lay, data.view(), &opts, &mut rng, &mut NoHook).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn empty_data_is_rejected() {
        let spec = ArchitectureSpec::symmetric(vec![3, 2]).unwrap();
        let lay = layout(&[2], 1);
        let mut p = init_model(&spec, 1).unwrap();
        let mut st = AdamState::new(p.len(), 1e-3);
        let data = Array2::<f64>::zeros((0, 3));
        let mut rng = crate::rng::stream(0, "t", &[]);
        let r = train_iterations(&mut p, &mut st, &spec, &lay, data.view(), &TrainOptions::default(), &mut rng, &mut NoHook);
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn early_stop_can_end_training() {
        let spec = ArchitectureSpec::symmetric(vec![3, 2]).unwrap();
        let lay = layout(&[2], 1);
        let mut p = init_model(&spec, 1).unwrap();
        let mut st = AdamState::new(p.len(), 1e-3);
        let data = array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.25]];
        let opts = TrainOptions {
            n_iters: 100_000,
            batch_size: 2,
            early_stop: Some(EarlyStop {
                patience: 2,
                min_delta: 1.0,
                window: 10,
            }),
            ..Default::default()
        };
        let mut rng = crate::rng::stream(0, "t", &[]);
        let r = train_iterations(&mut p, &mut st, &spec, &lay, data.view(), &opts, &mut rng, &mut NoHook).unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.steps, 30);
        assert_eq!(st.step_count, 30);
    }
}
