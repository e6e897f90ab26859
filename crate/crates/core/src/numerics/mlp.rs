//! Fixed-family network: `tanh` affine encoder layers followed by one linear
//! evidence head. Parameters live in flat vectors so the encoder can be averaged
//! across clients without knowing its layer structure.
//!
//! Layout per layer: weights `(out × in)` row-major, then `out` biases. The encoder
//! concatenates its layers in order; the head is a single such layer.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Layer widths of the encoder (`layers[0]` is the input dimension) plus the
/// class count of the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    layers: Vec<usize>,
    classes: usize,
}

impl Architecture {
    pub fn new(layers: Vec<usize>, classes: usize) -> Result<Self> {
        if layers.is_empty() || layers.contains(&0) {
            return Err(Error::shape(format!(
                "encoder widths must be non-empty and positive, got {layers:?}"
            )));
        }
        if classes == 0 {
            return Err(Error::shape("head needs at least one output class"));
        }
        Ok(Self { layers, classes })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    /// Width of the encoder output feeding the head.
    pub fn feature_dim(&self) -> usize {
        *self.layers.last().expect("non-empty by construction")
    }

    pub fn encoder_len(&self) -> usize {
        encoder_len(&self.layers)
    }

    pub fn head_len(&self) -> usize {
        self.classes * self.feature_dim() + self.classes
    }
}

pub fn encoder_len(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Glorot-uniform init of one dense layer, appended to `out`.
fn init_layer<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R, out: &mut Vec<f64>) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    out.extend((0..fan_in * fan_out).map(|_| dist.sample(rng)));
    out.extend(std::iter::repeat_n(0.0, fan_out));
}

pub fn init_encoder<R: Rng + ?Sized>(layers: &[usize], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoder_len(layers));
    for w in layers.windows(2) {
        init_layer(w[0], w[1], rng, &mut out);
    }
    out
}

pub fn init_head<R: Rng + ?Sized>(feature_dim: usize, classes: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(classes * feature_dim + classes);
    init_layer(feature_dim, classes, rng, &mut out);
    out
}

/// Shared encoder φ plus the client's private head ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    encoder: Vec<f64>,
    head: Vec<f64>,
}

impl ModelParams {
    pub fn from_parts(arch: Architecture, encoder: Vec<f64>, head: Vec<f64>) -> Result<Self> {
        if encoder.len() != arch.encoder_len() {
            return Err(Error::shape(format!(
                "encoder for widths {:?} needs {} parameters, got {}",
                arch.layers,
                arch.encoder_len(),
                encoder.len()
            )));
        }
        if head.len() != arch.head_len() {
            return Err(Error::shape(format!(
                "head {}→{} needs {} parameters, got {}",
                arch.feature_dim(),
                arch.classes,
                arch.head_len(),
                head.len()
            )));
        }
        if encoder.iter().chain(&head).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self {
            arch,
            encoder,
            head,
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let encoder = init_encoder(&arch.layers, rng);
        let head = init_head(arch.feature_dim(), arch.classes, rng);
        Self {
            arch,
            encoder,
            head,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn encoder(&self) -> &[f64] {
        &self.encoder
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    /// Overwrites the encoder with a broadcast copy.
    pub fn set_encoder(&mut self, encoder: &[f64]) -> Result<()> {
        if encoder.len() != self.encoder.len() {
            return Err(Error::shape(format!(
                "broadcast encoder has {} parameters, local has {}",
                encoder.len(),
                self.encoder.len()
            )));
        }
        self.encoder.copy_from_slice(encoder);
        Ok(())
    }

    /// Encoder followed by head.
    pub fn flat(&self) -> Vec<f64> {
        [self.encoder.as_slice(), self.head.as_slice()].concat()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let n = self.encoder.len();
        if flat.len() != n + self.head.len() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                n + self.head.len()
            )));
        }
        Self::from_parts(self.arch.clone(), flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn len(&self) -> usize {
        self.encoder.len() + self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn layer_slices(&self) -> Vec<(&[f64], &[f64], usize, usize)> {
        let mut out = Vec::with_capacity(self.arch.layers.len());
        let mut offset = 0;
        for w in self.arch.layers.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.encoder[offset..offset + fan_in * fan_out];
            offset += fan_in * fan_out;
            let bias = &self.encoder[offset..offset + fan_out];
            offset += fan_out;
            out.push((weights, bias, fan_in, fan_out));
        }
        out
    }

    fn head_slices(&self) -> (&[f64], &[f64]) {
        self.head
            .split_at(self.arch.classes * self.arch.feature_dim())
    }

    /// `self − lr · grads`, in place.
    pub fn apply_sgd(&mut self, grads: &GradientVector, lr: f64) -> Result<()> {
        if grads.encoder.len() != self.encoder.len() || grads.head.len() != self.head.len() {
            return Err(Error::shape(format!(
                "gradient layout ({}, {}) does not match parameters ({}, {})",
                grads.encoder.len(),
                grads.head.len(),
                self.encoder.len(),
                self.head.len()
            )));
        }
        for (p, g) in self.encoder.iter_mut().zip(&grads.encoder) {
            *p -= lr * g;
        }
        for (p, g) in self.head.iter_mut().zip(&grads.head) {
            *p -= lr * g;
        }
        Ok(())
    }
}

/// ∂L/∂θ in the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub encoder: Vec<f64>,
    pub head: Vec<f64>,
}

impl GradientVector {
    pub fn flat(&self) -> Vec<f64> {
        [self.encoder.as_slice(), self.head.as_slice()].concat()
    }

    pub fn len(&self) -> usize {
        self.encoder.len() + self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `out[b, o] = bias[o] + Σ_i input[b, i] · weights[o, i]`
fn affine(input: &Tensor2, weights: &[f64], bias: &[f64], fan_out: usize) -> Vec<f64> {
    let fan_in = input.cols();
    let mut out = Vec::with_capacity(input.rows() * fan_out);
    for x in input.iter_rows() {
        for o in 0..fan_out {
            let w = &weights[o * fan_in..(o + 1) * fan_in];
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(bias[o] + dot);
        }
    }
    out
}

/// Returns the activations of every encoder layer (input first) and the logits.
fn forward_trace(params: &ModelParams, batch: &Tensor2) -> Result<(Vec<Tensor2>, Tensor2)> {
    let arch = &params.arch;
    if batch.cols() != arch.input_dim() {
        return Err(Error::shape(format!(
            "encoder layer 0 expects {} input features, batch has {}",
            arch.input_dim(),
            batch.cols()
        )));
    }
    let mut activations = vec![batch.clone()];
    for (weights, bias, _, fan_out) in params.layer_slices() {
        let prev = activations.last().expect("seeded with the input");
        let mut z = affine(prev, weights, bias, fan_out);
        z.iter_mut().for_each(|v| *v = v.tanh());
        activations.push(Tensor2::from_raw(batch.rows(), fan_out, z));
    }
    let (hw, hb) = params.head_slices();
    let features = activations.last().expect("non-empty");
    let logits = affine(features, hw, hb, arch.classes);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "forward pass produced non-finite logits".into(),
        ));
    }
    Ok((
        activations,
        Tensor2::from_raw(batch.rows(), arch.classes, logits),
    ))
}

/// Pre-activation logits, `batch × K`.
pub fn mlp_forward(params: &ModelParams, batch: &Tensor2) -> Result<Tensor2> {
    forward_trace(params, batch).map(|(_, logits)| logits)
}

/// Accumulates `dW += dZᵀ · input`, `db += colsum(dZ)` and returns `dZ · W`.
fn affine_backward(
    input: &Tensor2,
    weights: &[f64],
    d_out: &[f64],
    fan_out: usize,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let fan_in = input.cols();
    let mut d_input = vec![0.0; input.rows() * fan_in];
    for (b, x) in input.iter_rows().enumerate() {
        let dz = &d_out[b * fan_out..(b + 1) * fan_out];
        let dx = &mut d_input[b * fan_in..(b + 1) * fan_in];
        for (o, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_bias[o] += g;
            let w = &weights[o * fan_in..(o + 1) * fan_in];
            let dw = &mut d_weights[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                dw[i] += g * x[i];
                dx[i] += g * w[i];
            }
        }
    }
    d_input
}

/// Reverse-mode gradient of `Σ dL_dlogits ⊙ logits` with respect to every parameter.
pub fn mlp_backward(
    params: &ModelParams,
    batch: &Tensor2,
    dl_dlogits: &Tensor2,
) -> Result<GradientVector> {
    let (activations, _) = forward_trace(params, batch)?;
    backward_from_trace(params, &activations, dl_dlogits)
}

/// One forward pass, a loss evaluated on the logits, and the backward pass
/// through the same activations.
pub fn mlp_loss_and_grad<T, F>(
    params: &ModelParams,
    batch: &Tensor2,
    loss: F,
) -> Result<(T, GradientVector)>
where
    F: FnOnce(&Tensor2) -> Result<(T, Tensor2)>,
{
    let (activations, logits) = forward_trace(params, batch)?;
    let (value, dl_dlogits) = loss(&logits)?;
    let grads = backward_from_trace(params, &activations, &dl_dlogits)?;
    Ok((value, grads))
}

fn backward_from_trace(
    params: &ModelParams,
    activations: &[Tensor2],
    dl_dlogits: &Tensor2,
) -> Result<GradientVector> {
    let arch = &params.arch;
    let rows = activations[0].rows();
    if dl_dlogits.rows() != rows || dl_dlogits.cols() != arch.classes {
        return Err(Error::shape(format!(
            "logit cotangent is {}x{}, expected {}x{}",
            dl_dlogits.rows(),
            dl_dlogits.cols(),
            rows,
            arch.classes
        )));
    }

    let mut head_grad = vec![0.0; params.head.len()];
    let (hw, _) = params.head_slices();
    let (dhw, dhb) = head_grad.split_at_mut(hw.len());
    let mut upstream = affine_backward(
        activations.last().expect("non-empty"),
        hw,
        dl_dlogits.data(),
        arch.classes,
        dhw,
        dhb,
    );

    let mut enc_grad = vec![0.0; params.encoder.len()];
    let layers = params.layer_slices();
    let mut offset = params.encoder.len();
    for (l, &(weights, _, fan_in, fan_out)) in layers.iter().enumerate().rev() {
        let out_act = &activations[l + 1];
        // tanh' = 1 − tanh²
        for (g, a) in upstream.iter_mut().zip(out_act.data()) {
            *g *= 1.0 - a * a;
        }
        offset -= fan_in * fan_out + fan_out;
        let (dw, db) =
            enc_grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        upstream = affine_backward(&activations[l], weights, &upstream, fan_out, dw, db);
    }

    Ok(GradientVector {
        encoder: enc_grad,
        head: head_grad,
    })
}

/// Plain SGD: `params − lr · grads`.
pub fn sgd_step(params: &ModelParams, grads: &GradientVector, lr: f64) -> Result<ModelParams> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::domain(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let mut next = params.clone();
    next.apply_sgd(grads, lr)?;
    Ok(next)
}
