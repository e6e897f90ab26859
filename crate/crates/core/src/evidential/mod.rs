//! Temperature-warmed evidential head.
//!
//! Logits become non-negative evidence through softplus, evidence becomes a
//! Dirichlet concentration `α = e + 1`, and the Dirichlet yields belief masses
//! `b_k = (α_k − 1) / S` and an uncertainty `u = K / S` that together sum to one.
//! A temperature softmax over the beliefs gives the warmed beliefs `b_T` used for
//! prediction. Training minimises `L_ice + λ·L_kl + L_tce`; gradients with respect
//! to the logits are derived by hand below.

mod head;
pub mod special;

pub use head::{HeadOutput, HeadVariant};

use crate::error::{Error, Result};
use crate::numerics::Tensor2;
use special::{digamma, ln_gamma, trigamma};

/// Default temperature for belief warming.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Lower clamp applied to `b_T` at the true class before taking its log.
pub const TCE_LOG_FLOOR: f64 = 1e-12;

/// `ln(1 + eˣ)` without overflow for large `x` or cancellation for very negative `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn evidence_from_logits(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    Ok(logits.iter().map(|&z| softplus(z)).collect())
}

/// Numerically stable `softmax(x / τ)`.
pub fn warm(beliefs: &[f64], temperature: f64) -> Vec<f64> {
    let max = beliefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = beliefs
        .iter()
        .map(|b| ((b - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialOutput {
    pub evidence: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Dirichlet strength `S = Σ α`.
    pub strength: f64,
    pub beliefs: Vec<f64>,
    pub uncertainty: f64,
    pub warmed: Vec<f64>,
}

impl EvidentialOutput {
    pub fn classes(&self) -> usize {
        self.alpha.len()
    }
}

pub fn dirichlet_outputs(evidence: &[f64], temperature: f64) -> Result<EvidentialOutput> {
    if evidence.is_empty() {
        return Err(Error::domain(
            "evidence vector must have at least one class",
        ));
    }
    if evidence.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::domain("evidence must be finite and non-negative"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    let beliefs: Vec<f64> = evidence.iter().map(|e| e / strength).collect();
    let uncertainty = evidence.len() as f64 / strength;
    let warmed = warm(&beliefs, temperature);
    Ok(EvidentialOutput {
        evidence: evidence.to_vec(),
        alpha,
        strength,
        beliefs,
        uncertainty,
        warmed,
    })
}

/// Index of the hot entry of a one-hot label.
pub fn class_of(label: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &y) in label.iter().enumerate() {
        if y == 1.0 {
            if hot.replace(i).is_some() {
                return Err(Error::domain("label has more than one hot entry"));
            }
        } else if y != 0.0 {
            return Err(Error::domain(format!("label entry {i} is {y}, not 0 or 1")));
        }
    }
    hot.ok_or_else(|| Error::domain("label has no hot entry"))
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

fn check_alpha(alpha: &[f64], label: &[f64]) -> Result<usize> {
    if alpha.len() != label.len() {
        return Err(Error::shape(format!(
            "alpha has {} classes, label has {}",
            alpha.len(),
            label.len()
        )));
    }
    if alpha.iter().any(|a| !(a.is_finite() && *a >= 1.0)) {
        return Err(Error::domain("Dirichlet parameters must be finite and ≥ 1"));
    }
    class_of(label)
}

fn ice_value(alpha: &[f64], class: usize) -> f64 {
    let strength: f64 = alpha.iter().sum();
    digamma(strength) - digamma(alpha[class])
}

/// Expected cross-entropy under `Dir(α)`: `Σ_k y_k (ψ(S) − ψ(α_k))`.
pub fn loss_ice(alpha: &[f64], label: &[f64]) -> Result<f64> {
    let class = check_alpha(alpha, label)?;
    Ok(ice_value(alpha, class))
}

/// `α̃ = y + (1 − y) ⊙ α`: the true-class concentration is reset to 1.
fn adjusted_alpha(alpha: &[f64], class: usize) -> Vec<f64> {
    let mut adj = alpha.to_vec();
    adj[class] = 1.0;
    adj
}

fn kl_value(adjusted: &[f64]) -> f64 {
    let k = adjusted.len() as f64;
    let strength: f64 = adjusted.iter().sum();
    let psi_s = digamma(strength);
    let mut value = ln_gamma(strength) - ln_gamma(k);
    for &a in adjusted {
        value -= ln_gamma(a);
        value += (a - 1.0) * (digamma(a) - psi_s);
    }
    // Exact zero at α̃ = 1 can come out as ±1 ulp.
    value.max(0.0)
}

/// `KL(Dir(α̃) ‖ Dir(1, …, 1))`.
pub fn loss_kl(alpha: &[f64], label: &[f64]) -> Result<f64> {
    let class = check_alpha(alpha, label)?;
    Ok(kl_value(&adjusted_alpha(alpha, class)))
}

fn tce_value(log_warmed_true: f64) -> f64 {
    -log_warmed_true.max(TCE_LOG_FLOOR.ln())
}

/// Cross-entropy on the warmed beliefs, with `b_T` clamped at [`TCE_LOG_FLOOR`].
pub fn loss_tce(warmed: &[f64], label: &[f64]) -> Result<f64> {
    if warmed.len() != label.len() {
        return Err(Error::shape(format!(
            "warmed beliefs have {} classes, label has {}",
            warmed.len(),
            label.len()
        )));
    }
    let class = class_of(label)?;
    Ok(tce_value(warmed[class].max(0.0).ln()))
}

/// `λ(round) = min(1, round / horizon)`.
pub fn lambda_at(round: usize, total_anneal_rounds: usize) -> f64 {
    let horizon = total_anneal_rounds.max(1);
    (round as f64 / horizon as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    temperature: f64,
    anneal_rounds: usize,
}

impl LossConfig {
    pub fn new(temperature: f64, anneal_rounds: usize) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if anneal_rounds == 0 {
            return Err(Error::Config("anneal_rounds must be at least 1".into()));
        }
        Ok(Self {
            temperature,
            anneal_rounds,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn anneal_rounds(&self) -> usize {
        self.anneal_rounds
    }

    pub fn lambda(&self, round: usize) -> f64 {
        lambda_at(round, self.anneal_rounds)
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            anneal_rounds: 50,
        }
    }
}

/// Per-term losses; batch results are means over samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_ice: f64,
    pub l_kl: f64,
    pub l_uce: f64,
    pub l_tce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_ice, self.l_kl, self.l_uce, self.l_tce, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.l_ice += weight * other.l_ice;
        self.l_kl += weight * other.l_kl;
        self.l_uce += weight * other.l_uce;
        self.l_tce += weight * other.l_tce;
        self.total += weight * other.total;
    }
}

/// Separate logit gradients of each loss term for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradients {
    pub ice: Vec<f64>,
    pub kl: Vec<f64>,
    pub tce: Vec<f64>,
}

/// Values and logit gradients of all three terms for one sample.
pub fn sample_terms(
    logits: &[f64],
    class: usize,
    temperature: f64,
) -> Result<(LossBreakdown, TermGradients)> {
    let k = logits.len();
    if class >= k {
        return Err(Error::domain(format!(
            "class {class} out of range for K = {k}"
        )));
    }
    let out = dirichlet_outputs(&evidence_from_logits(logits)?, temperature)?;
    let strength = out.strength;

    // ∂/∂α of L_ice = ψ(S) − ψ(α_y)
    let tri_s = trigamma(strength);
    let mut d_ice: Vec<f64> = vec![tri_s; k];
    d_ice[class] -= trigamma(out.alpha[class]);

    // ∂/∂α of KL(Dir(α̃) ‖ Dir(1)); α̃_y is the constant 1
    let adjusted = adjusted_alpha(&out.alpha, class);
    let adj_strength: f64 = adjusted.iter().sum();
    let excess: f64 = adjusted.iter().map(|a| a - 1.0).sum();
    let tri_adj_s = trigamma(adj_strength);
    let d_kl: Vec<f64> = adjusted
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            if j == class {
                0.0
            } else {
                (a - 1.0) * trigamma(a) - tri_adj_s * excess
            }
        })
        .collect();

    // L_tce through b_T = softmax(b / τ), b = (α − 1) / S
    let max_b = out
        .beliefs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_norm = out
        .beliefs
        .iter()
        .map(|b| ((b - max_b) / temperature).exp())
        .sum::<f64>()
        .ln();
    let log_warmed_true = (out.beliefs[class] - max_b) / temperature - log_norm;
    let clamped = log_warmed_true < TCE_LOG_FLOOR.ln();
    let d_b: Vec<f64> = (0..k)
        .map(|j| {
            if clamped {
                0.0
            } else {
                (out.warmed[j] - f64::from(u8::from(j == class))) / temperature
            }
        })
        .collect();
    let mean_db: f64 = d_b.iter().zip(&out.beliefs).map(|(g, b)| g * b).sum();
    let d_tce: Vec<f64> = d_b.iter().map(|g| (g - mean_db) / strength).collect();

    let chain = |d_alpha: Vec<f64>| -> Vec<f64> {
        d_alpha
            .into_iter()
            .zip(logits)
            .map(|(g, &z)| g * sigmoid(z))
            .collect()
    };

    let l_ice = ice_value(&out.alpha, class);
    let l_kl = kl_value(&adjusted);
    let l_tce = tce_value(log_warmed_true);
    Ok((
        LossBreakdown {
            l_ice,
            l_kl,
            l_uce: l_ice,
            l_tce,
            total: l_ice + l_tce,
        },
        TermGradients {
            ice: chain(d_ice),
            kl: chain(d_kl),
            tce: chain(d_tce),
        },
    ))
}

pub(crate) fn check_batch(logits: &Tensor2, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::shape("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::domain(format!(
            "label {bad} out of range for K = {}",
            logits.cols()
        )));
    }
    Ok(())
}

/// Evidential batch loss with or without the warmed branch.
pub(crate) fn evidential_batch(
    logits: &Tensor2,
    labels: &[usize],
    cfg: &LossConfig,
    round: usize,
    with_tce: bool,
) -> Result<(LossBreakdown, Tensor2)> {
    check_batch(logits, labels)?;
    let lambda = cfg.lambda(round);
    let scale = 1.0 / labels.len() as f64;
    let mut mean = LossBreakdown::default();
    let mut grad = Vec::with_capacity(logits.rows() * logits.cols());
    for (row, &class) in logits.iter_rows().zip(labels) {
        let (terms, grads) = sample_terms(row, class, cfg.temperature)?;
        let l_tce = if with_tce { terms.l_tce } else { 0.0 };
        let l_uce = terms.l_ice + lambda * terms.l_kl;
        let sample = LossBreakdown {
            l_ice: terms.l_ice,
            l_kl: terms.l_kl,
            l_uce,
            l_tce,
            total: l_uce + l_tce,
        };
        mean.accumulate(&sample, scale);
        for j in 0..row.len() {
            let mut g = grads.ice[j] + lambda * grads.kl[j];
            if with_tce {
                g += grads.tce[j];
            }
            grad.push(scale * g);
        }
    }
    Ok((mean, Tensor2::from_raw(logits.rows(), logits.cols(), grad)))
}

/// Mean of `L_ice + λ(round)·L_kl + L_tce` over the batch, and its exact gradient
/// with respect to every logit.
pub fn total_loss_and_grad(
    logits: &Tensor2,
    labels: &[usize],
    cfg: &LossConfig,
    round: usize,
) -> Result<(LossBreakdown, Tensor2)> {
    evidential_batch(logits, labels, cfg, round, true)
}
