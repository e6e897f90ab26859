//! Uncertainty-aware weighting.
//!
//! Each client scores its own reliability by asking how well its uncertainty
//! separates wrong predictions from right ones: the ROC of uncertainty against
//! the misprediction indicator is swept and the Youden-optimal threshold θ is
//! reported. The server turns the reported thresholds into aggregation weights
//! with a softmax, so clients whose errors sit at higher uncertainty get a
//! larger share of the averaged encoder.

use crate::error::{Error, Result};

/// Per-sample uncertainty and whether the prediction was right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyRecord {
    pub uncertainty: f64,
    pub correct: bool,
}

impl UncertaintyRecord {
    pub fn new(uncertainty: f64, correct: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&uncertainty) {
            return Err(Error::domain(format!(
                "uncertainty must lie in [0, 1], got {uncertainty}"
            )));
        }
        Ok(Self {
            uncertainty,
            correct,
        })
    }
}

/// `1` where the prediction misses the label, `0` where it matches.
pub fn misprediction_labels(predictions: &[usize], labels: &[usize]) -> Result<Vec<u8>> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| u8::from(p != y))
        .collect())
}

/// Operating point at `score ≥ threshold ⇒ positive`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl RocPoint {
    pub fn sensitivity(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.true_neg as f64 / (self.true_neg + self.false_pos) as f64
    }

    pub fn youden(&self) -> f64 {
        self.sensitivity() + self.specificity() - 1.0
    }

    /// `J · P · N` as an exact integer, for tie-safe comparisons.
    fn youden_scaled(&self) -> i128 {
        let pos = (self.true_pos + self.false_neg) as i128;
        let neg = (self.true_neg + self.false_pos) as i128;
        self.true_pos as i128 * neg - self.false_pos as i128 * pos
    }
}

/// One point per distinct score, thresholds ascending.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != positives.len() {
        return Err(Error::shape(format!(
            "{} scores but {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let total_pos = positives.iter().filter(|&&p| p).count();
    let total_neg = positives.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::Degenerate(format!(
            "ROC needs both classes ({total_pos} positives, {total_neg} negatives)"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Sweep from the highest score down; emit after each run of equal scores.
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            true_pos: tp,
            false_pos: fp,
            true_neg: total_neg - fp,
            false_neg: total_pos - tp,
        });
    }
    points.reverse();
    Ok(points)
}

/// Youden-optimal uncertainty threshold θ.
///
/// Incorrect predictions are the positive class and uncertainty is the score.
/// Among thresholds attaining the maximal `J = Sens + Spec − 1`, the smallest is
/// returned. A client with no mispredictions reports its largest observed
/// uncertainty; a client with no correct predictions reports its smallest.
pub fn youden_theta(records: &[UncertaintyRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::domain("Youden threshold needs at least one record"));
    }
    let scores: Vec<f64> = records.iter().map(|r| r.uncertainty).collect();
    let wrong: Vec<bool> = records.iter().map(|r| !r.correct).collect();
    if wrong.iter().all(|&w| !w) {
        return Ok(scores.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    if wrong.iter().all(|&w| w) {
        return Ok(scores.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let roc = roc_curve(&scores, &wrong)?;
    // Ascending sweep with a strict improvement test keeps the smallest maximiser.
    let best = roc.iter().skip(1).fold(&roc[0], |best, p| {
        if p.youden_scaled() > best.youden_scaled() {
            p
        } else {
            best
        }
    });
    Ok(best.threshold)
}

/// Server-side aggregation weights; positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    weights: Vec<f64>,
}

impl AggregationWeights {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("no clients to weight"));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Proportional to sample counts (the FedAvg rule).
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::domain("sample counts must be positive"));
        }
        Ok(Self {
            weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `w_i = e^{θ_i} / Σ_j e^{θ_j}`.
pub fn softmax_weights(thetas: &[f64]) -> Result<AggregationWeights> {
    if thetas.is_empty() {
        return Err(Error::domain("no client thresholds"));
    }
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric("non-finite client threshold".into()));
    }
    let max = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = thetas.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(AggregationWeights {
        weights: exps.into_iter().map(|e| e / total).collect(),
    })
}

/// What a client uploads after local training. The head never appears here.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub client_id: String,
    pub theta: f64,
    pub encoder: Vec<f64>,
    pub sample_count: usize,
}

pub const REPORT_CSV_HEADER: &str = "round,client_id,theta,weight,sample_count";

impl ClientReport {
    pub fn csv_line(&self, round: usize, weight: Option<f64>) -> String {
        let weight = weight.map(|w| w.to_string()).unwrap_or_default();
        format!(
            "{round},{},{},{weight},{}",
            self.client_id, self.theta, self.sample_count
        )
    }
}

/// `φ_g = Σ_i w_i φ_i`.
///
/// Evaluated as `φ_1 + Σ_i w_i (φ_i − φ_1)`, which equals the plain convex
/// combination when the weights sum to one and returns identical inputs
/// bit-for-bit.
pub fn aggregate_encoders(
    reports: &[ClientReport],
    weights: &AggregationWeights,
) -> Result<Vec<f64>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::domain("no client reports to aggregate"))?;
    if weights.len() != reports.len() {
        return Err(Error::shape(format!(
            "{} weights for {} reports",
            weights.len(),
            reports.len()
        )));
    }
    let dim = first.encoder.len();
    if let Some(bad) = reports.iter().find(|r| r.encoder.len() != dim) {
        return Err(Error::shape(format!(
            "client `{}` sent {} encoder parameters, expected {dim}",
            bad.client_id,
            bad.encoder.len()
        )));
    }
    let mut out = first.encoder.clone();
    for (report, &w) in reports.iter().zip(weights.as_slice()).skip(1) {
        for ((o, &p), &anchor) in out.iter_mut().zip(&report.encoder).zip(&first.encoder) {
            *o += w * (p - anchor);
        }
    }
    Ok(out)
}
