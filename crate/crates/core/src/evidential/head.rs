use std::fmt;
use std::str::FromStr;

use super::{check_batch, dirichlet_outputs, evidence_from_logits, evidential_batch, warm};
use super::{LossBreakdown, LossConfig};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Which classification head and loss a client trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadVariant {
    /// Plain softmax cross-entropy (the backbone baseline).
    SoftmaxCe,
    /// Evidential head trained on `L_uce` only.
    Eu,
    /// Evidential head with temperature warming, `L_uce + L_tce`.
    Tweu,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 3] = [HeadVariant::SoftmaxCe, HeadVariant::Eu, HeadVariant::Tweu];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::SoftmaxCe => "softmax_ce",
            HeadVariant::Eu => "eu",
            HeadVariant::Tweu => "tweu",
        }
    }

    pub fn is_evidential(self) -> bool {
        !matches!(self, HeadVariant::SoftmaxCe)
    }

    /// Mean batch loss and its gradient with respect to the logits.
    ///
    /// For `SoftmaxCe` the cross-entropy is reported in the `l_tce` slot so that
    /// `total = l_uce + l_tce` still holds.
    pub fn loss_and_grad(
        self,
        logits: &Tensor2,
        labels: &[usize],
        cfg: &LossConfig,
        round: usize,
    ) -> Result<(LossBreakdown, Tensor2)> {
        match self {
            HeadVariant::SoftmaxCe => softmax_ce(logits, labels),
            HeadVariant::Eu => evidential_batch(logits, labels, cfg, round, false),
            HeadVariant::Tweu => evidential_batch(logits, labels, cfg, round, true),
        }
    }

    pub fn outputs(self, logits: &[f64], temperature: f64) -> Result<HeadOutput> {
        match self {
            HeadVariant::SoftmaxCe => {
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite logit".into()));
                }
                let probs = warm(logits, 1.0);
                let prediction = argmax(&probs);
                Ok(HeadOutput {
                    prediction,
                    uncertainty: (1.0 - probs[prediction]).max(0.0),
                    scores: probs,
                    beliefs: None,
                    warmed: None,
                })
            }
            HeadVariant::Eu => {
                let out = dirichlet_outputs(&evidence_from_logits(logits)?, temperature)?;
                Ok(HeadOutput {
                    prediction: argmax(&out.beliefs),
                    uncertainty: out.uncertainty,
                    scores: out.beliefs.clone(),
                    beliefs: Some(out.beliefs),
                    warmed: None,
                })
            }
            HeadVariant::Tweu => {
                let out = dirichlet_outputs(&evidence_from_logits(logits)?, temperature)?;
                Ok(HeadOutput {
                    prediction: argmax(&out.warmed),
                    uncertainty: out.uncertainty,
                    scores: out.warmed.clone(),
                    beliefs: Some(out.beliefs),
                    warmed: Some(out.warmed),
                })
            }
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_ce" | "bc" => Ok(HeadVariant::SoftmaxCe),
            "eu" => Ok(HeadVariant::Eu),
            "tweu" => Ok(HeadVariant::Tweu),
            other => Err(Error::Config(format!(
                "unknown head variant `{other}` (expected softmax_ce, eu or tweu)"
            ))),
        }
    }
}

/// Per-sample evaluation result of a head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub prediction: usize,
    /// Class scores used for ranking metrics: `b_T` for `tweu`, `b` for `eu`,
    /// softmax probabilities for `softmax_ce`.
    pub scores: Vec<f64>,
    /// `K / S` for evidential heads; `1 − max p` for the softmax baseline.
    pub uncertainty: f64,
    pub beliefs: Option<Vec<f64>>,
    pub warmed: Option<Vec<f64>>,
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_ce(logits: &Tensor2, labels: &[usize]) -> Result<(LossBreakdown, Tensor2)> {
    check_batch(logits, labels)?;
    let scale = 1.0 / labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.rows() * logits.cols());
    for (row, &class) in logits.iter_rows().zip(labels) {
        let probs = warm(row, 1.0);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm: f64 = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += scale * -(row[class] - max - log_norm);
        grad.extend(
            probs
                .iter()
                .enumerate()
                .map(|(j, p)| scale * (p - f64::from(u8::from(j == class)))),
        );
    }
    Ok((
        LossBreakdown {
            l_tce: loss,
            total: loss,
            ..LossBreakdown::default()
        },
        Tensor2::from_raw(logits.rows(), logits.cols(), grad),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    #[test]
    fn parse_modes() {
        assert_eq!("tweu".parse::<HeadVariant>().unwrap(), HeadVariant::Tweu);
        assert_eq!("bc".parse::<HeadVariant>().unwrap(), HeadVariant::SoftmaxCe);
        assert!(matches!(
            "mc_dropout".parse::<HeadVariant>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tweu_decomposes_into_eu_plus_tce() {
        let cfg = LossConfig::default();
        let logits = Tensor2::from_rows(&[vec![0.1, 2.0, -0.4], vec![1.5, -0.3, 0.2]]).unwrap();
        let labels = [1, 2];
        let (eu, _) = HeadVariant::Eu
            .loss_and_grad(&logits, &labels, &cfg, 0)
            .unwrap();
        let (tw, _) = HeadVariant::Tweu
            .loss_and_grad(&logits, &labels, &cfg, 0)
            .unwrap();
        assert_eq!(eu.l_tce, 0.0);
        assert!((tw.total - (eu.total + tw.l_tce)).abs() < 1e-15);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let logits = Tensor2::zeros(3, 4);
        let (b, _) = HeadVariant::SoftmaxCe
            .loss_and_grad(&logits, &[0, 1, 3], &LossConfig::default(), 0)
            .unwrap();
        assert!((b.total - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_ce_gradient() {
        let data = vec![0.3, -1.0, 2.2, 0.0, 0.5, -0.5];
        let labels = [2, 0];
        let cfg = LossConfig::default();
        let t = Tensor2::new(2, 3, data.clone()).unwrap();
        let (_, g) = HeadVariant::SoftmaxCe
            .loss_and_grad(&t, &labels, &cfg, 0)
            .unwrap();
        let fd = finite_diff_grad(
            |p| {
                let t = Tensor2::new(2, 3, p.to_vec()).unwrap();
                HeadVariant::SoftmaxCe
                    .loss_and_grad(&t, &labels, &cfg, 0)
                    .unwrap()
                    .0
                    .total
            },
            &data,
            1e-5,
        )
        .unwrap();
        for (a, b) in g.data().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn eu_output_has_no_warmed_beliefs() {
        let out = HeadVariant::Eu.outputs(&[0.2, 1.0], 0.05).unwrap();
        assert!(out.warmed.is_none());
        assert!(out.beliefs.is_some());
        let tw = HeadVariant::Tweu.outputs(&[0.2, 1.0], 0.05).unwrap();
        assert!(tw.warmed.is_some());
        assert_eq!(tw.prediction, out.prediction);
    }

    #[test]
    fn argmax_takes_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
