//! Ranking metrics and per-client evaluation reports.
//!
//! Multi-class AUC is the unweighted mean of one-vs-rest binary AUCs, each
//! computed from the Mann–Whitney rank statistic with mid-ranks for ties.

use crate::error::{Error, Result};
use crate::evidential::HeadVariant;
use crate::numerics::{mlp_forward, ModelParams, Tensor2};
use crate::uaw::UncertaintyRecord;

/// Probability that a random positive outscores a random negative; ties count half.
pub fn binary_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
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
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "AUC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based mid-rank of the tie block [i, j)
        let mid = (i + j + 1) as f64 / 2.0;
        pos_rank_sum += mid * order[i..j].iter().filter(|&&k| positives[k]).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Macro one-vs-rest AUC. Classes without both positives and negatives are skipped.
pub fn multiclass_auc(scores: &Tensor2, labels: &[usize]) -> Result<f64> {
    if scores.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} score rows but {} labels",
            scores.rows(),
            labels.len()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::domain("AUC needs at least two samples"));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for class in 0..scores.cols() {
        let positives: Vec<bool> = labels.iter().map(|&y| y == class).collect();
        let column: Vec<f64> = scores.iter_rows().map(|r| r[class]).collect();
        match binary_auc(&column, &positives) {
            Ok(auc) => {
                sum += auc;
                used += 1;
            }
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::domain("no class has both positives and negatives"));
    }
    Ok(sum / used as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintySeparation {
    pub mean_u_correct: Option<f64>,
    pub mean_u_wrong: Option<f64>,
    /// AUC of uncertainty as a detector of wrong predictions; `None` when one group is empty.
    pub auroc: Option<f64>,
}

pub fn uncertainty_separation(records: &[UncertaintyRecord]) -> Result<UncertaintySeparation> {
    if records.is_empty() {
        return Err(Error::domain("no uncertainty records"));
    }
    let mean = |correct: bool| {
        let group: Vec<f64> = records
            .iter()
            .filter(|r| r.correct == correct)
            .map(|r| r.uncertainty)
            .collect();
        (!group.is_empty()).then(|| group.iter().sum::<f64>() / group.len() as f64)
    };
    let scores: Vec<f64> = records.iter().map(|r| r.uncertainty).collect();
    let wrong: Vec<bool> = records.iter().map(|r| !r.correct).collect();
    let auroc = match binary_auc(&scores, &wrong) {
        Ok(a) => Some(a),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(UncertaintySeparation {
        mean_u_correct: mean(true),
        mean_u_wrong: mean(false),
        auroc,
    })
}

/// Head outputs for every row of a feature matrix.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub scores: Tensor2,
    pub predicted: Vec<usize>,
    pub uncertainty: Vec<f64>,
}

impl Predictions {
    pub fn records(&self, labels: &[usize]) -> Vec<UncertaintyRecord> {
        self.uncertainty
            .iter()
            .zip(self.predicted.iter().zip(labels))
            .map(|(&u, (p, y))| UncertaintyRecord {
                uncertainty: u,
                correct: p == y,
            })
            .collect()
    }

    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let hits = self
            .predicted
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

pub fn predict(
    params: &ModelParams,
    head: HeadVariant,
    features: &Tensor2,
    temperature: f64,
) -> Result<Predictions> {
    let logits = mlp_forward(params, features)?;
    let k = logits.cols();
    let mut scores = Vec::with_capacity(logits.rows() * k);
    let mut predicted = Vec::with_capacity(logits.rows());
    let mut uncertainty = Vec::with_capacity(logits.rows());
    for row in logits.iter_rows() {
        let out = head.outputs(row, temperature)?;
        scores.extend_from_slice(&out.scores);
        predicted.push(out.prediction);
        uncertainty.push(out.uncertainty);
    }
    Ok(Predictions {
        scores: Tensor2::from_raw(logits.rows(), k, scores),
        predicted,
        uncertainty,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientEval {
    pub client_id: String,
    pub auc: f64,
    pub accuracy: f64,
    pub mean_u_correct: Option<f64>,
    pub mean_u_wrong: Option<f64>,
}

pub fn evaluate_client(
    client_id: &str,
    params: &ModelParams,
    head: HeadVariant,
    features: &Tensor2,
    labels: &[usize],
    temperature: f64,
) -> Result<ClientEval> {
    let preds = predict(params, head, features, temperature)?;
    let sep = uncertainty_separation(&preds.records(labels))?;
    Ok(ClientEval {
        client_id: client_id.to_string(),
        auc: multiclass_auc(&preds.scores, labels)?,
        accuracy: preds.accuracy(labels),
        mean_u_correct: sep.mean_u_correct,
        mean_u_wrong: sep.mean_u_wrong,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub clients: Vec<ClientEval>,
    pub average_auc: f64,
}

pub const EVAL_CSV_HEADER: &str = "client_id,auc,accuracy,mean_u_correct,mean_u_wrong";

impl EvalReport {
    pub fn new(clients: Vec<ClientEval>) -> Self {
        let average_auc = clients.iter().map(|c| c.auc).sum::<f64>() / clients.len().max(1) as f64;
        Self {
            clients,
            average_auc,
        }
    }

    pub fn average_accuracy(&self) -> f64 {
        self.clients.iter().map(|c| c.accuracy).sum::<f64>() / self.clients.len().max(1) as f64
    }

    /// One row per client plus a trailing `average` row; absent means are empty cells.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{EVAL_CSV_HEADER}\n");
        for c in &self.clients {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.client_id,
                c.auc,
                c.accuracy,
                opt(c.mean_u_correct),
                opt(c.mean_u_wrong)
            ));
        }
        out.push_str(&format!(
            "average,{},{},,\n",
            self.average_auc,
            self.average_accuracy()
        ));
        out
    }
}
