use rand::seq::SliceRandom;

use super::config::RunConfig;
use crate::data::ClientPartition;
use crate::error::{Error, Result};
use crate::evidential::{LossBreakdown, LossConfig};
use crate::metrics::{multiclass_auc, predict, Predictions};
use crate::numerics::{init_head, mlp_loss_and_grad, Architecture, ModelParams};
use crate::rng::{self, Rng};
use crate::uaw::{youden_theta, ClientReport};

/// A participant: its private data, its copy of the encoder and its own head.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: String,
    pub params: ModelParams,
    pub data: ClientPartition,
    rng: Rng,
}

/// What one client produced in one round.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub report: ClientReport,
    pub loss: LossBreakdown,
    pub train_auc: f64,
    pub test_auc: f64,
}

impl ClientState {
    /// Starts from the given encoder; the head is drawn from the client's own stream
    /// `seed ⊕ hash(client_id)`.
    pub fn new(data: ClientPartition, encoder: &[f64], cfg: &RunConfig) -> Result<Self> {
        let mut rng = rng::stream(cfg.seed, &data.client_id);
        let arch = Architecture::new(cfg.layers(data.features.cols()), data.classes)?;
        let head = init_head(arch.feature_dim(), arch.classes(), &mut rng);
        let params = ModelParams::from_parts(arch, encoder.to_vec(), head)?;
        Ok(Self {
            client_id: data.client_id.clone(),
            params,
            data,
            rng,
        })
    }

    pub fn classes(&self) -> usize {
        self.data.classes
    }

    pub fn receive(&mut self, global_encoder: &[f64]) -> Result<()> {
        self.params.set_encoder(global_encoder)
    }

    /// Mini-batch SGD over the training split; returns the per-sample mean loss
    /// seen during the pass.
    pub fn train_local(
        &mut self,
        cfg: &RunConfig,
        loss_cfg: &LossConfig,
        round: usize,
    ) -> Result<LossBreakdown> {
        let n = self.data.train_len();
        let mut order: Vec<usize> = self.data.train_range().collect();
        let mut mean = LossBreakdown::default();
        for _ in 0..cfg.local_epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = self.data.features.select_rows(chunk);
                let labels: Vec<usize> = chunk.iter().map(|&i| self.data.labels[i]).collect();
                let (loss, grads) = mlp_loss_and_grad(&self.params, &batch, |logits| {
                    cfg.head.loss_and_grad(logits, &labels, loss_cfg, round)
                })
                .map_err(|e| self.numeric_failure(e, round))?;
                if !loss.is_finite() || grads.flat().iter().any(|g| !g.is_finite()) {
                    return Err(self.non_finite(round));
                }
                mean.accumulate(&loss, chunk.len() as f64 / (n * cfg.local_epochs) as f64);
                self.params.apply_sgd(&grads, cfg.lr)?;
            }
        }
        Ok(mean)
    }

    fn non_finite(&self, round: usize) -> Error {
        Error::NonFiniteLoss {
            round,
            client_id: self.client_id.clone(),
        }
    }

    fn numeric_failure(&self, e: Error, round: usize) -> Error {
        match e {
            Error::Numeric(_) => self.non_finite(round),
            other => other,
        }
    }

    pub fn predict_train(&self, cfg: &RunConfig) -> Result<Predictions> {
        predict(
            &self.params,
            cfg.head,
            &self.data.train_features(),
            cfg.temperature,
        )
    }

    /// Youden-optimal uncertainty threshold on the training split.
    pub fn theta(&self, cfg: &RunConfig) -> Result<f64> {
        let preds = self.predict_train(cfg)?;
        youden_theta(&preds.records(self.data.train_labels()))
    }

    /// Local update followed by a fresh evaluation pass over the training split.
    pub fn run_local(
        &mut self,
        cfg: &RunConfig,
        loss_cfg: &LossConfig,
        round: usize,
    ) -> Result<LocalOutcome> {
        let loss = self.train_local(cfg, loss_cfg, round)?;
        let train = self
            .predict_train(cfg)
            .map_err(|e| self.numeric_failure(e, round))?;
        let theta = youden_theta(&train.records(self.data.train_labels()))?;
        let train_auc = multiclass_auc(&train.scores, self.data.train_labels())?;
        let test = predict(
            &self.params,
            cfg.head,
            &self.data.test_features(),
            cfg.temperature,
        )
        .map_err(|e| self.numeric_failure(e, round))?;
        let test_auc = multiclass_auc(&test.scores, self.data.test_labels())?;
        Ok(LocalOutcome {
            report: ClientReport {
                client_id: self.client_id.clone(),
                theta,
                encoder: self.params.encoder().to_vec(),
                sample_count: self.data.train_len(),
            },
            loss,
            train_auc,
            test_auc,
        })
    }
}
