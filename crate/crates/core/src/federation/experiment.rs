use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::client::{ClientState, LocalOutcome};
use super::config::{AggregationMode, RunConfig};
use crate::data::{corrupt, FederatedDataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::evidential::{HeadVariant, LossBreakdown, LossConfig};
use crate::metrics::{evaluate_client, EvalReport};
use crate::numerics::{init_encoder, Checkpoint, ModelParams};
use crate::rng;
use crate::uaw::{
    aggregate_encoders, softmax_weights, AggregationWeights, ClientReport, REPORT_CSV_HEADER,
};

pub const ROUND_LOG_HEADER: &str =
    "round,client_id,l_ice,l_kl,l_uce,l_tce,total,theta,weight,train_auc,test_auc";

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundRecord {
    pub client_id: String,
    pub loss: LossBreakdown,
    pub theta: f64,
    /// `None` when the mode does not aggregate.
    pub weight: Option<f64>,
    pub sample_count: usize,
    pub train_auc: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub clients: Vec<ClientRoundRecord>,
}

impl RoundRecord {
    pub fn thetas(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.theta).collect()
    }

    pub fn weights(&self) -> Option<Vec<f64>> {
        self.clients.iter().map(|c| c.weight).collect()
    }
}

/// Server-side state. Holds only the shared encoder and the round history.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub layers: Vec<usize>,
    pub global_encoder: Vec<f64>,
    /// Number of completed rounds; also the index of the next round.
    pub round: usize,
    pub history: Vec<RoundRecord>,
}

impl ServerState {
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::from_encoder(&self.layers, &self.global_encoder)
    }
}

/// A server and its clients, advanced one round at a time.
#[derive(Debug, Clone)]
pub struct Federation {
    cfg: RunConfig,
    loss_cfg: LossConfig,
    server: ServerState,
    clients: Vec<ClientState>,
}

impl Federation {
    /// The initial global encoder comes from the `server/encoder` stream and is
    /// handed to every client before any training.
    pub fn new(cfg: RunConfig, data: FederatedDataset) -> Result<Self> {
        cfg.validate()?;
        data.validate()?;
        let loss_cfg = cfg.loss_config()?;
        let layers = cfg.layers(data.input_dim());
        let global_encoder = init_encoder(&layers, &mut rng::stream(cfg.seed, "server/encoder"));
        let clients = data
            .partitions
            .into_iter()
            .map(|p| ClientState::new(p, &global_encoder, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            loss_cfg,
            server: ServerState {
                layers,
                global_encoder,
                round: 0,
                history: Vec::new(),
            },
            clients,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    /// Overwrites every client encoder with `φ_g`.
    pub fn broadcast(&mut self) -> Result<()> {
        let global = &self.server.global_encoder;
        self.clients.iter_mut().try_for_each(|c| c.receive(global))
    }

    /// Local training and threshold estimation on every client, in parallel.
    /// Results come back in client order; the first failing client is reported.
    pub fn local_phase(&mut self) -> Result<Vec<LocalOutcome>> {
        let round = self.server.round;
        let (cfg, loss_cfg) = (&self.cfg, &self.loss_cfg);
        let results: Vec<Result<LocalOutcome>> = self
            .clients
            .par_iter_mut()
            .map(|c| c.run_local(cfg, loss_cfg, round))
            .collect();
        results.into_iter().collect()
    }

    pub fn weights_for(&self, reports: &[ClientReport]) -> Result<Option<AggregationWeights>> {
        let weights = match self.cfg.aggregation {
            AggregationMode::Uaw => {
                softmax_weights(&reports.iter().map(|r| r.theta).collect::<Vec<_>>())?
            }
            AggregationMode::StaticUniform => AggregationWeights::uniform(reports.len())?,
            AggregationMode::StaticSampleCount => AggregationWeights::from_counts(
                &reports.iter().map(|r| r.sample_count).collect::<Vec<_>>(),
            )?,
            AggregationMode::None => return Ok(None),
        };
        Ok(Some(weights))
    }

    /// Weighs the reports, updates `φ_g` and appends the round record.
    pub fn server_phase(&mut self, outcomes: Vec<LocalOutcome>) -> Result<&RoundRecord> {
        let reports: Vec<ClientReport> = outcomes.iter().map(|o| o.report.clone()).collect();
        let weights = self.weights_for(&reports)?;
        if let Some(w) = &weights {
            self.server.global_encoder = aggregate_encoders(&reports, w)?;
        }
        let clients = outcomes
            .into_iter()
            .enumerate()
            .map(|(i, o)| ClientRoundRecord {
                client_id: o.report.client_id,
                loss: o.loss,
                theta: o.report.theta,
                weight: weights.as_ref().map(|w| w.as_slice()[i]),
                sample_count: o.report.sample_count,
                train_auc: o.train_auc,
                test_auc: o.test_auc,
            })
            .collect();
        self.server.history.push(RoundRecord {
            round: self.server.round,
            clients,
        });
        self.server.round += 1;
        Ok(self.server.history.last().expect("record just pushed"))
    }

    /// Broadcast, local phase, server phase. Without aggregation the encoders are
    /// never re-synchronised after the initial hand-out.
    pub fn run_round(&mut self) -> Result<&RoundRecord> {
        if self.cfg.aggregation != AggregationMode::None {
            self.broadcast()?;
        }
        let outcomes = self.local_phase()?;
        self.server_phase(outcomes)
    }

    /// Each client's current local model on its own test split.
    pub fn evaluate(&self) -> Result<EvalReport> {
        let models: Vec<ModelParams> = self.clients.iter().map(|c| c.params.clone()).collect();
        let data = FederatedDataset {
            partitions: self.clients.iter().map(|c| c.data.clone()).collect(),
        };
        evaluate_models(&models, &data, self.cfg.head, self.cfg.temperature, None)
    }

    pub fn into_parts(self) -> (ServerState, Vec<ClientState>) {
        (self.server, self.clients)
    }
}

/// Evaluates one model per partition on its test split, optionally after adding
/// Gaussian noise drawn from the `(seed, client_id)` stream.
pub fn evaluate_models(
    models: &[ModelParams],
    data: &FederatedDataset,
    head: HeadVariant,
    temperature: f64,
    noise: Option<(NoiseSpec, u64)>,
) -> Result<EvalReport> {
    if models.len() != data.partitions.len() {
        return Err(Error::shape(format!(
            "{} models for {} clients",
            models.len(),
            data.partitions.len()
        )));
    }
    let clients = models
        .iter()
        .zip(&data.partitions)
        .map(|(model, p)| {
            let clean = p.test_features();
            let features = match noise {
                Some((spec, seed)) => corrupt(&clean, spec, rng::derive_seed(seed, &p.client_id))?,
                None => clean,
            };
            evaluate_client(
                &p.client_id,
                model,
                head,
                &features,
                p.test_labels(),
                temperature,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(clients))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub initial: EvalReport,
    pub final_eval: EvalReport,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
}

impl ExperimentResult {
    pub fn history(&self) -> &[RoundRecord] {
        &self.server.history
    }

    pub fn round_log_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{ROUND_LOG_HEADER}\n");
        for rec in &self.server.history {
            for c in &rec.clients {
                let l = &c.loss;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    rec.round,
                    c.client_id,
                    l.l_ice,
                    l.l_kl,
                    l.l_uce,
                    l.l_tce,
                    l.total,
                    c.theta,
                    opt(c.weight),
                    c.train_auc,
                    c.test_auc
                ));
            }
        }
        out
    }

    pub fn reports_csv(&self) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\n");
        for rec in &self.server.history {
            for c in &rec.clients {
                let report = ClientReport {
                    client_id: c.client_id.clone(),
                    theta: c.theta,
                    encoder: Vec::new(),
                    sample_count: c.sample_count,
                };
                out.push_str(&report.csv_line(rec.round, c.weight));
                out.push('\n');
            }
        }
        out
    }

    /// Writes `round_log.csv`, `reports.csv`, `eval_initial.csv`, `eval_report.csv`
    /// and `checkpoints/` (one file per client plus `global_encoder.ckpt`).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        let mut written = Vec::new();
        let mut put = |path: PathBuf, text: String| -> Result<()> {
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put(dir.join("round_log.csv"), self.round_log_csv())?;
        put(dir.join("reports.csv"), self.reports_csv())?;
        put(dir.join("eval_initial.csv"), self.initial.to_csv())?;
        put(dir.join("eval_report.csv"), self.final_eval.to_csv())?;
        put(
            ckpt_dir.join("global_encoder.ckpt"),
            self.server.checkpoint()?.to_text(),
        )?;
        for c in &self.clients {
            put(
                ckpt_dir.join(format!("{}.ckpt", c.client_id)),
                Checkpoint::from_model(&c.params).to_text(),
            )?;
        }
        Ok(written)
    }
}

/// Runs `cfg.rounds` rounds and evaluates before and after.
///
/// The final models pair the last aggregated encoder with each client's own
/// head; without aggregation every client keeps its local encoder.
pub fn run_experiment(cfg: &RunConfig, data: FederatedDataset) -> Result<ExperimentResult> {
    let mut fed = Federation::new(cfg.clone(), data)?;
    let initial = fed.evaluate()?;
    for _ in 0..cfg.rounds {
        fed.run_round()?;
    }
    if cfg.aggregation != AggregationMode::None {
        fed.broadcast()?;
    }
    let final_eval = fed.evaluate()?;
    let (server, clients) = fed.into_parts();
    Ok(ExperimentResult {
        initial,
        final_eval,
        server,
        clients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, ClientSpec, GenSpec};

    fn small_data(seed: u64, classes: &[usize]) -> FederatedDataset {
        let clients = classes
            .iter()
            .enumerate()
            .map(|(i, &k)| ClientSpec {
                client_id: format!("c{i}"),
                classes: k,
                samples: 40 * k,
                skew: 5.0,
                shift: 0.25 * i as f64,
                label_noise: 0.0,
            })
            .collect();
        generate(&GenSpec {
            clients,
            input_dim: 6,
            separation: 3.0,
            seed,
        })
        .unwrap()
    }

    fn cfg(mode: AggregationMode, rounds: usize) -> RunConfig {
        RunConfig {
            rounds,
            hidden: vec![8],
            aggregation: mode,
            seed: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_rounds_changes_nothing() {
        let data = small_data(1, &[3, 3]);
        let fed = Federation::new(cfg(AggregationMode::Uaw, 0), data.clone()).unwrap();
        let res = run_experiment(&cfg(AggregationMode::Uaw, 0), data).unwrap();
        assert!(res.history().is_empty());
        assert_eq!(res.initial, res.final_eval);
        assert_eq!(res.server.global_encoder, fed.server().global_encoder);
        for (a, b) in res.clients.iter().zip(fed.clients()) {
            assert_eq!(a.params, b.params);
        }
    }

    #[test]
    fn one_client_global_equals_local() {
        for mode in [
            AggregationMode::Uaw,
            AggregationMode::StaticUniform,
            AggregationMode::StaticSampleCount,
        ] {
            let mut fed = Federation::new(cfg(mode, 1), small_data(2, &[3])).unwrap();
            fed.run_round().unwrap();
            assert_eq!(
                fed.server().global_encoder,
                fed.clients()[0].params.encoder()
            );
        }
    }

    #[test]
    fn sample_count_weights_follow_counts() {
        let fed = Federation::new(
            cfg(AggregationMode::StaticSampleCount, 1),
            small_data(2, &[3, 3]),
        )
        .unwrap();
        let report = |n| ClientReport {
            client_id: "x".into(),
            theta: 0.1,
            encoder: vec![],
            sample_count: n,
        };
        let w = fed
            .weights_for(&[report(100), report(300)])
            .unwrap()
            .unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn weights_logged_and_normalised() {
        let res = run_experiment(&cfg(AggregationMode::Uaw, 3), small_data(4, &[3, 4])).unwrap();
        assert_eq!(res.history().len(), 3);
        for (t, rec) in res.history().iter().enumerate() {
            assert_eq!(rec.round, t);
            let w = rec.weights().unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let log = res.round_log_csv();
        assert_eq!(log.lines().count(), 1 + 3 * 2);
        assert!(log.starts_with(ROUND_LOG_HEADER));
    }

    #[test]
    fn singleset_leaves_weights_empty() {
        let res = run_experiment(&cfg(AggregationMode::None, 2), small_data(4, &[3, 3])).unwrap();
        assert!(res.history().iter().all(|r| r.weights().is_none()));
        let line = res.reports_csv().lines().nth(1).unwrap().to_string();
        assert_eq!(line.split(',').nth(3), Some(""));
    }

    #[test]
    fn write_produces_all_artifacts() {
        let res = run_experiment(&cfg(AggregationMode::Uaw, 1), small_data(5, &[3, 3])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = res.write(dir.path()).unwrap();
        assert_eq!(files.len(), 5 + 2);
        let g = Checkpoint::read(&dir.path().join("checkpoints/global_encoder.ckpt")).unwrap();
        assert_eq!(g.classes, 0);
        assert_eq!(g.values, res.server.global_encoder);
    }
}
