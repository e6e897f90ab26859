//! The experiment document: one TOML file drives every subcommand.

use std::path::{Path, PathBuf};

use feduaa_core::data::{ClientSpec, GenSpec};
use feduaa_core::{AggregationMode, Error, HeadVariant, Result, RunConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub ablation: AblationSection,
    pub output: OutputSection,
    pub noise: NoiseSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Load clients from a manifest instead of generating them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub input_dim: usize,
    pub separation: f64,
    pub clients: Vec<ClientEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientEntry {
    pub client_id: String,
    pub classes: usize,
    pub samples: usize,
    #[serde(default = "one")]
    pub skew: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub label_noise: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub anneal_rounds: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub head: String,
    pub aggregation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigmas: Vec<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        let spec = GenSpec::default_benchmark(0);
        Self {
            manifest: None,
            input_dim: spec.input_dim,
            separation: spec.separation,
            clients: spec
                .clients
                .into_iter()
                .map(|c| ClientEntry {
                    client_id: c.client_id,
                    classes: c.classes,
                    samples: c.samples,
                    skew: c.skew,
                    shift: c.shift,
                    label_noise: c.label_noise,
                })
                .collect(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            rounds: run.rounds,
            local_epochs: run.local_epochs,
            lr: run.lr,
            batch_size: run.batch_size,
            temperature: run.temperature,
            anneal_rounds: run.anneal_rounds,
            hidden: run.hidden,
        }
    }
}

impl Default for AblationSection {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            head: run.head.name().into(),
            aggregation: run.aggregation.name().into(),
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "feduaa-out".into(),
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn gen_spec(&self) -> Result<GenSpec> {
        let spec = GenSpec {
            clients: self
                .data
                .clients
                .iter()
                .map(|c| ClientSpec {
                    client_id: c.client_id.clone(),
                    classes: c.classes,
                    samples: c.samples,
                    skew: c.skew,
                    shift: c.shift,
                    label_noise: c.label_noise,
                })
                .collect(),
            input_dim: self.data.input_dim,
            separation: self.data.separation,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let t = &self.train;
        let head: HeadVariant = self
            .ablation
            .head
            .parse()
            .map_err(|e| Error::Config(format!("ablation.head: {e}")))?;
        let aggregation: AggregationMode = self
            .ablation
            .aggregation
            .parse()
            .map_err(|e| Error::Config(format!("ablation.aggregation: {e}")))?;
        let cfg = RunConfig {
            rounds: t.rounds,
            local_epochs: t.local_epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            temperature: t.temperature,
            anneal_rounds: t.anneal_rounds,
            hidden: t.hidden.clone(),
            head,
            aggregation,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.manifest.is_none() {
            self.gen_spec()?;
        }
        self.run_config()?;
        if let Some(bad) = self
            .noise
            .sigmas
            .iter()
            .find(|s| !(s.is_finite() && **s >= 0.0))
        {
            return Err(Error::Config(format!(
                "noise.sigmas: {bad} is not a valid variance"
            )));
        }
        Ok(())
    }
}
