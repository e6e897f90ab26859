use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evidential::{HeadVariant, LossConfig, DEFAULT_TEMPERATURE};

/// How the server combines client encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregationMode {
    /// Softmax over Youden-optimal uncertainty thresholds.
    Uaw,
    StaticUniform,
    /// Proportional to training-sample counts (FedAvg).
    StaticSampleCount,
    /// No aggregation: every client trains alone (SingleSet).
    None,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Uaw => "uaw",
            AggregationMode::StaticUniform => "static_uniform",
            AggregationMode::StaticSampleCount => "static_sample_count",
            AggregationMode::None => "none",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uaw" => Ok(AggregationMode::Uaw),
            "static_uniform" => Ok(AggregationMode::StaticUniform),
            "static_sample_count" => Ok(AggregationMode::StaticSampleCount),
            "none" | "singleset" => Ok(AggregationMode::None),
            other => Err(Error::Config(format!(
                "unknown aggregation mode `{other}` (expected uaw, static_uniform, static_sample_count or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub anneal_rounds: usize,
    /// Hidden encoder widths; the input width comes from the data.
    pub hidden: Vec<usize>,
    pub head: HeadVariant,
    pub aggregation: AggregationMode,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            local_epochs: 1,
            lr: 0.01,
            batch_size: 32,
            temperature: DEFAULT_TEMPERATURE,
            anneal_rounds: 50,
            hidden: vec![32, 16],
            head: HeadVariant::Tweu,
            aggregation: AggregationMode::Uaw,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
            ("anneal_rounds", self.anneal_rounds),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.aggregation == AggregationMode::Uaw && !self.head.is_evidential() {
            return Err(Error::Config(
                "uaw aggregation needs an evidential head (eu or tweu)".into(),
            ));
        }
        LossConfig::new(self.temperature, self.anneal_rounds).map(|_| ())
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        LossConfig::new(self.temperature, self.anneal_rounds)
    }

    pub fn layers(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .collect()
    }
}
