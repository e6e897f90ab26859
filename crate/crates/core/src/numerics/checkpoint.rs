//! Plain-text checkpoints.
//!
//! ```text
//! FEDUAA-CKPT v1; layers=20,32,16; K=5
//! -1.2345678901234567e-1
//! ...
//! ```
//!
//! Values follow the flat parameter order (encoder, then head). An encoder-only
//! checkpoint, as written for the server's global encoder, carries `K=0` and no
//! head values. Every value is printed with 17 significant digits, which
//! round-trips `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::mlp::{encoder_len, Architecture, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &str = "FEDUAA-CKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<usize>,
    /// Head classes; 0 for an encoder-only checkpoint.
    pub classes: usize,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(params: &ModelParams) -> Self {
        Self {
            layers: params.arch().layers().to_vec(),
            classes: params.arch().classes(),
            values: params.flat(),
        }
    }

    pub fn from_encoder(layers: &[usize], encoder: &[f64]) -> Result<Self> {
        if encoder.len() != encoder_len(layers) {
            return Err(Error::shape(format!(
                "encoder has {} parameters, widths {layers:?} need {}",
                encoder.len(),
                encoder_len(layers)
            )));
        }
        Ok(Self {
            layers: layers.to_vec(),
            classes: 0,
            values: encoder.to_vec(),
        })
    }

    pub fn into_model(self) -> Result<ModelParams> {
        let arch = Architecture::new(self.layers, self.classes)?;
        let mut values = self.values;
        let head = values.split_off(arch.encoder_len().min(values.len()));
        ModelParams::from_parts(arch, values, head)
    }

    pub fn to_text(&self) -> String {
        let layers = self
            .layers
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let mut out = format!("{MAGIC}; layers={layers}; K={}\n", self.classes);
        for v in &self.values {
            writeln!(out, "{v:.16e}").expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty checkpoint".into(),
        })?;
        let (layers, classes) = parse_header(header)?;
        let values = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 2,
                    message: format!("`{l}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let expected = encoder_len(&layers)
            + if classes > 0 {
                classes * layers.last().copied().unwrap_or(0) + classes
            } else {
                0
            };
        if values.len() != expected {
            return Err(Error::shape(format!(
                "checkpoint declares {expected} parameters but holds {}",
                values.len()
            )));
        }
        Ok(Self {
            layers,
            classes,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_header(header: &str) -> Result<(Vec<usize>, usize)> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        message: format!("{msg}: `{header}`"),
    };
    let mut parts = header.split(';').map(str::trim);
    if parts.next() != Some(MAGIC) {
        return Err(bad("missing checkpoint magic"));
    }
    let layers = parts
        .next()
        .and_then(|p| p.strip_prefix("layers="))
        .ok_or_else(|| bad("missing layers field"))?
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("bad layer width"))?;
    let classes = parts
        .next()
        .and_then(|p| p.strip_prefix("K="))
        .ok_or_else(|| bad("missing K field"))?
        .parse::<usize>()
        .map_err(|_| bad("bad K"))?;
    if parts.next().is_some() {
        return Err(bad("trailing header fields"));
    }
    if layers.is_empty() || layers.contains(&0) {
        return Err(bad("layer widths must be positive"));
    }
    Ok((layers, classes))
}
