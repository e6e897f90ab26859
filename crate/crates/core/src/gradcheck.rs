//! Analytic loss gradients against central finite differences.
//!
//! Each case draws a class count, random logits and a label, then compares the
//! hand-derived gradient of every loss term with a numerical one. A second
//! comparison pushes the full batch loss through a small MLP so the chain rule
//! into the parameters is covered as well.

use rand::Rng;

use crate::error::{Error, Result};
use crate::evidential::{sample_terms, total_loss_and_grad, LossConfig, DEFAULT_TEMPERATURE};
use crate::numerics::{
    finite_diff_grad, mlp_forward, mlp_loss_and_grad, Architecture, ModelParams, Tensor2,
};
use crate::rng;

pub const TOLERANCE: f64 = 1e-4;
/// Below this gradient magnitude errors are judged in absolute terms.
pub const ABS_FLOOR: f64 = 1e-7;
const STEP: f64 = 1e-5;
const TERMS: [&str; 4] = ["l_ice", "l_kl", "l_tce", "total"];

/// `|a − n| / max(|a|, |n|, ABS_FLOOR / TOLERANCE)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(ABS_FLOOR / TOLERANCE);
    (analytic - numeric).abs() / scale
}

fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermResult {
    pub term: &'static str,
    pub max_rel_error: f64,
    /// Seed of the case that produced `max_rel_error`.
    pub worst_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub cases: usize,
    pub terms: Vec<TermResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.max_rel_error < TOLERANCE)
    }

    pub fn worst(&self) -> &TermResult {
        self.terms
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .expect("report always lists every term")
    }
}

/// Runs `cases` seeded cases. `flip_tce_sign` negates the analytic `L_tce`
/// gradient, which must make the check fail.
pub fn run(seed: u64, cases: usize, flip_tce_sign: bool) -> Result<GradcheckReport> {
    if cases == 0 {
        return Err(Error::Config("gradcheck needs at least one case".into()));
    }
    let mut terms: Vec<TermResult> = TERMS
        .iter()
        .map(|&term| TermResult {
            term,
            max_rel_error: 0.0,
            worst_seed: 0,
        })
        .collect();
    for i in 0..cases {
        let case_seed = rng::derive_seed(seed, &format!("gradcheck/{i}"));
        let errors = check_case(case_seed, flip_tce_sign)?;
        for (slot, err) in terms.iter_mut().zip(errors) {
            if err > slot.max_rel_error {
                slot.max_rel_error = err;
                slot.worst_seed = case_seed;
            }
        }
    }
    Ok(GradcheckReport { cases, terms })
}

/// Errors for `[l_ice, l_kl, l_tce, total]` in one case.
pub fn check_case(case_seed: u64, flip_tce_sign: bool) -> Result<[f64; 4]> {
    let mut rng = rng::rng_from_seed(case_seed);
    let k = rng.random_range(2..=8);
    let tau = DEFAULT_TEMPERATURE;
    let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    let class = rng.random_range(0..k);

    let (_, grads) = sample_terms(&logits, class, tau)?;
    let term = |pick: fn(&crate::evidential::LossBreakdown) -> f64| {
        move |z: &[f64]| {
            sample_terms(z, class, tau)
                .map(|(l, _)| pick(&l))
                .unwrap_or(f64::NAN)
        }
    };
    let num_ice = finite_diff_grad(term(|l| l.l_ice), &logits, STEP)?;
    let num_kl = finite_diff_grad(term(|l| l.l_kl), &logits, STEP)?;
    let num_tce = finite_diff_grad(term(|l| l.l_tce), &logits, STEP)?;
    let sign = if flip_tce_sign { -1.0 } else { 1.0 };
    let tce: Vec<f64> = grads.tce.iter().map(|g| sign * g).collect();

    Ok([
        max_error(&grads.ice, &num_ice),
        max_error(&grads.kl, &num_kl),
        max_error(&tce, &num_tce),
        composed_error(&mut rng, k, tau, flip_tce_sign)?,
    ])
}

/// Full batch loss through a one-hidden-layer MLP, differentiated in the parameters.
fn composed_error(rng: &mut rng::Rng, k: usize, tau: f64, flip_tce_sign: bool) -> Result<f64> {
    let (input, hidden, batch) = (4, 6, 4);
    let params = ModelParams::init(Architecture::new(vec![input, hidden], k)?, rng);
    let x: Vec<f64> = (0..batch * input)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let x = Tensor2::new(batch, input, x)?;
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
    let cfg = LossConfig::new(tau, 50)?;
    let round = rng.random_range(0..=60);

    let (_, grads) = mlp_loss_and_grad(&params, &x, |logits| {
        let (loss, mut g) = total_loss_and_grad(logits, &labels, &cfg, round)?;
        if flip_tce_sign {
            let scale = 1.0 / labels.len() as f64;
            let mut data = g.data().to_vec();
            for (r, (row, &y)) in logits.iter_rows().zip(&labels).enumerate() {
                let (_, terms) = sample_terms(row, y, tau)?;
                for (j, t) in terms.tce.iter().enumerate() {
                    data[r * k + j] -= 2.0 * scale * t;
                }
            }
            g = Tensor2::new(logits.rows(), k, data)?;
        }
        Ok((loss, g))
    })?;
    let flat = params.flat();
    let numeric = finite_diff_grad(
        |p| {
            params
                .with_flat(p)
                .and_then(|m| mlp_forward(&m, &x))
                .and_then(|z| total_loss_and_grad(&z, &labels, &cfg, round))
                .map(|(l, _)| l.total)
                .unwrap_or(f64::NAN)
        },
        &flat,
        STEP,
    )?;
    Ok(max_error(&grads.flat(), &numeric))
}
