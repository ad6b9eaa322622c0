//! Masked ancestral sampling with a linear beta schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deid::latent::{LatentMap, LatentRole};
use crate::deid::score::ScoreModel;
use crate::error::{Error, Result};

/// Reference number of steps the beta endpoints are quoted for.
const REFERENCE_STEPS: f64 = 1000.0;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas from `beta_start` to `beta_end`, rescaled by
    /// `1000 / steps` so the total noise matches the 1000-step schedule.
    pub fn new(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::ConfigInvalid(format!("steps must be >= 2, got {steps}")));
        }
        if !(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let scale = REFERENCE_STEPS / steps as f64;
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                let b = beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64;
                (b * scale).min(MAX_BETA)
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// Cumulative signal fraction after `t` steps; `t = 0` is clean.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Noise variance at step `t` on the variance-exploding scale.
    pub fn ve_sigma2(&self, t: usize) -> f64 {
        let a = self.alpha_bar(t);
        (1.0 - a) / a
    }
}

/// Reverse diffusion over the masked cells; unmasked cells follow the
/// forward-noised `z_in` and equal it exactly at the end.
///
/// Each reverse step draws from the Gaussian posterior
/// `q(x_{t-1} | x_t, x_0)` with `x_0` replaced by its denoised estimate
/// and the estimate's variance added when the model reports a score slope.
pub fn sample_inpaint<M: ScoreModel + ?Sized>(
    z_in: &LatentMap,
    mask: &[bool],
    model: &M,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<LatentMap> {
    let n = z_in.len();
    if mask.len() != n {
        return Err(Error::ShapeMismatch(format!("mask {} vs latent {n}", mask.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x: Vec<f64> = (0..n).map(|_| normal()).collect();
    for t in (1..=schedule.steps()).rev() {
        let a_bar = schedule.alpha_bar(t);
        let a_prev = schedule.alpha_bar(t - 1);
        let beta = schedule.betas[t - 1];
        let alpha = 1.0 - beta;
        let sigma2 = schedule.ve_sigma2(t);
        let c1 = a_prev.sqrt() * beta / (1.0 - a_bar);
        let c2 = alpha.sqrt() * (1.0 - a_prev) / (1.0 - a_bar);
        let tilde = (1.0 - a_prev) / (1.0 - a_bar) * beta;
        let y: Vec<f64> = x.iter().map(|v| v / a_bar.sqrt()).collect();
        let score = model.score(&y, sigma2);
        let x0_var = model
            .score_slope(sigma2)
            .map_or(0.0, |s| (sigma2 * (1.0 + sigma2 * s)).max(0.0));
        let std = (tilde + c1 * c1 * x0_var).sqrt();
        for k in 0..n {
            let eps_gen = normal();
            let eps_known = normal();
            x[k] = if mask[k] {
                let x0 = y[k] + sigma2 * score[k];
                c1 * x0 + c2 * x[k] + std * eps_gen
            } else if t == 1 {
                z_in.values[k]
            } else {
                a_prev.sqrt() * z_in.values[k] + (1.0 - a_prev).sqrt() * eps_known
            };
        }
    }
    Ok(LatentMap::new(
        z_in.channels,
        z_in.height,
        z_in.width,
        x,
        LatentRole::Generated,
    ))
}
