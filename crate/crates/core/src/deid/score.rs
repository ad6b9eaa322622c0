//! Analytic conditional score model.
//!
//! The generated latent is modelled as `N(mu(g), tau^2)` per cell, with
//! `mu(g) = W g + texture_gain * B + context_gain * z_in`. Scores are
//! evaluated on the variance-exploding scale where the noised latent at
//! noise level `sigma_t` is `z_0 + sigma_t * eps`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deid::latent::{LatentMap, LatentRole};
use crate::deid::sampler::NoiseSchedule;
use crate::deid::semantic::Embedding;
use crate::error::{Error, Result};

/// Interface for a denoiser: the score of the noised latent distribution.
pub trait ScoreModel: Sync {
    /// Score at noise variance `sigma2` (variance-exploding scale).
    fn score(&self, z: &[f64], sigma2: f64) -> Vec<f64>;

    /// Per-element derivative of the score with respect to `z` when it is
    /// known and constant; lets the sampler use the exact posterior
    /// variance. `None` falls back to a plug-in posterior mean.
    fn score_slope(&self, _sigma2: f64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreModelParams {
    /// Seed of the Gaussian weight matrix `W`.
    pub weight_seed: u64,
    /// Standard deviation of the entries of `W`.
    pub weight_scale: f64,
    /// Seed of the band-pass texture basis.
    pub texture_seed: u64,
    pub texture_gain: f64,
    /// Target standard deviation of generated cells.
    pub tau: f64,
    /// Weight of the interpolated prior `z_in` in the mean.
    pub context_gain: f64,
}

impl Default for ScoreModelParams {
    fn default() -> Self {
        Self {
            weight_seed: 0x57_0000,
            weight_scale: 0.01,
            texture_seed: 0x7E_0000,
            texture_gain: 0.01,
            tau: 0.05,
            context_gain: 1.0,
        }
    }
}

impl ScoreModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.weight_scale, self.texture_gain, self.tau, self.context_gain]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.tau <= 0.0 || self.weight_scale < 0.0 {
            return Err(Error::ConfigInvalid(format!(
                "score model needs finite parameters, tau > 0 and weight_scale >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fixed unit-RMS band-pass field: seeded white noise minus its Gaussian
/// smoothing (sigma 2 cells).
pub fn texture_basis(seed: u64, height: usize, width: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..height * width).map(|_| StandardNormal.sample(&mut rng)).collect();
    let sigma = 2.0f64;
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let blur_axis = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..height as isize {
            for x in 0..width as isize {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, w) in kernel.iter().enumerate() {
                    let d = k as isize - radius;
                    let (sx, sy) = if horizontal { (x + d, y) } else { (x, y + d) };
                    if sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
                        continue;
                    }
                    acc += w * src[(sy * width as isize + sx) as usize];
                    wsum += w;
                }
                out[(y * width as isize + x) as usize] = acc / wsum;
            }
        }
        out
    };
    let smooth = blur_axis(&blur_axis(&white, true), false);
    let mut band: Vec<f64> = white.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    let rms = (band.iter().map(|v| v * v).sum::<f64>() / band.len() as f64).sqrt();
    if rms > 0.0 {
        band.iter_mut().for_each(|v| *v /= rms);
    }
    band
}

/// The analytic score model with its fixed weights and texture basis.
#[derive(Debug, Clone)]
pub struct AnalyticScoreModel {
    params: ScoreModelParams,
    embedding_dim: usize,
    shape: (usize, usize, usize),
    /// Row-major `latent_len × embedding_dim`.
    weights: Vec<f64>,
    basis: Vec<f64>,
}

impl AnalyticScoreModel {
    pub fn new(params: ScoreModelParams, embedding_dim: usize, shape: (usize, usize, usize)) -> Result<Self> {
        params.validate()?;
        let len = shape.0 * shape.1 * shape.2;
        let mut rng = ChaCha8Rng::seed_from_u64(params.weight_seed);
        let weights = (0..len * embedding_dim)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut rng);
                params.weight_scale * n
            })
            .collect();
        let plane = texture_basis(params.texture_seed, shape.1, shape.2);
        let basis = (0..shape.0).flat_map(|_| plane.iter().copied()).collect();
        Ok(Self {
            params,
            embedding_dim,
            shape,
            weights,
            basis,
        })
    }

    pub fn params(&self) -> &ScoreModelParams {
        &self.params
    }

    /// `mu(g)`, optionally including the context term.
    pub fn mean(&self, g: &Embedding, context: Option<&LatentMap>) -> Result<LatentMap> {
        if g.dim() != self.embedding_dim {
            return Err(Error::DimensionMismatch(self.embedding_dim, g.dim()));
        }
        let (c, h, w) = self.shape;
        if let Some(ctx) = context {
            if ctx.shape() != self.shape {
                return Err(Error::ShapeMismatch(format!(
                    "context {:?} vs model {:?}",
                    ctx.shape(),
                    self.shape
                )));
            }
        }
        let d = self.embedding_dim;
        let values = (0..c * h * w)
            .map(|k| {
                let row = &self.weights[k * d..(k + 1) * d];
                let wg: f64 = row.iter().zip(&g.values).map(|(a, b)| a * b).sum();
                let ctx = context.map_or(0.0, |z| self.params.context_gain * z.values[k]);
                wg + self.params.texture_gain * self.basis[k] + ctx
            })
            .collect();
        Ok(LatentMap::new(c, h, w, values, LatentRole::Generated))
    }

    /// Fixes the conditioning, giving a [`ScoreModel`].
    pub fn condition(&self, g: &Embedding, context: Option<&LatentMap>) -> Result<GaussianScore> {
        Ok(GaussianScore {
            mean: self.mean(g, context)?.values,
            tau: self.params.tau,
        })
    }
}

/// Score of `N(mean, tau^2 + sigma^2)` per element.
#[derive(Debug, Clone)]
pub struct GaussianScore {
    pub mean: Vec<f64>,
    pub tau: f64,
}

impl ScoreModel for GaussianScore {
    fn score(&self, z: &[f64], sigma2: f64) -> Vec<f64> {
        let var = sigma2 + self.tau * self.tau;
        z.iter().zip(&self.mean).map(|(z, m)| (m - z) / var).collect()
    }

    fn score_slope(&self, sigma2: f64) -> Option<f64> {
        Some(-1.0 / (sigma2 + self.tau * self.tau))
    }
}

/// Score of the conditioned analytic model at step `t` (1-based) of
/// `schedule`.
pub fn conditional_score(
    z: &LatentMap,
    t: usize,
    g: &Embedding,
    model: &AnalyticScoreModel,
    context: Option<&LatentMap>,
    schedule: &NoiseSchedule,
) -> Result<LatentMap> {
    let cond = model.condition(g, context)?;
    if z.shape() != model.shape {
        return Err(Error::ShapeMismatch(format!("latent {:?} vs model {:?}", z.shape(), model.shape)));
    }
    let values = cond.score(&z.values, schedule.ve_sigma2(t));
    Ok(LatentMap::new(z.channels, z.height, z.width, values, z.role))
}
