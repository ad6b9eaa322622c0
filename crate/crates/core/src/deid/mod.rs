//! De-identification engine: exemplar embeddings, prior interpolation,
//! masked latent sampling and compositing, plus classical baselines.

pub mod baseline;
pub mod latent;
pub mod sampler;
pub mod score;
pub mod semantic;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use baseline::{baseline_blur, baseline_mask, baseline_pixelate, Baseline};
pub use latent::{decode_latent, encode_latent, interpolate_prior, LatentMap, LatentRole, LATENT_FACTOR};
pub use sampler::{sample_inpaint, NoiseSchedule};
pub use score::{conditional_score, AnalyticScoreModel, GaussianScore, ScoreModel, ScoreModelParams};
pub use semantic::{encode_semantic, fuse_embeddings, Embedding, EmbeddingSource, EMBEDDING_DIM};

use crate::error::{Error, Result};
use crate::geometry::{composite_back, extract_roi_mask, extract_roi_set, PalmGeometry, RoiSet, ScaleTag, ROI_SIZE};
use crate::raster::{Mask, Raster};
use crate::seed::{hash_to_seed, mix_seed};
use crate::synth::HandSample;

/// Non-empty subset of the ROI scales used as exemplars. Serialized as
/// e.g. `"s+m"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FusionSet {
    pub small: bool,
    pub medium: bool,
    pub full: bool,
}

impl FusionSet {
    pub const fn new(small: bool, medium: bool, full: bool) -> Self {
        Self { small, medium, full }
    }

    pub fn is_empty(&self) -> bool {
        !(self.small || self.medium || self.full)
    }

    pub fn scales(&self) -> Vec<ScaleTag> {
        let mut out = Vec::new();
        if self.small {
            out.push(ScaleTag::Small);
        }
        if self.medium {
            out.push(ScaleTag::Medium);
        }
        if self.full {
            out.push(ScaleTag::Full);
        }
        out
    }
}

impl Default for FusionSet {
    fn default() -> Self {
        Self::new(true, true, false)
    }
}

impl fmt::Display for FusionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .scales()
            .iter()
            .map(|s| match s {
                ScaleTag::Small => "s",
                ScaleTag::Medium => "m",
                ScaleTag::Full => "f",
            })
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FusionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = FusionSet::new(false, false, false);
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "s" => set.small = true,
                "m" => set.medium = true,
                "f" => set.full = true,
                other => {
                    return Err(Error::ConfigInvalid(format!("unknown fusion scale {other:?}")));
                }
            }
        }
        Ok(set)
    }
}

impl Serialize for FusionSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FusionSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeidConfig {
    pub alpha: f64,
    pub fusion_set: FusionSet,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seeds: Vec<u64>,
    pub score_model: ScoreModelParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
}

impl Default for DeidConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            fusion_set: FusionSet::default(),
            steps: 50,
            beta_start: 1e-4,
            beta_end: 0.02,
            seeds: vec![0],
            score_model: ScoreModelParams::default(),
            baseline: None,
        }
    }
}

impl DeidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.steps < 2 {
            return Err(Error::ConfigInvalid(format!("steps must be >= 2, got {}", self.steps)));
        }
        if self.seeds.is_empty() {
            return Err(Error::ConfigInvalid("at least one seed is required".into()));
        }
        match self.baseline {
            Some(b) if !b.is_valid() => {
                return Err(Error::ConfigInvalid(format!("invalid baseline {b:?}")));
            }
            None if self.fusion_set.is_empty() => {
                return Err(Error::ConfigInvalid("fusion_set is empty".into()));
            }
            _ => {}
        }
        NoiseSchedule::new(self.steps, self.beta_start, self.beta_end)?;
        self.score_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_hash: String,
    pub config: DeidConfig,
    pub seeds: Vec<u64>,
    /// Seeds of the per-run noise streams, derived from seed and input hash.
    pub stream_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct DeidResult {
    /// One full image per configured seed, in seed order.
    pub images: Vec<Raster>,
    /// The matching de-identified full ROIs.
    pub rois: Vec<Raster>,
    pub provenance: Provenance,
}

/// Latent-resolution mask: a cell is set when at least half of its pixels
/// are.
pub fn downsample_mask(mask: &Mask, factor: usize) -> Vec<bool> {
    let (lw, lh) = (mask.width() / factor, mask.height() / factor);
    let half = factor * factor;
    let mut out = Vec::with_capacity(lw * lh);
    for j in 0..lh {
        for i in 0..lw {
            let mut n = 0;
            for y in j * factor..(j + 1) * factor {
                for x in i * factor..(i + 1) * factor {
                    n += mask.get(x, y) as usize;
                }
            }
            out.push(2 * n >= half);
        }
    }
    out
}

/// Everything about a sample that does not depend on the seed.
struct Prepared {
    geometry: PalmGeometry,
    rois: RoiSet,
    input_hash: String,
}

fn prepare(sample: &HandSample) -> Result<Prepared> {
    let geometry = PalmGeometry::new(&sample.keypoints, &sample.seg)?;
    let rois = extract_roi_set(&sample.image, &sample.keypoints)?;
    Ok(Prepared {
        geometry,
        rois,
        input_hash: sample.image.content_hash(),
    })
}

/// Fill value for the masked background: mean of hand pixels outside the
/// mask, then of any unmasked pixels, then mid-gray.
fn background_fill(roi: &Raster, roi_mask: &Mask, roi_seg: &Mask) -> f64 {
    let mean_where = |pred: &dyn Fn(usize, usize) -> bool| {
        let (mut s, mut n) = (0.0, 0usize);
        for y in 0..roi.height() {
            for x in 0..roi.width() {
                if pred(x, y) {
                    s += roi.get(x, y);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| s / n as f64)
    };
    mean_where(&|x, y| roi_seg.get(x, y) && !roi_mask.get(x, y))
        .or_else(|| mean_where(&|x, y| !roi_mask.get(x, y)))
        .unwrap_or(0.5)
}

/// Blend weight rising linearly over 2 px inside the mask.
fn feather_weight(mask: &Mask, x: usize, y: usize) -> f64 {
    const RADIUS: isize = 2;
    let mut d2 = f64::INFINITY;
    for dy in -RADIUS..=RADIUS {
        for dx in -RADIUS..=RADIUS {
            if !mask.get_or_false(x as isize + dx, y as isize + dy) {
                d2 = d2.min((dx * dx + dy * dy) as f64);
            }
        }
    }
    (d2.sqrt() / RADIUS as f64).clamp(0.0, 1.0)
}

/// Pastes a generated full ROI back under the palm mask and composites the
/// hand into the original frame.
pub fn paste_roi(original: &Raster, roi: &Raster, geometry: &PalmGeometry, seg: &Mask) -> Result<Raster> {
    let mask = &geometry.mask.raster;
    let mut out = original.clone();
    for y in 0..original.height() {
        for x in 0..original.width() {
            if !mask.get(x, y) {
                continue;
            }
            let (u, v) = geometry
                .square
                .image_to_roi((x as f64 + 0.5, y as f64 + 0.5), roi.width());
            let w = feather_weight(mask, x, y);
            let g = roi.sample_bilinear(u, v);
            out.set(x, y, (w * g + (1.0 - w) * original.get(x, y)).clamp(0.0, 1.0));
        }
    }
    composite_back(original, &out, seg)
}

/// Runs the full pipeline once per configured seed.
pub fn deidentify(sample: &HandSample, cfg: &DeidConfig) -> Result<DeidResult> {
    cfg.validate()?;
    let prep = prepare(sample)?;
    let stream_seeds: Vec<u64> = cfg
        .seeds
        .iter()
        .map(|&s| mix_seed(s, hash_to_seed(&prep.input_hash)))
        .collect();
    let provenance = Provenance {
        input_hash: prep.input_hash.clone(),
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        stream_seeds: stream_seeds.clone(),
    };
    let outputs: Vec<(Raster, Raster)> = if let Some(b) = cfg.baseline {
        let image = b.apply(&sample.image, &prep.geometry.mask.raster);
        let image = composite_back(&sample.image, &image, &sample.seg)?;
        let roi = crate::geometry::extract_roi_image(&image, &prep.geometry.square)?;
        vec![(image, roi); cfg.seeds.len()]
    } else {
        let plan = DiffusionPlan::new(&prep, sample, cfg)?;
        stream_seeds
            .par_iter()
            .map(|&s| plan.run(s))
            .collect::<Result<Vec<_>>>()?
    };
    let (images, rois) = outputs.into_iter().unzip();
    Ok(DeidResult {
        images,
        rois,
        provenance,
    })
}

/// Seed-independent state of a diffusion run.
struct DiffusionPlan<'a> {
    sample: &'a HandSample,
    geometry: &'a PalmGeometry,
    z_in: LatentMap,
    mask_latent: Vec<bool>,
    score: GaussianScore,
    schedule: NoiseSchedule,
}

impl<'a> DiffusionPlan<'a> {
    fn new(prep: &'a Prepared, sample: &'a HandSample, cfg: &DeidConfig) -> Result<Self> {
        let embeddings: Vec<Embedding> = cfg
            .fusion_set
            .scales()
            .into_iter()
            .map(|tag| {
                let source = match tag {
                    ScaleTag::Small => EmbeddingSource::Small,
                    ScaleTag::Medium => EmbeddingSource::Medium,
                    ScaleTag::Full => EmbeddingSource::Full,
                };
                encode_semantic(prep.rois.image(tag), source)
            })
            .collect();
        let g = fuse_embeddings(&embeddings)?;
        let froi = &prep.rois.full_image;
        let roi_mask = prep.geometry.roi_mask();
        let roi_seg = extract_roi_mask(&sample.seg, &prep.geometry.square, ROI_SIZE);
        let fill = background_fill(froi, &roi_mask, &roi_seg);
        let bg = Raster::from_fn(ROI_SIZE, ROI_SIZE, |x, y| {
            if roi_mask.get(x, y) { fill } else { froi.get(x, y) }
        });
        let z_o = encode_latent(froi);
        let z_bg = encode_latent(&bg).with_role(LatentRole::Background);
        let z_in = interpolate_prior(&z_o, &z_bg, cfg.alpha)?;
        let model = AnalyticScoreModel::new(cfg.score_model.clone(), g.dim(), z_in.shape())?;
        let score = model.condition(&g, Some(&z_in))?;
        Ok(Self {
            sample,
            geometry: &prep.geometry,
            mask_latent: downsample_mask(&roi_mask, LATENT_FACTOR),
            z_in,
            score,
            schedule: NoiseSchedule::new(cfg.steps, cfg.beta_start, cfg.beta_end)?,
        })
    }

    fn run(&self, stream_seed: u64) -> Result<(Raster, Raster)> {
        let z = sample_inpaint(&self.z_in, &self.mask_latent, &self.score, &self.schedule, stream_seed)?;
        let mut roi = decode_latent(&z);
        roi.clamp_unit();
        let image = paste_roi(&self.sample.image, &roi, self.geometry, &self.sample.seg)?;
        Ok((image, roi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_set_text_forms() {
        let s: FusionSet = "s+m".parse().unwrap();
        assert_eq!(s, FusionSet::default());
        assert_eq!(s.to_string(), "s+m");
        assert_eq!("f,s".parse::<FusionSet>().unwrap().to_string(), "s+f");
        assert!("x".parse::<FusionSet>().is_err());
        assert!("".parse::<FusionSet>().unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(DeidConfig::default().validate().is_ok());
        let bad_alpha = DeidConfig {
            alpha: 1.2,
            ..Default::default()
        };
        assert!(matches!(bad_alpha.validate(), Err(Error::AlphaOutOfRange(_))));
        let empty = DeidConfig {
            fusion_set: FusionSet::new(false, false, false),
            ..Default::default()
        };
        assert!(empty.validate().is_err());
        let masked = DeidConfig {
            baseline: Some(Baseline::Masking),
            ..empty
        };
        assert!(masked.validate().is_ok());
        let json = serde_json::to_string(&DeidConfig::default()).unwrap();
        let back: DeidConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, DeidConfig::default());
    }

    #[test]
    fn latent_mask_threshold() {
        let m = Mask::from_fn(16, 8, |x, y| (x < 8 && y < 4) || (x >= 8 && y < 3));
        assert_eq!(downsample_mask(&m, 8), vec![true, false]);
    }
}
