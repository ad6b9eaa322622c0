//! Evaluation protocol: reference pools from originals, de-identified
//! distances, rank-1 identification, diversity and image quality.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PalmGeometry;
use crate::matcher::{LabelledCode, Matcher, ScorePools};
use crate::metrics::quality::{finite_or_string, ms_ssim, psnr, ssim};
use crate::metrics::{diversity_report, DirReport, Population, ScoreSet};
use crate::raster::Raster;
use crate::synth::HandSample;

/// Original samples with their geometry and codes.
#[derive(Debug, Clone)]
pub struct OriginalSet {
    pub samples: Vec<HandSample>,
    pub geometries: Vec<PalmGeometry>,
    pub codes: Vec<LabelledCode>,
}

impl OriginalSet {
    pub fn new(matcher: &Matcher, samples: Vec<HandSample>) -> Result<Self> {
        let encoded = samples
            .par_iter()
            .map(|s| {
                let geometry = PalmGeometry::new(&s.keypoints, &s.seg)?;
                let code = matcher.encode_palm(&s.image, &geometry)?;
                Ok((
                    geometry,
                    LabelledCode {
                        identity: s.identity,
                        session: s.session,
                        code,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (geometries, codes) = encoded.into_iter().unzip();
        Ok(Self {
            samples,
            geometries,
            codes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pools(&self, matcher: &Matcher) -> Result<ScorePools> {
        matcher.score_pools(&self.codes)
    }

    /// Enrolment gallery: every identity's first session.
    pub fn gallery(&self) -> Vec<LabelledCode> {
        let first = self.first_sessions();
        self.codes
            .iter()
            .filter(|c| first.get(&c.identity) == Some(&c.session))
            .cloned()
            .collect()
    }

    /// Originals not in the gallery, used as a sanity probe set.
    pub fn non_gallery(&self) -> Vec<LabelledCode> {
        let first = self.first_sessions();
        self.codes
            .iter()
            .filter(|c| first.get(&c.identity) != Some(&c.session))
            .cloned()
            .collect()
    }

    fn first_sessions(&self) -> BTreeMap<u32, u32> {
        let mut first = BTreeMap::new();
        for c in &self.codes {
            first
                .entry(c.identity)
                .and_modify(|s: &mut u32| *s = (*s).min(c.session))
                .or_insert(c.session);
        }
        first
    }
}

/// One de-identified image of original `source`.
#[derive(Debug, Clone)]
pub struct DeidImage {
    pub source: usize,
    pub seed_index: usize,
    pub image: Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(with = "finite_or_string")]
    pub mean: f64,
    #[serde(with = "finite_or_string")]
    pub std: f64,
}

impl MeanStd {
    /// Population moments; an infinite sample makes both infinite.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Self {
                mean: f64::INFINITY,
                std: f64::INFINITY,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub source: usize,
    pub seed_index: usize,
    pub ssim: f64,
    pub ms_ssim: f64,
    #[serde(with = "finite_or_string")]
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub ssim: MeanStd,
    pub ms_ssim: MeanStd,
    pub psnr: MeanStd,
    /// MS-SSIM scales used (fewer than five on small images).
    pub ms_ssim_scales: usize,
    pub ms_ssim_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Fraction trimmed from each tail of the de-identified distances
    /// before computing the ratio; off by default.
    pub trim_fraction: Option<f64>,
    pub quality: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: DirReport,
    pub deid: ScoreSet,
    pub diversity: Option<ScoreSet>,
    pub quality: Option<QualitySummary>,
    pub quality_rows: Vec<QualityRow>,
}

/// Quality of each de-identified image against its original, full frame.
pub fn quality_rows(originals: &OriginalSet, deid: &[DeidImage]) -> Result<(Vec<QualityRow>, QualitySummary)> {
    let rows = deid
        .par_iter()
        .map(|d| {
            let orig = &originals.samples[d.source].image;
            Ok(QualityRow {
                source: d.source,
                seed_index: d.seed_index,
                ssim: ssim(orig, &d.image)?,
                ms_ssim: ms_ssim(orig, &d.image)?.value,
                psnr: psnr(orig, &d.image)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = deid.first().ok_or(Error::InsufficientData("no de-identified images".into()))?;
    let meta = ms_ssim(&first.image, &first.image)?;
    let col = |f: fn(&QualityRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
    let summary = QualitySummary {
        ssim: col(|r| r.ssim),
        ms_ssim: col(|r| r.ms_ssim),
        psnr: col(|r| r.psnr),
        ms_ssim_scales: meta.scales,
        ms_ssim_weights: meta.weights,
    };
    Ok((rows, summary))
}

/// Codes of de-identified images, using their source's geometry.
pub fn encode_deid(matcher: &Matcher, originals: &OriginalSet, deid: &[DeidImage]) -> Result<Vec<LabelledCode>> {
    deid.par_iter()
        .map(|d| {
            let src = originals
                .samples
                .get(d.source)
                .ok_or_else(|| Error::InsufficientData(format!("unknown source {}", d.source)))?;
            Ok(LabelledCode {
                identity: src.identity,
                session: src.session,
                code: matcher.encode_palm(&d.image, &originals.geometries[d.source])?,
            })
        })
        .collect()
}

/// Full evaluation of one de-identification run.
pub fn evaluate(
    matcher: &Matcher,
    originals: &OriginalSet,
    pools: &ScorePools,
    deid: &[DeidImage],
    options: &EvalOptions,
) -> Result<EvalOutcome> {
    if deid.is_empty() {
        return Err(Error::InsufficientData("no de-identified images".into()));
    }
    let codes = encode_deid(matcher, originals, deid)?;
    let distances = deid
        .par_iter()
        .zip(&codes)
        .map(|(d, c)| matcher.distance(&originals.codes[d.source].code, &c.code))
        .collect::<Result<Vec<f64>>>()?;
    let deid_set = ScoreSet::new(Population::Deid, distances);
    let ratio_set = match options.trim_fraction {
        Some(f) if f > 0.0 => deid_set.trimmed(f),
        _ => deid_set.clone(),
    };
    let accuracy = matcher.rank1_accuracy(&originals.gallery(), &codes)?;
    let report = DirReport::compute(&pools.genuine, &pools.imposter, &ratio_set, Some(accuracy))?;

    let mut by_source: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (k, d) in deid.iter().enumerate() {
        by_source.entry(d.source).or_default().push((d.seed_index, k));
    }
    let diversity = if by_source.values().all(|v| v.len() >= 2) {
        let groups: Vec<Vec<_>> = by_source
            .values()
            .map(|v| {
                let mut v = v.clone();
                v.sort_unstable();
                v.into_iter().map(|(_, k)| codes[k].code.clone()).collect()
            })
            .collect();
        Some(diversity_report(matcher, &groups)?)
    } else {
        None
    };

    let (quality_rows, quality) = if options.quality {
        let (rows, summary) = quality_rows(originals, deid)?;
        (rows, Some(summary))
    } else {
        (Vec::new(), None)
    };
    Ok(EvalOutcome {
        report,
        deid: deid_set,
        diversity,
        quality,
        quality_rows,
    })
}
