//! Competitive-code palmprint matcher.
//!
//! Each ROI cell stores the index of the even-symmetric Gabor orientation
//! with the most negative summed response (palm lines are darker than the
//! surrounding skin). Two codes are compared by the mean circular index
//! difference over mutually valid cells, minimized over small translations.

use std::f64::consts::PI;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{extract_roi_image, PalmGeometry, ROI_SIZE};
use crate::metrics::{Population, ScoreSet};
use crate::raster::{Mask, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherParams {
    pub orientations: usize,
    /// Pixels.
    pub wavelength: f64,
    /// Gaussian envelope, pixels.
    pub sigma: f64,
    /// Odd kernel side.
    pub kernel_size: usize,
    pub stride: usize,
    /// Cells, applied symmetrically in x and y.
    pub max_shift: i32,
    /// Cells whose orientation responses span less than this are invalid.
    pub min_response: f64,
    /// Minimum fraction of a cell's pixels inside the palm mask.
    pub mask_cell_fraction: f64,
    /// Imposter pool cap; larger pools are subsampled.
    pub max_imposter_pairs: usize,
    pub pool_seed: u64,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            orientations: 6,
            wavelength: 12.0,
            sigma: 5.6,
            kernel_size: 35,
            stride: 4,
            max_shift: 3,
            min_response: 1e-6,
            mask_cell_fraction: 0.5,
            max_imposter_pairs: 50_000,
            pool_seed: 0,
        }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<()> {
        if self.orientations < 2 || self.orientations > 255 {
            return Err(Error::ConfigInvalid("orientations must be in 2..=255".into()));
        }
        if self.kernel_size.is_multiple_of(2) || self.stride == 0 || self.max_shift < 0 {
            return Err(Error::ConfigInvalid(
                "kernel size must be odd, stride positive, shift non-negative".into(),
            ));
        }
        if !(self.wavelength > 0.0 && self.sigma > 0.0) {
            return Err(Error::ConfigInvalid("Gabor wavelength/sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Zero-mean, unit-L2 even Gabor kernel tuned to dark lines running along
/// direction `angle` (image coordinates, x right, y down).
pub fn gabor_kernel(angle: f64, wavelength: f64, sigma: f64, size: usize) -> Vec<f64> {
    let h = (size / 2) as isize;
    let (s, c) = angle.sin_cos();
    let mut k: Vec<f64> = (-h..=h)
        .flat_map(|y| (-h..=h).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| {
            let across = -x * s + y * c;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() * (2.0 * PI * across / wavelength).cos()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitiveCode {
    pub width: usize,
    pub height: usize,
    pub orientations: u8,
    pub index: Vec<u8>,
    pub valid: Vec<bool>,
}

impl CompetitiveCode {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<u8> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.index[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub distance: f64,
    pub aligned_shift: (i32, i32),
}

/// Encoder/matcher with precomputed cell kernels.
#[derive(Debug, Clone)]
pub struct Matcher {
    params: MatcherParams,
    /// Gabor kernel convolved with the stride box, per orientation.
    cell_kernels: Vec<Vec<f64>>,
    cell_kernel_side: usize,
}

impl Matcher {
    pub fn new(params: MatcherParams) -> Result<Self> {
        params.validate()?;
        let size = params.kernel_size;
        let stride = params.stride;
        let side = size + stride - 1;
        let cell_kernels = (0..params.orientations)
            .map(|k| {
                let angle = k as f64 * PI / params.orientations as f64;
                let g = gabor_kernel(angle, params.wavelength, params.sigma, size);
                let mut ck = vec![0.0; side * side];
                for py in 0..stride {
                    for px in 0..stride {
                        for ky in 0..size {
                            for kx in 0..size {
                                ck[(ky + py) * side + kx + px] += g[ky * size + kx];
                            }
                        }
                    }
                }
                ck
            })
            .collect();
        Ok(Self {
            params,
            cell_kernels,
            cell_kernel_side: side,
        })
    }

    pub fn params(&self) -> &MatcherParams {
        &self.params
    }

    /// Per-cell summed responses, `[cell][orientation]`.
    pub fn cell_responses(&self, roi: &Raster) -> Vec<Vec<f64>> {
        let stride = self.params.stride;
        let (gw, gh) = (roi.width() / stride, roi.height() / stride);
        let half = (self.params.kernel_size / 2) as isize;
        let side = self.cell_kernel_side;
        let mut out = Vec::with_capacity(gw * gh);
        let mut patch = vec![0.0; side * side];
        for cy in 0..gh {
            for cx in 0..gw {
                let ox = (cx * stride) as isize - half;
                let oy = (cy * stride) as isize - half;
                for j in 0..side {
                    for i in 0..side {
                        patch[j * side + i] = roi.get_clamped(ox + i as isize, oy + j as isize);
                    }
                }
                out.push(
                    self.cell_kernels
                        .iter()
                        .map(|k| k.iter().zip(&patch).map(|(a, b)| a * b).sum())
                        .collect(),
                );
            }
        }
        out
    }

    /// Encodes a whole ROI; every cell with orientation signal is valid.
    pub fn encode(&self, roi: &Raster) -> CompetitiveCode {
        self.encode_masked(roi, None)
    }

    /// Like [`Matcher::encode`] but fails with `BadRoi` when no cell carries
    /// orientation signal.
    pub fn encode_strict(&self, roi: &Raster) -> Result<CompetitiveCode> {
        let code = self.encode(roi);
        if code.valid_count() == 0 {
            return Err(Error::BadRoi);
        }
        Ok(code)
    }

    /// Encodes `roi`, restricting validity to cells mostly inside `mask`.
    pub fn encode_masked(&self, roi: &Raster, mask: Option<&Mask>) -> CompetitiveCode {
        let stride = self.params.stride;
        let (gw, gh) = (roi.width() / stride, roi.height() / stride);
        let responses = self.cell_responses(roi);
        let mut index = Vec::with_capacity(gw * gh);
        let mut valid = Vec::with_capacity(gw * gh);
        for (cell, resp) in responses.iter().enumerate() {
            let (mut best, mut lo, mut hi) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
            for (k, &r) in resp.iter().enumerate() {
                if r < lo {
                    lo = r;
                    best = k;
                }
                hi = hi.max(r);
            }
            let in_mask = mask.is_none_or(|m| {
                let (cx, cy) = (cell % gw, cell / gw);
                let mut inside = 0;
                for y in cy * stride..(cy + 1) * stride {
                    for x in cx * stride..(cx + 1) * stride {
                        inside += m.get(x, y) as usize;
                    }
                }
                inside as f64 >= self.params.mask_cell_fraction * (stride * stride) as f64
            });
            index.push(best as u8);
            valid.push(in_mask && hi - lo > self.params.min_response);
        }
        CompetitiveCode {
            width: gw,
            height: gh,
            orientations: self.params.orientations as u8,
            index,
            valid,
        }
    }

    /// Encodes the palm of a hand image: full ROI with palm-mask validity.
    pub fn encode_palm(&self, image: &Raster, geometry: &PalmGeometry) -> Result<CompetitiveCode> {
        let roi = extract_roi_image(image, &geometry.square)?;
        let mask = geometry.roi_mask();
        debug_assert_eq!(mask.dims(), (ROI_SIZE, ROI_SIZE));
        Ok(self.encode_masked(&roi, Some(&mask)))
    }

    /// Shift-minimized angular distance.
    pub fn match_codes(&self, a: &CompetitiveCode, b: &CompetitiveCode) -> Result<MatchScore> {
        if (a.width, a.height, a.orientations) != (b.width, b.height, b.orientations) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}/{} vs {}x{}/{}",
                a.width, a.height, a.orientations, b.width, b.height, b.orientations
            )));
        }
        let n = a.orientations as u32;
        let half = n / 2;
        let r = self.params.max_shift;
        let (w, h) = (a.width as i32, a.height as i32);
        // (sum, count, |shift|, dx, dy)
        let mut best: Option<(u64, u64, i32, i32, i32)> = None;
        for dx in -r..=r {
            for dy in -r..=r {
                let (mut sum, mut count) = (0u64, 0u64);
                for y in 0.max(-dy)..h.min(h - dy) {
                    let row_a = (y * w) as usize;
                    let row_b = ((y + dy) * w) as usize;
                    for x in 0.max(-dx)..w.min(w - dx) {
                        let ia = row_a + x as usize;
                        let ib = row_b + (x + dx) as usize;
                        if a.valid[ia] && b.valid[ib] {
                            let d = (a.index[ia] as u32).abs_diff(b.index[ib] as u32);
                            sum += d.min(n - d) as u64;
                            count += 1;
                        }
                    }
                }
                if count == 0 {
                    continue;
                }
                let cand = (sum, count, dx.abs() + dy.abs(), dx, dy);
                best = Some(match best {
                    None => cand,
                    Some(cur) => {
                        let lhs = cand.0 as u128 * cur.1 as u128;
                        let rhs = cur.0 as u128 * cand.1 as u128;
                        if lhs < rhs || (lhs == rhs && (cand.2, cand.3, cand.4) < (cur.2, cur.3, cur.4)) {
                            cand
                        } else {
                            cur
                        }
                    }
                });
            }
        }
        let (sum, count, _, dx, dy) = best.ok_or(Error::NoOverlap)?;
        Ok(MatchScore {
            distance: sum as f64 / (count as f64 * half as f64),
            aligned_shift: (dx, dy),
        })
    }

    /// Distance with `NoOverlap` scored as a complete mismatch (1.0).
    pub fn distance(&self, a: &CompetitiveCode, b: &CompetitiveCode) -> Result<f64> {
        match self.match_codes(a, b) {
            Ok(s) => Ok(s.distance),
            Err(Error::NoOverlap) => Ok(1.0),
            Err(e) => Err(e),
        }
    }

    /// Genuine (same identity, different session) and imposter (different
    /// identity) distance pools over labelled codes.
    pub fn score_pools(&self, samples: &[LabelledCode]) -> Result<ScorePools> {
        let identities: std::collections::BTreeSet<u32> =
            samples.iter().map(|s| s.identity).collect();
        if identities.len() < 2 {
            return Err(Error::InsufficientData("need at least 2 identities".into()));
        }
        let mut genuine_pairs = Vec::new();
        let mut imposter_pairs = Vec::new();
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let (a, b) = (&samples[i], &samples[j]);
                if a.identity == b.identity {
                    if a.session != b.session {
                        genuine_pairs.push((i, j));
                    }
                } else {
                    imposter_pairs.push((i, j));
                }
            }
        }
        if genuine_pairs.is_empty() {
            return Err(Error::InsufficientData("need at least 2 sessions per identity".into()));
        }
        if imposter_pairs.len() > self.params.max_imposter_pairs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.params.pool_seed);
            let mut picked = sample_indices(
                &mut rng,
                imposter_pairs.len(),
                self.params.max_imposter_pairs,
            )
            .into_vec();
            picked.sort_unstable();
            imposter_pairs = picked.into_iter().map(|k| imposter_pairs[k]).collect();
        }
        let score = |pairs: &[(usize, usize)]| -> Result<Vec<f64>> {
            pairs
                .par_iter()
                .map(|&(i, j)| self.distance(&samples[i].code, &samples[j].code))
                .collect()
        };
        Ok(ScorePools {
            genuine: ScoreSet::new(Population::Genuine, score(&genuine_pairs)?),
            imposter: ScoreSet::new(Population::Imposter, score(&imposter_pairs)?),
        })
    }

    /// Rank-1 identification rate in percent.
    pub fn rank1_accuracy(&self, gallery: &[LabelledCode], probes: &[LabelledCode]) -> Result<f64> {
        if probes.is_empty() {
            return Err(Error::InsufficientData("no probes".into()));
        }
        for p in probes {
            if !gallery.iter().any(|g| g.identity == p.identity) {
                return Err(Error::EmptyGallery(p.identity));
            }
        }
        let correct = probes
            .par_iter()
            .map(|p| {
                let mut best: Option<(f64, u32)> = None;
                for g in gallery {
                    let d = self.distance(&p.code, &g.code)?;
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, g.identity));
                    }
                }
                Ok(best.map(|(_, id)| id == p.identity).unwrap_or(false))
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&c| c)
            .count();
        Ok(100.0 * correct as f64 / probes.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct LabelledCode {
    pub identity: u32,
    pub session: u32,
    pub code: CompetitiveCode,
}

#[derive(Debug, Clone)]
pub struct ScorePools {
    pub genuine: ScoreSet,
    pub imposter: ScoreSet,
}
