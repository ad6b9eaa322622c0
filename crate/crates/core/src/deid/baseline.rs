//! Classical obfuscation baselines applied inside a mask.

use serde::{Deserialize, Deserializer, Serialize};

use crate::raster::{Mask, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    Masking,
    Blurring { sigma: f64 },
    Pixelating { block: usize },
}

pub const DEFAULT_BLUR_SIGMA: f64 = 8.0;
pub const DEFAULT_PIXEL_BLOCK: usize = 16;

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Masking => "masking",
            Baseline::Blurring { .. } => "blurring",
            Baseline::Pixelating { .. } => "pixelating",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "masking" => Some(Baseline::Masking),
            "blurring" => Some(Baseline::Blurring {
                sigma: DEFAULT_BLUR_SIGMA,
            }),
            "pixelating" => Some(Baseline::Pixelating {
                block: DEFAULT_PIXEL_BLOCK,
            }),
            _ => None,
        }
    }

    pub fn apply(&self, image: &Raster, mask: &Mask) -> Raster {
        match *self {
            Baseline::Masking => baseline_mask(image, mask),
            Baseline::Blurring { sigma } => baseline_blur(image, mask, sigma),
            Baseline::Pixelating { block } => baseline_pixelate(image, mask, block),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Baseline::Masking => true,
            Baseline::Blurring { sigma } => sigma.is_finite() && sigma > 0.0,
            Baseline::Pixelating { block } => block > 0,
        }
    }
}

/// Accepts `"masking"`, or `{"kind": "blurring", "sigma": 8}` with optional
/// parameters.
impl<'de> Deserialize<'de> for Baseline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Tagged {
            kind: String,
            sigma: Option<f64>,
            block: Option<usize>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Tagged(Tagged),
        }
        let (kind, sigma, block) = match Repr::deserialize(d)? {
            Repr::Name(n) => (n, None, None),
            Repr::Tagged(t) => (t.kind, t.sigma, t.block),
        };
        let base = Baseline::from_name(&kind)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown baseline {kind:?}")))?;
        Ok(match base {
            Baseline::Blurring { sigma: s } => Baseline::Blurring {
                sigma: sigma.unwrap_or(s),
            },
            Baseline::Pixelating { block: b } => Baseline::Pixelating {
                block: block.unwrap_or(b),
            },
            Baseline::Masking => Baseline::Masking,
        })
    }
}

pub fn baseline_mask(image: &Raster, mask: &Mask) -> Raster {
    let (w, h) = image.dims();
    Raster::from_fn(w, h, |x, y| if mask.get(x, y) { 0.0 } else { image.get(x, y) })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn convolve_separable(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = x as isize + i as isize - r;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * data[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = y as isize + i as isize - r;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Gaussian blur restricted to masked pixels: only masked pixels contribute
/// and the kernel is renormalized over them.
pub fn baseline_blur(image: &Raster, mask: &Mask, sigma: f64) -> Raster {
    let (w, h) = image.dims();
    if mask.count() == 0 {
        return image.clone();
    }
    let k = gaussian_kernel(sigma);
    let weights: Vec<f64> = mask.as_slice().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let weighted: Vec<f64> = image.as_slice().iter().zip(&weights).map(|(v, m)| v * m).collect();
    let num = convolve_separable(&weighted, w, h, &k);
    let den = convolve_separable(&weights, w, h, &k);
    Raster::from_fn(w, h, |x, y| {
        let i = y * w + x;
        if mask.get(x, y) && den[i] > 0.0 {
            (num[i] / den[i]).clamp(0.0, 1.0)
        } else {
            image.get(x, y)
        }
    })
}

/// Replaces masked pixels by the mean of the masked pixels in their
/// grid-aligned `block × block` cell.
pub fn baseline_pixelate(image: &Raster, mask: &Mask, block: usize) -> Raster {
    let (w, h) = image.dims();
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let mut sum = vec![0.0; bw * bh];
    let mut count = vec![0usize; bw * bh];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let b = (y / block) * bw + x / block;
                sum[b] += image.get(x, y);
                count[b] += 1;
            }
        }
    }
    Raster::from_fn(w, h, |x, y| {
        if mask.get(x, y) {
            let b = (y / block) * bw + x / block;
            sum[b] / count[b] as f64
        } else {
            image.get(x, y)
        }
    })
}
