//! Reference latent codec (8× block averaging) and prior interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const LATENT_FACTOR: usize = 8;

/// Offset of the affine pixel-to-latent map, `z = x - LATENT_OFFSET`.
pub const LATENT_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentRole {
    Original,
    Background,
    Interpolated,
    Generated,
}

/// `channels × height × width` grid, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub role: LatentRole,
}

impl LatentMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>, role: LatentRole) -> Self {
        assert_eq!(values.len(), channels * height * width, "latent size");
        Self {
            channels,
            height,
            width,
            values,
            role,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize, role: LatentRole) -> Self {
        Self::new(channels, height, width, vec![0.0; channels * height * width], role)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_role(mut self, role: LatentRole) -> Self {
        self.role = role;
        self
    }

    pub(crate) fn check_shape(&self, other: &LatentMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "latent {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Block means over `LATENT_FACTOR`-pixel cells, shifted by the affine
/// offset. Image sides must be multiples of the factor.
pub fn encode_latent(image: &Raster) -> LatentMap {
    let (w, h) = image.dims();
    assert!(
        w % LATENT_FACTOR == 0 && h % LATENT_FACTOR == 0,
        "image {w}x{h} not divisible by latent factor"
    );
    let (lw, lh) = (w / LATENT_FACTOR, h / LATENT_FACTOR);
    let area = (LATENT_FACTOR * LATENT_FACTOR) as f64;
    let mut values = vec![0.0; lw * lh];
    for j in 0..lh {
        for i in 0..lw {
            let mut sum = 0.0;
            for y in j * LATENT_FACTOR..(j + 1) * LATENT_FACTOR {
                for x in i * LATENT_FACTOR..(i + 1) * LATENT_FACTOR {
                    sum += image.get(x, y);
                }
            }
            values[j * lw + i] = sum / area - LATENT_OFFSET;
        }
    }
    LatentMap::new(1, lh, lw, values, LatentRole::Original)
}

/// Block mean of the bilinear upsampling expressed on the coarse grid:
/// `0.75 v[i] + 0.125 (v[i-1] + v[i+1])` with edge replication.
const CENTER: f64 = 0.75;
const SIDE: f64 = 0.125;

/// Solves the per-axis block-mean system for the coefficients whose
/// bilinear upsampling has the given block means (Thomas algorithm).
fn prefilter_line(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    if n == 1 {
        return z.to_vec();
    }
    let diag = |i: usize| if i == 0 || i == n - 1 { CENTER + SIDE } else { CENTER };
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = SIDE / diag(0);
    d[0] = z[0] / diag(0);
    for i in 1..n {
        let m = diag(i) - SIDE * c[i - 1];
        c[i] = SIDE / m;
        d[i] = (z[i] - SIDE * d[i - 1]) / m;
    }
    let mut v = vec![0.0; n];
    v[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = d[i] - c[i] * v[i + 1];
    }
    v
}

/// Smooth decode: bilinear upsampling of prefiltered coefficients, so that
/// `encode_latent(decode_latent(z)) == z`. Values are not clamped.
pub fn decode_latent(z: &LatentMap) -> Raster {
    assert_eq!(z.channels, 1, "reference codec is single-channel");
    let (lw, lh) = (z.width, z.height);
    let mut coeff = z.values.clone();
    for j in 0..lh {
        let row = prefilter_line(&coeff[j * lw..(j + 1) * lw]);
        coeff[j * lw..(j + 1) * lw].copy_from_slice(&row);
    }
    for i in 0..lw {
        let col: Vec<f64> = (0..lh).map(|j| coeff[j * lw + i]).collect();
        for (j, v) in prefilter_line(&col).into_iter().enumerate() {
            coeff[j * lw + i] = v;
        }
    }
    let grid = Raster::from_vec(lw, lh, coeff);
    let f = LATENT_FACTOR as f64;
    Raster::from_fn(lw * LATENT_FACTOR, lh * LATENT_FACTOR, |x, y| {
        let u = (x as f64 + 0.5) / f - 0.5;
        let v = (y as f64 + 0.5) / f - 0.5;
        grid.sample_bilinear(u, v) + LATENT_OFFSET
    })
}

/// `z_in = alpha * z_o + (1 - alpha) * z_bg`, with exact endpoints.
pub fn interpolate_prior(z_o: &LatentMap, z_bg: &LatentMap, alpha: f64) -> Result<LatentMap> {
    z_o.check_shape(z_bg)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let values = if alpha == 0.0 {
        z_bg.values.clone()
    } else if alpha == 1.0 {
        z_o.values.clone()
    } else {
        z_o.values
            .iter()
            .zip(&z_bg.values)
            .map(|(o, b)| alpha * o + (1.0 - alpha) * b)
            .collect()
    };
    Ok(LatentMap::new(
        z_o.channels,
        z_o.height,
        z_o.width,
        values,
        LatentRole::Interpolated,
    ))
}
