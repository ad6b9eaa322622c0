//! Full-reference image quality: SSIM, MS-SSIM and PSNR on `[0, 1]` rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let h = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - h;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering over the "valid" region.
fn filter_valid(data: &[f64], width: usize, height: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = win.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = win.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win
                .iter()
                .enumerate()
                .map(|(k, w)| w * horiz[(y + k) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

fn check_pair(x: &Raster, y: &Raster) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::SizeMismatch {
            expected: x.dims(),
            actual: y.dims(),
        });
    }
    if x.width() < SSIM_WINDOW || x.height() < SSIM_WINDOW {
        return Err(Error::InsufficientData(format!(
            "image {}x{} smaller than the {SSIM_WINDOW}px SSIM window",
            x.width(),
            x.height()
        )));
    }
    Ok(())
}

/// Mean SSIM and mean contrast-structure term.
fn ssim_components(x: &Raster, y: &Raster) -> (f64, f64) {
    let win = gaussian_window();
    let (w, h) = x.dims();
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let (mx, _, _) = filter_valid(xs, w, h, &win);
    let (my, _, _) = filter_valid(ys, w, h, &win);
    let (sxx, _, _) = filter_valid(&xx, w, h, &win);
    let (syy, _, _) = filter_valid(&yy, w, h, &win);
    let (sxy, _, _) = filter_valid(&xy, w, h, &win);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let n = mx.len() as f64;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for k in 0..mx.len() {
        let (ux, uy) = (mx[k], my[k]);
        let vx = sxx[k] - ux * ux;
        let vy = syy[k] - uy * uy;
        let cov = sxy[k] - ux * uy;
        let cs = (2.0 * cov + c2) / (vx + vy + c2);
        let lum = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    (ssim_sum / n, cs_sum / n)
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5, dynamic range 1).
pub fn ssim(x: &Raster, y: &Raster) -> Result<f64> {
    check_pair(x, y)?;
    if x == y {
        return Ok(1.0);
    }
    Ok(ssim_components(x, y).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSsim {
    pub value: f64,
    /// Scales actually used; fewer than five for small images.
    pub scales: usize,
    /// Weights after renormalization.
    pub weights: Vec<f64>,
}

fn downsample2(r: &Raster) -> Raster {
    let (w, h) = (r.width() / 2, r.height() / 2);
    Raster::from_fn(w, h, |x, y| {
        (r.get(2 * x, 2 * y) + r.get(2 * x + 1, 2 * y) + r.get(2 * x, 2 * y + 1) + r.get(2 * x + 1, 2 * y + 1))
            / 4.0
    })
}

/// Number of MS-SSIM scales supported by a `side`-pixel image.
pub fn ms_ssim_scales(side: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&m| side >= SSIM_WINDOW << (m - 1))
        .unwrap_or(0)
}

/// Multi-scale SSIM with the standard five weights, falling back to fewer
/// scales (weights renormalized) when the image is under 176 px on a side.
pub fn ms_ssim(x: &Raster, y: &Raster) -> Result<MsSsim> {
    check_pair(x, y)?;
    let scales = ms_ssim_scales(x.width().min(x.height()));
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..scales].iter().map(|w| w / total).collect();
    if x == y {
        return Ok(MsSsim {
            value: 1.0,
            scales,
            weights,
        });
    }
    let (mut a, mut b) = (x.clone(), y.clone());
    let mut value = 1.0;
    for (j, w) in weights.iter().enumerate() {
        let (s, cs) = ssim_components(&a, &b);
        let term = if j + 1 == scales { s } else { cs };
        value *= term.max(0.0).powf(*w);
        if j + 1 < scales {
            a = downsample2(&a);
            b = downsample2(&b);
        }
    }
    Ok(MsSsim {
        value,
        scales,
        weights,
    })
}

/// PSNR in dB for unit dynamic range; `+∞` for identical inputs.
pub fn psnr(x: &Raster, y: &Raster) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::SizeMismatch {
            expected: x.dims(),
            actual: y.dims(),
        });
    }
    let mse = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.as_slice().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Serde helper writing non-finite values as the strings `"inf"`, `"-inf"`
/// or `"nan"`.
pub mod finite_or_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number {other:?}"))),
            },
        }
    }
}

/// Formats a metric, using `inf` for infinities.
pub fn format_metric(v: f64, precision: usize) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.precision$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(w: usize, h: usize, seed: u64) -> Raster {
        let mut state = seed;
        Raster::from_fn(w, h, |_, _| {
            state = crate::seed::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    /// Direct per-window evaluation of the SSIM definition.
    fn ssim_reference(x: &Raster, y: &Raster) -> f64 {
        let n = SSIM_WINDOW;
        let h = (n / 2) as f64;
        let mut w2 = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let (dx, dy) = (i as f64 - h, j as f64 - h);
                w2[j * n + i] = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            }
        }
        let total: f64 = w2.iter().sum();
        w2.iter_mut().for_each(|v| *v /= total);
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let mut acc = 0.0;
        let mut count = 0.0;
        for oy in 0..=y.height() - n {
            for ox in 0..=x.width() - n {
                let (mut mx, mut my) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        mx += w2[j * n + i] * x.get(ox + i, oy + j);
                        my += w2[j * n + i] * y.get(ox + i, oy + j);
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let a = x.get(ox + i, oy + j) - mx;
                        let b = y.get(ox + i, oy + j) - my;
                        vx += w2[j * n + i] * a * a;
                        vy += w2[j * n + i] * b * b;
                        cov += w2[j * n + i] * a * b;
                    }
                }
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        acc / count
    }

    #[test]
    fn identity_values() {
        let x = noise_image(40, 30, 1);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        assert_eq!(ms_ssim(&x, &x).unwrap().value, 1.0);
    }

    #[test]
    fn constant_offset_psnr() {
        let x = Raster::from_fn(20, 20, |i, j| ((i + j) % 9) as f64 / 10.0);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_reference_definition() {
        let x = noise_image(37, 29, 7);
        let y = Raster::from_fn(37, 29, |i, j| (0.6 * x.get(i, j) + 0.2 * ((i * j) % 5) as f64 / 5.0).min(1.0));
        let fast = ssim(&x, &y).unwrap();
        let slow = ssim_reference(&x, &y);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        assert!((ssim(&y, &x).unwrap() - fast).abs() < 1e-12);
    }

    #[test]
    fn ms_ssim_scale_fallback() {
        assert_eq!(ms_ssim_scales(176), 5);
        assert_eq!(ms_ssim_scales(175), 4);
        assert_eq!(ms_ssim_scales(128), 4);
        assert_eq!(ms_ssim_scales(10), 0);
        let x = noise_image(128, 128, 3);
        let y = noise_image(128, 128, 4);
        let m = ms_ssim(&x, &y).unwrap();
        assert_eq!(m.scales, 4);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.value >= 0.0 && m.value < 1.0);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Raster::new(20, 20);
        let b = Raster::new(21, 20);
        assert!(ssim(&a, &b).is_err());
        assert!(psnr(&a, &b).is_err());
        assert!(ms_ssim(&a, &b).is_err());
    }
}
