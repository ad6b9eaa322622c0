//! CSV and SVG export of score distributions.

use std::fmt::Write as _;

use crate::metrics::stats::ScoreSet;

pub const HISTOGRAM_BINS: usize = 64;

/// One row per distance, header `population,distance`.
pub fn scores_csv(sets: &[&ScoreSet]) -> String {
    let mut out = String::from("population,distance\n");
    for set in sets {
        for d in set.samples() {
            let _ = writeln!(out, "{},{}", set.population().as_str(), d);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Normalized densities per population, each `HISTOGRAM_BINS` long.
    pub series: Vec<(String, Vec<f64>)>,
}

impl Histogram {
    /// Bins every set over the common observed range.
    pub fn new(sets: &[&ScoreSet]) -> Self {
        let all = sets.iter().flat_map(|s| s.samples().iter().copied());
        let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi <= lo {
            hi = lo + 1e-9;
        }
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let series = sets
            .iter()
            .map(|set| {
                let mut counts = vec![0.0; HISTOGRAM_BINS];
                for &v in set.samples() {
                    let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                    counts[b] += 1.0;
                }
                let n = set.len().max(1) as f64;
                counts.iter_mut().for_each(|c| *c /= n * width);
                (set.population().as_str().to_string(), counts)
            })
            .collect();
        Self { lo, hi, series }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / HISTOGRAM_BINS as f64
    }

    /// Columns `bin_lo,bin_hi,<population density>...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi");
        for (name, _) in &self.series {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        let w = self.bin_width();
        for b in 0..HISTOGRAM_BINS {
            let _ = write!(out, "{:.6},{:.6}", self.lo + b as f64 * w, self.lo + (b + 1) as f64 * w);
            for (_, values) in &self.series {
                let _ = write!(out, ",{:.6}", values[b]);
            }
            out.push('\n');
        }
        out
    }

    /// Overlay of density curves, colored red/blue/black/green for
    /// genuine/imposter/deid/diversity.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let peak = self
            .series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="gray"/>"#,
            y = h - pad,
            x2 = w - pad
        );
        let bw = (w - 2.0 * pad) / HISTOGRAM_BINS as f64;
        for (name, values) in &self.series {
            let color = match name.as_str() {
                "genuine" => "red",
                "imposter" => "blue",
                "deid" => "black",
                _ => "green",
            };
            let points: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(b, v)| {
                    let x = pad + (b as f64 + 0.5) * bw;
                    let y = h - pad - v / peak * (h - 2.0 * pad);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{name}</title></polyline>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{pad}" y="{y}" font-size="12">{:.3}</text><text x="{x}" y="{y}" font-size="12" text-anchor="end">{:.3}</text>"#,
            self.lo,
            self.hi,
            y = h - pad / 3.0,
            x = w - pad
        );
        out.push_str("</svg>\n");
        out
    }
}
