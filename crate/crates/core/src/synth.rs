//! Synthetic hand/palmprint generator with analytic ground truth.
//!
//! Every hand is drawn from a fixed silhouette template expressed in
//! palm-normalized coordinates `(u, v)`: origin at the palm center, unit
//! length equal to the palm width, `v` pointing towards the fingers. An
//! identity is a set of dark principal lines plus a curved sinusoidal ridge
//! field; sessions differ by a rigid jitter, a gain and pixel noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HandKeypoints, Point, NUM_KEYPOINTS};
use crate::manifest::{Manifest, ManifestRecord};
use crate::raster::{Mask, Raster};
use crate::seed::mix_seed;

pub const MIN_LINES: usize = 3;
pub const MAX_LINES: usize = 8;

/// One principal line: a parabolic arc through `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Palm-normalized coordinates.
    pub anchor: [f64; 2],
    /// Tangent direction at the anchor, radians.
    pub orientation: f64,
    /// 1/pixels.
    pub curvature: f64,
    /// Pixels.
    pub width: f64,
    /// Fractional darkening at the line center, in (0, 1].
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub lines: Vec<LineParams>,
    /// Cycles per pixel.
    pub ridge_freq: f64,
    pub ridge_phase: f64,
    /// Center of the concentric ridge field, palm-normalized.
    pub ridge_center: [f64; 2],
    pub seed: u64,
}

impl IdentityParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.lines.len();
        if !(MIN_LINES..=MAX_LINES).contains(&k) {
            return Err(Error::ConfigInvalid(format!("{k} principal lines")));
        }
        if !(0.05..=0.25).contains(&self.ridge_freq) {
            return Err(Error::ConfigInvalid(format!(
                "ridge frequency {}",
                self.ridge_freq
            )));
        }
        if self.lines.iter().any(|l| !(l.depth > 0.0 && l.depth <= 1.0)) {
            return Err(Error::ConfigInvalid("line depth outside (0, 1]".into()));
        }
        Ok(())
    }
}

/// Deterministic identity draw.
pub fn sample_identity(seed: u64) -> IdentityParams {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1D));
    let k = rng.random_range(MIN_LINES..=MAX_LINES);
    let lines = (0..k)
        .map(|_| LineParams {
            anchor: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            orientation: rng.random_range(0.0..PI),
            curvature: rng.random_range(-1.0 / 70.0..1.0 / 70.0),
            width: rng.random_range(2.0..4.5),
            depth: rng.random_range(0.25..0.55),
        })
        .collect();
    let angle = rng.random_range(0.0..2.0 * PI);
    let dist = rng.random_range(0.9..2.2);
    IdentityParams {
        lines,
        ridge_freq: rng.random_range(0.065..0.11),
        ridge_phase: rng.random_range(0.0..2.0 * PI),
        ridge_center: [dist * angle.cos(), dist * angle.sin()],
        seed,
    }
}

/// Rigid capture variation applied around the palm center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub translation: (f64, f64),
    pub rotation: f64,
    pub gain: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            translation: (0.0, 0.0),
            rotation: 0.0,
            gain: 1.0,
        }
    }
}

const ROTATION_SPREAD: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterBounds {
    pub max_translation: f64,
    pub max_rotation: f64,
    pub gain: (f64, f64),
}

impl Default for JitterBounds {
    fn default() -> Self {
        Self {
            max_translation: 4.0,
            max_rotation: 0.05,
            gain: (0.9, 1.1),
        }
    }
}

impl JitterBounds {
    pub fn contains(&self, j: &Jitter) -> bool {
        j.translation.0.abs() <= self.max_translation
            && j.translation.1.abs() <= self.max_translation
            && j.rotation.abs() <= self.max_rotation
            && j.gain >= self.gain.0
            && j.gain <= self.gain.1
    }

    /// Translation and gain uniform within the bounds; rotation from a
    /// normal with standard deviation `max_rotation / ROTATION_SPREAD`,
    /// redrawn until it falls inside the bound.
    pub fn sample(&self, rng: &mut impl Rng) -> Jitter {
        let t = self.max_translation;
        let r = self.max_rotation;
        let translation = (rng.random_range(-t..=t), rng.random_range(-t..=t));
        let rotation = if r > 0.0 {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                let v = z * r / ROTATION_SPREAD;
                if v.abs() <= r {
                    break v;
                }
            }
        } else {
            0.0
        };
        Jitter {
            translation,
            rotation,
            gain: rng.random_range(self.gain.0..=self.gain.1),
        }
    }
}

/// Fixed silhouette and imaging constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandTemplate {
    pub width: usize,
    pub height: usize,
    pub palm_center: Point,
    /// Pixels; equals the side of the full ROI square at zero jitter.
    pub palm_width: f64,
    pub skin: f64,
    pub background: f64,
    pub ridge_amplitude: f64,
    /// Principal line half-length, palm-normalized.
    pub line_half_length: f64,
    pub noise_sigma: f64,
}

impl Default for HandTemplate {
    fn default() -> Self {
        Self {
            width: 320,
            height: 320,
            palm_center: (160.0, 185.0),
            palm_width: 120.0,
            skin: 0.62,
            background: 0.1,
            ridge_amplitude: 0.08,
            line_half_length: 0.36,
            noise_sigma: 0.01,
        }
    }
}

/// Keypoint layout in palm-normalized coordinates (`v` towards the fingers).
pub const KEYPOINT_TEMPLATE: [Point; NUM_KEYPOINTS] = [
    (0.0, -0.45),
    (-0.26, -0.32),
    (-0.50, -0.04),
    (-0.70, 0.18),
    (-0.86, 0.36),
    (-0.30, 0.42),
    (-0.33, 0.72),
    (-0.35, 0.93),
    (-0.37, 1.10),
    (-0.08, 0.45),
    (-0.09, 0.78),
    (-0.10, 1.01),
    (-0.10, 1.20),
    (0.15, 0.42),
    (0.17, 0.72),
    (0.19, 0.92),
    (0.20, 1.08),
    (0.50, 0.28),
    (0.56, 0.50),
    (0.60, 0.65),
    (0.63, 0.78),
];

const PALM_BODY: [Point; 8] = [
    (-0.36, -0.47),
    (0.36, -0.47),
    (0.56, 0.24),
    (0.50, 0.40),
    (0.30, 0.50),
    (-0.34, 0.50),
    (-0.42, 0.14),
    (-0.44, -0.10),
];

const FOREARM: [Point; 4] = [(-0.36, -0.47), (-0.40, -3.0), (0.40, -3.0), (0.36, -0.47)];

const THUMB_RADIUS: f64 = 0.11;
const FINGER_RADIUS: [f64; 4] = [0.085, 0.09, 0.085, 0.075];

fn inside_convex(poly: &[Point], p: Point) -> bool {
    // Either orientation.
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let c = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Silhouette membership in palm-normalized coordinates.
pub fn template_contains(p: Point) -> bool {
    if inside_convex(&PALM_BODY, p) || inside_convex(&FOREARM, p) {
        return true;
    }
    let k = &KEYPOINT_TEMPLATE;
    for (a, b) in [(1, 2), (2, 3), (3, 4)] {
        if segment_distance(p, k[a], k[b]) <= THUMB_RADIUS {
            return true;
        }
    }
    for (f, base) in [5usize, 9, 13, 17].into_iter().enumerate() {
        for j in 0..3 {
            if segment_distance(p, k[base + j], k[base + j + 1]) <= FINGER_RADIUS[f] {
                return true;
            }
        }
    }
    false
}

/// Palm-normalized ↔ image mapping for one jittered capture.
#[derive(Debug, Clone, Copy)]
struct Pose {
    center: Point,
    scale: f64,
    cos: f64,
    sin: f64,
}

impl Pose {
    fn new(template: &HandTemplate, jitter: &Jitter) -> Self {
        Self {
            center: (
                template.palm_center.0 + jitter.translation.0,
                template.palm_center.1 + jitter.translation.1,
            ),
            scale: template.palm_width,
            cos: jitter.rotation.cos(),
            sin: jitter.rotation.sin(),
        }
    }

    fn to_image(&self, (u, v): Point) -> Point {
        // v up in palm space, y down in the image.
        let (px, py) = (u * self.scale, -v * self.scale);
        (
            self.center.0 + px * self.cos - py * self.sin,
            self.center.1 + px * self.sin + py * self.cos,
        )
    }

    fn to_palm(&self, (x, y): Point) -> Point {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let px = dx * self.cos + dy * self.sin;
        let py = -dx * self.sin + dy * self.cos;
        (px / self.scale, -py / self.scale)
    }
}

/// Skin reflectance before gain and noise, at palm-normalized `p`.
fn palm_texture(identity: &IdentityParams, template: &HandTemplate, p: Point) -> f64 {
    let scale = template.palm_width;
    let mut value = template.skin;
    let half = template.line_half_length * scale;
    for line in &identity.lines {
        let (du, dv) = (
            (p.0 - line.anchor[0]) * scale,
            (p.1 - line.anchor[1]) * scale,
        );
        let (c, s) = (line.orientation.cos(), line.orientation.sin());
        let along = du * c + dv * s;
        if along.abs() > half {
            continue;
        }
        let across = -du * s + dv * c - 0.5 * line.curvature * along * along;
        let taper = ((half - along.abs()) / 10.0).min(1.0);
        let hw = line.width / 2.0;
        let profile = (-0.5 * (across / hw).powi(2)).exp();
        value *= 1.0 - line.depth * profile * taper;
    }
    let r = ((p.0 - identity.ridge_center[0]).powi(2) + (p.1 - identity.ridge_center[1]).powi(2))
        .sqrt()
        * scale;
    let ridge = (2.0 * PI * identity.ridge_freq * r + identity.ridge_phase).sin();
    value * (1.0 + template.ridge_amplitude * ridge)
}

#[derive(Debug, Clone)]
pub struct HandSample {
    pub image: Raster,
    pub keypoints: HandKeypoints,
    pub seg: Mask,
    pub identity: u32,
    pub session: u32,
}

/// Renders one capture. Deterministic in all arguments.
pub fn render_hand(
    identity: &IdentityParams,
    label: u32,
    session: u32,
    jitter: &Jitter,
    template: &HandTemplate,
) -> HandSample {
    let pose = Pose::new(template, jitter);
    let keypoints = HandKeypoints::new(
        KEYPOINT_TEMPLATE
            .iter()
            .map(|&p| pose.to_image(p))
            .collect(),
    )
    .expect("template keypoints are finite");

    let (w, h) = (template.width, template.height);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(identity.seed, 0x5E55_0000 + session as u64));
    let noise = Normal::new(0.0, template.noise_sigma).expect("finite sigma");
    let mut image = Raster::new(w, h);
    let mut seg = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = pose.to_palm((x as f64 + 0.5, y as f64 + 0.5));
            let base = if template_contains(p) {
                seg.set(x, y, true);
                palm_texture(identity, template, p) * jitter.gain
            } else {
                template.background
            };
            image.set(x, y, (base + noise.sample(&mut rng)).clamp(0.0, 1.0));
        }
    }
    HandSample {
        image,
        keypoints,
        seg,
        identity: label,
        session,
    }
}

/// Seed of identity `index` within a dataset seeded by `dataset_seed`.
pub fn identity_seed(dataset_seed: u64, index: u32) -> u64 {
    mix_seed(dataset_seed, 0x1000_0000 + index as u64)
}

/// Session jitter drawn from the identity seed.
pub fn session_jitter(identity_seed: u64, session: u32, bounds: &JitterBounds) -> Jitter {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(identity_seed, 0x7700 + session as u64));
    bounds.sample(&mut rng)
}

/// Renders sample `(identity, session)` of a dataset without touching disk.
pub fn dataset_sample(
    dataset_seed: u64,
    identity: u32,
    session: u32,
    template: &HandTemplate,
) -> HandSample {
    let seed = identity_seed(dataset_seed, identity);
    let params = sample_identity(seed);
    let jitter = session_jitter(seed, session, &JitterBounds::default());
    render_hand(&params, identity, session, &jitter, template)
}

/// In-memory dataset, ordered by identity then session.
pub fn generate_samples(
    n_identities: u32,
    n_sessions: u32,
    seed: u64,
    template: &HandTemplate,
) -> Result<Vec<HandSample>> {
    check_counts(n_identities, n_sessions)?;
    let ids: Vec<(u32, u32)> = (0..n_identities)
        .flat_map(|i| (0..n_sessions).map(move |s| (i, s)))
        .collect();
    Ok(ids
        .par_iter()
        .map(|&(i, s)| dataset_sample(seed, i, s, template))
        .collect())
}

fn check_counts(n_identities: u32, n_sessions: u32) -> Result<()> {
    if n_identities < 2 || n_sessions < 2 {
        return Err(Error::ConfigInvalid(format!(
            "need at least 2 identities and 2 sessions, got {n_identities}x{n_sessions}"
        )));
    }
    Ok(())
}

/// Renders a dataset into `out_dir` (PNG images, PNG segments and
/// `manifest.json`) and returns the manifest.
pub fn make_dataset(
    n_identities: u32,
    n_sessions: u32,
    seed: u64,
    out_dir: &Path,
    template: &HandTemplate,
) -> Result<Manifest> {
    check_counts(n_identities, n_sessions)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = generate_samples(n_identities, n_sessions, seed, template)?;
    let records = samples
        .par_iter()
        .map(|s| {
            let image_path = format!("img_{:04}_{:02}.png", s.identity, s.session);
            let seg_path = format!("seg_{:04}_{:02}.png", s.identity, s.session);
            s.image.save_png(&out_dir.join(&image_path))?;
            s.seg.save_png(&out_dir.join(&seg_path))?;
            Ok(ManifestRecord::new(
                image_path,
                s.identity,
                s.session,
                s.keypoints.clone(),
                seg_path,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(out_dir.to_path_buf(), records);
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{full_roi_square, palm_polygon, polygon_area, PALM_INDICES};

    #[test]
    fn identity_draw_is_deterministic_and_in_range() {
        assert_eq!(sample_identity(42), sample_identity(42));
        let id = sample_identity(0);
        assert!((MIN_LINES..=MAX_LINES).contains(&id.lines.len()));
        id.validate().unwrap();
    }

    #[test]
    fn distinct_seeds_give_distinct_lines() {
        let collisions = (0..100u64)
            .filter(|&s| sample_identity(2 * s).lines == sample_identity(2 * s + 1).lines)
            .count();
        assert_eq!(collisions, 0);
    }

    #[test]
    fn template_keypoints_lie_in_silhouette() {
        for (i, &p) in KEYPOINT_TEMPLATE.iter().enumerate() {
            assert!(template_contains(p), "keypoint {i} outside template");
        }
    }

    #[test]
    fn default_pose_roi_side_is_palm_width() {
        let t = HandTemplate::default();
        let s = render_hand(&sample_identity(3), 0, 0, &Jitter::default(), &t);
        let sq = full_roi_square(&s.keypoints).unwrap();
        assert_eq!(sq.side as f64, t.palm_width.round());
        let area = polygon_area(&palm_polygon(&s.keypoints).unwrap());
        let ratio = area / (sq.side as f64).powi(2);
        assert!((0.15..=0.6).contains(&ratio), "hull ratio {ratio}");
    }

    #[test]
    fn render_is_deterministic() {
        let t = HandTemplate::default();
        let id = sample_identity(9);
        let a = render_hand(&id, 1, 0, &Jitter::default(), &t);
        let b = render_hand(&id, 1, 0, &Jitter::default(), &t);
        assert_eq!(a.image, b.image);
        assert_eq!(a.seg, b.seg);
        assert_eq!(a.keypoints, b.keypoints);
    }

    #[test]
    fn keypoints_stay_in_segment_under_jitter() {
        let t = HandTemplate::default();
        let bounds = JitterBounds::default();
        for session in 0..6 {
            let j = session_jitter(77, session, &bounds);
            assert!(bounds.contains(&j));
            let s = render_hand(&sample_identity(77), 0, session, &j, &t);
            for (i, &(x, y)) in s.keypoints.points().iter().enumerate() {
                assert!(
                    s.seg.get(x.floor() as usize, y.floor() as usize),
                    "keypoint {i} outside segment in session {session}"
                );
            }
            s.keypoints.check_bounds(t.width, t.height).unwrap();
            assert!(PALM_INDICES.len() == 7);
        }
    }

    #[test]
    fn gain_scales_palm_interior() {
        let t = HandTemplate {
            noise_sigma: 1e-12,
            ..HandTemplate::default()
        };
        let id = sample_identity(5);
        let a = render_hand(&id, 0, 0, &Jitter::default(), &t);
        let b = render_hand(
            &id,
            0,
            0,
            &Jitter {
                gain: 1.1,
                ..Jitter::default()
            },
            &t,
        );
        let (cx, cy) = (160, 185);
        for dy in -10..10 {
            for dx in -10..10 {
                let (x, y) = ((cx + dx) as usize, (cy + dy) as usize);
                let (va, vb) = (a.image.get(x, y), b.image.get(x, y));
                if vb < 1.0 && va > 0.05 {
                    assert!((vb / va - 1.1).abs() < 1e-6, "ratio {}", vb / va);
                }
            }
        }
    }
}
