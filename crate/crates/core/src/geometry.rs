//! Palm geometry: keypoint-driven palm polygon, inpainting mask, the three
//! exemplar ROI squares, and compositing of generated hands back into the
//! source frame.
//!
//! Coordinates are continuous image coordinates in pixels (x right, y down);
//! pixel `(i, j)` is centered at `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

pub const NUM_KEYPOINTS: usize = 21;

/// Wrist, thumb CMC/MCP and the four finger MCP joints.
pub const PALM_INDICES: [usize; 7] = [0, 1, 2, 5, 9, 13, 17];

/// Side of the resampled ROI images.
pub const ROI_SIZE: usize = 128;

pub const MIN_ROI_SIDE: u32 = 4;

pub type Point = (f64, f64);

/// The 21 hand keypoints in the standard skeleton order (0 wrist, 1-4 thumb,
/// 5-8 index, 9-12 middle, 13-16 ring, 17-20 little finger).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct HandKeypoints {
    points: Vec<Point>,
}

impl HandKeypoints {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != NUM_KEYPOINTS {
            return Err(Error::InvalidKeypoints(format!(
                "expected {NUM_KEYPOINTS} points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.0.is_finite() || !p.1.is_finite())
        {
            return Err(Error::InvalidKeypoints(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Point {
        self.points[index]
    }

    pub fn palm_points(&self) -> [Point; 7] {
        PALM_INDICES.map(|i| self.points[i])
    }

    /// Checks that every palm keypoint lies inside a `width × height` image.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for i in PALM_INDICES {
            let (x, y) = self.points[i];
            if x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 {
                return Err(Error::InvalidKeypoints(format!(
                    "palm keypoint {i} at ({x:.1}, {y:.1}) lies outside the {width}x{height} image"
                )));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for HandKeypoints {
    type Error = Error;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(v.into_iter().map(|[x, y]| (x, y)).collect())
    }
}

impl From<HandKeypoints> for Vec<[f64; 2]> {
    fn from(k: HandKeypoints) -> Self {
        k.points.into_iter().map(|(x, y)| [x, y]).collect()
    }
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by Andrew's monotone chain. Output has positive shoelace area
/// (counter-clockwise in x/y numeric coordinates) and no collinear vertices.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice / 2.0
}

/// Inside-or-on test for a convex polygon with positive orientation.
pub fn point_in_convex_polygon(poly: &[Point], p: Point, tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= -tol)
}

/// Convex hull of the seven palm keypoints.
pub fn palm_polygon(kp: &HandKeypoints) -> Result<Vec<Point>> {
    let hull = convex_hull(&kp.palm_points());
    if hull.len() < 3 || polygon_area(&hull) <= 0.0 {
        return Err(Error::DegenerateKeypoints);
    }
    Ok(hull)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleTag {
    Full,
    Medium,
    Small,
}

impl ScaleTag {
    pub fn factor(self) -> f64 {
        match self {
            ScaleTag::Full => 1.0,
            ScaleTag::Medium => 0.5,
            ScaleTag::Small => 0.1,
        }
    }

    fn for_factor(factor: f64) -> Self {
        if factor >= 0.75 {
            ScaleTag::Full
        } else if factor >= 0.3 {
            ScaleTag::Medium
        } else {
            ScaleTag::Small
        }
    }
}

/// Axis-aligned square region of the source image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSquare {
    pub center: Point,
    pub side: u32,
    pub scale: ScaleTag,
}

impl RoiSquare {
    pub fn left(&self) -> f64 {
        self.center.0 - self.side as f64 / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.1 - self.side as f64 / 2.0
    }

    /// Continuous point containment, half-open on the right/bottom edges.
    pub fn contains(&self, p: Point) -> bool {
        let (l, t, s) = (self.left(), self.top(), self.side as f64);
        p.0 >= l && p.0 < l + s && p.1 >= t && p.1 < t + s
    }

    /// Maps a continuous image point into ROI pixel-index coordinates of a
    /// `size × size` resampling of this square.
    pub fn image_to_roi(&self, p: Point, size: usize) -> Point {
        let k = size as f64 / self.side as f64;
        ((p.0 - self.left()) * k - 0.5, (p.1 - self.top()) * k - 0.5)
    }

    /// Source image index coordinates for ROI pixel `(u, v)`.
    pub fn roi_to_image_index(&self, u: usize, v: usize, size: usize) -> Point {
        let k = self.side as f64 / size as f64;
        (
            self.left() + (u as f64 + 0.5) * k - 0.5,
            self.top() + (v as f64 + 0.5) * k - 0.5,
        )
    }

    fn intersects(&self, width: usize, height: usize) -> bool {
        let (l, t, s) = (self.left(), self.top(), self.side as f64);
        l < width as f64 && l + s > 0.0 && t < height as f64 && t + s > 0.0
    }
}

#[inline]
fn round_half_up(v: f64) -> u32 {
    (v + 0.5).floor().max(0.0) as u32
}

/// Minimum axis-aligned bounding square of the seven palm keypoints.
pub fn full_roi_square(kp: &HandKeypoints) -> Result<RoiSquare> {
    let pts = kp.palm_points();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (x, y) in pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let raw = (x1 - x0).max(y1 - y0);
    let side = round_half_up(raw);
    if side == 0 {
        return Err(Error::DegenerateKeypoints);
    }
    Ok(RoiSquare {
        center: ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
        side: side.max(MIN_ROI_SIDE),
        scale: ScaleTag::Full,
    })
}

/// Concentric square with `side = round(factor × full.side)`, floored at
/// four pixels. `factor` is clamped into `(0, 1]`.
pub fn scaled_roi(full: &RoiSquare, factor: f64) -> RoiSquare {
    debug_assert!(factor > 0.0 && factor <= 1.0, "factor {factor} outside (0,1]");
    let factor = factor.clamp(f64::MIN_POSITIVE, 1.0);
    RoiSquare {
        center: full.center,
        side: round_half_up(factor * full.side as f64).max(MIN_ROI_SIDE),
        scale: ScaleTag::for_factor(factor),
    }
}

/// Crop `square` from `image` (edge-replicating outside pixels) and resample
/// bilinearly to `ROI_SIZE × ROI_SIZE`.
pub fn extract_roi_image(image: &Raster, square: &RoiSquare) -> Result<Raster> {
    extract_roi_image_sized(image, square, ROI_SIZE)
}

pub fn extract_roi_image_sized(image: &Raster, square: &RoiSquare, size: usize) -> Result<Raster> {
    if !square.intersects(image.width(), image.height()) {
        return Err(Error::EmptyIntersection);
    }
    let mut out = Raster::from_fn(size, size, |u, v| {
        let (sx, sy) = square.roi_to_image_index(u, v, size);
        image.sample_bilinear(sx, sy)
    });
    out.clamp_unit();
    Ok(out)
}

/// Nearest-neighbour resampling of a mask into ROI space; outside pixels are
/// unset.
pub fn extract_roi_mask(mask: &Mask, square: &RoiSquare, size: usize) -> Mask {
    Mask::from_fn(size, size, |u, v| {
        let (sx, sy) = square.roi_to_image_index(u, v, size);
        mask.get_or_false(sx.round() as isize, sy.round() as isize)
    })
}

/// Pixels whose centers lie inside or on a convex polygon.
pub fn rasterize_convex_polygon(poly: &[Point], width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    if poly.len() < 3 {
        return mask;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let xs = (x0 - 0.5).floor().max(0.0) as usize;
    let ys = (y0 - 0.5).floor().max(0.0) as usize;
    let xe = ((x1 - 0.5).ceil().max(-1.0) as isize + 1).min(width as isize);
    let ye = ((y1 - 0.5).ceil().max(-1.0) as isize + 1).min(height as isize);
    for y in ys..ye.max(0) as usize {
        for x in xs..xe.max(0) as usize {
            if point_in_convex_polygon(poly, (x as f64 + 0.5, y as f64 + 0.5), 1e-9) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Palm inpainting mask: polygon interior refined by the hand segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PalmMask {
    pub raster: Mask,
    pub coverage: f64,
}

pub fn build_mask(polygon: &[Point], seg: &Mask) -> Result<PalmMask> {
    if polygon.len() < 3 || polygon_area(polygon) <= 0.0 {
        return Err(Error::DegenerateKeypoints);
    }
    let poly = rasterize_convex_polygon(polygon, seg.width(), seg.height());
    let raster = poly.and(seg);
    let coverage = raster.coverage();
    if raster.count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(PalmMask { raster, coverage })
}

/// Generated pixels inside the hand segment, original pixels elsewhere.
pub fn composite_back(original: &Raster, generated: &Raster, seg: &Mask) -> Result<Raster> {
    for actual in [generated.dims(), seg.dims()] {
        if actual != original.dims() {
            return Err(Error::SizeMismatch {
                expected: original.dims(),
                actual,
            });
        }
    }
    let (w, h) = original.dims();
    Ok(Raster::from_fn(w, h, |x, y| {
        if seg.get(x, y) {
            generated.get(x, y)
        } else {
            original.get(x, y)
        }
    }))
}

/// The three exemplar squares (full, medium, small) with their resampled
/// images.
#[derive(Debug, Clone)]
pub struct RoiSet {
    pub full: RoiSquare,
    pub medium: RoiSquare,
    pub small: RoiSquare,
    pub full_image: Raster,
    pub medium_image: Raster,
    pub small_image: Raster,
}

impl RoiSet {
    pub fn image(&self, tag: ScaleTag) -> &Raster {
        match tag {
            ScaleTag::Full => &self.full_image,
            ScaleTag::Medium => &self.medium_image,
            ScaleTag::Small => &self.small_image,
        }
    }
}

pub fn extract_roi_set(image: &Raster, kp: &HandKeypoints) -> Result<RoiSet> {
    let full = full_roi_square(kp)?;
    let medium = scaled_roi(&full, ScaleTag::Medium.factor());
    let small = scaled_roi(&full, ScaleTag::Small.factor());
    Ok(RoiSet {
        full_image: extract_roi_image(image, &full)?,
        medium_image: extract_roi_image(image, &medium)?,
        small_image: extract_roi_image(image, &small)?,
        full,
        medium,
        small,
    })
}

/// Everything the pipeline derives from a hand's keypoints and segment.
#[derive(Debug, Clone)]
pub struct PalmGeometry {
    pub polygon: Vec<Point>,
    pub square: RoiSquare,
    pub mask: PalmMask,
}

impl PalmGeometry {
    pub fn new(kp: &HandKeypoints, seg: &Mask) -> Result<Self> {
        kp.check_bounds(seg.width(), seg.height())?;
        let polygon = palm_polygon(kp)?;
        let square = full_roi_square(kp)?;
        let mask = build_mask(&polygon, seg)?;
        Ok(Self {
            polygon,
            square,
            mask,
        })
    }

    /// The palm mask resampled into full-ROI space.
    pub fn roi_mask(&self) -> Mask {
        extract_roi_mask(&self.mask.raster, &self.square, ROI_SIZE)
    }
}
