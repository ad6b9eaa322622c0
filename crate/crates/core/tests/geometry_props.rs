use palmdeid::geometry::*;
use palmdeid::raster::{Mask, Raster};
use palmdeid::synth::{dataset_sample, HandTemplate};
use proptest::prelude::*;

fn keypoints_from(palm: &[(f64, f64)]) -> HandKeypoints {
    let mut pts = vec![(50.0, 50.0); NUM_KEYPOINTS];
    for (slot, p) in PALM_INDICES.iter().zip(palm) {
        pts[*slot] = *p;
    }
    HandKeypoints::new(pts).unwrap()
}

fn palm_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((5.0f64..195.0, 5.0f64..195.0), 7)
}

proptest! {
    #[test]
    fn hull_contains_all_palm_points(pts in palm_points()) {
        let kp = keypoints_from(&pts);
        if let Ok(hull) = palm_polygon(&kp) {
            prop_assert!(polygon_area(&hull) > 0.0);
            for p in &pts {
                prop_assert!(point_in_convex_polygon(&hull, *p, 1e-6));
            }
        }
    }

    #[test]
    fn roi_squares_nest_with_rounded_ratios(pts in palm_points()) {
        let kp = keypoints_from(&pts);
        let Ok(full) = full_roi_square(&kp) else { return Ok(()); };
        let medium = scaled_roi(&full, 0.5);
        let small = scaled_roi(&full, 0.1);
        prop_assert_eq!(medium.center, full.center);
        prop_assert_eq!(small.center, full.center);
        prop_assert!(small.side <= medium.side && medium.side <= full.side);
        let expect_m = ((0.5 * full.side as f64 + 0.5).floor() as u32).max(MIN_ROI_SIDE);
        let expect_s = ((0.1 * full.side as f64 + 0.5).floor() as u32).max(MIN_ROI_SIDE);
        prop_assert!(medium.side.abs_diff(expect_m) <= 1);
        prop_assert!(small.side.abs_diff(expect_s) <= 1);
        for (inner, outer) in [(&small, &medium), (&medium, &full)] {
            prop_assert!(inner.left() >= outer.left() && inner.top() >= outer.top());
            prop_assert!(inner.left() + inner.side as f64 <= outer.left() + outer.side as f64);
            prop_assert!(inner.top() + inner.side as f64 <= outer.top() + outer.side as f64);
        }
    }

    #[test]
    fn mask_is_inside_segment(pts in palm_points(), cx in 40usize..160, cy in 40usize..160, r in 10usize..90) {
        let kp = keypoints_from(&pts);
        let Ok(hull) = palm_polygon(&kp) else { return Ok(()); };
        let seg = Mask::from_fn(200, 200, |x, y| {
            let (dx, dy) = (x as isize - cx as isize, y as isize - cy as isize);
            ((dx * dx + dy * dy) as usize) < r * r
        });
        if let Ok(mask) = build_mask(&hull, &seg) {
            for y in 0..200 {
                for x in 0..200 {
                    prop_assert!(!mask.raster.get(x, y) || seg.get(x, y));
                }
            }
            prop_assert!(mask.coverage > 0.0 && mask.coverage < 1.0);
        }
    }

    #[test]
    fn composite_keeps_background_bit_exact(seed in any::<u64>(), density in 0.0f64..1.0) {
        let mut state = seed;
        let mut next = move || {
            state = palmdeid::seed::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let original = Raster::from_fn(24, 20, |_, _| next());
        let generated = Raster::from_fn(24, 20, |_, _| next());
        let seg = Mask::from_fn(24, 20, |_, _| next() < density);
        let out = composite_back(&original, &generated, &seg).unwrap();
        for y in 0..20 {
            for x in 0..24 {
                let expect = if seg.get(x, y) { generated.get(x, y) } else { original.get(x, y) };
                prop_assert_eq!(out.get(x, y).to_bits(), expect.to_bits());
            }
        }
    }
}

#[test]
fn synthetic_hand_geometry_ranges() {
    let template = HandTemplate::default();
    for id in 0..10 {
        let s = dataset_sample(7, id, id % 4, &template);
        let hull = palm_polygon(&s.keypoints).unwrap();
        let full = full_roi_square(&s.keypoints).unwrap();
        let ratio = polygon_area(&hull) / (full.side as f64).powi(2);
        assert!((0.15..=0.6).contains(&ratio), "hull ratio {ratio}");
        let mask = build_mask(&hull, &s.seg).unwrap();
        assert!((0.05..=0.5).contains(&mask.coverage), "coverage {}", mask.coverage);
    }
}

#[test]
fn aligned_roi_is_a_bit_exact_crop() {
    let img = Raster::from_fn(300, 260, |x, y| ((x * 31 + y * 17) % 256) as f64 / 255.0);
    let sq = RoiSquare {
        center: (150.0, 130.0),
        side: ROI_SIZE as u32,
        scale: ScaleTag::Full,
    };
    let roi = extract_roi_image(&img, &sq).unwrap();
    for v in 0..ROI_SIZE {
        for u in 0..ROI_SIZE {
            assert_eq!(roi.get(u, v).to_bits(), img.get(86 + u, 66 + v).to_bits());
        }
    }
}
