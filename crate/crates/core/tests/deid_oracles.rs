use palmdeid::deid::*;
use palmdeid::geometry::{extract_roi_set, PalmGeometry};
use palmdeid::synth::{dataset_sample, HandTemplate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), EmbeddingSource::Small)
}

fn random_latent(rng: &mut ChaCha8Rng, role: LatentRole) -> LatentMap {
    LatentMap::new(1, 16, 16, (0..256).map(|_| rng.random_range(-0.5..0.5)).collect(), role)
}

#[test]
fn fusion_equals_mean_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..=5);
        let gs: Vec<Embedding> = (0..n).map(|_| random_embedding(&mut rng, EMBEDDING_DIM)).collect();
        let fused = fuse_embeddings(&gs).unwrap();
        assert_eq!(fused.source, EmbeddingSource::Fused);
        for k in 0..EMBEDDING_DIM {
            let mut acc = 0.0;
            for g in &gs {
                acc += g.values[k];
            }
            assert!((fused.values[k] - acc / n as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn interpolation_equals_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..1000 {
        let z_o = random_latent(&mut rng, LatentRole::Original);
        let z_bg = random_latent(&mut rng, LatentRole::Background);
        let alpha = if trial == 0 { 0.1 } else { rng.random_range(0.0..=1.0) };
        let z_in = interpolate_prior(&z_o, &z_bg, alpha).unwrap();
        assert_eq!(z_in.role, LatentRole::Interpolated);
        for k in 0..256 {
            let expect = alpha * z_o.values[k] + (1.0 - alpha) * z_bg.values[k];
            assert!((z_in.values[k] - expect).abs() < 1e-12);
        }
        let zero = interpolate_prior(&z_o, &z_bg, 0.0).unwrap();
        let one = interpolate_prior(&z_o, &z_bg, 1.0).unwrap();
        for k in 0..256 {
            assert_eq!(zero.values[k].to_bits(), z_bg.values[k].to_bits());
            assert_eq!(one.values[k].to_bits(), z_o.values[k].to_bits());
        }
    }
}

#[test]
fn codec_is_idempotent_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let img = palmdeid::raster::Raster::from_fn(128, 128, |_, _| rng.random_range(0.0..1.0));
        let z = encode_latent(&img);
        let again = encode_latent(&decode_latent(&z));
        for (a, b) in again.values.iter().zip(&z.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

fn sampler_fixture() -> (AnalyticScoreModel, Embedding, NoiseSchedule) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = AnalyticScoreModel::new(ScoreModelParams::default(), EMBEDDING_DIM, (1, 16, 16)).unwrap();
    let g = random_embedding(&mut rng, EMBEDDING_DIM);
    (model, g, NoiseSchedule::new(50, 1e-4, 0.02).unwrap())
}

#[test]
fn sampler_moments_match_gaussian_target() {
    let (model, g, schedule) = sampler_fixture();
    let tau = model.params().tau;
    let score = model.condition(&g, None).unwrap();
    let mu = model.mean(&g, None).unwrap();
    let z_in = LatentMap::zeros(1, 16, 16, LatentRole::Interpolated);
    let mask = vec![true; 256];
    let n = 1000;
    let mut sum = vec![0.0; 256];
    let mut sq = vec![0.0; 256];
    for seed in 0..n {
        let z = sample_inpaint(&z_in, &mask, &score, &schedule, seed).unwrap();
        for k in 0..256 {
            sum[k] += z.values[k];
            sq[k] += z.values[k] * z.values[k];
        }
    }
    let se = tau / (n as f64).sqrt();
    let mut pooled_var = 0.0;
    for k in 0..256 {
        let m = sum[k] / n as f64;
        assert!((m - mu.values[k]).abs() < 4.0 * se, "cell {k}: {m} vs {}", mu.values[k]);
        pooled_var += sq[k] / n as f64 - m * m;
    }
    let std = (pooled_var / 256.0).sqrt();
    assert!((std - tau).abs() < 0.1 * tau, "std {std} vs {tau}");
}

#[test]
fn sampler_keeps_unmasked_cells_and_varies_with_seed() {
    let (model, g, schedule) = sampler_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z_in = random_latent(&mut rng, LatentRole::Interpolated);
    let score = model.condition(&g, Some(&z_in)).unwrap();
    let none = sample_inpaint(&z_in, &[false; 256], &score, &schedule, 9).unwrap();
    assert_eq!(none.values, z_in.values);
    let mask: Vec<bool> = (0..256).map(|k| k % 3 == 0).collect();
    let a = sample_inpaint(&z_in, &mask, &score, &schedule, 1).unwrap();
    let b = sample_inpaint(&z_in, &mask, &score, &schedule, 2).unwrap();
    let mut max_diff: f64 = 0.0;
    for k in 0..256 {
        if mask[k] {
            max_diff = max_diff.max((a.values[k] - b.values[k]).abs());
        } else {
            assert_eq!(a.values[k].to_bits(), z_in.values[k].to_bits());
        }
    }
    assert!(max_diff > 0.1 * model.params().tau);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn masked_mean_tracks_the_conditioning() {
    let params = ScoreModelParams {
        weight_scale: 0.1,
        ..Default::default()
    };
    let model = AnalyticScoreModel::new(params, EMBEDDING_DIM, (1, 16, 16)).unwrap();
    let schedule = NoiseSchedule::new(50, 1e-4, 0.02).unwrap();
    let z_in = LatentMap::zeros(1, 16, 16, LatentRole::Interpolated);
    let mask: Vec<bool> = (0..256).map(|k| (4..12).contains(&(k % 16)) && (4..12).contains(&(k / 16))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut target, mut observed) = (Vec::new(), Vec::new());
    for _ in 0..20 {
        let g = random_embedding(&mut rng, EMBEDDING_DIM);
        let mu = model.mean(&g, Some(&z_in)).unwrap();
        let score = model.condition(&g, Some(&z_in)).unwrap();
        let mut acc = vec![0.0; 256];
        for seed in 0..200 {
            let z = sample_inpaint(&z_in, &mask, &score, &schedule, seed).unwrap();
            for k in 0..256 {
                acc[k] += z.values[k] / 200.0;
            }
        }
        for k in (0..256).filter(|&k| mask[k]) {
            target.push(mu.values[k]);
            observed.push(acc[k]);
        }
    }
    let r = pearson(&target, &observed);
    assert!(r > 0.99, "correlation {r}");
}

#[test]
fn scale_specific_embeddings_differ() {
    let template = HandTemplate::default();
    for id in 0..10 {
        let s = dataset_sample(7, id, 0, &template);
        let rois = extract_roi_set(&s.image, &s.keypoints).unwrap();
        let small = encode_semantic(&rois.small_image, EmbeddingSource::Small);
        let medium = encode_semantic(&rois.medium_image, EmbeddingSource::Medium);
        assert!(small.cosine(&medium) < 0.99);
    }
}

fn sample() -> palmdeid::synth::HandSample {
    dataset_sample(7, 3, 1, &HandTemplate::default())
}

#[test]
fn masking_baseline_zeroes_the_palm_and_skips_sampling() {
    let s = sample();
    let cfg = DeidConfig {
        baseline: Some(Baseline::Masking),
        seeds: vec![0, 1],
        ..Default::default()
    };
    let out = deidentify(&s, &cfg).unwrap();
    assert_eq!(out.images.len(), 2);
    assert_eq!(out.images[0], out.images[1]);
    let geometry = PalmGeometry::new(&s.keypoints, &s.seg).unwrap();
    for y in 0..s.image.height() {
        for x in 0..s.image.width() {
            let v = out.images[0].get(x, y);
            if geometry.mask.raster.get(x, y) {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v.to_bits(), s.image.get(x, y).to_bits());
            }
        }
    }
}

#[test]
fn seeds_give_distinct_images_with_identical_background() {
    let s = sample();
    let cfg = DeidConfig {
        seeds: (0..10).collect(),
        ..Default::default()
    };
    let out = deidentify(&s, &cfg).unwrap();
    assert_eq!(out.images.len(), 10);
    assert_eq!(out.rois.len(), 10);
    for (a, img) in out.images.iter().enumerate() {
        for other in &out.images[a + 1..] {
            assert_ne!(img, other);
        }
        for y in 0..s.image.height() {
            for x in 0..s.image.width() {
                if !s.seg.get(x, y) {
                    assert_eq!(img.get(x, y).to_bits(), s.image.get(x, y).to_bits());
                }
            }
        }
    }
    let again = deidentify(&s, &cfg).unwrap();
    assert_eq!(again.images, out.images);
    assert_eq!(again.provenance, out.provenance);
    assert_eq!(out.provenance.input_hash, s.image.content_hash());
}

#[test]
fn full_prior_reconstructs_the_smoothed_roi() {
    let s = sample();
    let cfg = DeidConfig {
        alpha: 1.0,
        steps: 1000,
        ..Default::default()
    };
    let out = deidentify(&s, &cfg).unwrap();
    let rois = extract_roi_set(&s.image, &s.keypoints).unwrap();
    let smoothed = decode_latent(&encode_latent(&rois.full_image));
    let roi = &out.rois[0];
    let mse = roi
        .as_slice()
        .iter()
        .zip(smoothed.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / roi.as_slice().len() as f64;
    assert!(mse.sqrt() < 0.05, "rms {}", mse.sqrt());
}
