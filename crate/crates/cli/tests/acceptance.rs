//! Acceptance criteria on the synthetic benchmark (50 identities x 4
//! sessions, seed 7). Each criterion is one test and writes one
//! `criterion N ...: PASS|FAIL` line to stderr.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use palmdeid::deid::*;
use palmdeid::eval::{evaluate, DeidImage, EvalOptions, EvalOutcome, OriginalSet};
use palmdeid::matcher::{Matcher, MatcherParams, ScorePools};
use palmdeid::metrics::{band, decidability, dir, ssim, DirBand, Population, ScoreSet};
use palmdeid::synth::{generate_samples, HandTemplate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITIES: u32 = 50;
const SESSIONS: u32 = 4;
const DATASET_SEED: u64 = 7;

const ORACLE_TOL: f64 = 1e-9;
const EQ_TOL: f64 = 1e-12;
const TRIALS: usize = 1000;
const SAMPLER_SEEDS: u64 = 1000;
const MEAN_SE: f64 = 4.0;
const STD_REL: f64 = 0.10;
const MASKING_DIR_MIN: f64 = 95.0;
const MASKING_ACC_MAX: f64 = 10.0;
const ALPHA_GAP_TOL: f64 = 2.0;
const DEFAULT_DIR_MIN: f64 = 80.0;
const DEFAULT_ACC_MAX: f64 = 20.0;
const DIVERSITY_REL: f64 = 0.20;
const DIVERSITY_GENUINE_FACTOR: f64 = 3.0;
const SSIM_MIN: f64 = 0.90;
const PSNR_MIN: f64 = 25.0;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} ({name}): {verdict} {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

struct Bench {
    matcher: Matcher,
    originals: OriginalSet,
    pools: ScorePools,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let samples = generate_samples(IDENTITIES, SESSIONS, DATASET_SEED, &HandTemplate::default()).unwrap();
        let matcher = Matcher::new(MatcherParams::default()).unwrap();
        let originals = OriginalSet::new(&matcher, samples).unwrap();
        let pools = originals.pools(&matcher).unwrap();
        Bench {
            matcher,
            originals,
            pools,
        }
    })
}

struct Run {
    images: Vec<DeidImage>,
    outcome: EvalOutcome,
}

fn run(cfg: &DeidConfig, quality: bool) -> Run {
    let b = bench();
    let mut images = Vec::new();
    for (source, s) in b.originals.samples.iter().enumerate() {
        let out = deidentify(s, cfg).unwrap();
        for (seed_index, image) in out.images.into_iter().enumerate() {
            images.push(DeidImage {
                source,
                seed_index,
                image,
            });
        }
    }
    let options = EvalOptions {
        trim_fraction: None,
        quality,
    };
    let outcome = evaluate(&b.matcher, &b.originals, &b.pools, &images, &options).unwrap();
    Run { images, outcome }
}

macro_rules! cached_run {
    ($name:ident, $cfg:expr, $quality:expr) => {
        fn $name() -> &'static Run {
            static CELL: OnceLock<Run> = OnceLock::new();
            CELL.get_or_init(|| run(&$cfg, $quality))
        }
    };
}

cached_run!(defaults, DeidConfig::default(), true);
cached_run!(alpha_02, DeidConfig { alpha: 0.2, ..Default::default() }, false);
cached_run!(alpha_03, DeidConfig { alpha: 0.3, ..Default::default() }, false);
cached_run!(masking, DeidConfig { baseline: Some(Baseline::Masking), ..Default::default() }, false);
cached_run!(
    blurring,
    DeidConfig {
        baseline: Some(Baseline::Blurring { sigma: 8.0 }),
        ..Default::default()
    },
    false
);
cached_run!(
    pixelating,
    DeidConfig {
        baseline: Some(Baseline::Pixelating {
            block: baseline::DEFAULT_PIXEL_BLOCK
        }),
        ..Default::default()
    },
    false
);
cached_run!(ten_seeds, DeidConfig { seeds: (0..10).collect(), ..Default::default() }, false);

fn two_point(p: Population, mu: f64, sigma: f64) -> ScoreSet {
    ScoreSet::new(p, vec![mu - sigma, mu + sigma])
}

#[test]
fn criterion_01_metric_oracles() {
    let g = two_point(Population::Genuine, 0.2, 0.05);
    let i = two_point(Population::Imposter, 0.5, 0.08);
    let d = two_point(Population::Deid, 0.35, 0.05);
    let worked = dir(&g, &i, &d).unwrap();
    let worked_expect = 50.0 * (0.0089f64 / 0.005).sqrt();
    let ideal = dir(&g, &i, &ScoreSet::new(Population::Deid, i.samples().to_vec())).unwrap();
    let fail = dir(&g, &i, &ScoreSet::new(Population::Deid, g.samples().to_vec())).unwrap();
    let unit = decidability(
        &two_point(Population::Genuine, 0.0, 1.0),
        &two_point(Population::Imposter, 1.0, 1.0),
    )
    .unwrap();
    let d_gi = decidability(&g, &i).unwrap();
    let d_gi_expect = 0.3 / ((0.05f64.powi(2) + 0.08f64.powi(2)) / 2.0).sqrt();
    let errs = [
        (worked - worked_expect).abs(),
        (ideal - 100.0).abs(),
        fail.abs(),
        (unit - 1.0).abs(),
        (d_gi - d_gi_expect).abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    report(
        1,
        "metric oracles",
        worst <= ORACLE_TOL,
        format!("worked example {worked:.6}% vs {worked_expect:.6}%, max error {worst:.2e}"),
    );
}

#[test]
fn criterion_02_band_labels() {
    let cases = [(94.79, DirBand::High), (125.31, DirBand::Over), (34.94, DirBand::Limited)];
    let got: Vec<DirBand> = cases.iter().map(|&(v, _)| band(v)).collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| want == g);
    report(2, "band labels", pass, format!("{got:?}"));
}

#[test]
fn criterion_03_fusion_and_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut endpoints_exact = true;
    for _ in 0..TRIALS {
        let n = rng.random_range(1..=3);
        let gs: Vec<Embedding> = (0..n)
            .map(|_| {
                Embedding::new(
                    (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    EmbeddingSource::Small,
                )
            })
            .collect();
        let fused = fuse_embeddings(&gs).unwrap();
        for k in 0..EMBEDDING_DIM {
            let mean = gs.iter().map(|g| g.values[k]).sum::<f64>() / n as f64;
            worst = worst.max((fused.values[k] - mean).abs());
        }
        let latent = |rng: &mut ChaCha8Rng, role| {
            LatentMap::new(1, 16, 16, (0..256).map(|_| rng.random_range(-0.5..0.5)).collect(), role)
        };
        let z_o = latent(&mut rng, LatentRole::Original);
        let z_bg = latent(&mut rng, LatentRole::Background);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let z_in = interpolate_prior(&z_o, &z_bg, alpha).unwrap();
        for k in 0..256 {
            worst = worst.max((z_in.values[k] - (alpha * z_o.values[k] + (1.0 - alpha) * z_bg.values[k])).abs());
        }
        let zero = interpolate_prior(&z_o, &z_bg, 0.0).unwrap();
        let one = interpolate_prior(&z_o, &z_bg, 1.0).unwrap();
        endpoints_exact &= zero.values.iter().zip(&z_bg.values).all(|(a, b)| a.to_bits() == b.to_bits());
        endpoints_exact &= one.values.iter().zip(&z_o.values).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    report(
        3,
        "fusion and interpolation",
        worst <= EQ_TOL && endpoints_exact,
        format!("{TRIALS} trials, max error {worst:.2e}, endpoints bit-exact {endpoints_exact}"),
    );
}

#[test]
fn criterion_04_sampler_moments() {
    let model = AnalyticScoreModel::new(ScoreModelParams::default(), EMBEDDING_DIM, (1, 16, 16)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Embedding::new(
        (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
        EmbeddingSource::Fused,
    );
    let schedule = NoiseSchedule::new(50, 1e-4, 0.02).unwrap();
    let tau = model.params().tau;
    let z_in = LatentMap::new(1, 16, 16, (0..256).map(|_| rng.random_range(-0.5..0.5)).collect(), LatentRole::Interpolated);
    let score = model.condition(&g, Some(&z_in)).unwrap();
    let mu = model.mean(&g, Some(&z_in)).unwrap();
    let all = vec![true; 256];
    let (mut sum, mut sq) = (vec![0.0; 256], vec![0.0; 256]);
    for seed in 0..SAMPLER_SEEDS {
        let z = sample_inpaint(&z_in, &all, &score, &schedule, seed).unwrap();
        for k in 0..256 {
            sum[k] += z.values[k];
            sq[k] += z.values[k] * z.values[k];
        }
    }
    let n = SAMPLER_SEEDS as f64;
    let mut worst_se: f64 = 0.0;
    let mut var = 0.0;
    for k in 0..256 {
        let m = sum[k] / n;
        let v = sq[k] / n - m * m;
        worst_se = worst_se.max((m - mu.values[k]).abs() / (tau / n.sqrt()));
        var += v / 256.0;
    }
    let std = var.sqrt();
    let none = sample_inpaint(&z_in, &vec![false; 256], &score, &schedule, 0).unwrap();
    let identity = none.values == z_in.values;
    report(
        4,
        "sampler correctness",
        worst_se < MEAN_SE && (std - tau).abs() < STD_REL * tau && identity,
        format!("max mean error {worst_se:.2} SE, std {std:.5} vs {tau}, all-false identity {identity}"),
    );
}

#[test]
fn criterion_05_unmasked_preservation() {
    let b = bench();
    let mut checked = 0usize;
    let mut violations = 0usize;
    for r in [defaults(), ten_seeds()] {
        for d in &r.images {
            let s = &b.originals.samples[d.source];
            for y in 0..s.image.height() {
                for x in 0..s.image.width() {
                    if !s.seg.get(x, y) {
                        checked += 1;
                        if d.image.get(x, y).to_bits() != s.image.get(x, y).to_bits() {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    report(
        5,
        "unmasked preservation",
        violations == 0 && checked > 0,
        format!("{checked} background pixels over 11 seeds, {violations} differ"),
    );
}

#[test]
fn criterion_06_baselines() {
    let (m, bl, px) = (&masking().outcome.report, &blurring().outcome.report, &pixelating().outcome.report);
    let acc = m.accuracy_percent.unwrap();
    let pass = m.dir_percent >= MASKING_DIR_MIN
        && bl.dir_percent < m.dir_percent
        && px.dir_percent < m.dir_percent
        && acc < MASKING_ACC_MAX;
    report(
        6,
        "baseline trend",
        pass,
        format!(
            "DIR masking {:.2}% (acc {acc:.1}%), blurring {:.2}%, pixelating {:.2}%",
            m.dir_percent, bl.dir_percent, px.dir_percent
        ),
    );
}

#[test]
fn criterion_07_alpha_sweep() {
    let d = [
        defaults().outcome.report.dir_percent,
        alpha_02().outcome.report.dir_percent,
        alpha_03().outcome.report.dir_percent,
    ];
    let pass = d[0] >= d[1] - ALPHA_GAP_TOL && d[1] >= d[2] - ALPHA_GAP_TOL;
    report(
        7,
        "alpha sweep trend",
        pass,
        format!("DIR {:.2}% / {:.2}% / {:.2}% at alpha 0.1 / 0.2 / 0.3", d[0], d[1], d[2]),
    );
}

#[test]
fn criterion_08_default_effectiveness() {
    let r = &defaults().outcome.report;
    let acc = r.accuracy_percent.unwrap();
    report(
        8,
        "default effectiveness",
        r.dir_percent > DEFAULT_DIR_MIN && r.band == DirBand::High && acc < DEFAULT_ACC_MAX,
        format!("DIR {:.2}% ({:?}), rank-1 {acc:.1}%, RR {:.1}%", r.dir_percent, r.band, r.rr_percent),
    );
}

#[test]
fn criterion_09_diversity() {
    let b = bench();
    let div = ten_seeds().outcome.diversity.as_ref().expect("ten seeds per source");
    let (dm, im, gm) = (div.mean(), b.pools.imposter.mean(), b.pools.genuine.mean());
    let pass = (dm - im).abs() <= DIVERSITY_REL * im && dm > DIVERSITY_GENUINE_FACTOR * gm;
    report(
        9,
        "diversity",
        pass,
        format!("diversity mean {dm:.4} ({} pairs), imposter {im:.4}, genuine {gm:.4}", div.len()),
    );
}

#[test]
fn criterion_10_quality_floor() {
    let b = bench();
    let r = defaults();
    let q = r.outcome.quality.as_ref().unwrap();
    let self_err = b
        .originals
        .samples
        .iter()
        .take(10)
        .map(|s| (ssim(&s.image, &s.image).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    let pass = q.ssim.mean >= SSIM_MIN && q.psnr.mean >= PSNR_MIN && self_err <= EQ_TOL;
    report(
        10,
        "quality floor",
        pass,
        format!(
            "SSIM {:.4}, MS-SSIM {:.4}, PSNR {:.2} dB, |ssim(x,x)-1| {self_err:.1e}",
            q.ssim.mean, q.ms_ssim.mean, q.psnr.mean
        ),
    );
}

fn palmdeid(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_palmdeid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn end_to_end(root: &Path) {
    std::fs::create_dir_all(root).unwrap();
    std::fs::write(root.join("config.json"), r#"{"deid": {"seeds": [0, 1]}}"#).unwrap();
    let (ids, sessions, seed) = (IDENTITIES.to_string(), SESSIONS.to_string(), DATASET_SEED.to_string());
    palmdeid(&["synth", "--identities", &ids, "--sessions", &sessions, "--seed", &seed, "--out", "data"], root);
    palmdeid(
        &["deid", "--config", "config.json", "--manifest", "data/manifest.json", "--out", "deid"],
        root,
    );
    palmdeid(
        &[
            "eval", "--manifest", "data/manifest.json", "--deid-manifest", "deid/manifest.json", "--out", "eval",
            "--config", "config.json",
        ],
        root,
    );
    palmdeid(&["report", "--input", "eval", "--out", "eval"], root);
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_11_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    end_to_end(&a);
    end_to_end(&b);
    let (ta, tb) = (tree(&a), tree(&b));
    let names = |t: &[(String, Vec<u8>)]| t.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    let same_names = names(&ta) == names(&tb);
    let differing: Vec<&String> = ta.iter().zip(&tb).filter(|(x, y)| x.1 != y.1).map(|(x, _)| &x.0).collect();
    let required = ["data/manifest.json", "deid/manifest.json", "deid/runs.json", "eval/run_000/report.json"];
    let present = required.iter().all(|r| ta.iter().any(|(n, _)| n == r));
    report(
        11,
        "determinism",
        same_names && differing.is_empty() && present,
        format!("{} files compared, {} differ {:?}", ta.len(), differing.len(), differing.iter().take(3).collect::<Vec<_>>()),
    );
}
