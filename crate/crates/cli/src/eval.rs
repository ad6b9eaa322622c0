//! `eval`: per-sub-run DIR report, quality table, histograms and scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::info;
use palmdeid::deid::DeidConfig;
use palmdeid::eval::{evaluate, DeidImage, EvalOptions, EvalOutcome, MeanStd, OriginalSet, QualitySummary};
use palmdeid::io::{read_json, write_atomic, write_json};
use palmdeid::manifest::Manifest;
use palmdeid::matcher::{Matcher, ScorePools};
use palmdeid::metrics::export::{scores_csv, Histogram};
use palmdeid::metrics::quality::format_metric;
use palmdeid::metrics::{DirReport, ScoreSet};
use palmdeid::raster::Raster;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, RunConfig, SubRun, DEFAULT_TAG};
use crate::deid::{check_unique_ids, RUNS_FILE};
use crate::paths::{canonical, relative};
use crate::{CliError, CliResult, EvalArgs};

pub const REPORT_FILE: &str = "report.json";

/// Everything that determined a report; paths are relative to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub original_manifest: String,
    pub deid_manifest: String,
    /// Absent when the de-identified manifest has no `runs.json`.
    pub deid: Option<DeidConfig>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub originals: usize,
    pub deid_images: usize,
    pub genuine_pairs: usize,
    pub imposter_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub mean: f64,
    pub std: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: String,
    pub config: ResolvedConfig,
    pub counts: Counts,
    pub metrics: DirReport,
    pub diversity: Option<DiversitySummary>,
    pub quality: Option<QualitySummary>,
}

/// Loaded originals with their reference pools.
pub struct Reference {
    pub matcher: Matcher,
    pub originals: OriginalSet,
    pub pools: ScorePools,
    index: BTreeMap<(u32, u32), usize>,
}

impl Reference {
    pub fn load(manifest: &Manifest, config: &EvalConfig) -> CliResult<Self> {
        check_unique_ids(manifest)?;
        let matcher = Matcher::new(config.matcher.clone())?;
        let samples = (0..manifest.len())
            .into_par_iter()
            .map(|i| manifest.load_sample(i))
            .collect::<palmdeid::Result<Vec<_>>>()?;
        let originals = OriginalSet::new(&matcher, samples)?;
        let pools = originals.pools(&matcher)?;
        let index = manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.sample_id(), i))
            .collect();
        Ok(Self {
            matcher,
            originals,
            pools,
            index,
        })
    }

    pub fn source_of(&self, identity: u32, session: u32) -> Option<usize> {
        self.index.get(&(identity, session)).copied()
    }
}

/// Run tag with its (record index, source index) members.
type RunGroup = (String, Vec<(usize, usize)>);

/// De-identified records grouped by run tag, in order of first appearance.
fn group_runs(deid: &Manifest, reference: &Reference) -> CliResult<Vec<RunGroup>> {
    let mut runs: Vec<RunGroup> = Vec::new();
    for (k, r) in deid.records.iter().enumerate() {
        let source = reference.source_of(r.identity, r.session).ok_or_else(|| {
            CliError::Usage(format!(
                "{} (identity {} session {}) has no original",
                r.image_path, r.identity, r.session
            ))
        })?;
        let tag = r.run.clone().unwrap_or_else(|| DEFAULT_TAG.to_string());
        match runs.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, v)) => v.push((k, source)),
            None => runs.push((tag, vec![(k, source)])),
        }
    }
    Ok(runs)
}

fn load_images(deid: &Manifest, members: &[(usize, usize)]) -> CliResult<Vec<DeidImage>> {
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let order: Vec<(usize, usize, usize)> = members
        .iter()
        .map(|&(k, source)| {
            let n = seen.entry(source).or_insert(0);
            *n += 1;
            (k, source, *n - 1)
        })
        .collect();
    Ok(order
        .par_iter()
        .map(|&(k, source, seed_index)| {
            Ok(DeidImage {
                source,
                seed_index,
                image: Raster::load_png(&deid.resolve(&deid.records[k].image_path))?,
            })
        })
        .collect::<palmdeid::Result<Vec<_>>>()?)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<RunConfig>(path)?.eval,
        None => EvalConfig::default(),
    };
    config.svg |= args.svg;
    if args.trim_fraction.is_some() {
        config.trim_fraction = args.trim_fraction;
    }
    config.validate()?;

    let original = Manifest::load(&args.manifest)?;
    let deid = Manifest::load(&args.deid_manifest)?;
    if deid.is_empty() {
        return Err(CliError::Usage("de-identified manifest has no records".into()));
    }
    let reference = Reference::load(&original, &config)?;
    let runs = group_runs(&deid, &reference)?;
    let runs_path = deid.base_dir.join(RUNS_FILE);
    let sub_runs: Vec<SubRun> = if runs_path.exists() {
        read_json(&runs_path)?
    } else {
        Vec::new()
    };

    std::fs::create_dir_all(&args.out).map_err(|e| palmdeid::Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let out = canonical(&args.out)?;
    for (n, (tag, members)) in runs.iter().enumerate() {
        let sub = sub_runs.iter().find(|s| s.tag == *tag);
        let dir_name = sub.map_or_else(|| format!("run_{n:03}"), |s| s.dir.clone());
        let dir = out.join(&dir_name);
        let images = load_images(&deid, members)?;
        info!("evaluating {tag}: {} images", images.len());
        let options = EvalOptions {
            trim_fraction: config.trim_fraction,
            quality: config.quality,
        };
        let outcome = evaluate(&reference.matcher, &reference.originals, &reference.pools, &images, &options)?;
        std::fs::create_dir_all(&dir).map_err(|e| palmdeid::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let resolved = ResolvedConfig {
            original_manifest: relative(&dir, &canonical(&args.manifest)?),
            deid_manifest: relative(&dir, &canonical(&args.deid_manifest)?),
            deid: sub.map(|s| s.config.clone()),
            eval: config.clone(),
        };
        let report = build_report(tag, resolved, &reference, &outcome);
        write_outputs(&dir, &report, &reference, &outcome, &deid, members)?;
        println!("{}", summary_line(&report));
    }
    Ok(())
}

pub fn build_report(tag: &str, config: ResolvedConfig, reference: &Reference, outcome: &EvalOutcome) -> RunReport {
    RunReport {
        run: tag.to_string(),
        config,
        counts: Counts {
            originals: reference.originals.len(),
            deid_images: outcome.deid.len(),
            genuine_pairs: reference.pools.genuine.len(),
            imposter_pairs: reference.pools.imposter.len(),
        },
        metrics: outcome.report.clone(),
        diversity: outcome.diversity.as_ref().map(|d| DiversitySummary {
            mean: d.mean(),
            std: d.std(),
            pairs: d.len(),
        }),
        quality: outcome.quality.clone(),
    }
}

pub fn summary_line(r: &RunReport) -> String {
    let m = &r.metrics;
    let acc = m.accuracy_percent.map_or("-".to_string(), |a| format!("{a:.1}%"));
    format!(
        "{}: DIR {:.2}% ({}) RR {:.1}% EER {:.2}% Acc {acc}",
        r.run,
        m.dir_percent,
        serde_json::to_value(m.band).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        m.rr_percent,
        m.eer_percent
    )
}

/// Shortest round-trip form; infinities as `inf`.
fn plain(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        format_metric(v, 0)
    }
}

/// `mean±std`, PSNR with two decimals and the SSIMs with four.
pub fn mean_std_cell(m: &MeanStd, precision: usize) -> String {
    format!("{}±{}", format_metric(m.mean, precision), format_metric(m.std, precision))
}

pub fn quality_csv(q: &QualitySummary) -> String {
    let mut out = String::from("metric,mean,std,mean±std\n");
    for (name, m, p) in [("ssim", &q.ssim, 4), ("ms_ssim", &q.ms_ssim, 4), ("psnr", &q.psnr, 2)] {
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            plain(m.mean),
            plain(m.std),
            mean_std_cell(m, p)
        );
    }
    out
}

fn write_outputs(
    dir: &Path,
    report: &RunReport,
    reference: &Reference,
    outcome: &EvalOutcome,
    deid: &Manifest,
    members: &[(usize, usize)],
) -> CliResult<()> {
    write_json(&dir.join(REPORT_FILE), report)?;
    let mut sets: Vec<&ScoreSet> = vec![&reference.pools.genuine, &reference.pools.imposter, &outcome.deid];
    if let Some(d) = &outcome.diversity {
        sets.push(d);
    }
    let hist = Histogram::new(&sets);
    write_atomic(&dir.join("histogram.csv"), hist.to_csv().as_bytes())?;
    write_atomic(&dir.join("scores.csv"), scores_csv(&sets).as_bytes())?;
    if report.config.eval.svg {
        write_atomic(&dir.join("histogram.svg"), hist.to_svg().as_bytes())?;
    }
    if let Some(q) = &outcome.quality {
        write_atomic(&dir.join("quality.csv"), quality_csv(q).as_bytes())?;
        let mut rows = String::from("image,identity,session,seed_index,ssim,ms_ssim,psnr\n");
        for (row, &(k, _)) in outcome.quality_rows.iter().zip(members) {
            let _ = writeln!(
                rows,
                "{},{},{},{},{},{},{}",
                deid.records[k].image_path,
                deid.records[k].identity,
                deid.records[k].session,
                row.seed_index,
                row.ssim,
                row.ms_ssim,
                plain(row.psnr)
            );
        }
        write_atomic(&dir.join("quality_images.csv"), rows.as_bytes())?;
    }
    Ok(())
}
