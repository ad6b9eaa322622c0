//! `deid`: one output image per (sample, seed) for every expanded sub-run.

use std::collections::BTreeSet;
use std::path::Path;

use log::info;
use palmdeid::deid::{deidentify, Provenance};
use palmdeid::io::{read_json, write_json};
use palmdeid::manifest::{Manifest, ManifestRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{expand_sweep, RunConfig, SubRun};
use crate::paths::{canonical, join, relative};
use crate::{CliError, CliResult, DeidArgs};

pub const RUNS_FILE: &str = "runs.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Sidecar written next to every de-identified image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub run: String,
    /// Relative to the sidecar's directory.
    pub source_image: String,
    pub seed: u64,
    pub provenance: Provenance,
}

/// Rejects manifests with repeated (identity, session) keys.
pub fn check_unique_ids(manifest: &Manifest) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for r in &manifest.records {
        if r.run.is_none() && !seen.insert(r.sample_id()) {
            return Err(CliError::Usage(format!(
                "manifest repeats identity {} session {}",
                r.identity, r.session
            )));
        }
    }
    Ok(())
}

pub fn cmd_deid(args: &DeidArgs) -> CliResult<()> {
    let config: RunConfig = read_json(&args.config)?;
    let runs = expand_sweep(&config.deid)?;
    let manifest = Manifest::load(&args.manifest)?;
    if manifest.is_empty() {
        return Err(CliError::Usage("input manifest has no records".into()));
    }
    check_unique_ids(&manifest)?;

    std::fs::create_dir_all(&args.out).map_err(|e| palmdeid::Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let out = canonical(&args.out)?;
    let to_input = relative(&out, &canonical(&manifest.base_dir)?);

    let mut records = Vec::new();
    for run in &runs {
        info!("sub-run {} ({}): {} samples", run.tag, run.dir, manifest.len());
        let per_sample = (0..manifest.len())
            .into_par_iter()
            .map(|i| deid_sample(&manifest, i, run, &out, &to_input))
            .collect::<CliResult<Vec<_>>>()?;
        records.extend(per_sample.into_iter().flatten());
    }
    Manifest::new(out.clone(), records).save(&out.join(MANIFEST_FILE))?;
    write_json(&out.join(RUNS_FILE), &runs)?;
    println!(
        "wrote {} sub-run(s) to {}",
        runs.len(),
        args.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn deid_sample(
    manifest: &Manifest,
    index: usize,
    run: &SubRun,
    out: &Path,
    to_input: &str,
) -> CliResult<Vec<ManifestRecord>> {
    let src = &manifest.records[index];
    let sample = manifest.load_sample(index)?;
    let result = deidentify(&sample, &run.config)?;
    let mut records = Vec::with_capacity(result.images.len());
    for (image, &seed) in result.images.iter().zip(&run.config.seeds) {
        let stem = format!("img_{:04}_{:02}_s{seed}", src.identity, src.session);
        let image_path = format!("{}/{stem}.png", run.dir);
        image.save_png(&out.join(&image_path))?;
        let source_image = join(to_input, &src.image_path);
        let sidecar = Sidecar {
            run: run.tag.clone(),
            source_image: join("..", &source_image),
            seed,
            provenance: result.provenance.clone(),
        };
        write_json(&out.join(&run.dir).join(format!("{stem}.json")), &sidecar)?;
        records.push(ManifestRecord {
            image_path,
            identity: src.identity,
            session: src.session,
            keypoints: src.keypoints.clone(),
            seg_path: join(to_input, &src.seg_path),
            seed: Some(seed),
            run: Some(run.tag.clone()),
            source_image: Some(source_image),
        });
    }
    Ok(records)
}
