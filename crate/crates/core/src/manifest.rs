//! Dataset manifests: a JSON array of per-image records with paths relative
//! to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::HandKeypoints;
use crate::io::{read_json, write_json};
use crate::raster::{Mask, Raster};
use crate::synth::HandSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub identity: u32,
    pub session: u32,
    pub keypoints: HandKeypoints,
    pub seg_path: String,
    /// De-identified records only: sampling seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// De-identified records only: sub-run tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
    /// De-identified records only: source image path, relative to the output
    /// manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image: Option<String>,
}

impl ManifestRecord {
    pub fn new(
        image_path: String,
        identity: u32,
        session: u32,
        keypoints: HandKeypoints,
        seg_path: String,
    ) -> Self {
        Self {
            image_path,
            identity,
            session,
            keypoints,
            seg_path,
            seed: None,
            run: None,
            source_image: None,
        }
    }

    /// Sample key shared by an original and its de-identified versions.
    pub fn sample_id(&self) -> (u32, u32) {
        (self.identity, self.session)
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(base_dir: PathBuf, records: Vec<ManifestRecord>) -> Self {
        Self { base_dir, records }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<ManifestRecord> = read_json(path)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { base_dir, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.records)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn load_sample(&self, index: usize) -> Result<HandSample> {
        let r = &self.records[index];
        Ok(HandSample {
            image: Raster::load_png(&self.resolve(&r.image_path))?,
            keypoints: r.keypoints.clone(),
            seg: Mask::load_png(&self.resolve(&r.seg_path))?,
            identity: r.identity,
            session: r.session,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
