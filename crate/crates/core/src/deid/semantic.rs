//! Reference semantic encoder and embedding fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Grid side of the block-mean descriptor.
pub const EMBEDDING_GRID: usize = 8;
pub const EMBEDDING_DIM: usize = EMBEDDING_GRID * EMBEDDING_GRID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    #[serde(rename = "sROI")]
    Small,
    #[serde(rename = "mROI")]
    Medium,
    #[serde(rename = "fROI")]
    Full,
    #[serde(rename = "fused")]
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl Embedding {
    pub fn new(values: Vec<f64>, source: EmbeddingSource) -> Self {
        Self { values, source }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero when either vector is zero.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / (na * nb)
    }
}

/// Block means over an 8×8 grid, mean-removed and L2-normalized. Constant
/// inputs give the zero vector.
pub fn encode_semantic(roi: &Raster, source: EmbeddingSource) -> Embedding {
    let (w, h) = roi.dims();
    let mut values = vec![0.0; EMBEDDING_DIM];
    for by in 0..EMBEDDING_GRID {
        let (y0, y1) = (by * h / EMBEDDING_GRID, (by + 1) * h / EMBEDDING_GRID);
        for bx in 0..EMBEDDING_GRID {
            let (x0, x1) = (bx * w / EMBEDDING_GRID, (bx + 1) * w / EMBEDDING_GRID);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += roi.get(x, y);
                }
            }
            let n = ((y1 - y0) * (x1 - x0)).max(1);
            values[by * EMBEDDING_GRID + bx] = sum / n as f64;
        }
    }
    let mean = values.iter().sum::<f64>() / EMBEDDING_DIM as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Embedding::new(values, source)
}

/// Component-wise mean of the embeddings.
pub fn fuse_embeddings(gs: &[Embedding]) -> Result<Embedding> {
    let first = gs.first().ok_or(Error::EmptyList)?;
    let dim = first.dim();
    if let Some(bad) = gs.iter().find(|g| g.dim() != dim) {
        return Err(Error::DimensionMismatch(dim, bad.dim()));
    }
    let n = gs.len() as f64;
    let values = (0..dim)
        .map(|k| gs.iter().map(|g| g.values[k]).sum::<f64>() / n)
        .collect();
    Ok(Embedding::new(values, EmbeddingSource::Fused))
}
