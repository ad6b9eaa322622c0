//! Pairwise distances among several de-identified versions of one source.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcher::{CompetitiveCode, Matcher};
use crate::metrics::stats::{Population, ScoreSet};

/// Pools all pairwise distances among the per-seed codes of each source.
/// `per_source[k]` holds the codes of source `k`, one per seed.
pub fn diversity_report(matcher: &Matcher, per_source: &[Vec<CompetitiveCode>]) -> Result<ScoreSet> {
    if per_source.is_empty() {
        return Err(Error::InsufficientData("no sources".into()));
    }
    if let Some(k) = per_source.iter().position(|codes| codes.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "source {k} has fewer than 2 seeds"
        )));
    }
    let pairs: Vec<(usize, usize, usize)> = per_source
        .iter()
        .enumerate()
        .flat_map(|(s, codes)| {
            let n = codes.len();
            (0..n).flat_map(move |i| (i + 1..n).map(move |j| (s, i, j)))
        })
        .collect();
    let samples = pairs
        .par_iter()
        .map(|&(s, i, j)| matcher.distance(&per_source[s][i], &per_source[s][j]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreSet::new(Population::Diversity, samples))
}
