//! Distribution statistics over matching distances: decidability, the
//! de-identification ratio and its bands, EER and rejection rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Genuine,
    Imposter,
    Deid,
    Diversity,
}

impl Population {
    pub fn as_str(self) -> &'static str {
        match self {
            Population::Genuine => "genuine",
            Population::Imposter => "imposter",
            Population::Deid => "deid",
            Population::Diversity => "diversity",
        }
    }
}

/// Raw distances of one population. Moments are always recomputed from the
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    population: Population,
    samples: Vec<f64>,
}

impl ScoreSet {
    pub fn new(population: Population, samples: Vec<f64>) -> Self {
        Self {
            population,
            samples,
        }
    }

    pub fn population(&self) -> Population {
        self.population
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population (1/n) standard deviation, two-pass.
    pub fn std(&self) -> f64 {
        let mu = self.mean();
        let ss: f64 = self.samples.iter().map(|v| (v - mu) * (v - mu)).sum();
        (ss / self.samples.len() as f64).sqrt()
    }

    /// Symmetric trimming: drops `fraction` of the samples from each tail.
    pub fn trimmed(&self, fraction: f64) -> ScoreSet {
        if fraction <= 0.0 {
            return self.clone();
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = ((sorted.len() as f64 * fraction.min(0.49)).floor() as usize).min(sorted.len() / 2);
        ScoreSet::new(self.population, sorted[cut..sorted.len() - cut].to_vec())
    }

    fn require(&self, min: usize) -> Result<()> {
        if self.samples.len() < min {
            return Err(Error::InsufficientData(format!(
                "{} population has {} samples, need {min}",
                self.population.as_str(),
                self.samples.len()
            )));
        }
        Ok(())
    }
}

/// Decidability index `|μ1 − μ2| / sqrt((σ1² + σ2²) / 2)`.
pub fn decidability(a: &ScoreSet, b: &ScoreSet) -> Result<f64> {
    a.require(2)?;
    b.require(2)?;
    let (sa, sb) = (a.std(), b.std());
    if sa == 0.0 && sb == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok((a.mean() - b.mean()).abs() / ((sa * sa + sb * sb) / 2.0).sqrt())
}

/// De-identification ratio in percent, signed:
/// `(μg − μd)/(μg − μi) · sqrt(σg² + σi²)/sqrt(σg² + σd²) · 100`.
pub fn dir(genuine: &ScoreSet, imposter: &ScoreSet, deid: &ScoreSet) -> Result<f64> {
    for s in [genuine, imposter, deid] {
        s.require(2)?;
    }
    let (mg, mi, md) = (genuine.mean(), imposter.mean(), deid.mean());
    if mg == mi {
        return Err(Error::DegenerateReference);
    }
    let (sg, si, sd) = (genuine.std(), imposter.std(), deid.std());
    let spread_gd = (sg * sg + sd * sd).sqrt();
    if spread_gd == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok((mg - md) / (mg - mi) * (sg * sg + si * si).sqrt() / spread_gd * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirBand {
    High,
    Moderate,
    Limited,
    Over,
}

/// `> 100` over, `(80, 100]` high, `[60, 80]` moderate, `< 60` limited.
pub fn band(dir_percent: f64) -> DirBand {
    if dir_percent > 100.0 {
        DirBand::Over
    } else if dir_percent > 80.0 {
        DirBand::High
    } else if dir_percent >= 60.0 {
        DirBand::Moderate
    } else {
        DirBand::Limited
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub threshold: f64,
    pub eer_percent: f64,
    pub far_percent: f64,
    pub frr_percent: f64,
}

/// Equal error rate over distance scores: a pair is accepted when its
/// distance is at most the threshold. Candidates are the midpoints between
/// consecutive distinct merged values; the one minimizing `|FAR − FRR|` wins,
/// ties going to the lower threshold.
pub fn eer(genuine: &ScoreSet, imposter: &ScoreSet) -> Result<EerPoint> {
    genuine.require(1)?;
    imposter.require(1)?;
    let mut g = genuine.samples().to_vec();
    let mut i = imposter.samples().to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = g.iter().chain(&i).copied().collect();
    merged.sort_by(f64::total_cmp);
    merged.dedup();
    let candidates: Vec<f64> = if merged.len() == 1 {
        merged.clone()
    } else {
        merged.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
    };
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut best: Option<(f64, EerPoint)> = None;
    for t in candidates {
        let accepted_g = g.partition_point(|&v| v <= t) as f64;
        let accepted_i = i.partition_point(|&v| v <= t) as f64;
        let frr = (ng - accepted_g) / ng;
        let far = accepted_i / ni;
        let gap = (far - frr).abs();
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            best = Some((
                gap,
                EerPoint {
                    threshold: t,
                    eer_percent: 50.0 * (far + frr),
                    far_percent: 100.0 * far,
                    frr_percent: 100.0 * frr,
                },
            ));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Percent of distances strictly above `threshold`.
pub fn rejection_rate(deid: &ScoreSet, threshold: f64) -> Result<f64> {
    deid.require(1)?;
    let rejected = deid.samples().iter().filter(|&&d| d > threshold).count();
    Ok(100.0 * rejected as f64 / deid.len() as f64)
}

/// Summary of one de-identification run against reference pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirReport {
    pub dir_percent: f64,
    pub d_prime_gd: f64,
    pub d_prime_gi: f64,
    pub band: DirBand,
    pub rr_percent: f64,
    pub eer_percent: f64,
    pub threshold: f64,
    pub accuracy_percent: Option<f64>,
    pub mu: PopulationMoments,
    pub sigma: PopulationMoments,
    /// Always "population" (1/n).
    pub std_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub genuine: f64,
    pub imposter: f64,
    pub deid: f64,
}

impl DirReport {
    pub fn compute(
        genuine: &ScoreSet,
        imposter: &ScoreSet,
        deid: &ScoreSet,
        accuracy_percent: Option<f64>,
    ) -> Result<Self> {
        let dir_percent = dir(genuine, imposter, deid)?;
        let op = eer(genuine, imposter)?;
        Ok(Self {
            dir_percent,
            d_prime_gd: decidability(genuine, deid)?,
            d_prime_gi: decidability(genuine, imposter)?,
            band: band(dir_percent),
            rr_percent: rejection_rate(deid, op.threshold)?,
            eer_percent: op.eer_percent,
            threshold: op.threshold,
            accuracy_percent,
            mu: PopulationMoments {
                genuine: genuine.mean(),
                imposter: imposter.mean(),
                deid: deid.mean(),
            },
            sigma: PopulationMoments {
                genuine: genuine.std(),
                imposter: imposter.std(),
                deid: deid.std(),
            },
            std_convention: "population".into(),
        })
    }
}
