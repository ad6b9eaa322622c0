//! Run configuration and sweep expansion.

use std::collections::BTreeSet;

use palmdeid::deid::baseline::{DEFAULT_BLUR_SIGMA, DEFAULT_PIXEL_BLOCK};
use palmdeid::deid::{Baseline, DeidConfig};
use palmdeid::matcher::MatcherParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{CliError, CliResult};

/// Config keys that may hold a list, in tag order, with their tag labels.
pub const SWEEP_AXES: [(&str, &str); 3] = [
    ("alpha", "alpha"),
    ("fusion_set", "fusion"),
    ("baseline", "baseline"),
];

/// Tag of a run without sweep axes.
pub const DEFAULT_TAG: &str = "default";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// A `DeidConfig`, except that sweep axes may be lists.
    pub deid: Value,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub matcher: MatcherParams,
    pub trim_fraction: Option<f64>,
    pub quality: bool,
    pub svg: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherParams::default(),
            trim_fraction: None,
            quality: true,
            svg: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.matcher.validate()?;
        if let Some(f) = self.trim_fraction {
            if !(0.0..0.5).contains(&f) {
                return Err(CliError::Usage(format!("trim_fraction {f} outside [0, 0.5)")));
            }
        }
        Ok(())
    }
}

/// One expanded sub-run, as listed in `runs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRun {
    pub tag: String,
    /// Output subdirectory.
    pub dir: String,
    pub config: DeidConfig,
}

fn baseline_label(b: Option<&Baseline>) -> String {
    match b {
        None => "none".into(),
        Some(Baseline::Blurring { sigma }) if *sigma != DEFAULT_BLUR_SIGMA => format!("blurring:sigma={sigma}"),
        Some(Baseline::Pixelating { block }) if *block != DEFAULT_PIXEL_BLOCK => format!("pixelating:block={block}"),
        Some(b) => b.name().into(),
    }
}

fn axis_value(key: &str, cfg: &DeidConfig) -> String {
    match key {
        "alpha" => format!("{}", cfg.alpha),
        "fusion_set" => cfg.fusion_set.to_string(),
        _ => baseline_label(cfg.baseline.as_ref()),
    }
}

/// Expands list-valued sweep axes into their Cartesian product, first axis
/// outermost. Every combination is parsed and validated before returning.
pub fn expand_sweep(deid: &Value) -> CliResult<Vec<SubRun>> {
    let base: Map<String, Value> = match deid {
        Value::Null => Map::new(),
        Value::Object(m) => m.clone(),
        _ => return Err(CliError::Usage("`deid` must be a JSON object".into())),
    };
    let axes: Vec<(&str, &str, Vec<Value>)> = SWEEP_AXES
        .iter()
        .filter_map(|&(key, label)| match base.get(key) {
            Some(Value::Array(values)) => Some((key, label, values.clone())),
            _ => None,
        })
        .collect();
    if let Some((key, _, _)) = axes.iter().find(|(_, _, v)| v.is_empty()) {
        return Err(CliError::Usage(format!("sweep list `{key}` is empty")));
    }

    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for (_, _, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..values.len()).map(move |k| {
                    let mut c = c.clone();
                    c.push(k);
                    c
                })
            })
            .collect();
    }

    let mut runs = Vec::with_capacity(combos.len());
    let mut tags = BTreeSet::new();
    for (n, combo) in combos.iter().enumerate() {
        let mut obj = base.clone();
        for ((key, _, values), &k) in axes.iter().zip(combo) {
            obj.insert(key.to_string(), values[k].clone());
        }
        let config: DeidConfig = serde_json::from_value(Value::Object(obj))
            .map_err(|e| CliError::Usage(format!("invalid deid config: {e}")))?;
        config.validate()?;
        let unique: BTreeSet<u64> = config.seeds.iter().copied().collect();
        if unique.len() != config.seeds.len() {
            return Err(CliError::Usage("deid seeds must be distinct".into()));
        }
        let tag = if axes.is_empty() {
            DEFAULT_TAG.to_string()
        } else {
            axes.iter()
                .map(|(key, label, _)| format!("{label}={}", axis_value(key, &config)))
                .collect::<Vec<_>>()
                .join(",")
        };
        if !tags.insert(tag.clone()) {
            return Err(CliError::Usage(format!("sweep produces duplicate run {tag:?}")));
        }
        runs.push(SubRun {
            tag,
            dir: format!("run_{n:03}"),
            config,
        });
    }
    Ok(runs)
}
