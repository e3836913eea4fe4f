//! One-axis sweeps over the separation weight, the localization thresholds
//! or the loss scope. Every value is trained on the same seeds and scored on
//! the test split.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::metrics::MetricReport;
use crate::harness::train::{evaluate_samples, test_samples, train, TrainConfig};
use crate::localize::ThresholdConfig;
use crate::separate::{SeparationConfig, SeparationScope};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    Alpha,
    Thresholds,
    Scope,
}

impl AblationAxis {
    pub const NAMES: [&'static str; 3] = ["alpha", "thresholds", "scope"];
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alpha => "alpha",
            Self::Thresholds => "thresholds",
            Self::Scope => "scope",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "thresholds" => Ok(Self::Thresholds),
            "scope" => Ok(Self::Scope),
            _ => Err(Error::InvalidValue(format!(
                "unknown ablation axis {s:?}; valid axes: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AblationValue {
    Alpha(f64),
    /// `(t_high, t_low)`
    Thresholds(f64, f64),
    Scope(SeparationScope),
}

impl fmt::Display for AblationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Alpha(a) => write!(f, "{a}"),
            Self::Thresholds(h, l) => write!(f, "{h}:{l}"),
            Self::Scope(s) => write!(f, "{s}"),
        }
    }
}

/// Parses a comma-separated list. Threshold pairs are written `t_high:t_low`.
pub fn parse_values(axis: AblationAxis, list: &str) -> Result<Vec<AblationValue>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidValue(format!("{s:?} is not a number")))
    };
    let values = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| match axis {
            AblationAxis::Alpha => Ok(AblationValue::Alpha(num(item)?)),
            AblationAxis::Thresholds => {
                let (h, l) = item.split_once(':').ok_or_else(|| {
                    Error::InvalidValue(format!("threshold pair {item:?} must be t_high:t_low"))
                })?;
                Ok(AblationValue::Thresholds(num(h)?, num(l)?))
            }
            AblationAxis::Scope => Ok(AblationValue::Scope(item.trim().parse()?)),
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::InvalidValue("no ablation values given".into()));
    }
    Ok(values)
}

/// `base` with one axis replaced.
pub fn apply(base: &TrainConfig, value: AblationValue) -> Result<TrainConfig> {
    let mut c = base.clone();
    let sep = base.separation.unwrap_or_default();
    match value {
        AblationValue::Alpha(a) => {
            c.separation = Some(SeparationConfig::new(
                a,
                sep.scope(),
                sep.warmup_iterations(),
            )?);
        }
        AblationValue::Thresholds(h, l) => {
            c.thresholds = ThresholdConfig::new(h, l, base.thresholds.cam_score())?;
        }
        AblationValue::Scope(s) => {
            c.separation = Some(SeparationConfig::new(
                sep.alpha(),
                s,
                sep.warmup_iterations(),
            )?);
        }
    }
    Ok(c)
}

/// Test-split metrics of one value, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub axis: AblationAxis,
    pub value: AblationValue,
    pub seeds: Vec<u64>,
    pub f1: f64,
    pub oa: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub instance_count_mae: f64,
    /// Per-seed test reports, in `seeds` order.
    pub reports: Vec<MetricReport>,
}

/// Trains `cfg` with `seed` and scores it on the test split.
pub fn run_seed(cfg: &TrainConfig, seed: u64) -> Result<MetricReport> {
    let c = cfg.with_seed(seed);
    let out = train(&c)?;
    evaluate_samples(
        &out.params,
        &test_samples(&c)?,
        &c.thresholds,
        c.supervision,
    )
}

pub fn ablation_sweep(
    base: &TrainConfig,
    seeds: &[u64],
    axis: AblationAxis,
    values: &[AblationValue],
) -> Result<Vec<SummaryRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "ablation needs at least one value and one seed".into(),
        ));
    }
    values
        .iter()
        .map(|&value| {
            let matches_axis = matches!(
                (axis, value),
                (AblationAxis::Alpha, AblationValue::Alpha(_))
                    | (AblationAxis::Thresholds, AblationValue::Thresholds(..))
                    | (AblationAxis::Scope, AblationValue::Scope(_))
            );
            if !matches_axis {
                return Err(Error::InvalidValue(format!(
                    "value {value} does not belong to axis {axis}"
                )));
            }
            let cfg = apply(base, value)?;
            let reports = seeds
                .iter()
                .map(|&s| run_seed(&cfg, s))
                .collect::<Result<Vec<_>>>()?;
            let mean = |f: fn(&MetricReport) -> f64| {
                reports.iter().map(f).sum::<f64>() / reports.len() as f64
            };
            Ok(SummaryRow {
                axis,
                value,
                seeds: seeds.to_vec(),
                f1: mean(|r| r.f1),
                oa: mean(|r| r.oa),
                iou: mean(|r| r.iou),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                instance_count_mae: mean(|r| r.instance_count_mae),
                reports,
            })
        })
        .collect()
}

pub const SUMMARY_HEADER: &str = "axis,value,seeds,f1,oa,iou,precision,recall,instance_count_mae";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(|s| s.to_string()).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.axis,
            r.value,
            seeds.join(" "),
            r.f1,
            r.oa,
            r.iou,
            r.precision,
            r.recall,
            r.instance_count_mae
        ));
    }
    s
}
